#include "smahyper/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "smahyper/errors.hpp"

namespace smahyper {

namespace {

constexpr char kMagic[8] = {'S', 'M', 'H', 'Y', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError(path + ": truncated checkpoint");
    return v;
}

void put_tensor(std::ostream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.vec().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor take_tensor(std::istream& in, const Shape& shape, const std::string& path) {
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.vec().data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
        throw DataError(path + ": truncated checkpoint data");
    }
    return t;
}

// JSON cannot hold infinity; store it as null.
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

Checkpoint capture_checkpoint(const ExperimentConfig& cfg, const TrainingProgress& progress,
                              const nn::ParameterStore& store, const AdamState& adam) {
    Checkpoint c;
    c.config = cfg;
    c.progress = progress;
    for (const auto& e : store.entries()) {
        c.names.push_back(e.name);
        c.params.push_back(e.var.value());
    }
    c.adam = adam;
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json h;
    h["config"] = nlohmann::json::parse(to_json_string(ckpt.config));
    h["epoch"] = ckpt.progress.epoch;
    h["step"] = ckpt.progress.step;
    h["best_val_rmse"] = finite_or_null(ckpt.progress.best_val_rmse);
    h["best_epoch"] = ckpt.progress.best_epoch;
    h["epochs_since_improvement"] = ckpt.progress.epochs_since_improvement;
    h["stopped_early"] = ckpt.progress.stopped_early;
    h["data_dims"] = ckpt.data_dims;
    h["adam_step"] = ckpt.adam.step;
    h["has_adam"] = !ckpt.adam.m.empty();
    auto& params = h["params"] = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
        params.push_back({{"name", ckpt.names[i]}, {"shape", ckpt.params[i].shape()}});
    }
    const std::string header = h.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint " + path);
        out.write(kMagic, sizeof kMagic);
        put<std::uint32_t>(out, kCheckpointVersion);
        put<std::uint64_t>(out, header.size());
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        for (const auto& t : ckpt.params) put_tensor(out, t);
        for (const auto& t : ckpt.adam.m) put_tensor(out, t);
        for (const auto& t : ckpt.adam.v) put_tensor(out, t);
        if (!out) throw DataError("failed writing checkpoint " + path);
    }
    std::rename(tmp.c_str(), path.c_str());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw DataError(path + ": not a checkpoint file");
    }
    const auto version = take<std::uint32_t>(in, path);
    if (version != kCheckpointVersion) {
        throw DataError(path + ": checkpoint format version " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    }
    const auto len = take<std::uint64_t>(in, path);
    std::string header(len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(len))) throw DataError(path + ": truncated header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": corrupt checkpoint header: " + e.what());
    }

    Checkpoint c;
    c.config = config_from_json_string(h.at("config").dump());
    c.progress.epoch = h.at("epoch").get<std::size_t>();
    c.progress.step = h.at("step").get<std::uint64_t>();
    c.progress.best_val_rmse = h.at("best_val_rmse").is_null() ? std::numeric_limits<double>::infinity()
                                                                : h.at("best_val_rmse").get<double>();
    c.progress.best_epoch = h.at("best_epoch").get<std::size_t>();
    c.progress.epochs_since_improvement = h.at("epochs_since_improvement").get<std::size_t>();
    c.progress.stopped_early = h.at("stopped_early").get<bool>();
    c.data_dims = h.at("data_dims").get<std::map<std::string, std::size_t>>();
    c.adam.step = h.at("adam_step").get<std::uint64_t>();
    std::vector<Shape> shapes;
    for (const auto& p : h.at("params")) {
        c.names.push_back(p.at("name").get<std::string>());
        shapes.push_back(p.at("shape").get<Shape>());
    }
    for (const auto& s : shapes) c.params.push_back(take_tensor(in, s, path));
    if (h.at("has_adam").get<bool>()) {
        for (const auto& s : shapes) c.adam.m.push_back(take_tensor(in, s, path));
        for (const auto& s : shapes) c.adam.v.push_back(take_tensor(in, s, path));
    }
    return c;
}

void restore_parameters(const Checkpoint& ckpt, nn::ParameterStore& store) {
    const auto& entries = store.entries();
    if (entries.size() != ckpt.names.size()) {
        throw DataError("checkpoint has " + std::to_string(ckpt.names.size()) + " parameters, model has " +
                        std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name != ckpt.names[i]) {
            throw DataError("checkpoint parameter " + std::to_string(i) + " is '" + ckpt.names[i] +
                            "', model expects '" + entries[i].name + "'");
        }
        const Shape& want = entries[i].var.shape();
        const Shape& got = ckpt.params[i].shape();
        if (want != got) {
            std::string axis = "rank";
            if (want.size() == got.size()) {
                for (std::size_t a = 0; a < want.size(); ++a)
                    if (want[a] != got[a]) {
                        axis = "axis " + std::to_string(a) + " (" + std::to_string(got[a]) + " vs " +
                               std::to_string(want[a]) + ")";
                        break;
                    }
            }
            throw DataError("checkpoint parameter '" + ckpt.names[i] + "' mismatches the model at " + axis +
                            "; shapes " + shape_str(got) + " vs " + shape_str(want));
        }
        ag::Var v = entries[i].var;
        v.mutable_value() = ckpt.params[i];
    }
}

}  // namespace smahyper
