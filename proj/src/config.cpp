#include "smahyper/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "smahyper/errors.hpp"

extern char** environ;

namespace smahyper {

namespace {

using json = nlohmann::json;

enum class Kind { string, integer, count, real, boolean, axis };

struct Field {
    const char* key;
    Kind kind;
    std::function<json(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const json&)> set;
};

template <typename T>
Field field(const char* key, Kind kind, T ExperimentConfig::*member) {
    return {key, kind, [member](const ExperimentConfig& c) { return json(c.*member); },
            [member](ExperimentConfig& c, const json& v) { c.*member = v.get<T>(); }};
}

const std::vector<Field>& fields() {
    using C = ExperimentConfig;
    static const std::vector<Field> f = {
        field("manifest", Kind::string, &C::manifest),
        field("output_dir", Kind::string, &C::output_dir),
        field("interval_hours", Kind::integer, &C::interval_hours),
        field("input_steps", Kind::count, &C::input_steps),
        field("horizon", Kind::count, &C::horizon),
        field("embed_dim", Kind::count, &C::embed_dim),
        field("heads", Kind::count, &C::heads),
        field("layers", Kind::count, &C::layers),
        field("k", Kind::count, &C::k),
        field("hyperedge_ratio", Kind::real, &C::hyperedge_ratio),
        field("k_members", Kind::count, &C::k_members),
        field("lambda1", Kind::real, &C::lambda1),
        field("lambda2", Kind::real, &C::lambda2),
        field("temperature", Kind::real, &C::temperature),
        field("learning_rate", Kind::real, &C::learning_rate),
        field("batch_size", Kind::count, &C::batch_size),
        field("train_ratio", Kind::real, &C::train_ratio),
        field("val_ratio", Kind::real, &C::val_ratio),
        field("max_epochs", Kind::count, &C::max_epochs),
        field("patience", Kind::count, &C::patience),
        field("seed", Kind::count, &C::seed),
        field("grad_clip", Kind::real, &C::grad_clip),
        field("recall_k_fraction", Kind::real, &C::recall_k_fraction),
        field("use_pkde", Kind::boolean, &C::use_pkde),
        field("use_contrastive", Kind::boolean, &C::use_contrastive),
        field("use_hypergraph", Kind::boolean, &C::use_hypergraph),
        field("use_attention_fusion", Kind::boolean, &C::use_attention_fusion),
        field("use_poi", Kind::boolean, &C::use_poi),
        field("use_road", Kind::boolean, &C::use_road),
        field("dynamic_temporal_view", Kind::boolean, &C::dynamic_temporal_view),
        {"topk_axis", Kind::axis,
         [](const C& c) { return json(c.topk_axis == TopkAxis::column ? "column" : "row"); },
         [](C& c, const json& v) { c.topk_axis = v.get<std::string>() == "row" ? TopkAxis::row : TopkAxis::column; }},
    };
    return f;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields())
        if (key == f.key) return &f;
    return nullptr;
}

void check_kind(const Field& f, const json& v) {
    bool ok = false;
    switch (f.kind) {
        case Kind::string: ok = v.is_string(); break;
        case Kind::integer: ok = v.is_number_integer(); break;
        case Kind::count: ok = v.is_number_unsigned(); break;
        case Kind::real: ok = v.is_number(); break;
        case Kind::boolean: ok = v.is_boolean(); break;
        case Kind::axis: ok = v.is_string() && (v == "column" || v == "row"); break;
    }
    if (!ok) {
        static const char* expected[] = {"a string", "an integer", "a non-negative integer", "a number",
                                         "true or false", "\"column\" or \"row\""};
        throw UsageError(std::string("config field '") + f.key + "' must be " +
                         expected[static_cast<int>(f.kind)] + ", got " + v.dump());
    }
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw UsageError("config: " + msg);
}

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

void ExperimentConfig::validate() const {
    require(interval_hours >= 0, "interval_hours must be >= 0");
    require(input_steps >= 3, "input_steps must be >= 3 (temporal kernel width)");
    require(horizon >= 1, "horizon must be >= 1");
    require(embed_dim >= 2, "embed_dim must be >= 2");
    require(heads >= 1 && embed_dim % heads == 0, "embed_dim must be a positive multiple of heads");
    require(layers >= 1, "layers must be >= 1");
    require(k >= 1, "k must be >= 1");
    require(hyperedge_ratio > 0.0 && hyperedge_ratio <= 1.0, "hyperedge_ratio must be in (0, 1]");
    require(k_members >= 1, "k_members must be >= 1");
    require(lambda1 >= 0.0 && std::isfinite(lambda1), "lambda1 must be finite and >= 0");
    require(lambda2 >= 0.0 && std::isfinite(lambda2), "lambda2 must be finite and >= 0");
    require(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
    require(batch_size == 4 || batch_size == 8 || batch_size == 16, "batch_size must be 4, 8 or 16");
    require(train_ratio > 0.0 && val_ratio > 0.0 && train_ratio + val_ratio < 1.0,
            "train_ratio and val_ratio must be positive with sum < 1");
    require(max_epochs >= 1, "max_epochs must be >= 1");
    require(grad_clip >= 0.0 && std::isfinite(grad_clip), "grad_clip must be finite and >= 0");
    require(recall_k_fraction > 0.0 && recall_k_fraction <= 1.0, "recall_k_fraction must be in (0, 1]");
}

std::string to_json_string(const ExperimentConfig& cfg) {
    json j = json::object();
    for (const auto& f : fields()) j[f.key] = f.get(cfg);
    return j.dump(2);
}

ExperimentConfig config_from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    ExperimentConfig cfg;
    for (const auto& [key, value] : j.items()) {
        const Field* f = find_field(key);
        if (!f) throw UsageError("unknown config key '" + key + "'");
        check_kind(*f, value);
        f->set(cfg, value);
    }
    return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const std::map<std::string, std::string>& overrides) {
    for (const auto& [name, text] : overrides) {
        const Field* f = nullptr;
        for (const auto& cand : fields())
            if (upper(cand.key) == name) f = &cand;
        if (!f) throw UsageError("unknown override SMAHYPER_" + name);
        json v;
        if (f->kind == Kind::string || f->kind == Kind::axis) {
            v = text;
        } else {
            try {
                v = json::parse(text);
            } catch (const json::parse_error&) {
                throw UsageError("override SMAHYPER_" + name + ": cannot parse '" + text + "'");
            }
        }
        check_kind(*f, v);
        f->set(cfg, v);
    }
}

std::map<std::string, std::string> environment_overrides() {
    std::map<std::string, std::string> out;
    const std::string prefix = "SMAHYPER_";
    for (char** e = environ; e && *e; ++e) {
        const std::string entry = *e;
        if (entry.rfind(prefix, 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        out[entry.substr(prefix.size(), eq - prefix.size())] = entry.substr(eq + 1);
    }
    return out;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = config_from_json_string(ss.str());
    apply_overrides(cfg, environment_overrides());
    cfg.validate();
    return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write config " + path);
    out << to_json_string(cfg) << '\n';
}

}  // namespace smahyper
