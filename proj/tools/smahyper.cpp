// smahyper: command-line front end.
//
//   smahyper make-synthetic --out DIR [--regions N --steps T --hotspots H --interval-hours 12 --seed S]
//   smahyper ingest   --config FILE
//   smahyper train    --config FILE [--seed S] [--resume CKPT]
//   smahyper evaluate --config FILE [--checkpoint CKPT] [--split test] [--baseline persistence]
//   smahyper predict  --config FILE [--checkpoint CKPT] [--split test] [--out FILE]
//   smahyper export   --config FILE [--checkpoint CKPT] [--out DIR]
//
// Exit codes: 0 success, 1 usage, 2 data, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "smahyper/errors.hpp"
#include "smahyper/harness.hpp"

namespace fs = std::filesystem;
using namespace smahyper;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
    auto* opt = cmd->add_option("--config", c.config, "experiment configuration (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", c.seed, "override the configured seed");
}

// Relative paths in a config resolve against the config file's directory.
ExperimentConfig resolve_config(const Common& c) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    const fs::path base = fs::absolute(c.config).parent_path();
    if (cfg.manifest.empty()) throw UsageError("config: 'manifest' is required");
    if (fs::path(cfg.manifest).is_relative()) cfg.manifest = (base / cfg.manifest).lexically_normal().string();
    if (fs::path(cfg.output_dir).is_relative()) cfg.output_dir = (base / cfg.output_dir).lexically_normal().string();
    return cfg;
}

PreparedData load_prepared(const ExperimentConfig& cfg) { return prepare_data(load_dataset(cfg.manifest), cfg); }

std::string default_checkpoint(const ExperimentConfig& cfg, const std::string& given) {
    if (!given.empty()) return given;
    const fs::path best = fs::path(cfg.output_dir) / "best.ckpt";
    if (fs::exists(best)) return best.string();
    return (fs::path(cfg.output_dir) / "last.ckpt").string();
}

int run_make_synthetic(const std::string& out, std::size_t regions, std::size_t steps, std::size_t hotspots,
                       int interval, std::uint64_t seed) {
    if (regions < 2) throw UsageError("--regions must be at least 2");
    if (interval <= 0 || 24 % interval != 0) throw UsageError("--interval-hours must divide 24");
    const SyntheticCity city = generate_synthetic_city(regions, steps, hotspots, seed, interval);
    write_synthetic_city(city, out);
    std::printf("wrote synthetic city: %zu regions, %zu steps, %zu events, %zu hotspots -> %s\n", regions, steps,
                city.events.size(), city.hotspots.size(), (fs::path(out) / "dataset.manifest").string().c_str());
    return 0;
}

int run_ingest(const ExperimentConfig& cfg) {
    const Dataset ds = load_dataset(cfg.manifest);
    std::size_t zeros = 0;
    for (double v : ds.risk.values.vec()) zeros += v == 0.0;
    const double zero_fraction = static_cast<double>(zeros) / static_cast<double>(ds.risk.values.size());
    nlohmann::json j;
    j["regions"] = ds.catalog.size();
    j["steps"] = ds.axis.n_steps;
    j["interval_hours"] = ds.axis.interval_hours;
    j["events"] = ds.accidents.events.size();
    j["rejected_rows"] = ds.accidents.rejected.size();
    j["unknown_regions"] = ds.accidents.unknown_regions;
    j["adjacency_warnings"] = ds.adjacency_warnings.size();
    j["filled_weather_hours"] = ds.externals.filled_hours;
    j["zero_fraction"] = zero_fraction;
    j["meteorology"] = ds.externals.features.meteorology_names;
    j["calendar"] = ds.externals.features.calendar_names;
    fs::create_directories(cfg.output_dir);
    const fs::path out = fs::path(cfg.output_dir) / "ingest.json";
    std::ofstream(out) << j.dump(2) << '\n';
    std::printf("%zu regions x %zu steps, %zu events (%zu rejected rows), zero fraction %.4f\n", ds.catalog.size(),
                ds.axis.n_steps, ds.accidents.events.size(), ds.accidents.rejected.size(), zero_fraction);
    for (const auto& r : ds.accidents.rejected) std::fprintf(stderr, "accidents line %zu: %s\n", r.line, r.reason.c_str());
    for (const auto& w : ds.adjacency_warnings) std::fprintf(stderr, "adjacency line %zu: %s\n", w.line, w.reason.c_str());
    std::printf("summary -> %s\n", out.string().c_str());
    return 0;
}

int run_train(const ExperimentConfig& cfg, const std::string& resume, bool quiet) {
    const PreparedData data = load_prepared(cfg);
    TrainOptions opts;
    opts.resume_from = resume;
    opts.verbose = !quiet;
    const TrainResult r = train(cfg, data, opts);
    std::printf("trained %zu epochs (%llu steps); best val RMSE %.6f at epoch %zu%s\n", r.progress.epoch,
                static_cast<unsigned long long>(r.progress.step), r.progress.best_val_rmse, r.progress.best_epoch,
                r.progress.stopped_early ? " (early stop)" : "");
    std::printf("checkpoints and metrics.csv in %s\n", cfg.output_dir.c_str());
    return 0;
}

int run_evaluate(const ExperimentConfig& cfg, const std::string& ckpt_path, const std::string& split_name_arg,
                 const std::string& baseline) {
    const Split split = parse_split(split_name_arg);
    const PreparedData data = load_prepared(cfg);
    SplitEvaluation ev;
    std::string tag;
    if (baseline.empty()) {
        const Checkpoint ckpt = load_checkpoint(default_checkpoint(cfg, ckpt_path));
        const auto model = load_model(ckpt, data);
        ev = evaluate_model(*model, data, ckpt.config, split);
        tag = "model";
    } else if (baseline == "persistence") {
        ev = evaluate_persistence(data, cfg, split);
        tag = "persistence";
    } else {
        throw UsageError("unknown baseline '" + baseline + "' (persistence)");
    }
    fs::create_directories(cfg.output_dir);
    const std::string stem = std::string("eval_") + split_name(split) + "_" + tag;
    write_report_csv((fs::path(cfg.output_dir) / (stem + ".csv")).string(), ev.report);
    write_region_error_csv((fs::path(cfg.output_dir) / (stem + "_region_error.csv")).string(),
                           region_errors(ev.actual, ev.predicted, data.dataset.catalog.region_ids));
    std::cout << format_report(ev.report, std::string(split_name(split)) + " split, " + tag);
    return 0;
}

int run_predict(const ExperimentConfig& cfg, const std::string& ckpt_path, const std::string& split_arg,
                const std::string& out) {
    const Split split = parse_split(split_arg);
    const PreparedData data = load_prepared(cfg);
    const Checkpoint ckpt = load_checkpoint(default_checkpoint(cfg, ckpt_path));
    const auto model = load_model(ckpt, data);
    const auto& windows = split_windows(data, split);
    if (windows.empty()) throw DataError(std::string("the ") + split_name(split) + " split has no windows");
    const Tensor predicted = to_raw_scale(predict_windows(*model, windows, cfg.batch_size), data.pkde.nonzero_max);
    const Tensor actual = raw_targets(data, windows, cfg.horizon);
    const std::string path =
        out.empty() ? (fs::path(cfg.output_dir) / (std::string("predictions_") + split_name(split) + ".csv")).string()
                    : out;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    write_predictions_csv(path, data, windows, actual, predicted);
    std::printf("%zu windows -> %s\n", windows.size(), path.c_str());
    return 0;
}

int run_export(const ExperimentConfig& cfg, const std::string& ckpt_path, const std::string& out) {
    const PreparedData data = load_prepared(cfg);
    const Checkpoint ckpt = load_checkpoint(default_checkpoint(cfg, ckpt_path));
    const auto model = load_model(ckpt, data);
    const std::string dir = out.empty() ? (fs::path(cfg.output_dir) / "export").string() : out;
    for (const auto& f : export_artifacts(*model, data, ckpt.config, dir)) std::printf("%s\n", f.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Multi-view hypergraph accident-risk forecasting"};
    app.require_subcommand(1);

    std::string syn_out;
    std::size_t syn_regions = 25, syn_steps = 240, syn_hotspots = 5;
    int syn_interval = 12;
    Common syn_common;
    auto* syn = app.add_subcommand("make-synthetic", "write a synthetic city dataset");
    syn->add_option("--out", syn_out, "output directory")->required();
    syn->add_option("--regions", syn_regions, "number of regions");
    syn->add_option("--steps", syn_steps, "number of time steps");
    syn->add_option("--hotspots", syn_hotspots, "number of hotspot regions");
    syn->add_option("--interval-hours", syn_interval, "hours per step");
    add_common(syn, syn_common, false);

    Common ing_common;
    auto* ing = app.add_subcommand("ingest", "load and validate a dataset, write a summary");
    add_common(ing, ing_common);

    Common tr_common;
    std::string resume;
    bool quiet = false;
    auto* tr = app.add_subcommand("train", "train a model");
    add_common(tr, tr_common);
    tr->add_option("--resume", resume, "continue from a checkpoint");
    tr->add_flag("--quiet", quiet, "no per-epoch output");

    Common ev_common;
    std::string ev_ckpt, ev_split = "test", ev_baseline;
    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint or baseline on a split");
    add_common(ev, ev_common);
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint (default: best.ckpt in output_dir)");
    ev->add_option("--split", ev_split, "train, val or test");
    ev->add_option("--baseline", ev_baseline, "evaluate a baseline instead (persistence)");

    Common pr_common;
    std::string pr_ckpt, pr_split = "test", pr_out;
    auto* pr = app.add_subcommand("predict", "write predictions for a split");
    add_common(pr, pr_common);
    pr->add_option("--checkpoint", pr_ckpt, "checkpoint (default: best.ckpt in output_dir)");
    pr->add_option("--split", pr_split, "train, val or test");
    pr->add_option("--out", pr_out, "output CSV");

    Common ex_common;
    std::string ex_ckpt, ex_out;
    auto* ex = app.add_subcommand("export", "export learned structures, predictions and metrics");
    add_common(ex, ex_common);
    ex->add_option("--checkpoint", ex_ckpt, "checkpoint (default: best.ckpt in output_dir)");
    ex->add_option("--out", ex_out, "output directory (default: output_dir/export)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*syn) {
            const std::uint64_t seed = syn_common.seed.value_or(7);
            return run_make_synthetic(syn_out, syn_regions, syn_steps, syn_hotspots, syn_interval, seed);
        }
        if (*ing) return run_ingest(resolve_config(ing_common));
        if (*tr) return run_train(resolve_config(tr_common), resume, quiet);
        if (*ev) return run_evaluate(resolve_config(ev_common), ev_ckpt, ev_split, ev_baseline);
        if (*pr) return run_predict(resolve_config(pr_common), pr_ckpt, pr_split, pr_out);
        if (*ex) return run_export(resolve_config(ex_common), ex_ckpt, ex_out);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
