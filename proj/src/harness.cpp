#include "smahyper/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "smahyper/errors.hpp"

namespace smahyper {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void dump_diagnostics(const std::string& path, const nn::ParameterStore& store, std::uint64_t step,
                      std::size_t epoch, const std::vector<std::size_t>& batch_ids, const LossBreakdown& loss) {
    std::ofstream out(path);
    out << "step " << step << " epoch " << epoch << "\nbatch windows";
    for (auto id : batch_ids) out << ' ' << id;
    out << "\nmse " << num(loss.mse) << " contrastive " << num(loss.contrastive) << " l2 " << num(loss.l2)
        << " total " << num(loss.total) << "\n\nparameter,l2_norm,max_abs\n";
    for (const auto& e : store.entries()) {
        double sq = 0.0;
        for (double v : e.var.value().vec()) sq += v * v;
        out << e.name << ',' << num(std::sqrt(sq)) << ',' << num(e.var.value().max_abs()) << '\n';
    }
}

}  // namespace

std::map<std::string, std::size_t> data_dims(const PreparedData& data) {
    const auto& f = data.dataset.externals.features;
    return {{"regions", data.dataset.catalog.size()},
            {"met_width", f.meteorology.dim(2)},
            {"cal_width", f.calendar.dim(2)},
            {"poi_width", data.poi.dim(1)},
            {"road_width", data.road.dim(1)}};
}

std::unique_ptr<SmaHyperModel> build_model(const ExperimentConfig& cfg, const PreparedData& data) {
    const auto dims = data_dims(data);
    return std::make_unique<SmaHyperModel>(cfg, data.dataset.catalog, data.poi, data.road, data.mean_history,
                                           dims.at("met_width"), dims.at("cal_width"));
}

std::unique_ptr<SmaHyperModel> load_model(const Checkpoint& ckpt, const PreparedData& data) {
    const auto have = data_dims(data);
    for (const auto& [axis, want] : ckpt.data_dims) {
        const auto it = have.find(axis);
        if (it == have.end() || it->second != want) {
            throw DataError("checkpoint was trained with " + axis + " = " + std::to_string(want) +
                            " but the dataset has " + (it == have.end() ? std::string("none") : std::to_string(it->second)));
        }
    }
    auto model = build_model(ckpt.config, data);
    restore_parameters(ckpt, model->params());
    return model;
}

TrainResult train(const ExperimentConfig& cfg, const PreparedData& data, const TrainOptions& opts) {
    TrainResult result;
    result.model = build_model(cfg, data);
    SmaHyperModel& model = *result.model;
    Adam adam(model.params(), cfg.learning_rate);
    TrainingProgress& progress = result.progress;

    if (!opts.resume_from.empty()) {
        const Checkpoint ckpt = load_checkpoint(opts.resume_from);
        restore_parameters(ckpt, model.params());
        if (ckpt.adam.m.size() != model.params().count()) throw DataError("checkpoint has no optimizer state");
        adam.state() = ckpt.adam;
        progress = ckpt.progress;
    }

    const fs::path dir = cfg.output_dir;
    std::ofstream metrics;
    if (opts.write_files) {
        fs::create_directories(dir);
        save_config(cfg, (dir / "config.json").string());
        const bool append = !opts.resume_from.empty() && fs::exists(dir / "metrics.csv");
        metrics.open(dir / "metrics.csv", append ? std::ios::app : std::ios::trunc);
        if (!metrics) throw DataError("cannot write " + (dir / "metrics.csv").string());
        if (!append) metrics << kMetricsHeader << '\n';
    }
    auto save = [&](const std::string& name) {
        Checkpoint c = capture_checkpoint(cfg, progress, model.params(), adam.state());
        c.data_dims = data_dims(data);
        save_checkpoint(c, (dir / name).string());
    };

    const LossWeights weights{cfg.lambda1, cfg.lambda2, cfg.temperature, cfg.use_contrastive};
    const auto& windows = data.windows.train;
    bool step_cap_hit = false;

    while (progress.epoch < cfg.max_epochs && !progress.stopped_early && !step_cap_hit) {
        const std::size_t epoch = progress.epoch + 1;
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(windows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix_seed(cfg.seed, 1000 + epoch));
        shuffle_rng.shuffle(order);

        EpochRecord er;
        er.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(
                                                                   std::min(order.size(), begin + cfg.batch_size)));
            const Batch batch = make_batch(windows, ids);
            const ForwardResult fr = model.forward(batch);
            const LossBreakdown loss =
                joint_loss(ag::constant(batch.targets), fr.prediction, fr.encoded.states, model.params(), weights);
            if (opts.on_step) opts.on_step(progress.step + 1, fr);
            if (!std::isfinite(loss.total)) {
                const std::string dump = (dir / "nan_dump.txt").string();
                if (opts.write_files) dump_diagnostics(dump, model.params(), progress.step + 1, epoch, ids, loss);
                throw NumericalError("non-finite loss at step " + std::to_string(progress.step + 1) + " (epoch " +
                                     std::to_string(epoch) + ")" +
                                     (opts.write_files ? "; diagnostics in " + dump : std::string()));
            }
            model.params().zero_grad();
            ag::backward(loss.total_var);
            adam.step(cfg.grad_clip);
            ++progress.step;

            StepRecord sr{progress.step, epoch, loss.mse, loss.contrastive, loss.l2, loss.total};
            result.steps.push_back(sr);
            if (metrics.is_open()) {
                metrics << sr.step << ',' << epoch << ',' << num(sr.mse) << ',' << num(sr.contrastive) << ','
                        << num(sr.l2) << ',' << num(sr.total) << ",\n";
            }
            er.mse += sr.mse;
            er.contrastive += sr.contrastive;
            er.l2 += sr.l2;
            er.total += sr.total;
            ++batches;
            if (opts.max_steps && progress.step >= opts.max_steps) {
                step_cap_hit = true;
                break;
            }
        }
        if (step_cap_hit && batches * cfg.batch_size < order.size()) break;  // partial epoch: no epoch record

        er.step = progress.step;
        er.mse /= static_cast<double>(batches);
        er.contrastive /= static_cast<double>(batches);
        er.l2 /= static_cast<double>(batches);
        er.total /= static_cast<double>(batches);
        er.val_rmse = data.windows.val.empty() ? er.mse : evaluate_model(model, data, cfg, Split::val).report.rmse;
        er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.epochs.push_back(er);
        progress.epoch = epoch;
        if (metrics.is_open()) {
            metrics << er.step << ',' << epoch << ',' << num(er.mse) << ',' << num(er.contrastive) << ','
                    << num(er.l2) << ',' << num(er.total) << ',' << num(er.val_rmse) << '\n';
            metrics.flush();
        }
        if (opts.verbose) {
            std::printf("epoch %zu  mse %.6f  contrastive %.4f  l2 %.2f  total %.6f  val_rmse %.6f  (%.1fs)\n", epoch,
                        er.mse, er.contrastive, er.l2, er.total, er.val_rmse, er.seconds);
            std::fflush(stdout);
        }

        const bool improved = er.val_rmse < progress.best_val_rmse;
        if (improved) {
            progress.best_val_rmse = er.val_rmse;
            progress.best_epoch = epoch;
            progress.epochs_since_improvement = 0;
            result.best_params.clear();
            for (const auto& e : model.params().entries()) result.best_params.push_back(e.var.value());
        } else {
            ++progress.epochs_since_improvement;
            if (cfg.patience && progress.epochs_since_improvement >= cfg.patience) progress.stopped_early = true;
        }
        if (opts.write_files) {
            if (improved) save("best.ckpt");
            save("last.ckpt");
        }
    }
    result.adam = adam.state();
    return result;
}

void restore_best(TrainResult& result) {
    if (result.best_params.empty()) return;
    const auto& entries = result.model->params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        ag::Var v = entries[i].var;
        v.mutable_value() = result.best_params[i];
    }
}

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw UsageError("unknown split '" + name + "' (train, val or test)");
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

const std::vector<SampleWindow>& split_windows(const PreparedData& data, Split s) {
    switch (s) {
        case Split::train: return data.windows.train;
        case Split::val: return data.windows.val;
        case Split::test: return data.windows.test;
    }
    return data.windows.test;
}

Tensor predict_windows(const SmaHyperModel& model, const std::vector<SampleWindow>& windows,
                       std::size_t batch_size) {
    if (windows.empty()) throw DataError("no windows to predict");
    const std::size_t n = windows.front().targets.dim(0), tau = windows.front().targets.dim(1);
    Tensor out({windows.size(), n, tau});
    for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
        std::vector<std::size_t> ids;
        for (std::size_t i = begin; i < std::min(windows.size(), begin + batch_size); ++i) ids.push_back(i);
        const ForwardResult fr = model.forward(make_batch(windows, ids));
        const auto& p = fr.prediction.value().vec();
        std::copy(p.begin(), p.end(), out.vec().begin() + static_cast<std::ptrdiff_t>(begin * n * tau));
    }
    return out;
}

Tensor raw_targets(const PreparedData& data, const std::vector<SampleWindow>& windows, std::size_t horizon) {
    const RiskTensor& raw = data.dataset.risk;
    const std::size_t n = raw.regions();
    Tensor out({windows.size(), n, horizon});
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const std::size_t first = windows[w].window_start + windows[w].inputs.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < horizon; ++j) out[(w * n + i) * horizon + j] = raw.at(i, first + j);
    }
    return out;
}

Tensor persistence_predictions(const PreparedData& data, const std::vector<SampleWindow>& windows,
                               std::size_t horizon) {
    const RiskTensor& raw = data.dataset.risk;
    const std::size_t n = raw.regions();
    Tensor out({windows.size(), n, horizon});
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const std::size_t t = windows[w].inputs.dim(1);
        Tensor inputs({n, t});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < t; ++j) inputs[i * t + j] = raw.at(i, windows[w].window_start + j);
        const Tensor p = persistence_baseline(inputs, horizon);
        std::copy(p.vec().begin(), p.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(w * n * horizon));
    }
    return out;
}

SplitEvaluation evaluate_model(const SmaHyperModel& model, const PreparedData& data, const ExperimentConfig& cfg,
                               Split split) {
    const auto& windows = split_windows(data, split);
    SplitEvaluation ev;
    ev.actual = raw_targets(data, windows, cfg.horizon);
    ev.predicted = to_raw_scale(predict_windows(model, windows, cfg.batch_size), data.pkde.nonzero_max);
    ev.report = evaluate_forecast(ev.actual, ev.predicted, cfg.recall_k_fraction);
    return ev;
}

SplitEvaluation evaluate_persistence(const PreparedData& data, const ExperimentConfig& cfg, Split split) {
    const auto& windows = split_windows(data, split);
    if (windows.empty()) throw DataError(std::string("the ") + split_name(split) + " split has no windows");
    SplitEvaluation ev;
    ev.actual = raw_targets(data, windows, cfg.horizon);
    ev.predicted = persistence_predictions(data, windows, cfg.horizon);
    ev.report = evaluate_forecast(ev.actual, ev.predicted, cfg.recall_k_fraction);
    return ev;
}

void write_predictions_csv(const std::string& path, const PreparedData& data,
                           const std::vector<SampleWindow>& windows, const Tensor& actual, const Tensor& predicted) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    const auto& ids = data.dataset.catalog.region_ids;
    const std::size_t n = ids.size(), tau = actual.dim(2);
    out << "window_start,target_time,region_id,step,predicted,actual\n";
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const std::size_t first = windows[w].window_start + windows[w].inputs.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < tau; ++j) {
                const std::size_t k = (w * n + i) * tau + j;
                out << windows[w].window_start << ',' << (first + j) << ',' << ids[i] << ',' << (j + 1) << ','
                    << num(predicted[k]) << ',' << num(actual[k]) << '\n';
            }
    }
}

std::vector<std::string> export_artifacts(const SmaHyperModel& model, const PreparedData& data,
                                          const ExperimentConfig& cfg, const std::string& dir_name) {
    const fs::path dir = dir_name;
    fs::create_directories(dir);
    std::vector<std::string> written;
    const auto& ids = data.dataset.catalog.region_ids;
    const std::size_t n = ids.size();

    // Window-dependent structures (the temporal view) come from the most recent window.
    const std::vector<SampleWindow>* source = &data.windows.test;
    if (source->empty()) source = &data.windows.val;
    if (source->empty()) source = &data.windows.train;
    const Batch batch = make_batch(*source, {source->size() - 1});
    const std::vector<ViewStructure> structures = model.structures(batch);

    for (const auto& vs : structures) {
        const std::string v = view_name(vs.view);
        const Tensor& a = vs.graph.A.value();  // [N, N] or [1, N, N]
        const fs::path gpath = dir / ("graph_" + v + ".csv");
        std::ofstream g(gpath);
        g << "source_region,target_region,weight\n";
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (a[i * n + j] != 0.0) g << ids[i] << ',' << ids[j] << ',' << num(a[i * n + j]) << '\n';
        written.push_back(gpath.string());
        if (!vs.hyper) continue;

        const Tensor& h = vs.hyper->H.value();  // [N, I] or [1, N, I]
        const std::size_t edges = h.shape().back();
        const fs::path hpath = dir / ("hypergraph_" + v + ".csv");
        std::ofstream hf(hpath);
        hf << "region_id,hyperedge,weight\n";
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t e = 0; e < edges; ++e)
                if (h[i * edges + e] != 0.0) hf << ids[i] << ',' << e << ',' << num(h[i * edges + e]) << '\n';
        written.push_back(hpath.string());

        const fs::path mpath = dir / ("hyperedge_members_" + v + ".csv");
        std::ofstream mf(mpath);
        mf << "hyperedge,rank,region_id,weight\n";
        for (std::size_t e = 0; e < edges; ++e) {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = h[i * edges + e];
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return col[x] > col[y]; });
            std::size_t rank = 0;
            for (std::size_t i : order) {
                if (rank == std::min(kTopMembers, vs.hyper->k_members) || col[i] == 0.0) break;
                mf << e << ',' << ++rank << ',' << ids[i] << ',' << num(col[i]) << '\n';
            }
        }
        written.push_back(mpath.string());
    }

    if (!data.windows.test.empty()) {
        const SplitEvaluation ev = evaluate_model(model, data, cfg, Split::test);
        const fs::path p = dir / "predictions_test.csv";
        write_predictions_csv(p.string(), data, data.windows.test, ev.actual, ev.predicted);
        written.push_back(p.string());
        const fs::path m = dir / "stepwise_metrics_test.csv";
        write_report_csv(m.string(), ev.report);
        written.push_back(m.string());
        const fs::path r = dir / "region_error.csv";
        write_region_error_csv(r.string(), region_errors(ev.actual, ev.predicted, ids));
        written.push_back(r.string());
    }
    return written;
}

}  // namespace smahyper
