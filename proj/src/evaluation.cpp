#include "smahyper/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace smahyper {

namespace {

struct Dims {
    std::size_t windows, regions, steps;
};

Dims check_stack(const Tensor& actual, const Tensor& predicted) {
    if (actual.shape() != predicted.shape()) {
        throw std::invalid_argument("metric inputs differ in shape: " + shape_str(actual.shape()) + " vs " +
                                    shape_str(predicted.shape()));
    }
    const Shape& s = actual.shape();
    if (s.size() == 2) return {1, s[0], s[1]};
    if (s.size() == 3) return {s[0], s[1], s[2]};
    throw std::invalid_argument("metric inputs must be [N, tau] or [W, N, tau], got " + shape_str(s));
}

std::size_t flat(const Dims& d, std::size_t w, std::size_t n, std::size_t j) {
    return (w * d.regions + n) * d.steps + j;
}

std::vector<double> step_mse(const Tensor& a, const Tensor& p, const Dims& d) {
    std::vector<double> out(d.steps, 0.0);
    for (std::size_t j = 0; j < d.steps; ++j) {
        double acc = 0.0;
        for (std::size_t w = 0; w < d.windows; ++w)
            for (std::size_t n = 0; n < d.regions; ++n) {
                const double e = a[flat(d, w, n, j)] - p[flat(d, w, n, j)];
                acc += e * e;
            }
        out[j] = acc / static_cast<double>(d.windows * d.regions);
    }
    return out;
}

std::vector<double> step_mae(const Tensor& a, const Tensor& p, const Dims& d) {
    std::vector<double> out(d.steps, 0.0);
    for (std::size_t j = 0; j < d.steps; ++j) {
        double acc = 0.0;
        for (std::size_t w = 0; w < d.windows; ++w)
            for (std::size_t n = 0; n < d.regions; ++n) acc += std::abs(a[flat(d, w, n, j)] - p[flat(d, w, n, j)]);
        out[j] = acc / static_cast<double>(d.windows * d.regions);
    }
    return out;
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

}  // namespace

double rmse(const Tensor& actual, const Tensor& predicted) {
    const Dims d = check_stack(actual, predicted);
    return std::sqrt(mean(step_mse(actual, predicted, d)));
}

double mae(const Tensor& actual, const Tensor& predicted) {
    const Dims d = check_stack(actual, predicted);
    return mean(step_mae(actual, predicted, d));
}

std::size_t recall_k(double k_fraction, std::size_t n_regions) {
    if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw std::invalid_argument("k_fraction must be in (0, 1]");
    const auto k = static_cast<std::size_t>(std::llround(k_fraction * static_cast<double>(n_regions)));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(1, n_regions));
}

std::vector<std::size_t> top_k_indices(const std::vector<double>& values, std::size_t k) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t x, std::size_t y) {
                          return values[x] > values[y] || (values[x] == values[y] && x < y);
                      });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

RecallResult recall_at_k(const Tensor& actual, const Tensor& predicted, double k_fraction) {
    const Dims d = check_stack(actual, predicted);
    const std::size_t k = recall_k(k_fraction, d.regions);
    RecallResult r;
    std::vector<double> step_sum(d.steps, 0.0);
    r.per_step_retained.assign(d.steps, 0);
    double total = 0.0;
    std::vector<double> a(d.regions), p(d.regions);
    for (std::size_t w = 0; w < d.windows; ++w)
        for (std::size_t j = 0; j < d.steps; ++j) {
            std::size_t positives = 0;
            for (std::size_t n = 0; n < d.regions; ++n) {
                a[n] = actual[flat(d, w, n, j)];
                p[n] = predicted[flat(d, w, n, j)];
                if (a[n] > 0.0) ++positives;
            }
            if (positives == 0) {
                ++r.skipped;
                continue;
            }
            // Actual set: top-K among strictly positive cells only.
            std::vector<std::size_t> order;
            for (std::size_t n = 0; n < d.regions; ++n)
                if (a[n] > 0.0) order.push_back(n);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] > a[y]; });
            order.resize(std::min(k, order.size()));
            std::sort(order.begin(), order.end());
            const std::vector<std::size_t> pred = top_k_indices(p, k);
            std::vector<std::size_t> hit;
            std::set_intersection(order.begin(), order.end(), pred.begin(), pred.end(), std::back_inserter(hit));
            const double rec = static_cast<double>(hit.size()) / static_cast<double>(order.size());
            total += rec;
            step_sum[j] += rec;
            ++r.per_step_retained[j];
            ++r.retained;
        }
    if (r.retained) r.value = total / static_cast<double>(r.retained);
    r.per_step.resize(d.steps);
    for (std::size_t j = 0; j < d.steps; ++j)
        if (r.per_step_retained[j]) r.per_step[j] = step_sum[j] / static_cast<double>(r.per_step_retained[j]);
    return r;
}

EvalReport evaluate_forecast(const Tensor& actual, const Tensor& predicted, double k_fraction) {
    const Dims d = check_stack(actual, predicted);
    EvalReport rep;
    rep.k_fraction = k_fraction;
    rep.n_windows = d.windows;
    const auto mse_steps = step_mse(actual, predicted, d);
    const auto mae_steps = step_mae(actual, predicted, d);
    rep.rmse = std::sqrt(mean(mse_steps));
    rep.mae = mean(mae_steps);
    const RecallResult rec = recall_at_k(actual, predicted, k_fraction);
    rep.recall_at_k = rec.value;
    rep.recall_retained = rec.retained;
    rep.recall_skipped = rec.skipped;
    for (std::size_t j = 0; j < d.steps; ++j) {
        rep.per_step.push_back({std::sqrt(mse_steps[j]), mae_steps[j], rec.per_step[j], rec.per_step_retained[j]});
    }
    return rep;
}

Tensor to_raw_scale(const Tensor& normalized, double nonzero_max) {
    Tensor out = normalized;
    for (double& v : out.vec()) v = v > 0.0 ? v * nonzero_max : 0.0;
    return out;
}

Tensor persistence_baseline(const Tensor& inputs, std::size_t horizon) {
    if (inputs.rank() != 2 || inputs.dim(1) == 0) {
        throw std::invalid_argument("persistence baseline: inputs must be [N, T] with T > 0");
    }
    const std::size_t n = inputs.dim(0), t = inputs.dim(1);
    Tensor out({n, horizon});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < horizon; ++j) out[i * horizon + j] = inputs[i * t + t - 1];
    return out;
}

Tensor persistence_baseline(const SampleWindow& window, std::size_t horizon) {
    return persistence_baseline(window.inputs, horizon);
}

std::vector<RegionError> region_errors(const Tensor& actual, const Tensor& predicted,
                                       const std::vector<std::string>& region_ids) {
    const Dims d = check_stack(actual, predicted);
    if (region_ids.size() != d.regions) throw std::invalid_argument("region id count does not match forecasts");
    std::vector<RegionError> out;
    const double cells = static_cast<double>(d.windows * d.steps);
    for (std::size_t n = 0; n < d.regions; ++n) {
        double se = 0.0, ae = 0.0;
        for (std::size_t w = 0; w < d.windows; ++w)
            for (std::size_t j = 0; j < d.steps; ++j) {
                const double e = actual[flat(d, w, n, j)] - predicted[flat(d, w, n, j)];
                se += e * e;
                ae += std::abs(e);
            }
        out.push_back({region_ids[n], std::sqrt(se / cells), ae / cells});
    }
    return out;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    auto out = open_out(path);
    out << "step,rmse,mae,recall_at_k,recall_windows\n";
    for (std::size_t j = 0; j < report.per_step.size(); ++j) {
        const auto& s = report.per_step[j];
        out << (j + 1) << ',' << fmt(s.rmse) << ',' << fmt(s.mae) << ',' << (s.recall ? fmt(*s.recall) : "")
            << ',' << s.recall_windows << '\n';
    }
    out << "all," << fmt(report.rmse) << ',' << fmt(report.mae) << ','
        << (report.recall_at_k ? fmt(*report.recall_at_k) : "") << ',' << report.recall_retained << '\n';
}

void write_region_error_csv(const std::string& path, const std::vector<RegionError>& rows) {
    auto out = open_out(path);
    out << "region_id,rmse,mae\n";
    for (const auto& r : rows) out << r.region_id << ',' << fmt(r.rmse) << ',' << fmt(r.mae) << '\n';
}

std::string format_report(const EvalReport& report, const std::string& title) {
    std::ostringstream os;
    char line[128];
    os << title << " (" << report.n_windows << " windows, K = " << fmt(report.k_fraction * 100) << "%)\n";
    os << "  step       RMSE        MAE   Recall@K\n";
    auto rec = [](const std::optional<double>& r) {
        if (!r) return std::string("n/a");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *r);
        return std::string(buf);
    };
    for (std::size_t j = 0; j < report.per_step.size(); ++j) {
        const auto& s = report.per_step[j];
        std::snprintf(line, sizeof line, "  %4zu %10.6f %10.6f %10s\n", j + 1, s.rmse, s.mae,
                      rec(s.recall).c_str());
        os << line;
    }
    std::snprintf(line, sizeof line, "   all %10.6f %10.6f %10s\n", report.rmse, report.mae,
                  rec(report.recall_at_k).c_str());
    os << line;
    if (report.recall_skipped) {
        os << "  recall skipped " << report.recall_skipped << " window-steps with no accidents\n";
    }
    return os.str();
}

}  // namespace smahyper
