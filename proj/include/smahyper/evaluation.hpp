// Raw-scale forecast metrics (RMSE, MAE, Recall@K), the persistence baseline
// and report serialization. Forecast stacks are [W, N, tau]: windows,
// regions, horizon steps.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smahyper/data_core.hpp"
#include "smahyper/tensor.hpp"

namespace smahyper {

// sqrt(mean over steps of the per-step MSE over regions and windows).
double rmse(const Tensor& actual, const Tensor& predicted);
double mae(const Tensor& actual, const Tensor& predicted);

struct RecallResult {
    std::optional<double> value;  // undefined when every step was skipped
    std::size_t retained = 0;     // (window, step) pairs with a positive actual region
    std::size_t skipped = 0;
    std::vector<std::optional<double>> per_step;
    std::vector<std::size_t> per_step_retained;
};

// K = round(k_fraction * N), at least 1.
std::size_t recall_k(double k_fraction, std::size_t n_regions);

// Indices of the k largest entries of `values`, ties to the lower index,
// sorted by index.
std::vector<std::size_t> top_k_indices(const std::vector<double>& values, std::size_t k);

RecallResult recall_at_k(const Tensor& actual, const Tensor& predicted, double k_fraction);

struct StepMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> recall;
    std::size_t recall_windows = 0;
};

struct EvalReport {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> recall_at_k;
    double k_fraction = 0.2;
    std::vector<StepMetrics> per_step;
    std::size_t n_windows = 0;
    std::size_t recall_retained = 0;
    std::size_t recall_skipped = 0;
};

EvalReport evaluate_forecast(const Tensor& actual, const Tensor& predicted, double k_fraction);

// Maps normalized values back to the raw risk scale: negatives clamp to 0,
// the rest scale by the training nonzero maximum.
Tensor to_raw_scale(const Tensor& normalized, double nonzero_max);

// Repeats the last input step across the horizon: [N, T] -> [N, tau].
Tensor persistence_baseline(const SampleWindow& window, std::size_t horizon);
Tensor persistence_baseline(const Tensor& inputs, std::size_t horizon);

struct RegionError {
    std::string region_id;
    double rmse = 0.0;
    double mae = 0.0;
};
std::vector<RegionError> region_errors(const Tensor& actual, const Tensor& predicted,
                                       const std::vector<std::string>& region_ids);

void write_report_csv(const std::string& path, const EvalReport& report);
void write_region_error_csv(const std::string& path, const std::vector<RegionError>& rows);
std::string format_report(const EvalReport& report, const std::string& title);

}  // namespace smahyper
