// Risk tensors, the zero-inflation (PKDE) transform, sliding windows and the
// synthetic city fixture.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smahyper/tensor.hpp"

namespace smahyper {

enum class Severity : int { slight = 1, serious = 2, fatal = 3 };

struct AccidentEvent {
    std::size_t region_index = 0;
    std::size_t time_index = 0;
    int severity = 1;
};

enum class RiskKind { raw, pkde };

struct RiskTensor {
    Tensor values;  // [N, T_total]
    RiskKind kind = RiskKind::raw;
    int interval_hours = 24;

    std::size_t regions() const { return values.dim(0); }
    std::size_t steps() const { return values.dim(1); }
    double at(std::size_t n, std::size_t t) const { return values[n * steps() + t]; }
};

struct PkdeParams {
    double b1 = 0.0;
    double b2 = 0.0;
    std::vector<double> epsilon;    // per region, floored
    std::vector<double> intensity;  // pi_i = b1 * log2(eps_i) + b2, in [-1, -delta]
    double floor = 0x1.0p-10;
    double delta = 0.05;
    double nonzero_max = 1.0;  // training-slice maximum of nonzero risk
};

// City-level external covariates aligned to the risk tensor's time axis,
// broadcast over regions.
struct ExternalFeatures {
    Tensor meteorology;  // [N, T_total, d_M]
    Tensor calendar;     // [N, T_total, d_C]
    std::vector<std::string> meteorology_names;
    std::vector<std::string> calendar_names;
};

struct SampleWindow {
    Tensor inputs;        // [N, T]
    Tensor targets;       // [N, tau]
    Tensor external_met;  // [N, T, d_M]
    Tensor external_cal;  // [N, T, d_C]
    std::size_t window_start = 0;
};

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
};

struct SplitBoundaries {
    std::size_t train_end = 0;  // first step outside the training range
    std::size_t val_end = 0;    // first step of the test range
};

struct WindowSet {
    std::vector<SampleWindow> train, val, test;
    SplitBoundaries bounds;
};

// values[n][t] = sum over events in (n, t) of severity.
RiskTensor compute_risk_scores(const std::vector<AccidentEvent>& events, std::size_t n_regions,
                               std::size_t n_steps, int interval_hours = 24);

PkdeParams fit_pkde(const RiskTensor& train_slice, double floor = 0x1.0p-10, double delta = 0.05);
RiskTensor apply_pkde(const RiskTensor& tensor, const PkdeParams& params);

// Columns [begin, end) of a tensor.
RiskTensor time_slice(const RiskTensor& tensor, std::size_t begin, std::size_t end);

SplitBoundaries split_boundaries(std::size_t n_steps, SplitRatios split);

WindowSet make_windows(const RiskTensor& tensor, const ExternalFeatures& externals,
                       std::size_t input_steps, std::size_t horizon, SplitRatios split);

// --- synthetic city -------------------------------------------------------

struct HourlyWeather {
    std::int64_t hour = 0;  // hours since the time origin
    std::vector<double> values;
};

struct SyntheticCity {
    std::vector<std::string> region_ids;
    std::vector<AccidentEvent> events;
    std::vector<int> event_hour_offsets;  // hour within the interval, per event
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    Tensor poi;   // [N, d_P]
    Tensor road;  // [N, d_R]
    std::vector<std::string> poi_names, road_names;
    std::vector<std::string> weather_names;
    std::vector<HourlyWeather> weather;
    std::vector<std::int64_t> holiday_days;  // days since the time origin
    std::vector<std::size_t> hotspots;
    std::size_t grid_side = 0;
    std::size_t padding_cells = 0;
    std::size_t n_steps = 0;
    int interval_hours = 12;
    std::string time_origin = "2021-01-01T00:00:00";
};

SyntheticCity generate_synthetic_city(std::size_t n_regions, std::size_t n_steps,
                                      std::size_t n_hotspots, std::uint64_t seed,
                                      int interval_hours = 12);

}  // namespace smahyper
