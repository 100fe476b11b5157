#include "smahyper/data_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "smahyper/errors.hpp"
#include "smahyper/rng.hpp"

namespace smahyper {

RiskTensor compute_risk_scores(const std::vector<AccidentEvent>& events, std::size_t n_regions,
                               std::size_t n_steps, int interval_hours) {
    RiskTensor out{Tensor({n_regions, n_steps}), RiskKind::raw, interval_hours};
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.region_index >= n_regions || e.time_index >= n_steps || e.severity < 1 ||
            e.severity > 3) {
            throw DataError("event #" + std::to_string(i) + " (region " +
                            std::to_string(e.region_index) + ", time " +
                            std::to_string(e.time_index) + ", severity " +
                            std::to_string(e.severity) + ") is out of bounds for a " +
                            std::to_string(n_regions) + "x" + std::to_string(n_steps) + " tensor");
        }
        out.values[e.region_index * n_steps + e.time_index] += e.severity;
    }
    return out;
}

PkdeParams fit_pkde(const RiskTensor& train_slice, double floor, double delta) {
    const std::size_t n = train_slice.regions(), t = train_slice.steps();
    std::vector<double> totals(n, 0.0);
    double nonzero_max = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < t; ++j) {
            const double v = train_slice.at(i, j);
            totals[i] += v;
            nonzero_max = std::max(nonzero_max, v);
        }
    const double max_total = n ? *std::max_element(totals.begin(), totals.end()) : 0.0;
    if (max_total <= 0.0) throw DataError("no accidents in training period");

    PkdeParams p;
    p.floor = floor;
    p.delta = delta;
    p.nonzero_max = nonzero_max;
    p.epsilon.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.epsilon[i] = std::max(totals[i] / max_total, floor);

    const auto [lo_it, hi_it] = std::minmax_element(p.epsilon.begin(), p.epsilon.end());
    const double lo = std::log2(*lo_it), hi = std::log2(*hi_it);
    p.intensity.resize(n);
    if (hi == lo) {
        p.b1 = 0.0;
        p.b2 = -0.5;
        std::fill(p.intensity.begin(), p.intensity.end(), -0.5);
        return p;
    }
    // pi(eps_min) = -1, pi(eps_max) = -delta
    p.b1 = (1.0 - delta) / (hi - lo);
    p.b2 = -delta - p.b1 * hi;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = std::log2(p.epsilon[i]);
        // Pin the end points exactly; the affine form can be off by one ulp.
        if (l == lo) {
            p.intensity[i] = -1.0;
        } else if (l == hi) {
            p.intensity[i] = -delta;
        } else {
            p.intensity[i] = p.b1 * l + p.b2;
        }
    }
    return p;
}

RiskTensor apply_pkde(const RiskTensor& tensor, const PkdeParams& params) {
    const std::size_t n = tensor.regions(), t = tensor.steps();
    if (params.intensity.size() != n) {
        throw DataError("PKDE parameters fitted for " + std::to_string(params.intensity.size()) +
                        " regions applied to " + std::to_string(n));
    }
    RiskTensor out{Tensor({n, t}), RiskKind::pkde, tensor.interval_hours};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < t; ++j) {
            const double v = tensor.at(i, j);
            out.values[i * t + j] =
                v == 0.0 ? params.intensity[i] : std::min(v / params.nonzero_max, 1.0);
        }
    return out;
}

RiskTensor time_slice(const RiskTensor& tensor, std::size_t begin, std::size_t end) {
    const std::size_t n = tensor.regions(), t = tensor.steps();
    if (begin > end || end > t) throw std::out_of_range("time_slice out of range");
    RiskTensor out{Tensor({n, end - begin}), tensor.kind, tensor.interval_hours};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = begin; j < end; ++j) out.values[i * (end - begin) + j - begin] = tensor.at(i, j);
    return out;
}

SplitBoundaries split_boundaries(std::size_t n_steps, SplitRatios split) {
    if (split.train <= 0.0 || split.val < 0.0 || split.train + split.val > 1.0) {
        throw UsageError("split ratios must satisfy 0 < train, 0 <= val, train + val <= 1");
    }
    const double total = static_cast<double>(n_steps);
    SplitBoundaries b;
    b.train_end = static_cast<std::size_t>(std::llround(split.train * total));
    b.val_end = static_cast<std::size_t>(std::llround((split.train + split.val) * total));
    b.val_end = std::min(b.val_end, n_steps);
    return b;
}

WindowSet make_windows(const RiskTensor& tensor, const ExternalFeatures& externals,
                       std::size_t input_steps, std::size_t horizon, SplitRatios split) {
    const std::size_t n = tensor.regions(), total = tensor.steps();
    if (input_steps == 0 || horizon == 0) throw UsageError("input steps and horizon must be positive");
    if (input_steps + horizon > total) {
        throw DataError("time axis has " + std::to_string(total) + " steps; at least " +
                        std::to_string(input_steps + horizon) + " are needed for one window");
    }
    const std::size_t dm = externals.meteorology.size() ? externals.meteorology.dim(2) : 0;
    const std::size_t dc = externals.calendar.size() ? externals.calendar.dim(2) : 0;
    if (dm && (externals.meteorology.dim(0) != n || externals.meteorology.dim(1) != total)) {
        throw DataError("meteorology tensor " + shape_str(externals.meteorology.shape()) +
                        " does not match risk tensor " + shape_str(tensor.values.shape()));
    }
    if (dc && (externals.calendar.dim(0) != n || externals.calendar.dim(1) != total)) {
        throw DataError("calendar tensor " + shape_str(externals.calendar.shape()) +
                        " does not match risk tensor " + shape_str(tensor.values.shape()));
    }

    WindowSet ws;
    ws.bounds = split_boundaries(total, split);
    for (std::size_t s = 0; s + input_steps + horizon <= total; ++s) {
        SampleWindow w;
        w.window_start = s;
        w.inputs = Tensor({n, input_steps});
        w.targets = Tensor({n, horizon});
        w.external_met = Tensor({n, input_steps, dm});
        w.external_cal = Tensor({n, input_steps, dc});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < input_steps; ++j) {
                w.inputs[i * input_steps + j] = tensor.at(i, s + j);
                for (std::size_t c = 0; c < dm; ++c)
                    w.external_met[(i * input_steps + j) * dm + c] =
                        externals.meteorology[(i * total + s + j) * dm + c];
                for (std::size_t c = 0; c < dc; ++c)
                    w.external_cal[(i * input_steps + j) * dc + c] =
                        externals.calendar[(i * total + s + j) * dc + c];
            }
            for (std::size_t j = 0; j < horizon; ++j)
                w.targets[i * horizon + j] = tensor.at(i, s + input_steps + j);
        }
        const std::size_t last_target = s + input_steps + horizon - 1;
        if (last_target < ws.bounds.train_end) {
            ws.train.push_back(std::move(w));
        } else if (last_target < ws.bounds.val_end) {
            ws.val.push_back(std::move(w));
        } else {
            ws.test.push_back(std::move(w));
        }
    }
    return ws;
}

SyntheticCity generate_synthetic_city(std::size_t n_regions, std::size_t n_steps,
                                      std::size_t n_hotspots, std::uint64_t seed,
                                      int interval_hours) {
    if (n_regions == 0) throw UsageError("synthetic city needs at least one region");
    if (n_hotspots > n_regions) throw UsageError("more hotspots than regions");
    if (interval_hours <= 0 || 24 % interval_hours != 0) {
        throw UsageError("interval_hours must divide 24");
    }

    SyntheticCity city;
    city.n_steps = n_steps;
    city.interval_hours = interval_hours;
    city.grid_side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_regions))));
    city.padding_cells = city.grid_side * city.grid_side - n_regions;

    for (std::size_t i = 0; i < n_regions; ++i) city.region_ids.push_back("R" + std::to_string(i));

    // Rook adjacency over the first n_regions cells of the grid (row-major).
    const std::size_t side = city.grid_side;
    for (std::size_t i = 0; i < n_regions; ++i) {
        const std::size_t r = i / side, c = i % side;
        if (c + 1 < side && i + 1 < n_regions) city.edges.emplace_back(i, i + 1);
        if (r + 1 < side && i + side < n_regions) city.edges.emplace_back(i, i + side);
    }

    Rng rng(seed);
    std::vector<std::size_t> order(n_regions);
    for (std::size_t i = 0; i < n_regions; ++i) order[i] = i;
    rng.shuffle(order);
    city.hotspots.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hotspots));
    std::sort(city.hotspots.begin(), city.hotspots.end());
    std::vector<bool> is_hot(n_regions, false);
    for (std::size_t h : city.hotspots) is_hot[h] = true;

    std::vector<double> base(n_regions, 0.0);
    std::vector<double> phase(n_regions, 0.0);
    for (std::size_t i = 0; i < n_regions; ++i) {
        base[i] = is_hot[i] ? rng.uniform(0.5, 1.0) : 0.0;
        phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    // Background rate for non-hotspots; zero when the city has no hotspots so
    // the empty fixture stays exactly empty.
    const double background = n_hotspots > 0 ? 0.01 : 0.0;

    const std::size_t steps_per_day = static_cast<std::size_t>(24 / interval_hours);
    for (std::size_t t = 0; t < n_steps; ++t) {
        const double day_phase =
            2.0 * std::numbers::pi * static_cast<double>(t % steps_per_day) /
            static_cast<double>(steps_per_day);
        for (std::size_t i = 0; i < n_regions; ++i) {
            const double rate = is_hot[i] ? base[i] * (1.0 + 0.6 * std::cos(day_phase + phase[i]))
                                          : background;
            const int count = rng.poisson(rate);
            for (int k = 0; k < count; ++k) {
                const double u = rng.uniform();
                const int sev = u < 0.85 ? 1 : (u < 0.99 ? 2 : 3);
                city.events.push_back({i, t, sev});
                city.event_hour_offsets.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(interval_hours))));
            }
        }
    }

    city.poi_names = {"retail", "food", "health", "education"};
    city.road_names = {"junction_density", "mean_width", "major_road_km"};
    city.poi = Tensor({n_regions, city.poi_names.size()});
    city.road = Tensor({n_regions, city.road_names.size()});
    for (std::size_t i = 0; i < n_regions; ++i) {
        const double lift = is_hot[i] ? 2.0 : 0.0;
        for (std::size_t c = 0; c < city.poi_names.size(); ++c)
            city.poi[i * city.poi_names.size() + c] = 1.0 + lift + 0.3 * rng.normal();
        for (std::size_t c = 0; c < city.road_names.size(); ++c)
            city.road[i * city.road_names.size() + c] = 2.0 + 0.8 * lift + 0.3 * rng.normal();
    }

    city.weather_names = {"temperature", "visibility", "snow_depth"};
    const std::int64_t hours = static_cast<std::int64_t>(n_steps) * interval_hours;
    for (std::int64_t h = 0; h < hours; ++h) {
        const double day = static_cast<double>(h) / 24.0;
        const double temp = 8.0 + 7.0 * std::sin(2.0 * std::numbers::pi * (day - 100.0) / 365.0) +
                            3.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(h % 24) / 24.0) +
                            rng.normal();
        const double vis = std::max(0.5, 20.0 + 4.0 * rng.normal());
        const double snow = temp < 1.0 ? std::max(0.0, rng.normal()) : 0.0;
        city.weather.push_back({h, {temp, vis, snow}});
    }

    // Fixed public-holiday offsets (days from 1 January), kept if in range.
    const std::int64_t days = (hours + 23) / 24;
    for (std::int64_t d : {0, 91, 94, 122, 150, 241, 358, 359}) {
        if (d < days) city.holiday_days.push_back(d);
    }
    return city;
}

}  // namespace smahyper
