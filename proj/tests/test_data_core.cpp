#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "oracles.hpp"
#include "smahyper/data_core.hpp"
#include "smahyper/errors.hpp"
#include "smahyper/ingestion.hpp"

using namespace smahyper;
using oracle::to_matrix;
using testsupport::int_between;
using testsupport::random_risk;

namespace {

RiskTensor raw_tensor(const std::vector<std::vector<double>>& rows) {
    return RiskTensor{Tensor::from_rows(rows), RiskKind::raw, 24};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("risk score examples") {
    const auto r = compute_risk_scores({{0, 0, 1}, {0, 0, 1}, {0, 0, 2}, {1, 1, 3}}, 2, 2);
    CHECK(r.at(0, 0) == 4.0);
    CHECK(r.at(0, 1) == 0.0);
    CHECK(r.at(1, 0) == 0.0);
    CHECK(r.at(1, 1) == 3.0);
}

TEST_CASE("risk scores match per-event accumulation on random instances") {
    Rng rng(101);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = int_between(rng, 1, 10), t = int_between(rng, 1, 20);
        const auto events = testsupport::random_events(rng, n, t, rng.below(60));
        const auto got = compute_risk_scores(events, n, t);
        const auto want = oracle::risk_scores(events, n, t);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < t; ++j) REQUIRE(got.at(i, j) == want[i][j]);
    }
}

TEST_CASE("out-of-range events are rejected") {
    CHECK_THROWS_AS(compute_risk_scores({{2, 0, 1}}, 2, 2), DataError);
    CHECK_THROWS_AS(compute_risk_scores({{0, 0, 4}}, 2, 2), DataError);
}

TEST_CASE("PKDE fit examples") {
    // Regional totals 1024, 32, 0: epsilon 1, 2^-5 and the 2^-10 floor.
    const auto train = raw_tensor({{512, 512}, {32, 0}, {0, 0}});
    const PkdeParams p = fit_pkde(train);
    CHECK(p.intensity[0] == -0.05);
    CHECK(p.intensity[2] == -1.0);
    CHECK(p.intensity[1] == doctest::Approx(-1.0 + 0.95 * (5.0 / 10.0)).epsilon(1e-12));
    CHECK(p.intensity[1] == doctest::Approx(-0.525).epsilon(1e-12));
    CHECK(p.nonzero_max == 512.0);
}

TEST_CASE("PKDE apply examples") {
    const auto train = raw_tensor({{4, 8, 0}, {0, 1, 0}});
    const PkdeParams p = fit_pkde(train);
    const auto out = apply_pkde(train, p);
    CHECK(out.at(0, 2) == -0.05);  // zero cell in the max-epsilon region
    CHECK(out.at(0, 0) == 0.5);
    CHECK(out.at(0, 1) == 1.0);
    CHECK(out.at(1, 0) == -1.0);

    const auto later = raw_tensor({{12, 2, 0}, {0, 0, 3}});
    const auto mapped = apply_pkde(later, p);
    const auto o = oracle::pkde_fit(to_matrix(train));
    CHECK(mapped.at(0, 0) == 1.0);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t t = 0; t < 3; ++t)
            CHECK(mapped.at(i, t) == doctest::Approx(oracle::pkde_value(o, i, later.at(i, t))).epsilon(1e-12));
}

TEST_CASE("PKDE properties on random tensors") {
    Rng rng(202);
    for (int rep = 0; rep < 100; ++rep) {
        const RiskTensor r = random_risk(rng);
        const PkdeParams p = fit_pkde(r);
        const RiskTensor out = apply_pkde(r, p);
        const auto o = oracle::pkde_fit(to_matrix(r));
        for (std::size_t i = 0; i < r.regions(); ++i)
            for (std::size_t t = 0; t < r.steps(); ++t) {
                const double raw = r.at(i, t), v = out.at(i, t);
                if (raw == 0.0) {
                    REQUIRE(v >= -1.0);
                    REQUIRE(v < 0.0);
                } else {
                    REQUIRE(v >= 0.0);
                    REQUIRE(v <= 1.0);
                }
                REQUIRE(v == doctest::Approx(oracle::pkde_value(o, i, raw)).epsilon(1e-12));
            }
        // Boundary values and monotone intensity.
        const auto [lo, hi] = std::minmax_element(p.epsilon.begin(), p.epsilon.end());
        if (*lo != *hi) {
            REQUIRE(p.intensity[static_cast<std::size_t>(lo - p.epsilon.begin())] == -1.0);
            REQUIRE(p.intensity[static_cast<std::size_t>(hi - p.epsilon.begin())] == -0.05);
        }
        for (std::size_t i = 0; i < p.epsilon.size(); ++i)
            for (std::size_t j = 0; j < p.epsilon.size(); ++j)
                if (p.epsilon[i] < p.epsilon[j]) REQUIRE(p.intensity[i] < p.intensity[j]);
        // Rank preservation over nonzero values.
        for (std::size_t a = 0; a < r.values.size(); ++a)
            for (std::size_t b = 0; b < r.values.size(); ++b) {
                const double x = r.values[a], y = r.values[b];
                if (x > 0.0 && y > 0.0 && x < y) REQUIRE(out.values[a] < out.values[b]);
            }
    }
}

TEST_CASE("PKDE degenerate inputs") {
    CHECK_THROWS_AS(fit_pkde(raw_tensor({{0, 0}, {0, 0}})), DataError);
    const PkdeParams even = fit_pkde(raw_tensor({{1, 1}, {2, 0}}));
    CHECK(even.intensity == std::vector<double>{-0.5, -0.5});
}

TEST_CASE("raw to PKDE to raw is the identity on nonzero training values") {
    Rng rng(303);
    for (int rep = 0; rep < 20; ++rep) {
        const RiskTensor r = random_risk(rng);
        const PkdeParams p = fit_pkde(r);
        const RiskTensor out = apply_pkde(r, p);
        for (std::size_t i = 0; i < r.values.size(); ++i)
            if (r.values[i] > 0.0)
                REQUIRE(out.values[i] * p.nonzero_max == doctest::Approx(r.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("sliding windows") {
    const std::size_t n = 2, total = 20;
    Tensor v({n, total});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < total; ++t) v[i * total + t] = static_cast<double>(100 * i + t);
    const RiskTensor r{v, RiskKind::raw, 24};
    const WindowSet ws = make_windows(r, {}, 12, 6, {1.0, 0.0});
    REQUIRE(ws.train.size() == 3);
    for (std::size_t s = 0; s < 3; ++s) {
        const auto& w = ws.train[s];
        CHECK(w.window_start == s);
        CHECK(w.inputs.shape() == Shape{n, 12});
        CHECK(w.targets.shape() == Shape{n, 6});
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(w.inputs[i * 12 + 11] == static_cast<double>(100 * i + s + 11));
            CHECK(w.targets[i * 6] == static_cast<double>(100 * i + s + 12));
        }
    }
    CHECK_THROWS_AS(make_windows(r, {}, 15, 6, {1.0, 0.0}), DataError);
}

TEST_CASE("split boundaries") {
    const auto b = split_boundaries(100, {0.8, 0.1});
    CHECK(b.train_end == 80);
    CHECK(b.val_end == 90);
    CHECK_THROWS_AS(split_boundaries(100, {0.8, 0.3}), UsageError);
}

TEST_CASE("no training window reaches past the training boundary") {
    Rng rng(404);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t total = int_between(rng, 30, 80), t_in = int_between(rng, 2, 8), tau = int_between(rng, 1, 4);
        const RiskTensor r{testsupport::uniform_tensor({3, total}, rng, 0.0, 1.0), RiskKind::raw, 24};
        const WindowSet ws = make_windows(r, {}, t_in, tau, {0.7, 0.15});
        REQUIRE(!ws.train.empty());
        for (const auto* set : {&ws.train, &ws.val, &ws.test})
            for (const auto& w : *set) {
                const std::size_t last_input = w.window_start + t_in - 1, first_target = w.window_start + t_in;
                REQUIRE(last_input < first_target);
                for (std::size_t j = 0; j < tau; ++j)
                    REQUIRE(w.targets[j] == r.at(0, first_target + j));
            }
        for (const auto& w : ws.train) REQUIRE(w.window_start + t_in + tau <= ws.bounds.train_end);
        std::size_t count = ws.train.size() + ws.val.size() + ws.test.size();
        REQUIRE(count == total - t_in - tau + 1);
    }
}

TEST_CASE("time slices") {
    const auto r = raw_tensor({{1, 2, 3, 4}, {5, 6, 7, 8}});
    const auto s = time_slice(r, 1, 3);
    CHECK(s.values.vec() == std::vector<double>{2, 3, 6, 7});
    CHECK_THROWS(time_slice(r, 3, 5));
}

TEST_CASE("synthetic city without hotspots is empty") {
    const auto city = generate_synthetic_city(9, 40, 0, 3);
    const auto r = compute_risk_scores(city.events, 9, 40);
    CHECK(r.values.sum() == 0.0);
}

TEST_CASE("synthetic city is deterministic") {
    const auto a = generate_synthetic_city(16, 60, 3, 42);
    const auto b = generate_synthetic_city(16, 60, 3, 42);
    const auto c = generate_synthetic_city(16, 60, 3, 43);
    CHECK(a.events.size() == b.events.size());
    CHECK(a.hotspots == b.hotspots);
    CHECK(compute_risk_scores(a.events, 16, 60).values.vec() == compute_risk_scores(b.events, 16, 60).values.vec());
    CHECK(compute_risk_scores(a.events, 16, 60).values.vec() != compute_risk_scores(c.events, 16, 60).values.vec());

    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "smahyper_test_synth";
    fs::remove_all(base);
    write_synthetic_city(a, base / "a");
    write_synthetic_city(b, base / "b");
    for (const auto& entry : fs::directory_iterator(base / "a")) {
        INFO(entry.path().filename().string());
        CHECK(slurp(entry.path()) == slurp(base / "b" / entry.path().filename()));
    }
    fs::remove_all(base);
}

TEST_CASE("hotspots have higher event counts") {
    const auto city = generate_synthetic_city(25, 240, 5, 7);
    std::vector<double> counts(25, 0.0);
    for (const auto& e : city.events) counts[e.region_index] += 1.0;
    std::vector<bool> hot(25, false);
    for (auto h : city.hotspots) hot[h] = true;
    double hot_sum = 0.0, cold_sum = 0.0, cold_max = 0.0;
    for (std::size_t i = 0; i < 25; ++i) {
        if (hot[i]) {
            hot_sum += counts[i];
        } else {
            cold_sum += counts[i];
            cold_max = std::max(cold_max, counts[i]);
        }
    }
    CHECK(hot_sum / 5.0 > cold_sum / 20.0);
    for (auto h : city.hotspots) CHECK(counts[h] > cold_max);
}
