#include <doctest.h>

#include <cmath>
#include <limits>

#include "generators.hpp"
#include "gradient_cases.hpp"
#include "smahyper/objectives.hpp"

using namespace smahyper;
using testsupport::uniform_tensor;

namespace {

// Plain-double InfoNCE averaged over every (layer, view, window, region) term.
double contrastive_oracle(const LayerState& st, double tau) {
    double total = 0.0;
    std::size_t terms = 0;
    for (std::size_t l = 0; l < st.graph.size(); ++l)
        for (std::size_t v = 0; v < st.graph[l].size(); ++v) {
            const Tensor& g = st.graph[l][v].value();
            const Tensor& h = st.hyper[l][v].value();
            const std::size_t b = g.dim(0), n = g.dim(1), t = g.dim(2), d = g.dim(3);
            auto pooled = [&](const Tensor& x, std::size_t w, std::size_t i) {
                std::vector<double> out(d, 0.0);
                for (std::size_t s = 0; s < t; ++s)
                    for (std::size_t c = 0; c < d; ++c) out[c] += x[((w * n + i) * t + s) * d + c] / t;
                double norm = 0.0;
                for (double z : out) norm += z * z;
                norm = std::sqrt(norm);
                for (double& z : out) z = norm > 0 ? z / norm : 0.0;
                return out;
            };
            for (std::size_t w = 0; w < b; ++w) {
                std::vector<std::vector<double>> gp, hp;
                for (std::size_t i = 0; i < n; ++i) {
                    gp.push_back(pooled(g, w, i));
                    hp.push_back(pooled(h, w, i));
                }
                for (std::size_t i = 0; i < n; ++i) {
                    std::vector<double> logits(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < d; ++c) dot += gp[i][c] * hp[j][c];
                        logits[j] = dot / tau;
                    }
                    double z = 0.0;
                    for (double x : logits) z += std::exp(x);
                    total += std::log(z) - logits[i];
                    ++terms;
                }
            }
        }
    return total / static_cast<double>(terms);
}

LayerState single_state(const Tensor& g, const Tensor& h) {
    LayerState st;
    st.views = {View::S};
    st.graph = {{ag::constant(g)}};
    st.hyper = {{ag::constant(h)}};
    return st;
}

// [1, N, 1, d] from a list of region vectors.
Tensor as_state(const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({1, rows.size(), 1, rows.front().size()}, flat);
}

}  // namespace

TEST_CASE("aligned pairs with orthogonal negatives give log(1 + 1/e)") {
    const Tensor g = as_state({{1, 0}, {0, 1}});
    const ContrastiveResult r = contrastive_loss(single_state(g, g), 1.0);
    CHECK(r.loss.value()[0] == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(r.loss.value()[0] == doctest::Approx(0.3133).epsilon(1e-4));
    CHECK(r.terms == 2);
}

TEST_CASE("identical region vectors give log N") {
    for (std::size_t n : {2u, 5u, 9u}) {
        const Tensor g = as_state(std::vector<std::vector<double>>(n, {0.3, -0.2, 0.7}));
        CHECK(contrastive_loss(single_state(g, g), 0.5).loss.value()[0] ==
              doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));
    }
}

TEST_CASE("loss decreases as the positive pair aligns") {
    const std::vector<double> h0{1, 0, 0}, h1{0, 1, 0}, h2{0, 0, 1};
    const Tensor h = as_state({h0, h1, h2});
    double previous = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= 10; ++step) {
        const double angle = (1.0 - step / 10.0) * 1.5;  // from far to aligned with h0
        const Tensor g = as_state({{std::cos(angle), std::sin(angle), 0}, h1, h2});
        const double loss = contrastive_loss(single_state(g, h), 1.0).loss.value()[0];
        CHECK(loss < previous);
        previous = loss;
    }
}

TEST_CASE("contrastive loss matches the plain oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t layers = testsupport::int_between(rng, 1, 2);
        const std::size_t views = testsupport::int_between(rng, 1, 4);
        const Shape shape{testsupport::int_between(rng, 1, 3), testsupport::int_between(rng, 2, 6),
                          testsupport::int_between(rng, 1, 4), testsupport::int_between(rng, 1, 5)};
        const LayerState st = testsupport::detail::random_states(rng, layers, views, shape);
        const double tau = 0.2 + rng.uniform();
        const ContrastiveResult r = contrastive_loss(st, tau);
        CHECK(r.loss.value()[0] == doctest::Approx(contrastive_oracle(st, tau)).epsilon(1e-10));
        CHECK(r.terms == layers * views * shape[0] * shape[1]);
        CHECK(r.loss.value()[0] >= 0.0);
    }
}

TEST_CASE("zero-norm pooled vectors count as cosine zero") {
    const Tensor g = as_state({{0, 0}, {0, 1}});
    const Tensor h = as_state({{1, 0}, {0, 1}});
    const ContrastiveResult r = contrastive_loss(single_state(g, h), 1.0);
    CHECK(r.zero_norm_rows == 1);
    // Row 0: logits {0, 0}; row 1: logits {0, 1}.
    const double expected = (std::log(2.0) + std::log(1.0 + std::exp(1.0)) - 1.0) / 2.0;
    CHECK(r.loss.value()[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(contrastive_loss(single_state(g, h), 0.0), std::invalid_argument);
}

TEST_CASE("mse and the joint objective") {
    const ag::Var target = ag::constant(Tensor({2}, std::vector<double>{0, 1}));
    const ag::Var pred = ag::constant(Tensor({2}, std::vector<double>{0, 0}));
    CHECK(mse_loss(target, pred).value()[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(mse_loss(target, ag::constant(Tensor({3}))), std::invalid_argument);

    Rng rng(5);
    nn::ParameterStore store;
    store.add("w", Tensor({2}, std::vector<double>{1, 2}));
    store.add("b", Tensor({1}, 10.0), false);
    CHECK(store.l2_penalty().value()[0] == doctest::Approx(5.0));

    const LayerState st = testsupport::detail::random_states(rng, 2, 2, {2, 4, 3, 2});
    SUBCASE("perfect fit with zero weights is exactly zero") {
        LossWeights w;
        w.lambda1 = 0.0;
        w.lambda2 = 0.0;
        const LossBreakdown b = joint_loss(target, target, st, store, w);
        CHECK(b.mse == 0.0);
        CHECK(b.total == 0.0);
    }
    SUBCASE("total equals the scalar composition bit for bit") {
        for (int i = 0; i < 20; ++i) {
            LossWeights w;
            w.lambda1 = rng.uniform();
            w.lambda2 = rng.uniform() * 0.01;
            const ag::Var p = ag::constant(uniform_tensor({2}, rng));
            const LossBreakdown b = joint_loss(target, p, st, store, w);
            CHECK(b.total == compose_total(b.mse, b.contrastive, b.l2, w.lambda1, w.lambda2));
            CHECK(b.total >= 0.0);
            CHECK(b.contrastive == doctest::Approx(contrastive_oracle(st, w.temperature)).epsilon(1e-10));
        }
    }
    SUBCASE("contrastive term vanishes when disabled or without hypergraph states") {
        LossWeights w;
        w.use_contrastive = false;
        LossBreakdown b = joint_loss(target, pred, st, store, w);
        CHECK(b.contrastive == 0.0);
        CHECK(b.total == compose_total(0.5, 0.0, 5.0, w.lambda1, w.lambda2));
        LayerState graph_only = st;
        graph_only.hyper.clear();
        b = joint_loss(target, pred, graph_only, store, LossWeights{});
        CHECK(b.contrastive == 0.0);
    }
}

TEST_CASE("objective gradients match finite differences") {
    for (const auto& c : testsupport::gradient_cases(19)) {
        if (c.name != "contrastive" && c.name != "joint") continue;
        const auto res = c.run();
        INFO(c.name << ": " << res.worst);
        CHECK(res.checked > 0);
        CHECK(res.max_rel_error < 1e-4);
    }
}
