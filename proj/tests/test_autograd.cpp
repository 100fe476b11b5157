#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "smahyper/autograd.hpp"
#include "smahyper/rng.hpp"

using namespace smahyper;
using testsupport::check_gradients;
using testsupport::uniform_tensor;

namespace {

constexpr double kTol = 1e-4;

// Runs a gradient check of `f` applied to freshly drawn parameters.
template <typename F>
void check_op(const char* name, std::vector<Shape> shapes, F f, double lo = -1.0, double hi = 1.0) {
    Rng rng(11);
    std::vector<ag::Var> in;
    for (auto& s : shapes) in.push_back(ag::parameter(uniform_tensor(s, rng, lo, hi)));
    ag::Var out = f(in);
    const Tensor r = uniform_tensor(out.shape(), rng);
    const auto res = check_gradients([&] { return ag::sum_all(ag::mul(f(in), ag::constant(r))); }, in);
    INFO(name << ": " << res.worst);
    CHECK(res.max_rel_error < kTol);
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    using V = std::vector<ag::Var>;
    check_op("add", {{2, 3}, {2, 3}}, [](const V& v) { return ag::add(v[0], v[1]); });
    check_op("sub", {{2, 3}, {2, 3}}, [](const V& v) { return ag::sub(v[0], v[1]); });
    check_op("mul", {{2, 3}, {2, 3}}, [](const V& v) { return ag::mul(v[0], v[1]); });
    check_op("scale", {{4}}, [](const V& v) { return ag::scale(v[0], -2.5); });
    check_op("add_scalar", {{4}}, [](const V& v) { return ag::add_scalar(v[0], 0.3); });
    check_op("add_bias", {{2, 3, 4}, {4}}, [](const V& v) { return ag::add_bias(v[0], v[1]); });
    check_op("add_bcast", {{2, 3, 4}, {2, 1, 4}}, [](const V& v) { return ag::add_bcast(v[0], v[1]); });
    check_op("mul_bcast", {{2, 3, 4}, {1, 3, 1}}, [](const V& v) { return ag::mul_bcast(v[0], v[1]); });
    check_op("relu", {{3, 5}}, [](const V& v) { return ag::relu(v[0]); });
    check_op("tanh", {{3, 5}}, [](const V& v) { return ag::tanh(v[0]); });
    check_op("sigmoid", {{3, 5}}, [](const V& v) { return ag::sigmoid(v[0]); });
    check_op("exp", {{3, 5}}, [](const V& v) { return ag::exp(v[0]); });
    check_op("log", {{3, 5}}, [](const V& v) { return ag::log(v[0]); }, 0.5, 2.0);
    check_op("square", {{3, 5}}, [](const V& v) { return ag::square(v[0]); });
    check_op("inv_sqrt", {{3, 5}}, [](const V& v) { return ag::inv_sqrt_or_zero(v[0]); }, 0.5, 2.0);
    check_op("reciprocal", {{3, 5}}, [](const V& v) { return ag::reciprocal_or_zero(v[0]); }, 0.5, 2.0);
}

TEST_CASE("structural op gradients") {
    using V = std::vector<ag::Var>;
    check_op("matmul", {{2, 3, 4}, {2, 4, 2}}, [](const V& v) { return ag::matmul(v[0], v[1]); });
    check_op("matmul_shared_left", {{3, 4}, {2, 4, 2}}, [](const V& v) { return ag::matmul(v[0], v[1]); });
    check_op("matmul_shared_right", {{2, 3, 4}, {4, 2}}, [](const V& v) { return ag::matmul(v[0], v[1]); });
    check_op("transpose", {{2, 3, 4}}, [](const V& v) { return ag::transpose_last2(v[0]); });
    check_op("linear", {{2, 3, 4}, {4, 5}}, [](const V& v) { return ag::linear(v[0], v[1]); });
    check_op("sum_axis", {{2, 3, 4}}, [](const V& v) { return ag::sum_axis(v[0], 1); });
    check_op("mean_axis", {{2, 3, 4}}, [](const V& v) { return ag::mean_axis(v[0], -1, true); });
    check_op("reshape", {{2, 6}}, [](const V& v) { return ag::reshape(v[0], {3, 4}); });
    check_op("concat", {{2, 3}, {2, 1}}, [](const V& v) { return ag::concat_last({v[0], v[1]}); });
    check_op("stack", {{2, 3}, {2, 3}}, [](const V& v) { return ag::stack({v[0], v[1]}, 1); });
    check_op("select", {{2, 3, 4}}, [](const V& v) { return ag::select(v[0], 1, 2); });
    check_op("causal_unfold", {{2, 5, 3}}, [](const V& v) { return ag::causal_unfold(v[0], 3); });
    check_op("softmax", {{3, 4}}, [](const V& v) { return ag::softmax_last(v[0]); });
    check_op("log_softmax", {{3, 4}}, [](const V& v) { return ag::log_softmax_last(v[0]); });
    check_op("layer_norm", {{3, 4}, {4}, {4}}, [](const V& v) { return ag::layer_norm_last(v[0], v[1], v[2]); });
    check_op("attention", {{2, 3, 4}, {2, 3, 4}, {2, 3, 4}}, [](const V& v) {
        return ag::mha_mix(ag::softmax_last(ag::mha_scores(v[0], v[1], 2)), v[2]);
    });
    check_op("normalize_rows", {{3, 4}}, [](const V& v) { return ag::normalize_rows_or_zero(v[0]); });
    check_op("diagonal", {{3, 3}}, [](const V& v) { return ag::diagonal(v[0]); });
}

TEST_CASE("forward values of helper ops") {
    SUBCASE("causal unfold pads the start with zeros") {
        Tensor x({1, 3, 1}, std::vector<double>{1, 2, 3});
        const Tensor u = ag::causal_unfold(ag::constant(x), 2).value();
        CHECK(u.shape() == Shape{1, 3, 2});
        CHECK(u.vec() == std::vector<double>{0, 1, 1, 2, 2, 3});
    }
    SUBCASE("degree inverses map zero to zero") {
        Tensor x({3}, std::vector<double>{0.0, 4.0, 0.25});
        CHECK(ag::inv_sqrt_or_zero(ag::constant(x)).value().vec() == std::vector<double>{0.0, 0.5, 2.0});
        CHECK(ag::reciprocal_or_zero(ag::constant(x)).value().vec() == std::vector<double>{0.0, 0.25, 4.0});
    }
    SUBCASE("zero rows stay zero under row normalization and are counted") {
        Tensor x = Tensor::from_rows({{0, 0}, {3, 4}});
        std::size_t zero_rows = 0;
        const Tensor y = ag::normalize_rows_or_zero(ag::constant(x), &zero_rows).value();
        CHECK(zero_rows == 1);
        CHECK(y.vec() == std::vector<double>{0, 0, 0.6, 0.8});
    }
    SUBCASE("matmul matches a scalar loop") {
        Rng rng(3);
        const Tensor a = uniform_tensor({2, 3, 4}, rng), b = uniform_tensor({4, 5}, rng);
        const Tensor c = ag::matmul(ag::constant(a), ag::constant(b)).value();
        for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 5; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < 4; ++k) s += a[(p * 3 + i) * 4 + k] * b[k * 5 + j];
                    CHECK(c[(p * 3 + i) * 5 + j] == doctest::Approx(s).epsilon(1e-12));
                }
    }
    SUBCASE("softmax rows sum to one") {
        Rng rng(4);
        const Tensor s = ag::softmax_last(ag::constant(uniform_tensor({5, 7}, rng, -30, 30))).value();
        for (std::size_t i = 0; i < 5; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 7; ++j) sum += s[i * 7 + j];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("constants record no graph") {
    const ag::Var a = ag::constant(Tensor({2}, 1.0));
    const ag::Var b = ag::tanh(ag::add(a, a));
    CHECK_FALSE(b.requires_grad());
    CHECK(b.node()->parents.empty());
}

TEST_CASE("gradients accumulate over shared uses") {
    ag::Var x = ag::parameter(Tensor({1}, 3.0));
    ag::backward(ag::sum_all(ag::add(ag::mul(x, x), x)));
    CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("rng streams are reproducible and distinct") {
    Rng a(5), b(5), c(mix_seed(5, 1));
    for (int i = 0; i < 100; ++i) {
        const double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(mix_seed(5, 1) != mix_seed(5, 2));
    CHECK(mix_seed(5, 1) != mix_seed(6, 1));
    Rng d(mix_seed(5, 1));
    CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("rng distributions have the expected moments") {
    Rng rng(21);
    const int n = 200000;
    double s = 0.0, s2 = 0.0, p = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
        p += rng.poisson(0.7);
    }
    CHECK(s / n == doctest::Approx(0.0).epsilon(0.01).scale(1.0));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(p / n == doctest::Approx(0.7).epsilon(0.02));
    for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
}

TEST_CASE("tensor indexing and reshape") {
    Tensor t({2, 3});
    t.at({1, 2}) = 5.0;
    CHECK(t[5] == 5.0);
    const Tensor r = t.reshaped({3, 2});
    CHECK(r.at({2, 1}) == 5.0);
    CHECK_THROWS(t.reshaped({4, 2}));
    CHECK(shape_str({2, 3}) == "[2,3]");
}
