#include <doctest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "generators.hpp"
#include "gradient_cases.hpp"
#include "smahyper/decoder_head.hpp"
#include "smahyper/harness.hpp"

using namespace smahyper;
using testsupport::uniform_tensor;

namespace {

DecoderOptions small_options() {
    DecoderOptions o;
    o.embed_dim = 4;
    o.input_steps = 5;
    o.horizon = 6;
    o.met_width = 3;
    o.cal_width = 10;
    o.poi_width = 4;
    o.road_width = 3;
    return o;
}

struct Inputs {
    ag::Var graph, hyper, met, cal, poi, road;
};

Inputs random_inputs(const DecoderOptions& o, std::size_t b, std::size_t n, Rng& rng) {
    const std::size_t t = o.input_steps, d = o.embed_dim;
    return {ag::constant(uniform_tensor({b, n, t, d}, rng)),      ag::constant(uniform_tensor({b, n, t, d}, rng)),
            ag::constant(uniform_tensor({b, n, t, o.met_width}, rng)), ag::constant(uniform_tensor({b, n, t, o.cal_width}, rng)),
            ag::constant(uniform_tensor({n, o.poi_width}, rng)),  ag::constant(uniform_tensor({n, o.road_width}, rng))};
}

Tensor run(const DecoderHead& head, const Inputs& in) {
    std::vector<ag::Var> enc{in.graph};
    if (head.options().streams == 2) enc.push_back(in.hyper);
    return head.predict(head.decode_streams(enc, in.met, in.cal), in.poi, in.road).value();
}

bool starts_with(const std::string& s, const std::string& p) { return s.compare(0, p.size(), p) == 0; }

}  // namespace

TEST_CASE("decoder parameter shapes follow the concatenated width") {
    Rng rng(1);
    nn::ParameterStore store;
    const DecoderOptions o = small_options();
    DecoderHead head(store, o, rng);
    const std::size_t d = o.embed_dim;
    for (const char* s : {"decoder.graph", "decoder.hyper"}) {
        const std::string n = s;
        CHECK(store.get(n + ".met.weight").shape() == Shape{o.met_width, d});
        CHECK(store.get(n + ".cal.weight").shape() == Shape{o.cal_width, d});
        CHECK(store.get(n + ".gtc.0.gate.weight").shape() == Shape{o.kernel * 3 * d, d});
        CHECK(store.get(n + ".gtc.0.residual").shape() == Shape{3 * d, d});
        CHECK(store.get(n + ".gtc.1.value.weight").shape() == Shape{o.kernel * d, d});
    }
    CHECK(store.get("decoder.fc1.weight").shape() == Shape{2 * d * o.input_steps + 2 * d, d});
    CHECK(store.get("decoder.fc2.weight").shape() == Shape{d, o.horizon});
}

TEST_CASE("decoder output shape is [B, N, horizon]") {
    Rng rng(2);
    nn::ParameterStore store;
    const DecoderOptions o = small_options();
    DecoderHead head(store, o, rng);
    const Inputs in = random_inputs(o, 3, 7, rng);
    const auto decoded = head.decode_streams({in.graph, in.hyper}, in.met, in.cal);
    REQUIRE(decoded.size() == 2);
    CHECK(decoded[0].shape() == Shape{3, 7, o.input_steps, o.embed_dim});
    CHECK(run(head, in).shape() == Shape{3, 7, 6});
}

TEST_CASE("zero weights reduce the prediction to the output bias") {
    Rng rng(3);
    nn::ParameterStore store;
    const DecoderOptions o = small_options();
    DecoderHead head(store, o, rng);
    for (const auto& e : store.entries()) store.get(e.name).mutable_value().fill(0.0);
    const Tensor bias = uniform_tensor({o.horizon}, rng);
    store.get("decoder.fc2.bias").mutable_value() = bias;
    const Tensor y = run(head, random_inputs(o, 2, 4, rng));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == bias[i % o.horizon]);
}

TEST_CASE("zero external features add nothing to the decoder input") {
    Rng rng(4);
    nn::ParameterStore store;
    const DecoderOptions o = small_options();
    DecoderHead head(store, o, rng);
    store.get("decoder.graph.met.bias").mutable_value().fill(0.0);
    store.get("decoder.graph.cal.bias").mutable_value().fill(0.0);
    Inputs in = random_inputs(o, 1, 3, rng);
    in.met = ag::constant(Tensor(in.met.shape()));
    in.cal = ag::constant(Tensor(in.cal.shape()));
    // The gated block sees [E, 0, 0]; feed that directly and compare.
    const ag::Var padded = ag::concat_last({in.graph, ag::constant(Tensor({1, 3, o.input_steps, 2 * o.embed_dim}))});
    nn::GatedTemporalBlock block;
    block.first.gate = {store.get("decoder.graph.gtc.0.gate.weight"), store.get("decoder.graph.gtc.0.gate.bias"), o.kernel};
    block.first.value = {store.get("decoder.graph.gtc.0.value.weight"), store.get("decoder.graph.gtc.0.value.bias"), o.kernel};
    block.first.residual = store.get("decoder.graph.gtc.0.residual");
    block.second.gate = {store.get("decoder.graph.gtc.1.gate.weight"), store.get("decoder.graph.gtc.1.gate.bias"), o.kernel};
    block.second.value = {store.get("decoder.graph.gtc.1.value.weight"), store.get("decoder.graph.gtc.1.value.bias"), o.kernel};
    const Tensor expected = block(padded).value();
    const Tensor got = head.decode_streams({in.graph, in.hyper}, in.met, in.cal)[0].value();
    REQUIRE(got.shape() == expected.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(got.max_abs() > 0.0);
}

TEST_CASE("swapping the streams with matching head rows leaves predictions unchanged") {
    Rng rng(5);
    const DecoderOptions o = small_options();
    nn::ParameterStore sa, sb;
    DecoderHead a(sa, o, rng);
    DecoderHead b(sb, o, rng);
    const std::string g = "decoder.graph", h = "decoder.hyper";
    for (const auto& e : sa.entries()) {
        std::string target = e.name;
        if (starts_with(e.name, g)) target = h + e.name.substr(g.size());
        else if (starts_with(e.name, h)) target = g + e.name.substr(h.size());
        sb.get(target).mutable_value() = e.var.value();
    }
    // fc1 rows are laid out [t][stream][channel]; swap the stream blocks.
    const std::size_t d = o.embed_dim, width = 2 * d;
    const Tensor& w = sa.get("decoder.fc1.weight").value();
    Tensor& wb = sb.get("decoder.fc1.weight").mutable_value();
    const std::size_t cols = w.dim(1);
    for (std::size_t t = 0; t < o.input_steps; ++t)
        for (std::size_t c = 0; c < width; ++c) {
            const std::size_t from = t * width + c, to = t * width + (c + d) % width;
            for (std::size_t j = 0; j < cols; ++j) wb[to * cols + j] = w[from * cols + j];
        }
    const Inputs in = random_inputs(o, 2, 5, rng);
    Inputs swapped = in;
    std::swap(swapped.graph, swapped.hyper);
    const Tensor ya = run(a, in), yb = run(b, swapped);
    for (std::size_t i = 0; i < ya.size(); ++i) CHECK(yb[i] == doctest::Approx(ya[i]).epsilon(1e-12));
}

TEST_CASE("road features influence the prediction") {
    Rng rng(6);
    const DecoderOptions o = small_options();
    nn::ParameterStore store;
    DecoderHead head(store, o, rng);
    Inputs in = random_inputs(o, 1, 4, rng);
    const Tensor base = run(head, in);
    in.road = ag::constant(uniform_tensor(in.road.shape(), rng, 2.0, 3.0));
    const Tensor moved = run(head, in);
    double diff = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) diff = std::max(diff, std::abs(base[i] - moved[i]));
    CHECK(diff > 1e-6);

    DecoderOptions no_road = o;
    no_road.use_road = false;
    nn::ParameterStore s2;
    Rng r2(6);
    DecoderHead ablated(s2, no_road, r2);
    CHECK_FALSE(s2.contains("decoder.road.weight"));
    CHECK(s2.get("decoder.fc1.weight").dim(0) == 2 * o.embed_dim * o.input_steps + o.embed_dim);
    // Road values no longer matter.
    const Tensor a1 = run(ablated, in);
    in.road = ag::constant(uniform_tensor(in.road.shape(), rng));
    const Tensor a2 = run(ablated, in);
    CHECK(a1.vec() == a2.vec());
}

TEST_CASE("single-stream decoder when the hypergraph path is off") {
    Rng rng(7);
    DecoderOptions o = small_options();
    o.streams = 1;
    nn::ParameterStore store;
    DecoderHead head(store, o, rng);
    CHECK_FALSE(store.contains("decoder.hyper.met.weight"));
    const Inputs in = random_inputs(o, 2, 3, rng);
    CHECK(run(head, in).shape() == Shape{2, 3, o.horizon});
    CHECK_THROWS_AS(head.decode_streams({in.graph, in.hyper}, in.met, in.cal), std::invalid_argument);
}

TEST_CASE("decoder rejects mismatched time axes") {
    Rng rng(8);
    const DecoderOptions o = small_options();
    nn::ParameterStore store;
    DecoderHead head(store, o, rng);
    Inputs in = random_inputs(o, 1, 3, rng);
    in.met = ag::constant(uniform_tensor({1, 3, o.input_steps + 1, o.met_width}, rng));
    CHECK_THROWS_AS(head.decode_streams({in.graph, in.hyper}, in.met, in.cal), std::invalid_argument);

    const ag::Var short_enc = ag::constant(uniform_tensor({1, 3, o.input_steps - 1, o.embed_dim}, rng));
    const ag::Var met = ag::constant(uniform_tensor({1, 3, o.input_steps - 1, o.met_width}, rng));
    const ag::Var cal = ag::constant(uniform_tensor({1, 3, o.input_steps - 1, o.cal_width}, rng));
    const auto decoded = head.decode_streams({short_enc, short_enc}, met, cal);
    CHECK_THROWS_AS(head.predict(decoded, in.poi, in.road), std::invalid_argument);
}

TEST_CASE("decoder gradients match finite differences") {
    for (const auto& c : testsupport::gradient_cases(13)) {
        if (c.name != "decoder") continue;
        const auto res = c.run();
        INFO(res.worst);
        CHECK(res.checked > 0);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("model predictions do not depend on the targets") {
    const auto dir = testsupport::scratch_dir("decoder_leak");
    ExperimentConfig cfg = testsupport::small_config(testsupport::synthetic_manifest(dir, 9, 80, 2, 5), dir / "run");
    const PreparedData data = testsupport::prepared(cfg);
    const auto model = build_model(cfg, data);
    std::vector<std::size_t> ids{0, 1, 2};
    Batch batch = make_batch(data.windows.train, ids);
    const Tensor before = model->forward(batch).prediction.value();
    CHECK(before.shape() == Shape{3, 9, cfg.horizon});
    batch.targets.fill(0.0);
    CHECK(model->forward(batch).prediction.value().vec() == before.vec());
    batch.targets.fill(1e6);
    CHECK(model->forward(batch).prediction.value().vec() == before.vec());
    std::filesystem::remove_all(dir);
}
