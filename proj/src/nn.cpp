#include "smahyper/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace smahyper::nn {

ag::Var ParameterStore::add(const std::string& name, Tensor init, bool decay) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({name, ag::parameter(std::move(init)), decay});
    return entries_.back().var;
}

ag::Var ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return entries_[it->second].var;
}

std::size_t ParameterStore::total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.value().size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
}

ag::Var ParameterStore::l2_penalty() const {
    std::vector<ag::Var> terms;
    for (const auto& e : entries_) {
        if (e.decay) terms.push_back(ag::sum_all(ag::square(e.var)));
    }
    if (terms.empty()) return ag::constant(Tensor::scalar(0.0));
    ag::Var total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = ag::add(total, terms[i]);
    return total;
}

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, fan_in)));
    for (auto& v : t.vec()) v = rng.uniform(-bound, bound);
    return t;
}

ag::Var Affine::operator()(const ag::Var& x) const { return ag::add_bias(ag::linear(x, weight), bias); }

Affine make_affine(ParameterStore& store, const std::string& name, std::size_t in,
                   std::size_t out, Rng& rng) {
    Affine a;
    a.weight = store.add(name + ".weight", fan_in_uniform({in, out}, in, rng));
    a.bias = store.add(name + ".bias", Tensor({out}), false);
    return a;
}

ag::Var CausalConv::operator()(const ag::Var& x) const {
    return ag::add_bias(ag::linear(ag::causal_unfold(x, kernel), weight), bias);
}

CausalConv make_causal_conv(ParameterStore& store, const std::string& name, std::size_t in,
                            std::size_t out, std::size_t kernel, Rng& rng) {
    CausalConv c;
    c.kernel = kernel;
    c.weight = store.add(name + ".weight", fan_in_uniform({kernel * in, out}, kernel * in, rng));
    c.bias = store.add(name + ".bias", Tensor({out}), false);
    return c;
}

ag::Var GatedTemporalLayer::operator()(const ag::Var& x) const {
    const ag::Var g = ag::sigmoid(gate(x));
    const ag::Var r = residual ? ag::linear(x, *residual) : x;
    // (1 - g) * r + g * v  ==  r + g * (v - r)
    return ag::add(r, ag::mul(g, ag::sub(value(x), r)));
}

GatedTemporalBlock make_gtc_block(ParameterStore& store, const std::string& name, std::size_t in,
                                  std::size_t out, std::size_t kernel, Rng& rng) {
    GatedTemporalBlock b;
    b.first.gate = make_causal_conv(store, name + ".0.gate", in, out, kernel, rng);
    b.first.value = make_causal_conv(store, name + ".0.value", in, out, kernel, rng);
    if (in != out) {
        b.first.residual = store.add(name + ".0.residual", fan_in_uniform({in, out}, in, rng));
    }
    b.second.gate = make_causal_conv(store, name + ".1.gate", out, out, kernel, rng);
    b.second.value = make_causal_conv(store, name + ".1.value", out, out, kernel, rng);
    return b;
}

TokenFusion::Output TokenFusion::forward(const std::vector<ag::Var>& tokens) const {
    if (tokens.empty()) throw std::invalid_argument("token fusion needs at least one token");
    const Shape outer_shape = tokens.front().shape();
    const std::size_t d = outer_shape.back();
    const std::size_t positions = tokens.front().value().size() / d;
    const std::size_t v_len = tokens.size();

    ag::Var x = ag::reshape(ag::stack(tokens, -2), {positions, v_len, d});
    const ag::Var attn = ag::softmax_last(ag::mha_scores(q(x), k(x), heads));
    const ag::Var ctx = o(ag::mha_mix(attn, v(x)));
    const ag::Var x1 = ag::layer_norm_last(ag::add(x, ctx), ln1_gain, ln1_bias);
    const ag::Var ff = ff2(ag::relu(ff1(x1)));
    const ag::Var x2 = ag::layer_norm_last(ag::add(x1, ff), ln2_gain, ln2_bias);
    return {ag::reshape(ag::mean_axis(x2, 1), outer_shape), attn};
}

TokenFusion make_token_fusion(ParameterStore& store, const std::string& name, std::size_t d,
                              std::size_t heads, Rng& rng) {
    if (heads == 0 || d % heads != 0) {
        throw std::invalid_argument("embedding width " + std::to_string(d) +
                                    " is not divisible by " + std::to_string(heads) + " heads");
    }
    TokenFusion f;
    f.heads = heads;
    f.q = make_affine(store, name + ".q", d, d, rng);
    f.k = make_affine(store, name + ".k", d, d, rng);
    f.v = make_affine(store, name + ".v", d, d, rng);
    f.o = make_affine(store, name + ".o", d, d, rng);
    f.ln1_gain = store.add(name + ".ln1.gain", Tensor({d}, 1.0), false);
    f.ln1_bias = store.add(name + ".ln1.bias", Tensor({d}), false);
    f.ff1 = make_affine(store, name + ".ff1", d, 2 * d, rng);
    f.ff2 = make_affine(store, name + ".ff2", 2 * d, d, rng);
    f.ln2_gain = store.add(name + ".ln2.gain", Tensor({d}, 1.0), false);
    f.ln2_bias = store.add(name + ".ln2.bias", Tensor({d}), false);
    return f;
}

ag::Var mean_tokens(const std::vector<ag::Var>& tokens) {
    if (tokens.size() == 1) return tokens.front();
    return ag::mean_axis(ag::stack(tokens, 0), 0);
}

}  // namespace smahyper::nn
