// Trainable parameter registry and the small layer vocabulary shared by the
// graph-construction, encoder and decoder modules.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smahyper/autograd.hpp"
#include "smahyper/rng.hpp"

namespace smahyper::nn {

struct ParamEntry {
    std::string name;
    ag::Var var;
    // Included in the L2 penalty (weights yes, biases and norm gains no).
    bool decay = true;
};

class ParameterStore {
public:
    ag::Var add(const std::string& name, Tensor init, bool decay = true);
    ag::Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::size_t count() const { return entries_.size(); }
    std::size_t total_size() const;

    void zero_grad();
    // Sum of squared entries over decayed parameters, as a graph node.
    ag::Var l2_penalty() const;

private:
    std::vector<ParamEntry> entries_;
    std::map<std::string, std::size_t> index_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng);

struct Affine {
    ag::Var weight;
    ag::Var bias;
    ag::Var operator()(const ag::Var& x) const;
};

Affine make_affine(ParameterStore& store, const std::string& name, std::size_t in,
                   std::size_t out, Rng& rng);

// 1-D convolution along the second-to-last axis of [..., T, C], causal:
// output step t sees inputs t-K+1..t, zero-padded on the left.
struct CausalConv {
    ag::Var weight;  // [K*Cin, Cout], tap-major
    ag::Var bias;    // [Cout]
    std::size_t kernel = 3;
    ag::Var operator()(const ag::Var& x) const;
};

CausalConv make_causal_conv(ParameterStore& store, const std::string& name, std::size_t in,
                            std::size_t out, std::size_t kernel, Rng& rng);

// One gated temporal-convolution sub-layer:
//   g = sigmoid(conv_gate(x)),  out = (1 - g) * r + g * conv_value(x)
// where r = x, or x projected by `residual` when input and output widths differ.
struct GatedTemporalLayer {
    CausalConv gate;
    CausalConv value;
    std::optional<ag::Var> residual;
    ag::Var operator()(const ag::Var& x) const;
};

// Two stacked gated sub-layers; the first maps `in` channels to `out`.
struct GatedTemporalBlock {
    GatedTemporalLayer first;
    GatedTemporalLayer second;
    ag::Var operator()(const ag::Var& x) const { return second(first(x)); }
};

GatedTemporalBlock make_gtc_block(ParameterStore& store, const std::string& name, std::size_t in,
                                  std::size_t out, std::size_t kernel, Rng& rng);

// Post-norm transformer encoder block over a short token sequence, pooled by
// averaging the tokens. Every input is [..., d]; the tokens are stacked per
// leading position so attention runs across tokens only.
struct TokenFusion {
    Affine q, k, v, o;
    ag::Var ln1_gain, ln1_bias;
    Affine ff1, ff2;
    ag::Var ln2_gain, ln2_bias;
    std::size_t heads = 8;

    struct Output {
        ag::Var pooled;     // [..., d]
        ag::Var attention;  // [P, heads, V, V]
    };
    Output forward(const std::vector<ag::Var>& tokens) const;
    ag::Var operator()(const std::vector<ag::Var>& tokens) const { return forward(tokens).pooled; }
};

TokenFusion make_token_fusion(ParameterStore& store, const std::string& name, std::size_t d,
                              std::size_t heads, Rng& rng);

// Plain token average, used when attention fusion is switched off.
ag::Var mean_tokens(const std::vector<ag::Var>& tokens);

}  // namespace smahyper::nn
