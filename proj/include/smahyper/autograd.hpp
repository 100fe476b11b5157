// Reverse-mode automatic differentiation over dense tensors.
//
// Every op records a closure on the result node that scatters the incoming
// gradient into its parents. `backward(root)` walks the recorded graph in
// reverse topological order. Nodes that do not depend on any trainable leaf
// record nothing, so inference-only forward passes cost no extra memory.
//
// Broadcasting is deliberately narrow: `add_bias` broadcasts along the last
// axis, `add_bcast`/`mul_bcast` broadcast size-1 axes of equal-rank operands,
// and `matmul` broadcasts a 2-D operand over the batch of the other.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "smahyper/tensor.hpp"

namespace smahyper::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(int axis) const { return node_->value.dim(axis); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    // Gradient accumulated by the last backward pass; zeros if none reached.
    const Tensor& grad() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Seeds d(root)/d(root) = 1 for a scalar root and propagates.
void backward(const Var& root);

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

// x[..., C] + b[C]
Var add_bias(const Var& x, const Var& b);
// Equal-rank broadcasting where every axis of `s` is either 1 or matches `x`.
Var add_bcast(const Var& x, const Var& s);
Var mul_bcast(const Var& x, const Var& s);

Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
// x^(-1/2) where x > 0, exactly 0 elsewhere (pseudo-inverse degree convention).
Var inv_sqrt_or_zero(const Var& x);
// 1/x where x > 0, exactly 0 elsewhere.
Var reciprocal_or_zero(const Var& x);

// [..., m, k] x [..., k, n]. Either side may be 2-D and is then shared
// across the batch of the other.
Var matmul(const Var& a, const Var& b);
Var transpose_last2(const Var& x);
// x[..., Cin] . W[Cin, Cout]
Var linear(const Var& x, const Var& w);

Var sum_axis(const Var& x, int axis, bool keepdim = false);
Var mean_axis(const Var& x, int axis, bool keepdim = false);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

Var reshape(const Var& x, Shape shape);
Var concat_last(const std::vector<Var>& parts);
// Inserts a new axis of length parts.size() at `axis` (in the output rank).
Var stack(const std::vector<Var>& parts, int axis);
// Selects index `i` along `axis`, dropping that axis.
Var select(const Var& x, int axis, std::size_t i);

// x[..., T, C] -> [..., T, K*C]; slot j of output step t holds x[t-(K-1)+j]
// (zero before the start of the sequence).
Var causal_unfold(const Var& x, std::size_t kernel);

Var softmax_last(const Var& x);
Var log_softmax_last(const Var& x);
Var layer_norm_last(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// q, k: [P, V, d] split into `heads` slices of width d/heads.
// Returns scaled dot-product logits [P, heads, V, V].
Var mha_scores(const Var& q, const Var& k, std::size_t heads);
// attn [P, heads, V, V], v [P, V, d] -> [P, V, d]
Var mha_mix(const Var& attn, const Var& v);

// Rows of x[..., d] scaled to unit norm; zero rows stay zero and are counted.
Var normalize_rows_or_zero(const Var& x, std::size_t* zero_rows = nullptr);
// Diagonal of a square [N, N] matrix.
Var diagonal(const Var& x);

}  // namespace smahyper::ag
