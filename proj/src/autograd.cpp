#include "smahyper/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace smahyper::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

using NodePtr = std::shared_ptr<Node>;

Var make(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    Var out(std::move(value), rg);
    if (rg) {
        out.node()->parents = std::move(parents);
        out.node()->backward_fn = std::move(fn);
    }
    return out;
}

void require_same(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

template <typename F, typename D>
Var unary(const Var& x, F f, D dfdx) {
    Tensor out(x.shape());
    const auto& xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    auto px = x.node();
    return make(std::move(out), {px}, [px, dfdx](Node& self) {
        if (!px->requires_grad) return;
        auto& gx = px->ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += self.grad[i] * dfdx(px->value[i], self.value[i]);
        }
    });
}

// Maps every flat index of `big` onto the flat index of `small`, where each
// axis of `small` is either 1 or equal to the matching axis of `big`.
std::shared_ptr<std::vector<std::size_t>> broadcast_map(const Shape& big, const Shape& small) {
    if (big.size() != small.size()) {
        throw std::invalid_argument("broadcast requires equal rank: " + shape_str(big) + " vs " +
                                    shape_str(small));
    }
    const std::size_t r = big.size();
    std::vector<std::size_t> sstride(r, 0);
    std::size_t acc = 1;
    for (std::size_t k = r; k-- > 0;) {
        if (small[k] != 1 && small[k] != big[k]) {
            throw std::invalid_argument("cannot broadcast " + shape_str(small) + " to " +
                                        shape_str(big));
        }
        sstride[k] = small[k] == 1 ? 0 : acc;
        acc *= small[k];
    }
    auto map = std::make_shared<std::vector<std::size_t>>(numel(big));
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < map->size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < r; ++k) off += idx[k] * sstride[k];
        (*map)[flat] = off;
        for (std::size_t k = r; k-- > 0;) {
            if (++idx[k] < big[k]) break;
            idx[k] = 0;
        }
    }
    return map;
}

struct AxisSplit {
    std::size_t outer, n, inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r{1, s[axis], 1};
    for (std::size_t k = 0; k < axis; ++k) r.outer *= s[k];
    for (std::size_t k = axis + 1; k < s.size(); ++k) r.inner *= s[k];
    return r;
}

std::size_t batch_of(const Shape& s) {
    std::size_t b = 1;
    for (std::size_t k = 0; k + 2 < s.size(); ++k) b *= s[k];
    return b;
}

}  // namespace

Tensor& Node::ensure_grad() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const { return node_->ensure_grad(); }

void Var::zero_grad() {
    if (node_) node_->ensure_grad().fill(0.0);
}

Var constant(Tensor value) { return Var(std::move(value), false); }
Var parameter(Tensor value) { return Var(std::move(value), true); }

void backward(const Var& root) {
    if (root.value().size() != 1) throw std::invalid_argument("backward: root must be a scalar");
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

Var add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    auto pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb](Node& self) {
        for (auto* p : {pa.get(), pb.get()}) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    auto pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    auto pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var scale(const Var& a, double c) {
    return unary(a, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
    return unary(a, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var add_bias(const Var& x, const Var& b) {
    const std::size_t c = b.value().size();
    if (x.shape().empty() || x.shape().back() != c) {
        throw std::invalid_argument("add_bias: bias " + shape_str(b.shape()) + " vs input " +
                                    shape_str(x.shape()));
    }
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i % c];
    auto px = x.node(), pb = b.node();
    return make(std::move(out), {px, pb}, [px, pb, c](Node& self) {
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % c] += self.grad[i];
        }
    });
}

Var add_bcast(const Var& x, const Var& s) {
    auto map = broadcast_map(x.shape(), s.shape());
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s.value()[(*map)[i]];
    auto px = x.node(), ps = s.node();
    return make(std::move(out), {px, ps}, [px, ps, map](Node& self) {
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (ps->requires_grad) {
            auto& g = ps->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*map)[i]] += self.grad[i];
        }
    });
}

Var mul_bcast(const Var& x, const Var& s) {
    auto map = broadcast_map(x.shape(), s.shape());
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s.value()[(*map)[i]];
    auto px = x.node(), ps = s.node();
    return make(std::move(out), {px, ps}, [px, ps, map](Node& self) {
        if (px->requires_grad) {
            auto& g = px->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ps->value[(*map)[i]];
        }
        if (ps->requires_grad) {
            auto& g = ps->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[(*map)[i]] += self.grad[i] * px->value[i];
            }
        }
    });
}

Var relu(const Var& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& x) {
    return unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& x) {
    return unary(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
    return unary(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(const Var& x) {
    return unary(
        x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var inv_sqrt_or_zero(const Var& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? 1.0 / std::sqrt(v) : 0.0; },
        [](double v, double y) { return v > 0.0 ? -0.5 * y * y * y : 0.0; });
}

Var reciprocal_or_zero(const Var& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? 1.0 / v : 0.0; },
        [](double v, double y) { return v > 0.0 ? -y * y : 0.0; });
}

Var matmul(const Var& a, const Var& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2) throw std::invalid_argument("matmul: rank < 2");
    const std::size_t m = as[as.size() - 2], k = as.back();
    const std::size_t k2 = bs[bs.size() - 2], n = bs.back();
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dims " + shape_str(as) + " x " + shape_str(bs));
    }
    const std::size_t ba = batch_of(as), bb = batch_of(bs);
    const bool a_shared = as.size() == 2, b_shared = bs.size() == 2;
    Shape out_shape;
    std::size_t batch;
    if (a_shared && b_shared) {
        batch = 1;
        out_shape = {m, n};
    } else if (a_shared) {
        batch = bb;
        out_shape.assign(bs.begin(), bs.end() - 2);
    } else if (b_shared) {
        batch = ba;
        out_shape.assign(as.begin(), as.end() - 2);
    } else {
        if (ba != bb || !std::equal(as.begin(), as.end() - 2, bs.begin(), bs.end() - 2)) {
            throw std::invalid_argument("matmul: batch mismatch " + shape_str(as) + " x " +
                                        shape_str(bs));
        }
        batch = ba;
        out_shape.assign(as.begin(), as.end() - 2);
    }
    if (!(a_shared && b_shared)) {
        out_shape.push_back(m);
        out_shape.push_back(n);
    }

    Tensor out(out_shape);
    const double* av = a.value().data().data();
    const double* bv = b.value().data().data();
    for (std::size_t i = 0; i < batch; ++i) {
        CMatMap A(av + (a_shared ? 0 : i * m * k), m, k);
        CMatMap B(bv + (b_shared ? 0 : i * k * n), k, n);
        MatMap C(out.data().data() + i * m * n, m, n);
        C.noalias() = A * B;
    }
    auto pa = a.node(), pb = b.node();
    return make(std::move(out), {pa, pb},
                [pa, pb, batch, m, k, n, a_shared, b_shared](Node& self) {
                    const double* g = self.grad.data().data();
                    for (std::size_t i = 0; i < batch; ++i) {
                        CMatMap G(g + i * m * n, m, n);
                        CMatMap A(pa->value.data().data() + (a_shared ? 0 : i * m * k), m, k);
                        CMatMap B(pb->value.data().data() + (b_shared ? 0 : i * k * n), k, n);
                        if (pa->requires_grad) {
                            MatMap GA(pa->ensure_grad().data().data() + (a_shared ? 0 : i * m * k),
                                      m, k);
                            GA.noalias() += G * B.transpose();
                        }
                        if (pb->requires_grad) {
                            MatMap GB(pb->ensure_grad().data().data() + (b_shared ? 0 : i * k * n),
                                      k, n);
                            GB.noalias() += A.transpose() * G;
                        }
                    }
                });
}

Var transpose_last2(const Var& x) {
    const Shape& s = x.shape();
    if (s.size() < 2) throw std::invalid_argument("transpose_last2: rank < 2");
    const std::size_t r = s[s.size() - 2], c = s.back(), batch = batch_of(s);
    Shape os = s;
    std::swap(os[os.size() - 2], os[os.size() - 1]);
    Tensor out(os);
    const auto& xv = x.value();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = xv[b * r * c + i * c + j];
    auto px = x.node();
    return make(std::move(out), {px}, [px, r, c, batch](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    g[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
    });
}

Var linear(const Var& x, const Var& w) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (ws.size() != 2 || xs.empty() || xs.back() != ws[0]) {
        throw std::invalid_argument("linear: input " + shape_str(xs) + " vs weight " +
                                    shape_str(ws));
    }
    const std::size_t cin = ws[0], cout = ws[1], rows = x.value().size() / cin;
    Shape os = xs;
    os.back() = cout;
    Tensor out(os);
    CMatMap X(x.value().data().data(), rows, cin);
    CMatMap W(w.value().data().data(), cin, cout);
    MatMap(out.data().data(), rows, cout).noalias() = X * W;
    auto px = x.node(), pw = w.node();
    return make(std::move(out), {px, pw}, [px, pw, rows, cin, cout](Node& self) {
        CMatMap G(self.grad.data().data(), rows, cout);
        if (px->requires_grad) {
            CMatMap W(pw->value.data().data(), cin, cout);
            MatMap(px->ensure_grad().data().data(), rows, cin).noalias() += G * W.transpose();
        }
        if (pw->requires_grad) {
            CMatMap X(px->value.data().data(), rows, cin);
            MatMap(pw->ensure_grad().data().data(), cin, cout).noalias() += X.transpose() * G;
        }
    });
}

Var sum_axis(const Var& x, int axis, bool keepdim) {
    const std::size_t ax = resolve_axis(axis, x.shape().size());
    const auto sp = split_at(x.shape(), ax);
    Shape os = x.shape();
    if (keepdim) {
        os[ax] = 1;
    } else {
        os.erase(os.begin() + static_cast<std::ptrdiff_t>(ax));
    }
    Tensor out(os);
    const auto& xv = x.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t j = 0; j < sp.n; ++j)
            for (std::size_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += xv[(o * sp.n + j) * sp.inner + i];
    auto px = x.node();
    return make(std::move(out), {px}, [px, sp](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t j = 0; j < sp.n; ++j)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    g[(o * sp.n + j) * sp.inner + i] += self.grad[o * sp.inner + i];
    });
}

Var mean_axis(const Var& x, int axis, bool keepdim) {
    const std::size_t n = x.shape()[resolve_axis(axis, x.shape().size())];
    return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(n));
}

Var sum_all(const Var& x) {
    Tensor out = Tensor::scalar(x.value().sum());
    auto px = x.node();
    return make(std::move(out), {px}, [px](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        const double s = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
    });
}

Var mean_all(const Var& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(std::max<std::size_t>(1, x.value().size())));
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    auto px = x.node();
    return make(std::move(out), {px}, [px](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var concat_last(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last: no inputs");
    const Shape& s0 = parts.front().shape();
    const std::size_t rows = parts.front().value().size() / s0.back();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size() || !std::equal(s.begin(), s.end() - 1, s0.begin())) {
            throw std::invalid_argument("concat_last: shape mismatch " + shape_str(s) + " vs " +
                                        shape_str(s0));
        }
        widths.push_back(s.back());
        total += s.back();
        nodes.push_back(p.node());
    }
    Shape os = s0;
    os.back() = total;
    Tensor out(os);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.data().data() + r * widths[k], widths[k],
                        out.data().data() + r * total + off);
        off += widths[k];
    }
    return make(std::move(out), nodes, [nodes, widths, rows, total](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (nodes[k]->requires_grad) {
                auto& g = nodes[k]->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[k]; ++c)
                        g[r * widths[k] + c] += self.grad[r * total + off + c];
            }
            off += widths[k];
        }
    });
}

Var stack(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("stack: no inputs");
    const Shape& s0 = parts.front().shape();
    const std::size_t ax = resolve_axis(axis, s0.size() + 1);
    std::size_t outer = 1, inner = 1;
    for (std::size_t k = 0; k < ax; ++k) outer *= s0[k];
    for (std::size_t k = ax; k < s0.size(); ++k) inner *= s0[k];
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        if (p.shape() != s0) throw std::invalid_argument("stack: shape mismatch");
        nodes.push_back(p.node());
    }
    const std::size_t v = parts.size();
    Shape os = s0;
    os.insert(os.begin() + static_cast<std::ptrdiff_t>(ax), v);
    Tensor out(os);
    for (std::size_t k = 0; k < v; ++k) {
        const auto& pv = parts[k].value();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(pv.data().data() + o * inner, inner,
                        out.data().data() + (o * v + k) * inner);
    }
    return make(std::move(out), nodes, [nodes, outer, inner, v](Node& self) {
        for (std::size_t k = 0; k < v; ++k) {
            if (!nodes[k]->requires_grad) continue;
            auto& g = nodes[k]->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < inner; ++i)
                    g[o * inner + i] += self.grad[(o * v + k) * inner + i];
        }
    });
}

Var select(const Var& x, int axis, std::size_t index) {
    const std::size_t ax = resolve_axis(axis, x.shape().size());
    const auto sp = split_at(x.shape(), ax);
    if (index >= sp.n) throw std::out_of_range("select: index out of range");
    Shape os = x.shape();
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(ax));
    Tensor out(os);
    const auto& xv = x.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
        std::copy_n(xv.data().data() + (o * sp.n + index) * sp.inner, sp.inner,
                    out.data().data() + o * sp.inner);
    auto px = x.node();
    return make(std::move(out), {px}, [px, sp, index](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t i = 0; i < sp.inner; ++i)
                g[(o * sp.n + index) * sp.inner + i] += self.grad[o * sp.inner + i];
    });
}

Var causal_unfold(const Var& x, std::size_t kernel) {
    const Shape& s = x.shape();
    if (s.size() < 2) throw std::invalid_argument("causal_unfold: rank < 2");
    const std::size_t t_len = s[s.size() - 2], c = s.back();
    const std::size_t outer = x.value().size() / (t_len * c);
    Shape os = s;
    os.back() = kernel * c;
    Tensor out(os);
    const auto& xv = x.value();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t t = 0; t < t_len; ++t)
            for (std::size_t j = 0; j < kernel; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                           static_cast<std::ptrdiff_t>(kernel - 1);
                if (src < 0) continue;
                std::copy_n(xv.data().data() + (o * t_len + static_cast<std::size_t>(src)) * c, c,
                            out.data().data() + (o * t_len + t) * kernel * c + j * c);
            }
    auto px = x.node();
    return make(std::move(out), {px}, [px, outer, t_len, c, kernel](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t t = 0; t < t_len; ++t)
                for (std::size_t j = 0; j < kernel; ++j) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                               static_cast<std::ptrdiff_t>(kernel - 1);
                    if (src < 0) continue;
                    const double* gs = self.grad.data().data() + (o * t_len + t) * kernel * c + j * c;
                    double* gd = g.data().data() + (o * t_len + static_cast<std::size_t>(src)) * c;
                    for (std::size_t q = 0; q < c; ++q) gd[q] += gs[q];
                }
    });
}

Var softmax_last(const Var& x) {
    const std::size_t c = x.shape().back(), rows = x.value().size() / c;
    Tensor out(x.shape());
    const auto& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data().data() + r * c;
        double* o = out.data().data() + r * c;
        const double mx = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < c; ++j) o[j] /= z;
    }
    auto px = x.node();
    return make(std::move(out), {px}, [px, rows, c](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data().data() + r * c;
            const double* gy = self.grad.data().data() + r * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
            for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[j] * (gy[j] - dot);
        }
    });
}

Var log_softmax_last(const Var& x) {
    const std::size_t c = x.shape().back(), rows = x.value().size() / c;
    Tensor out(x.shape());
    const auto& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data().data() + r * c;
        const double mx = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(in[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = in[j] - lse;
    }
    auto px = x.node();
    return make(std::move(out), {px}, [px, rows, c](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data().data() + r * c;
            const double* gy = self.grad.data().data() + r * c;
            double total = 0.0;
            for (std::size_t j = 0; j < c; ++j) total += gy[j];
            for (std::size_t j = 0; j < c; ++j) g[r * c + j] += gy[j] - std::exp(y[j]) * total;
        }
    });
}

Var layer_norm_last(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const std::size_t c = x.shape().back(), rows = x.value().size() / c;
    if (gamma.value().size() != c || beta.value().size() != c) {
        throw std::invalid_argument("layer_norm_last: gain/bias width mismatch");
    }
    Tensor out(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.value().size());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    const auto& xv = x.value();
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data().data() + r * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += in[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(c);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (in[j] - mu) * rs;
            (*xhat)[r * c + j] = h;
            out[r * c + j] = h * gv[j] + bv[j];
        }
    }
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    return make(std::move(out), {px, pg, pb}, [px, pg, pb, xhat, rstd, rows, c](Node& self) {
        const auto& gy = self.grad;
        if (pg->requires_grad) {
            auto& g = pg->ensure_grad();
            for (std::size_t i = 0; i < gy.size(); ++i) g[i % c] += gy[i] * (*xhat)[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < gy.size(); ++i) g[i % c] += gy[i];
        }
        if (!px->requires_grad) return;
        auto& gx = px->ensure_grad();
        const auto& gv = pg->value;
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                const double dh = gy[r * c + j] * gv[j];
                m1 += dh;
                m2 += dh * (*xhat)[r * c + j];
            }
            m1 *= inv_c;
            m2 *= inv_c;
            for (std::size_t j = 0; j < c; ++j) {
                const double dh = gy[r * c + j] * gv[j];
                gx[r * c + j] += (*rstd)[r] * (dh - m1 - (*xhat)[r * c + j] * m2);
            }
        }
    });
}

Var mha_scores(const Var& q, const Var& k, std::size_t heads) {
    require_same(q, k, "mha_scores");
    const Shape& s = q.shape();
    if (s.size() != 3 || heads == 0 || s[2] % heads != 0) {
        throw std::invalid_argument("mha_scores: expected [P, V, d] with d divisible by heads");
    }
    const std::size_t p_len = s[0], v = s[1], d = s[2], dh = d / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor out({p_len, heads, v, v});
    const double* qv = q.value().data().data();
    const double* kv = k.value().data().data();
    for (std::size_t p = 0; p < p_len; ++p)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < v; ++i)
                for (std::size_t j = 0; j < v; ++j) {
                    const double* a = qv + (p * v + i) * d + h * dh;
                    const double* b = kv + (p * v + j) * d + h * dh;
                    double acc = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) acc += a[c] * b[c];
                    out[((p * heads + h) * v + i) * v + j] = acc * sc;
                }
    auto pq = q.node(), pk = k.node();
    return make(std::move(out), {pq, pk}, [pq, pk, p_len, heads, v, d, dh, sc](Node& self) {
        double* gq = pq->requires_grad ? pq->ensure_grad().data().data() : nullptr;
        double* gk = pk->requires_grad ? pk->ensure_grad().data().data() : nullptr;
        const double* qv = pq->value.data().data();
        const double* kv = pk->value.data().data();
        for (std::size_t p = 0; p < p_len; ++p)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t i = 0; i < v; ++i)
                    for (std::size_t j = 0; j < v; ++j) {
                        const double g = self.grad[((p * heads + h) * v + i) * v + j] * sc;
                        const std::size_t qi = (p * v + i) * d + h * dh;
                        const std::size_t kj = (p * v + j) * d + h * dh;
                        for (std::size_t c = 0; c < dh; ++c) {
                            if (gq) gq[qi + c] += g * kv[kj + c];
                            if (gk) gk[kj + c] += g * qv[qi + c];
                        }
                    }
    });
}

Var mha_mix(const Var& attn, const Var& val) {
    const Shape& as = attn.shape();
    const Shape& vs = val.shape();
    if (as.size() != 4 || vs.size() != 3 || as[0] != vs[0] || as[2] != vs[1] || as[3] != vs[1] ||
        vs[2] % as[1] != 0) {
        throw std::invalid_argument("mha_mix: attention " + shape_str(as) + " vs values " +
                                    shape_str(vs));
    }
    const std::size_t p_len = vs[0], v = vs[1], d = vs[2], heads = as[1], dh = d / heads;
    Tensor out(vs);
    const double* av = attn.value().data().data();
    const double* vv = val.value().data().data();
    for (std::size_t p = 0; p < p_len; ++p)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < v; ++i) {
                double* o = out.data().data() + (p * v + i) * d + h * dh;
                for (std::size_t j = 0; j < v; ++j) {
                    const double a = av[((p * heads + h) * v + i) * v + j];
                    const double* src = vv + (p * v + j) * d + h * dh;
                    for (std::size_t c = 0; c < dh; ++c) o[c] += a * src[c];
                }
            }
    auto pa = attn.node(), pv = val.node();
    return make(std::move(out), {pa, pv}, [pa, pv, p_len, heads, v, d, dh](Node& self) {
        double* ga = pa->requires_grad ? pa->ensure_grad().data().data() : nullptr;
        double* gv = pv->requires_grad ? pv->ensure_grad().data().data() : nullptr;
        const double* av = pa->value.data().data();
        const double* vv = pv->value.data().data();
        for (std::size_t p = 0; p < p_len; ++p)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t i = 0; i < v; ++i) {
                    const double* go = self.grad.data().data() + (p * v + i) * d + h * dh;
                    for (std::size_t j = 0; j < v; ++j) {
                        const std::size_t ai = ((p * heads + h) * v + i) * v + j;
                        const std::size_t vj = (p * v + j) * d + h * dh;
                        if (ga) {
                            double acc = 0.0;
                            for (std::size_t c = 0; c < dh; ++c) acc += go[c] * vv[vj + c];
                            ga[ai] += acc;
                        }
                        if (gv) {
                            for (std::size_t c = 0; c < dh; ++c) gv[vj + c] += av[ai] * go[c];
                        }
                    }
                }
    });
}

Var normalize_rows_or_zero(const Var& x, std::size_t* zero_rows) {
    const std::size_t c = x.shape().back(), rows = x.value().size() / c;
    Tensor out(x.shape());
    auto norms = std::make_shared<std::vector<double>>(rows, 0.0);
    const auto& xv = x.value();
    std::size_t zeros = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        double nn = 0.0;
        for (std::size_t j = 0; j < c; ++j) nn += xv[r * c + j] * xv[r * c + j];
        nn = std::sqrt(nn);
        (*norms)[r] = nn;
        if (nn == 0.0) {
            ++zeros;
            continue;
        }
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] / nn;
    }
    if (zero_rows) *zero_rows += zeros;
    auto px = x.node();
    return make(std::move(out), {px}, [px, norms, rows, c](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double nn = (*norms)[r];
            if (nn == 0.0) continue;
            const double* y = self.value.data().data() + r * c;
            const double* gy = self.grad.data().data() + r * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
            for (std::size_t j = 0; j < c; ++j) g[r * c + j] += (gy[j] - y[j] * dot) / nn;
        }
    });
}

Var diagonal(const Var& x) {
    const Shape& s = x.shape();
    if (s.size() != 2 || s[0] != s[1]) throw std::invalid_argument("diagonal: expected square matrix");
    const std::size_t n = s[0];
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) out[i] = x.value()[i * n + i];
    auto px = x.node();
    return make(std::move(out), {px}, [px, n](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) g[i * n + i] += self.grad[i];
    });
}

}  // namespace smahyper::ag
