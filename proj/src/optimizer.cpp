#include "smahyper/optimizer.hpp"

#include <cmath>

namespace smahyper {

Adam::Adam(nn::ParameterStore& store, double lr, double beta1, double beta2, double eps)
    : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& e : store_.entries()) {
        state_.m.emplace_back(e.var.shape());
        state_.v.emplace_back(e.var.shape());
    }
}

double Adam::grad_norm() const {
    double sq = 0.0;
    for (const auto& e : store_.entries())
        for (double g : e.var.grad().vec()) sq += g * g;
    return std::sqrt(sq);
}

double Adam::step(double max_norm) {
    const double norm = grad_norm();
    const double factor = (max_norm > 0.0 && norm > max_norm) ? max_norm / norm : 1.0;
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double c1 = 1.0 - std::pow(beta1_, t);
    const double c2 = 1.0 - std::pow(beta2_, t);
    const auto& entries = store_.entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
        ag::Var var = entries[p].var;
        Tensor& w = var.mutable_value();
        const Tensor& g = var.grad();
        Tensor& m = state_.m[p];
        Tensor& v = state_.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] * factor;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
    return norm;
}

}  // namespace smahyper
