// Central finite differences against the tape's analytic gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "smahyper/autograd.hpp"

namespace testsupport {

struct GradCheck {
    double max_rel_error = 0.0;
    std::string worst;  // "input i, element j: analytic vs numeric"
    std::size_t checked = 0;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
// whose true gradient is zero from dividing rounding noise by nothing.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

// `loss` must rebuild the graph from the current values of `inputs` and
// return a scalar.
inline GradCheck check_gradients(const std::function<smahyper::ag::Var()>& loss,
                                 std::vector<smahyper::ag::Var> inputs, double h = 1e-6) {
    using namespace smahyper;
    for (auto& v : inputs) v.zero_grad();
    ag::backward(loss());
    std::vector<Tensor> analytic;
    for (const auto& v : inputs) analytic.push_back(v.grad());

    GradCheck out;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor& value = inputs[i].mutable_value();
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double orig = value[j];
            value[j] = orig + h;
            const double up = loss().value()[0];
            value[j] = orig - h;
            const double down = loss().value()[0];
            value[j] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[i].size() ? analytic[i][j] : 0.0;
            const double err = rel_error(a, numeric);
            ++out.checked;
            if (err > out.max_rel_error) {
                out.max_rel_error = err;
                out.worst = "input " + std::to_string(i) + ", element " + std::to_string(j) + ": analytic " +
                            std::to_string(a) + " vs numeric " + std::to_string(numeric);
            }
        }
    }
    return out;
}

}  // namespace testsupport
