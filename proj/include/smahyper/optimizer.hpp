#pragma once

#include <cstdint>
#include <vector>

#include "smahyper/nn.hpp"

namespace smahyper {

struct AdamState {
    std::vector<Tensor> m, v;
    std::uint64_t step = 0;
};

class Adam {
public:
    explicit Adam(nn::ParameterStore& store, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    // Global L2 norm of the current gradients.
    double grad_norm() const;

    // Scales gradients down to `max_norm` when needed (0 disables), then
    // applies one update. Returns the pre-clipping norm.
    double step(double max_norm);

    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }

private:
    nn::ParameterStore& store_;
    double lr_, beta1_, beta2_, eps_;
    AdamState state_;
};

}  // namespace smahyper
