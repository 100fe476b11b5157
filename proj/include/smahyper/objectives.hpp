// Local-global contrastive loss between the graph and hypergraph paths, and
// the joint training objective.

#pragma once

#include <cstddef>

#include "smahyper/nn.hpp"
#include "smahyper/st_encoder.hpp"

namespace smahyper {

struct ContrastiveResult {
    ag::Var loss;                    // scalar
    std::size_t terms = 0;           // (batch, layer, view, region) terms averaged
    std::size_t zero_norm_rows = 0;  // pooled vectors treated as cosine 0
};

// InfoNCE over regions for one pair of pooled embeddings [N, d]; returns the
// summed -log-softmax of the diagonal.
ag::Var info_nce_sum(const ag::Var& graph_vectors, const ag::Var& hyper_vectors, double temperature,
                     std::size_t* zero_norm_rows = nullptr);

// Region vectors are time means of each per-view layer state.
ContrastiveResult contrastive_loss(const LayerState& states, double temperature);

struct LossWeights {
    double lambda1 = 0.1;
    double lambda2 = 0.001;
    double temperature = 1.0;
    bool use_contrastive = true;
};

struct LossBreakdown {
    ag::Var total_var;
    double mse = 0.0;
    double contrastive = 0.0;
    double l2 = 0.0;
    double total = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::size_t zero_norm_rows = 0;
};

ag::Var mse_loss(const ag::Var& target, const ag::Var& prediction);

// total = mse + lambda1 * contrastive + lambda2 * l2. The contrastive term is
// zero when there is no hypergraph path or it is switched off.
LossBreakdown joint_loss(const ag::Var& target, const ag::Var& prediction, const LayerState& states,
                         const nn::ParameterStore& params, const LossWeights& weights);

// The same composition on plain numbers, in the same order.
double compose_total(double mse, double contrastive, double l2, double lambda1, double lambda2);

}  // namespace smahyper
