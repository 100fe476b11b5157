#include "smahyper/objectives.hpp"

#include <stdexcept>

namespace smahyper {

ag::Var info_nce_sum(const ag::Var& graph_vectors, const ag::Var& hyper_vectors, double temperature,
                     std::size_t* zero_norm_rows) {
    if (temperature <= 0.0) throw std::invalid_argument("contrastive temperature must be positive");
    std::size_t zg = 0, zh = 0;
    const ag::Var g = ag::normalize_rows_or_zero(graph_vectors, &zg);
    const ag::Var h = ag::normalize_rows_or_zero(hyper_vectors, &zh);
    if (zero_norm_rows) *zero_norm_rows += zg + zh;
    const ag::Var logits = ag::scale(ag::matmul(g, ag::transpose_last2(h)), 1.0 / temperature);
    return ag::scale(ag::sum_all(ag::diagonal(ag::log_softmax_last(logits))), -1.0);
}

ContrastiveResult contrastive_loss(const LayerState& states, double temperature) {
    if (states.hyper.size() != states.graph.size()) {
        throw std::invalid_argument("contrastive loss needs both paths for every layer");
    }
    ContrastiveResult r;
    std::vector<ag::Var> sums;
    for (std::size_t l = 0; l < states.graph.size(); ++l) {
        for (std::size_t s = 0; s < states.graph[l].size(); ++s) {
            // [B, N, T, d] -> [B, N, d], then one InfoNCE per window.
            const ag::Var gp = ag::mean_axis(states.graph[l][s], -2);
            const ag::Var hp = ag::mean_axis(states.hyper[l][s], -2);
            if (gp.shape().size() == 2) {
                sums.push_back(info_nce_sum(gp, hp, temperature, &r.zero_norm_rows));
                r.terms += gp.dim(0);
                continue;
            }
            for (std::size_t b = 0; b < gp.dim(0); ++b) {
                sums.push_back(info_nce_sum(ag::select(gp, 0, b), ag::select(hp, 0, b), temperature,
                                            &r.zero_norm_rows));
                r.terms += gp.dim(1);
            }
        }
    }
    if (sums.empty()) throw std::invalid_argument("contrastive loss: no layer states");
    ag::Var total = sums.front();
    for (std::size_t i = 1; i < sums.size(); ++i) total = ag::add(total, sums[i]);
    r.loss = ag::scale(total, 1.0 / static_cast<double>(r.terms));
    return r;
}

ag::Var mse_loss(const ag::Var& target, const ag::Var& prediction) {
    if (target.shape() != prediction.shape()) {
        throw std::invalid_argument("mse: target " + shape_str(target.shape()) + " vs prediction " +
                                    shape_str(prediction.shape()));
    }
    return ag::mean_all(ag::square(ag::sub(prediction, target)));
}

double compose_total(double mse, double contrastive, double l2, double lambda1, double lambda2) {
    return mse + lambda1 * contrastive + lambda2 * l2;
}

LossBreakdown joint_loss(const ag::Var& target, const ag::Var& prediction, const LayerState& states,
                         const nn::ParameterStore& params, const LossWeights& weights) {
    LossBreakdown out;
    out.lambda1 = weights.lambda1;
    out.lambda2 = weights.lambda2;
    const ag::Var mse = mse_loss(target, prediction);
    const ag::Var l2 = params.l2_penalty();
    ag::Var contrastive = ag::constant(Tensor::scalar(0.0));
    if (weights.use_contrastive && !states.hyper.empty()) {
        ContrastiveResult c = contrastive_loss(states, weights.temperature);
        contrastive = c.loss;
        out.zero_norm_rows = c.zero_norm_rows;
    }
    out.total_var = ag::add(ag::add(mse, ag::scale(contrastive, weights.lambda1)), ag::scale(l2, weights.lambda2));
    out.mse = mse.value()[0];
    out.contrastive = contrastive.value()[0];
    out.l2 = l2.value()[0];
    out.total = out.total_var.value()[0];
    return out;
}

}  // namespace smahyper
