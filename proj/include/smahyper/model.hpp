// Full model assembly and the data preparation shared by training,
// evaluation, prediction and export.

#pragma once

#include <memory>
#include <vector>

#include "smahyper/config.hpp"
#include "smahyper/data_core.hpp"
#include "smahyper/decoder_head.hpp"
#include "smahyper/ingestion.hpp"
#include "smahyper/objectives.hpp"
#include "smahyper/st_encoder.hpp"

namespace smahyper {

// Dataset turned into normalized windows.
struct PreparedData {
    Dataset dataset;
    PkdeParams pkde;        // nonzero_max is also used when PKDE is off
    RiskTensor normalized;  // [N, T_total]
    WindowSet windows;
    Tensor poi, road;       // standardized [N, d_P], [N, d_R]
    Tensor mean_history;    // [N, T] mean training input window
};

// Fits the normalization on the training slice only.
PreparedData prepare_data(Dataset dataset, const ExperimentConfig& cfg);

struct Batch {
    Tensor inputs;   // [B, N, T]
    Tensor targets;  // [B, N, tau]
    Tensor met;      // [B, N, T, d_M]
    Tensor cal;      // [B, N, T, d_C]
};

Batch make_batch(const std::vector<SampleWindow>& windows, const std::vector<std::size_t>& ids);

struct ForwardResult {
    ag::Var prediction;  // [B, N, tau]
    EncoderOutput encoded;
    std::vector<ViewStructure> structures;
};

std::vector<View> active_views(const ExperimentConfig& cfg);

class SmaHyperModel {
public:
    // Parameters are initialized from mix_seed(cfg.seed, 1).
    SmaHyperModel(const ExperimentConfig& cfg, const RegionCatalog& catalog, const Tensor& poi,
                  const Tensor& road, const Tensor& mean_history, std::size_t met_width,
                  std::size_t cal_width);

    ForwardResult forward(const Batch& batch) const;
    std::vector<ViewStructure> structures(const Batch& batch) const;

    nn::ParameterStore& params() { return store_; }
    const nn::ParameterStore& params() const { return store_; }
    const GraphLearner& graph_learner() const { return *graph_; }

private:
    ExperimentConfig cfg_;
    nn::ParameterStore store_;
    ag::Var poi_, road_, mean_history_;
    ag::Var accident_embedding_;  // e
    std::unique_ptr<GraphLearner> graph_;
    std::unique_ptr<SpatioTemporalEncoder> encoder_;
    std::unique_ptr<DecoderHead> decoder_;
};

}  // namespace smahyper
