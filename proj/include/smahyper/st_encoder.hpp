// The sandwich encoder. Per layer and per path:
//
//   gated temporal conv -> per-view spatial conv -> view fusion -> gated temporal conv
//
// The graph path convolves with the normalized pairwise graphs, the
// hypergraph path with the incidences. Layer outputs are fused once more
// across layers. Sequence tensors are [B, N, T, d].

#pragma once

#include <optional>
#include <vector>

#include "smahyper/graph_construction.hpp"
#include "smahyper/nn.hpp"

namespace smahyper {

// E[.., n, t, :] = X[.., n, t] * e
ag::Var embed_accidents(const ag::Var& x, const ag::Var& e);

// Multiplies `structure` [.., R, N] into the node axis of `seq` [.., N, T, d].
ag::Var propagate_nodes(const ag::Var& structure, const ag::Var& seq);

// ReLU(Â E W)
ag::Var gcn_block(const ag::Var& seq, const ag::Var& normalized_adjacency, const ag::Var& weight);

// ReLU(Dv^-1/2 H ReLU(De^-1 H^T E) W), zero degrees mapping to zero.
ag::Var hgcn_block(const ag::Var& seq, const ag::Var& incidence, const ag::Var& weight);

struct EncoderOptions {
    std::size_t embed_dim = 32;
    std::size_t heads = 8;
    std::size_t layers = 2;
    std::size_t kernel = 3;
    bool use_hypergraph = true;
    bool use_attention_fusion = true;
    std::vector<View> views{kAllViews.begin(), kAllViews.end()};
};

// Per-layer activations kept for the contrastive objective.
struct LayerState {
    std::vector<View> views;
    std::vector<std::vector<ag::Var>> graph;  // [layer][view]
    std::vector<std::vector<ag::Var>> hyper;  // empty when hypergraphs are off
    std::vector<ag::Var> graph_layers;        // fused per-layer outputs
    std::vector<ag::Var> hyper_layers;
};

struct EncoderOutput {
    ag::Var graph;
    std::optional<ag::Var> hyper;
    LayerState states;
};

class SpatioTemporalEncoder {
public:
    SpatioTemporalEncoder(nn::ParameterStore& store, const EncoderOptions& opts, Rng& rng);

    EncoderOutput forward(const ag::Var& embedded, const std::vector<ViewStructure>& structures) const;

    ag::Var fuse_views(bool hyper_path, std::size_t layer, const std::vector<ag::Var>& inputs) const;
    ag::Var fuse_layers(bool hyper_path, const std::vector<ag::Var>& layer_outputs) const;

    const EncoderOptions& options() const { return opts_; }

private:
    struct LayerParams {
        nn::GatedTemporalBlock gtc_in, gtc_out;
        std::vector<ag::Var> view_weights;  // W3 (graph) or W4 (hypergraph), one per view
        std::optional<nn::TokenFusion> view_fusion;
    };
    struct PathParams {
        std::vector<LayerParams> layers;
        std::optional<nn::TokenFusion> layer_fusion;
    };

    std::vector<ag::Var> run_path(const PathParams& path, bool hyper_path, const ag::Var& embedded,
                                  const std::vector<ViewStructure>& structures,
                                  std::vector<std::vector<ag::Var>>& per_view) const;

    EncoderOptions opts_;
    PathParams graph_path_;
    std::optional<PathParams> hyper_path_;
};

}  // namespace smahyper
