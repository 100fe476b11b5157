// Multi-view adaptive pairwise graphs and hypergraph incidences.
//
// Views: S (accident-spatial), T (accident-temporal), P (POI), R (road).
// Pairwise graphs for T/P/R are ReLU(Tanh(U U^T)) with per-row top-k; the S
// graph is the fixed spatial adjacency. Every view also gets an incidence
// H = ReLU(Tanh(U K)) sparsified per hyperedge (column) by default; S uses a
// learnable positional embedding for U.
//
// Structures built from per-window histories carry a leading batch axis:
// U [B, N, d], A [B, N, N], H [B, N, I]. Static views are unbatched.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "smahyper/autograd.hpp"
#include "smahyper/ingestion.hpp"
#include "smahyper/nn.hpp"

namespace smahyper {

enum class View { S = 0, T = 1, P = 2, R = 3 };
inline constexpr std::array<View, 4> kAllViews{View::S, View::T, View::P, View::R};
const char* view_name(View v);

enum class TopkAxis { column, row };

struct ViewEmbedding {
    View view = View::S;
    ag::Var U;
    std::size_t width() const { return U.shape().back(); }
};

struct HyperedgeBasis {
    View view = View::S;
    ag::Var K;  // [d, I]
};

struct AdaptiveGraph {
    View view = View::S;
    ag::Var A;
    std::size_t k = 0;
    double tie_fraction = 0.0;             // rows whose k-th kept value ties a dropped one
    std::vector<std::size_t> isolated;     // spatial view: regions with no neighbour
};

struct HyperIncidence {
    View view = View::S;
    ag::Var H;
    std::size_t k_members = 0;
    TopkAxis axis = TopkAxis::column;
    std::size_t empty_columns = 0;
};

std::size_t hyperedge_count(double ratio, std::size_t n_regions);

struct TopkMask {
    Tensor mask;
    std::size_t lines = 0;       // rows or columns examined
    std::size_t tied_lines = 0;  // boundary ties among nonzero values
};

// Keeps the k largest entries along `axis` (-1 rows, -2 columns) of a
// [..., R, C] tensor. Ties go to the lower index.
TopkMask topk_mask(const Tensor& values, std::size_t k, int axis);

// Two affine layers with ReLU between; view P or R.
struct StaticViewEncoder {
    View view = View::P;
    nn::Affine first, second;
    ViewEmbedding operator()(const ag::Var& features) const;
};

StaticViewEncoder make_static_view_encoder(nn::ParameterStore& store, View view,
                                           std::size_t in_width, std::size_t embed_dim, Rng& rng);

// Two causal convolutions along time (kernel 3), mean pooling over time,
// then an affine map to the embedding width. history: [N, T] or [B, N, T].
struct TemporalViewEncoder {
    nn::CausalConv conv1, conv2;
    nn::Affine project;
    ViewEmbedding operator()(const ag::Var& history) const;
};

TemporalViewEncoder make_temporal_view_encoder(nn::ParameterStore& store, std::size_t embed_dim,
                                               Rng& rng);

AdaptiveGraph build_pairwise_graph(const ViewEmbedding& u, std::size_t k);
AdaptiveGraph spatial_view_graph(const RegionCatalog& catalog);
HyperIncidence build_hypergraph(const ViewEmbedding& u, const HyperedgeBasis& basis,
                                std::size_t k_members, TopkAxis axis = TopkAxis::column);

// D^-1/2 (A + I) D^-1/2 with D the row degree of A + I.
ag::Var normalize_pairwise(const ag::Var& adjacency);

struct GraphLearnerOptions {
    std::size_t embed_dim = 32;
    std::size_t k = 40;
    std::size_t k_members = 40;
    double hyperedge_ratio = 0.1;
    TopkAxis topk_axis = TopkAxis::column;
    bool use_hypergraph = true;
    std::vector<View> views{kAllViews.begin(), kAllViews.end()};
};

struct ViewStructure {
    View view = View::S;
    AdaptiveGraph graph;
    ag::Var normalized;                   // [N, N] or [B, N, N]
    std::optional<HyperIncidence> hyper;  // absent when hypergraphs are off
};

// Owns U^S, K^s and the feature encoders for every active view.
class GraphLearner {
public:
    GraphLearner(nn::ParameterStore& store, const GraphLearnerOptions& opts,
                 const RegionCatalog& catalog, std::size_t poi_width, std::size_t road_width,
                 Rng& rng);

    // history: [B, N, T] input windows (dynamic temporal view) or the
    // training-period mean window [N, T] (static mode).
    std::vector<ViewStructure> build(const ag::Var& history, const ag::Var& poi,
                                     const ag::Var& road) const;

    const GraphLearnerOptions& options() const { return opts_; }
    std::size_t hyperedges() const { return hyperedges_; }

private:
    GraphLearnerOptions opts_;
    std::size_t n_regions_;
    std::size_t hyperedges_;
    AdaptiveGraph spatial_;
    ag::Var spatial_norm_;
    ag::Var positional_;  // U^S
    std::array<std::optional<HyperedgeBasis>, 4> bases_;
    std::optional<TemporalViewEncoder> temporal_;
    std::optional<StaticViewEncoder> poi_, road_;
};

}  // namespace smahyper
