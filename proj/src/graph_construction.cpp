#include "smahyper/graph_construction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace smahyper {

const char* view_name(View v) {
    switch (v) {
        case View::S: return "S";
        case View::T: return "T";
        case View::P: return "P";
        case View::R: return "R";
    }
    return "?";
}

std::size_t hyperedge_count(double ratio, std::size_t n_regions) {
    const auto i = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_regions)));
    return std::max<std::size_t>(1, i);
}

TopkMask topk_mask(const Tensor& values, std::size_t k, int axis) {
    const Shape& s = values.shape();
    if (s.size() < 2) throw std::invalid_argument("topk_mask: rank < 2");
    const std::size_t rows = s[s.size() - 2], cols = s.back();
    const std::size_t batch = values.size() / (rows * cols);
    const bool by_row = resolve_axis(axis, s.size()) == s.size() - 1;
    const std::size_t lines = by_row ? rows : cols;
    const std::size_t len = by_row ? cols : rows;

    TopkMask out{Tensor(s), batch * lines, 0};
    std::vector<std::size_t> order(len);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t base = b * rows * cols;
        for (std::size_t line = 0; line < lines; ++line) {
            auto at = [&](std::size_t j) {
                return by_row ? base + line * cols + j : base + j * cols + line;
            };
            if (k >= len) {
                for (std::size_t j = 0; j < len; ++j) out.mask[at(j)] = 1.0;
                continue;
            }
            std::iota(order.begin(), order.end(), std::size_t{0});
            auto better = [&](std::size_t x, std::size_t y) {
                const double vx = values[at(x)], vy = values[at(y)];
                return vx > vy || (vx == vy && x < y);
            };
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(k + 1, len)),
                              order.end(), better);
            for (std::size_t j = 0; j < k; ++j) out.mask[at(order[j])] = 1.0;
            if (k > 0) {
                const double kth = values[at(order[k - 1])];
                if (kth != 0.0 && values[at(order[k])] == kth) ++out.tied_lines;
            }
        }
    }
    return out;
}

ViewEmbedding StaticViewEncoder::operator()(const ag::Var& features) const {
    return {view, second(ag::relu(first(features)))};
}

StaticViewEncoder make_static_view_encoder(nn::ParameterStore& store, View view,
                                           std::size_t in_width, std::size_t embed_dim, Rng& rng) {
    if (view != View::P && view != View::R) {
        throw std::invalid_argument("static view encoders exist for P and R only");
    }
    const std::string name = std::string("graph.") + view_name(view) + ".embed";
    StaticViewEncoder enc;
    enc.view = view;
    enc.first = nn::make_affine(store, name + ".0", in_width, embed_dim, rng);
    enc.second = nn::make_affine(store, name + ".1", embed_dim, embed_dim, rng);
    return enc;
}

ViewEmbedding TemporalViewEncoder::operator()(const ag::Var& history) const {
    const Shape& s = history.shape();
    if (s.size() < 2) throw std::invalid_argument("temporal view: history must be [.., N, T]");
    if (s.back() < conv1.kernel) {
        throw std::invalid_argument("temporal view: " + std::to_string(s.back()) +
                                    " input steps is shorter than the kernel (" +
                                    std::to_string(conv1.kernel) + ")");
    }
    Shape col = s;
    col.push_back(1);
    ag::Var h = ag::reshape(history, col);
    h = ag::relu(conv1(h));
    h = ag::relu(conv2(h));
    h = ag::mean_axis(h, -2);
    return {View::T, project(h)};
}

TemporalViewEncoder make_temporal_view_encoder(nn::ParameterStore& store, std::size_t embed_dim,
                                               Rng& rng) {
    TemporalViewEncoder enc;
    enc.conv1 = nn::make_causal_conv(store, "graph.T.conv1", 1, embed_dim, 3, rng);
    enc.conv2 = nn::make_causal_conv(store, "graph.T.conv2", embed_dim, embed_dim, 3, rng);
    enc.project = nn::make_affine(store, "graph.T.project", embed_dim, embed_dim, rng);
    return enc;
}

AdaptiveGraph build_pairwise_graph(const ViewEmbedding& u, std::size_t k) {
    const std::size_t n = u.U.dim(-2);
    const ag::Var dense = ag::relu(ag::tanh(ag::matmul(u.U, ag::transpose_last2(u.U))));
    const std::size_t kk = std::min(k, n);
    auto tm = topk_mask(dense.value(), kk, -1);
    AdaptiveGraph g;
    g.view = u.view;
    g.k = kk;
    g.tie_fraction = tm.lines ? static_cast<double>(tm.tied_lines) / static_cast<double>(tm.lines) : 0.0;
    g.A = ag::mul(dense, ag::constant(std::move(tm.mask)));
    return g;
}

AdaptiveGraph spatial_view_graph(const RegionCatalog& catalog) {
    AdaptiveGraph g;
    g.view = View::S;
    const std::size_t n = catalog.size();
    g.k = n;
    g.A = ag::constant(catalog.adjacency);
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < n && !any; ++j) any = catalog.adjacency[i * n + j] != 0.0;
        if (!any) g.isolated.push_back(i);
    }
    return g;
}

HyperIncidence build_hypergraph(const ViewEmbedding& u, const HyperedgeBasis& basis,
                                std::size_t k_members, TopkAxis axis) {
    const ag::Var dense = ag::relu(ag::tanh(ag::matmul(u.U, basis.K)));
    const std::size_t n = dense.dim(-2), edges = dense.dim(-1);
    const std::size_t cap = axis == TopkAxis::column ? std::min(k_members, n) : std::min(k_members, edges);
    auto tm = topk_mask(dense.value(), cap, axis == TopkAxis::column ? -2 : -1);
    HyperIncidence h;
    h.view = u.view;
    h.k_members = cap;
    h.axis = axis;
    h.H = ag::mul(dense, ag::constant(std::move(tm.mask)));

    const Tensor& hv = h.H.value();
    const std::size_t batch = hv.size() / (n * edges);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t e = 0; e < edges; ++e) {
            bool any = false;
            for (std::size_t i = 0; i < n && !any; ++i) any = hv[(b * n + i) * edges + e] != 0.0;
            if (!any) ++h.empty_columns;
        }
    return h;
}

ag::Var normalize_pairwise(const ag::Var& adjacency) {
    const Shape& s = adjacency.shape();
    const std::size_t n = s.back();
    if (s.size() < 2 || s[s.size() - 2] != n) throw std::invalid_argument("normalize_pairwise: not square");
    Shape eye_shape(s.size(), 1);
    eye_shape[s.size() - 2] = n;
    eye_shape[s.size() - 1] = n;
    Tensor eye(eye_shape);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
    const ag::Var with_loops = ag::add_bcast(adjacency, ag::constant(std::move(eye)));
    const ag::Var dinv = ag::inv_sqrt_or_zero(ag::sum_axis(with_loops, -1, true));
    return ag::mul_bcast(ag::mul_bcast(with_loops, dinv), ag::transpose_last2(dinv));
}

GraphLearner::GraphLearner(nn::ParameterStore& store, const GraphLearnerOptions& opts,
                           const RegionCatalog& catalog, std::size_t poi_width,
                           std::size_t road_width, Rng& rng)
    : opts_(opts), n_regions_(catalog.size()), hyperedges_(hyperedge_count(opts.hyperedge_ratio, catalog.size())) {
    const std::size_t d = opts_.embed_dim;
    auto active = [&](View v) {
        return std::find(opts_.views.begin(), opts_.views.end(), v) != opts_.views.end();
    };
    if (opts_.views.empty()) throw std::invalid_argument("at least one view is required");
    for (View v : kAllViews) {
        if (!active(v)) continue;
        switch (v) {
            case View::S:
                spatial_ = spatial_view_graph(catalog);
                spatial_norm_ = normalize_pairwise(spatial_.A);
                if (opts_.use_hypergraph) {
                    positional_ = store.add("graph.S.positional", nn::fan_in_uniform({n_regions_, d}, d, rng));
                }
                break;
            case View::T: temporal_ = make_temporal_view_encoder(store, d, rng); break;
            case View::P: poi_ = make_static_view_encoder(store, View::P, poi_width, d, rng); break;
            case View::R: road_ = make_static_view_encoder(store, View::R, road_width, d, rng); break;
        }
        if (opts_.use_hypergraph) {
            bases_[static_cast<std::size_t>(v)] = HyperedgeBasis{
                v, store.add(std::string("graph.") + view_name(v) + ".hyperedges",
                             nn::fan_in_uniform({d, hyperedges_}, d, rng))};
        }
    }
}

std::vector<ViewStructure> GraphLearner::build(const ag::Var& history, const ag::Var& poi,
                                               const ag::Var& road) const {
    std::vector<ViewStructure> out;
    for (View v : kAllViews) {
        if (std::find(opts_.views.begin(), opts_.views.end(), v) == opts_.views.end()) continue;
        ViewStructure vs;
        vs.view = v;
        std::optional<ViewEmbedding> emb;
        switch (v) {
            case View::S:
                vs.graph = spatial_;
                vs.normalized = spatial_norm_;
                if (opts_.use_hypergraph) emb = ViewEmbedding{View::S, positional_};
                break;
            case View::T: emb = (*temporal_)(history); break;
            case View::P: emb = (*poi_)(poi); break;
            case View::R: emb = (*road_)(road); break;
        }
        if (v != View::S) {
            vs.graph = build_pairwise_graph(*emb, opts_.k);
            vs.normalized = normalize_pairwise(vs.graph.A);
        }
        if (opts_.use_hypergraph) {
            vs.hyper = build_hypergraph(*emb, *bases_[static_cast<std::size_t>(v)], opts_.k_members,
                                        opts_.topk_axis);
        }
        out.push_back(std::move(vs));
    }
    return out;
}

}  // namespace smahyper
