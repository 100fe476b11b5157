#include "smahyper/st_encoder.hpp"

#include <stdexcept>
#include <string>

namespace smahyper {

ag::Var embed_accidents(const ag::Var& x, const ag::Var& e) {
    Shape col = x.shape();
    col.push_back(1);
    const std::size_t d = e.value().size();
    return ag::linear(ag::reshape(x, col), ag::reshape(e, {1, d}));
}

ag::Var propagate_nodes(const ag::Var& structure, const ag::Var& seq) {
    const Shape& s = seq.shape();
    if (s.size() < 3) throw std::invalid_argument("propagate_nodes: sequence must be [.., N, T, d]");
    const std::size_t n = s[s.size() - 3];
    const std::size_t width = s[s.size() - 2] * s.back();
    if (structure.dim(-1) != n) {
        throw std::invalid_argument("propagate_nodes: structure " + shape_str(structure.shape()) +
                                    " vs sequence " + shape_str(s));
    }
    Shape flat(s.begin(), s.end() - 2);
    flat.back() = n;
    flat.push_back(width);
    ag::Var out = ag::matmul(structure, ag::reshape(seq, flat));
    Shape back(out.shape().begin(), out.shape().end() - 1);
    back.push_back(s[s.size() - 2]);
    back.push_back(s.back());
    return ag::reshape(out, back);
}

ag::Var gcn_block(const ag::Var& seq, const ag::Var& normalized_adjacency, const ag::Var& weight) {
    return ag::relu(ag::linear(propagate_nodes(normalized_adjacency, seq), weight));
}

ag::Var hgcn_block(const ag::Var& seq, const ag::Var& incidence, const ag::Var& weight) {
    const ag::Var edge_deg = ag::reciprocal_or_zero(ag::sum_axis(incidence, -2, true));  // [.., 1, I]
    const ag::Var node_deg = ag::inv_sqrt_or_zero(ag::sum_axis(incidence, -1, true));   // [.., N, 1]
    const ag::Var gather = ag::transpose_last2(ag::mul_bcast(incidence, edge_deg));     // [.., I, N]
    const ag::Var scatter = ag::mul_bcast(incidence, node_deg);                         // [.., N, I]
    const ag::Var hubs = ag::relu(propagate_nodes(gather, seq));
    return ag::relu(ag::linear(propagate_nodes(scatter, hubs), weight));
}

SpatioTemporalEncoder::SpatioTemporalEncoder(nn::ParameterStore& store, const EncoderOptions& opts,
                                             Rng& rng)
    : opts_(opts) {
    if (opts_.layers == 0) throw std::invalid_argument("encoder needs at least one layer");
    if (opts_.views.empty()) throw std::invalid_argument("encoder needs at least one view");
    const std::size_t d = opts_.embed_dim;
    auto build_path = [&](const std::string& prefix) {
        PathParams p;
        for (std::size_t l = 0; l < opts_.layers; ++l) {
            const std::string ln = prefix + ".layer" + std::to_string(l);
            LayerParams lp;
            lp.gtc_in = nn::make_gtc_block(store, ln + ".gtc_in", d, d, opts_.kernel, rng);
            for (View v : opts_.views) {
                lp.view_weights.push_back(store.add(ln + ".conv." + view_name(v),
                                                    nn::fan_in_uniform({d, d}, d, rng)));
            }
            if (opts_.use_attention_fusion) {
                lp.view_fusion = nn::make_token_fusion(store, ln + ".view_fusion", d, opts_.heads, rng);
            }
            lp.gtc_out = nn::make_gtc_block(store, ln + ".gtc_out", d, d, opts_.kernel, rng);
            p.layers.push_back(std::move(lp));
        }
        if (opts_.use_attention_fusion) {
            p.layer_fusion = nn::make_token_fusion(store, prefix + ".layer_fusion", d, opts_.heads, rng);
        }
        return p;
    };
    graph_path_ = build_path("encoder.graph");
    if (opts_.use_hypergraph) hyper_path_ = build_path("encoder.hyper");
}

ag::Var SpatioTemporalEncoder::fuse_views(bool hyper_path, std::size_t layer,
                                          const std::vector<ag::Var>& inputs) const {
    const PathParams& p = hyper_path ? *hyper_path_ : graph_path_;
    const auto& fusion = p.layers.at(layer).view_fusion;
    return fusion ? (*fusion)(inputs) : nn::mean_tokens(inputs);
}

ag::Var SpatioTemporalEncoder::fuse_layers(bool hyper_path, const std::vector<ag::Var>& outs) const {
    const PathParams& p = hyper_path ? *hyper_path_ : graph_path_;
    return p.layer_fusion ? (*p.layer_fusion)(outs) : nn::mean_tokens(outs);
}

std::vector<ag::Var> SpatioTemporalEncoder::run_path(const PathParams& path, bool hyper_path,
                                                     const ag::Var& embedded,
                                                     const std::vector<ViewStructure>& structures,
                                                     std::vector<std::vector<ag::Var>>& per_view) const {
    std::vector<ag::Var> layer_outputs;
    ag::Var x = embedded;
    for (std::size_t l = 0; l < path.layers.size(); ++l) {
        const LayerParams& lp = path.layers[l];
        const ag::Var h = lp.gtc_in(x);
        std::vector<ag::Var> views;
        for (std::size_t s = 0; s < structures.size(); ++s) {
            const auto& st = structures[s];
            views.push_back(hyper_path ? hgcn_block(h, st.hyper->H, lp.view_weights[s])
                                       : gcn_block(h, st.normalized, lp.view_weights[s]));
        }
        const ag::Var fused = fuse_views(hyper_path, l, views);
        per_view.push_back(std::move(views));
        x = lp.gtc_out(fused);
        layer_outputs.push_back(x);
    }
    return layer_outputs;
}

EncoderOutput SpatioTemporalEncoder::forward(const ag::Var& embedded,
                                             const std::vector<ViewStructure>& structures) const {
    if (structures.size() != opts_.views.size()) {
        throw std::invalid_argument("encoder expects " + std::to_string(opts_.views.size()) +
                                    " view structures, got " + std::to_string(structures.size()));
    }
    EncoderOutput out;
    out.states.views = opts_.views;
    out.states.graph_layers = run_path(graph_path_, false, embedded, structures, out.states.graph);
    out.graph = fuse_layers(false, out.states.graph_layers);
    if (hyper_path_) {
        for (const auto& st : structures) {
            if (!st.hyper) throw std::invalid_argument("hypergraph path needs incidences for every view");
        }
        out.states.hyper_layers = run_path(*hyper_path_, true, embedded, structures, out.states.hyper);
        out.hyper = fuse_layers(true, out.states.hyper_layers);
    }
    return out;
}

}  // namespace smahyper
