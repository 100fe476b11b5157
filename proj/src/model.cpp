#include "smahyper/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "smahyper/errors.hpp"

namespace smahyper {

PreparedData prepare_data(Dataset dataset, const ExperimentConfig& cfg) {
    if (cfg.interval_hours != 0 && cfg.interval_hours != dataset.axis.interval_hours) {
        throw DataError("config interval_hours " + std::to_string(cfg.interval_hours) +
                        " does not match the dataset's " + std::to_string(dataset.axis.interval_hours));
    }
    PreparedData p;
    const SplitRatios ratios{cfg.train_ratio, cfg.val_ratio};
    const SplitBoundaries bounds = split_boundaries(dataset.risk.steps(), ratios);
    p.pkde = fit_pkde(time_slice(dataset.risk, 0, bounds.train_end));
    if (!cfg.use_pkde) {
        // Plain [0, 1] scaling: empty cells stay at zero.
        std::fill(p.pkde.intensity.begin(), p.pkde.intensity.end(), 0.0);
    }
    p.normalized = apply_pkde(dataset.risk, p.pkde);
    p.windows = make_windows(p.normalized, dataset.externals.features, cfg.input_steps, cfg.horizon, ratios);
    if (p.windows.train.empty()) throw DataError("no training windows; the series is too short");
    p.poi = dataset.urban.poi.standardized;
    p.road = dataset.urban.road.standardized;

    const std::size_t n = dataset.catalog.size();
    p.mean_history = Tensor({n, cfg.input_steps});
    for (const auto& w : p.windows.train)
        for (std::size_t i = 0; i < p.mean_history.size(); ++i) p.mean_history[i] += w.inputs[i];
    for (double& v : p.mean_history.vec()) v /= static_cast<double>(p.windows.train.size());
    p.dataset = std::move(dataset);
    return p;
}

Batch make_batch(const std::vector<SampleWindow>& windows, const std::vector<std::size_t>& ids) {
    if (ids.empty()) throw std::invalid_argument("make_batch: empty batch");
    const SampleWindow& first = windows.at(ids.front());
    auto stacked = [&](auto member) {
        Shape s = (first.*member).shape();
        s.insert(s.begin(), ids.size());
        Tensor out(s);
        const std::size_t block = (first.*member).size();
        for (std::size_t b = 0; b < ids.size(); ++b) {
            const Tensor& src = windows.at(ids[b]).*member;
            std::copy(src.vec().begin(), src.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(b * block));
        }
        return out;
    };
    return {stacked(&SampleWindow::inputs), stacked(&SampleWindow::targets), stacked(&SampleWindow::external_met),
            stacked(&SampleWindow::external_cal)};
}

std::vector<View> active_views(const ExperimentConfig& cfg) {
    std::vector<View> v{View::S, View::T};
    if (cfg.use_poi) v.push_back(View::P);
    if (cfg.use_road) v.push_back(View::R);
    return v;
}

SmaHyperModel::SmaHyperModel(const ExperimentConfig& cfg, const RegionCatalog& catalog, const Tensor& poi,
                             const Tensor& road, const Tensor& mean_history, std::size_t met_width,
                             std::size_t cal_width)
    : cfg_(cfg),
      poi_(ag::constant(poi)),
      road_(ag::constant(road)),
      mean_history_(ag::constant(mean_history)) {
    Rng rng(mix_seed(cfg.seed, 1));
    const std::vector<View> views = active_views(cfg);
    const std::size_t d = cfg.embed_dim;

    accident_embedding_ = store_.add("embedding.accident", nn::fan_in_uniform({d}, 1, rng));

    GraphLearnerOptions g;
    g.embed_dim = d;
    g.k = cfg.k;
    g.k_members = cfg.k_members;
    g.hyperedge_ratio = cfg.hyperedge_ratio;
    g.topk_axis = cfg.topk_axis;
    g.use_hypergraph = cfg.use_hypergraph;
    g.views = views;
    graph_ = std::make_unique<GraphLearner>(store_, g, catalog, poi.dim(1), road.dim(1), rng);

    EncoderOptions e;
    e.embed_dim = d;
    e.heads = cfg.heads;
    e.layers = cfg.layers;
    e.use_hypergraph = cfg.use_hypergraph;
    e.use_attention_fusion = cfg.use_attention_fusion;
    e.views = views;
    encoder_ = std::make_unique<SpatioTemporalEncoder>(store_, e, rng);

    DecoderOptions o;
    o.embed_dim = d;
    o.input_steps = cfg.input_steps;
    o.horizon = cfg.horizon;
    o.met_width = met_width;
    o.cal_width = cal_width;
    o.poi_width = poi.dim(1);
    o.road_width = road.dim(1);
    o.streams = cfg.use_hypergraph ? 2 : 1;
    o.use_poi = cfg.use_poi;
    o.use_road = cfg.use_road;
    decoder_ = std::make_unique<DecoderHead>(store_, o, rng);
}

std::vector<ViewStructure> SmaHyperModel::structures(const Batch& batch) const {
    const ag::Var history = cfg_.dynamic_temporal_view ? ag::constant(batch.inputs) : mean_history_;
    return graph_->build(history, poi_, road_);
}

ForwardResult SmaHyperModel::forward(const Batch& batch) const {
    ForwardResult r;
    r.structures = structures(batch);
    const ag::Var embedded = embed_accidents(ag::constant(batch.inputs), accident_embedding_);
    r.encoded = encoder_->forward(embedded, r.structures);
    std::vector<ag::Var> streams{r.encoded.graph};
    if (r.encoded.hyper) streams.push_back(*r.encoded.hyper);
    const ag::Var met = ag::constant(batch.met), cal = ag::constant(batch.cal);
    r.prediction = decoder_->predict(decoder_->decode_streams(streams, met, cal), poi_, road_);
    return r;
}

}  // namespace smahyper
