// Decoder: fuse encoder states with meteorological and calendar embeddings,
// run a gated temporal block per stream, then a two-layer head that maps each
// region's flattened sequence plus its urban-feature embeddings to the
// prediction horizon.

#pragma once

#include <optional>
#include <vector>

#include "smahyper/nn.hpp"

namespace smahyper {

struct DecoderOptions {
    std::size_t embed_dim = 32;
    std::size_t input_steps = 7;
    std::size_t horizon = 1;
    std::size_t met_width = 3;
    std::size_t cal_width = 10;
    std::size_t poi_width = 4;
    std::size_t road_width = 3;
    std::size_t kernel = 3;
    std::size_t streams = 2;  // 1 when the hypergraph path is off
    std::size_t head_hidden = 0;  // 0 means embed_dim
    bool use_poi = true;
    bool use_road = true;
};

// One stream: [E_enc, met W^M, cal W^C] -> gated temporal block 3d -> d.
struct DecoderStream {
    nn::Affine met, cal;
    nn::GatedTemporalBlock gtc;
};

ag::Var decode(const DecoderStream& stream, const ag::Var& encoded, const ag::Var& met,
               const ag::Var& cal);

class DecoderHead {
public:
    DecoderHead(nn::ParameterStore& store, const DecoderOptions& opts, Rng& rng);

    // encoded: one [B, N, T, d] tensor per stream, in graph-then-hyper order.
    std::vector<ag::Var> decode_streams(const std::vector<ag::Var>& encoded, const ag::Var& met,
                                        const ag::Var& cal) const;

    // Returns [B, N, horizon].
    ag::Var predict(const std::vector<ag::Var>& decoded, const ag::Var& poi, const ag::Var& road) const;

    const DecoderOptions& options() const { return opts_; }

private:
    DecoderOptions opts_;
    std::vector<DecoderStream> streams_;
    std::optional<nn::Affine> poi_embed_, road_embed_;
    nn::Affine fc1_, fc2_;
};

}  // namespace smahyper
