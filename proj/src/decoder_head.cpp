#include "smahyper/decoder_head.hpp"

#include <stdexcept>
#include <string>

namespace smahyper {

ag::Var decode(const DecoderStream& stream, const ag::Var& encoded, const ag::Var& met,
               const ag::Var& cal) {
    const std::size_t t = encoded.dim(-2);
    if (met.dim(-2) != t || cal.dim(-2) != t) {
        throw std::invalid_argument("decode: external time axis (" + std::to_string(met.dim(-2)) + ", " +
                                    std::to_string(cal.dim(-2)) + ") does not match the encoder's " +
                                    std::to_string(t) + " steps");
    }
    return stream.gtc(ag::concat_last({encoded, stream.met(met), stream.cal(cal)}));
}

DecoderHead::DecoderHead(nn::ParameterStore& store, const DecoderOptions& opts, Rng& rng)
    : opts_(opts) {
    if (opts_.streams < 1 || opts_.streams > 2) throw std::invalid_argument("decoder streams must be 1 or 2");
    const std::size_t d = opts_.embed_dim;
    const char* names[] = {"decoder.graph", "decoder.hyper"};
    for (std::size_t s = 0; s < opts_.streams; ++s) {
        const std::string n = names[s];
        DecoderStream st;
        st.met = nn::make_affine(store, n + ".met", opts_.met_width, d, rng);
        st.cal = nn::make_affine(store, n + ".cal", opts_.cal_width, d, rng);
        st.gtc = nn::make_gtc_block(store, n + ".gtc", 3 * d, d, opts_.kernel, rng);
        streams_.push_back(std::move(st));
    }
    if (opts_.use_poi) poi_embed_ = nn::make_affine(store, "decoder.poi", opts_.poi_width, d, rng);
    if (opts_.use_road) road_embed_ = nn::make_affine(store, "decoder.road", opts_.road_width, d, rng);
    const std::size_t flat = opts_.streams * d * opts_.input_steps +
                             (opts_.use_poi ? d : 0) + (opts_.use_road ? d : 0);
    const std::size_t hidden = opts_.head_hidden ? opts_.head_hidden : d;
    fc1_ = nn::make_affine(store, "decoder.fc1", flat, hidden, rng);
    fc2_ = nn::make_affine(store, "decoder.fc2", hidden, opts_.horizon, rng);
}

std::vector<ag::Var> DecoderHead::decode_streams(const std::vector<ag::Var>& encoded,
                                                 const ag::Var& met, const ag::Var& cal) const {
    if (encoded.size() != streams_.size()) {
        throw std::invalid_argument("decoder expects " + std::to_string(streams_.size()) +
                                    " encoded streams, got " + std::to_string(encoded.size()));
    }
    std::vector<ag::Var> out;
    for (std::size_t s = 0; s < streams_.size(); ++s) out.push_back(decode(streams_[s], encoded[s], met, cal));
    return out;
}

ag::Var DecoderHead::predict(const std::vector<ag::Var>& decoded, const ag::Var& poi,
                             const ag::Var& road) const {
    const ag::Var joined = decoded.size() == 1 ? decoded.front() : ag::concat_last(decoded);
    const Shape& s = joined.shape();  // [B, N, T, C]
    if (s.size() != 4 || s[2] != opts_.input_steps) {
        throw std::invalid_argument("decoder head: unexpected decoded shape " + shape_str(s));
    }
    const std::size_t b = s[0], n = s[1], d = opts_.embed_dim;
    std::vector<ag::Var> parts{ag::reshape(joined, {b, n, s[2] * s[3]})};
    // Region embeddings are shared by every window; broadcast them over the batch.
    const ag::Var zeros = ag::constant(Tensor({b, n, d}));
    if (poi_embed_) parts.push_back(ag::add_bcast(zeros, ag::reshape((*poi_embed_)(poi), {1, n, d})));
    if (road_embed_) parts.push_back(ag::add_bcast(zeros, ag::reshape((*road_embed_)(road), {1, n, d})));
    return fc2_(ag::relu(fc1_(parts.size() == 1 ? parts.front() : ag::concat_last(parts))));
}

}  // namespace smahyper
