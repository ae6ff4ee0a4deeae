#include "dcgm/context_encoders.hpp"

#include <string>

#include "dcgm/error.hpp"

namespace dcgm {

namespace {

Vector embed(const Matrix& embeddings, const BagOfWords& bag)
{
    if (bag.dim() != static_cast<std::size_t>(embeddings.rows())) {
        throw DimensionError("bag of dimension " + std::to_string(bag.dim()) + " against encoder vocabulary " +
                             std::to_string(embeddings.rows()));
    }
    Vector out = Vector::Zero(embeddings.cols());
    for (auto [id, count] : bag.entries()) out += count * embeddings.row(id).transpose();
    return out;
}

ContextVector propagate(const EncoderParams& enc, Vector k1)
{
    ContextVector ctx;
    ctx.activations.reserve(enc.depth());
    ctx.activations.push_back(std::move(k1));
    for (std::size_t l = 1; l < enc.depth(); ++l) {
        Vector z = enc.layers[l].transpose() * ctx.activations.back();
        if (!z.allFinite()) throw DivergenceError("non-finite encoder activation");
        ctx.activations.push_back(sigmoid(z));
    }
    return ctx;
}

Ids response_inputs(std::span<const WordId> r)
{
    Ids in{Vocabulary::kStart};
    in.insert(in.end(), r.begin(), r.end());
    return in;
}

Ids response_targets(std::span<const WordId> r)
{
    Ids out(r.begin(), r.end());
    out.push_back(Vocabulary::kEnd);
    return out;
}

}  // namespace

EncoderParams EncoderParams::zeros(EncoderVariant variant, std::size_t vocab, std::span<const std::size_t> sizes)
{
    if (sizes.size() < 2) throw DimensionError("the context encoder needs at least two layers");
    EncoderParams enc;
    enc.variant = variant;
    std::size_t in = vocab;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
        if (l == 1 && variant == EncoderVariant::split) in *= 2;
        enc.layers.push_back(Matrix::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(sizes[l])));
        in = sizes[l];
    }
    return enc;
}

std::vector<std::size_t> EncoderParams::layer_sizes() const
{
    std::vector<std::size_t> sizes;
    for (const auto& w : layers) sizes.push_back(static_cast<std::size_t>(w.cols()));
    return sizes;
}

void EncoderParams::validate() const
{
    if (layers.size() < 2) throw DimensionError("the context encoder needs at least two layers");
    for (std::size_t l = 1; l < layers.size(); ++l) {
        auto expected = layers[l - 1].cols() * (l == 1 && variant == EncoderVariant::split ? 2 : 1);
        if (layers[l].rows() != expected) {
            throw DimensionError("encoder layer " + std::to_string(l + 1) + " expects " + std::to_string(expected) +
                                 " inputs, has " + std::to_string(layers[l].rows()));
        }
    }
    for (const auto& w : layers) {
        if (!w.allFinite()) throw DivergenceError("non-finite encoder parameter");
    }
}

ContextVector encode_dcgm1(const EncoderParams& enc, const BagOfWords& b_cm)
{
    if (enc.variant != EncoderVariant::joint) throw DimensionError("encode_dcgm1 needs a joint (DCGM-I) encoder");
    enc.validate();
    return propagate(enc, embed(enc.layers[0], b_cm));
}

ContextVector encode_dcgm2(const EncoderParams& enc, const BagOfWords& b_c, const BagOfWords& b_m)
{
    if (enc.variant != EncoderVariant::split) throw DimensionError("encode_dcgm2 needs a split (DCGM-II) encoder");
    enc.validate();
    const auto d1 = enc.layers[0].cols();
    Vector k1(2 * d1);
    k1.head(d1) = embed(enc.layers[0], b_c);
    k1.tail(d1) = embed(enc.layers[0], b_m);
    return propagate(enc, std::move(k1));
}

void DcgmModel::validate() const
{
    decoder.validate();
    encoder.validate();
    if (encoder.output_size() != decoder.hidden_size()) {
        throw DimensionError("encoder output size " + std::to_string(encoder.output_size()) +
                             " differs from decoder hidden size " + std::to_string(decoder.hidden_size()));
    }
    if (encoder.vocab_size() != decoder.vocab_size()) {
        throw DimensionError("encoder and decoder vocabularies differ in size");
    }
}

ContextVector encode_context(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m)
{
    const auto v = model.encoder.vocab_size();
    if (model.encoder.variant == EncoderVariant::joint) {
        return encode_dcgm1(model.encoder, bag_of_words(c, v) + bag_of_words(m, v));
    }
    return encode_dcgm2(model.encoder, bag_of_words(c, v), bag_of_words(m, v));
}

double dcgm_log_prob(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m,
                     std::span<const WordId> r)
{
    model.validate();
    auto ctx = encode_context(model, c, m);
    auto trace = rlm_forward(model.decoder, response_inputs(r), {}, ctx.output());
    return -trace_nll(trace, response_targets(r));
}

std::vector<Matrix> encoder_backward(const DcgmModel& model, const ContextVector& ctx, std::span<const WordId> c,
                                     std::span<const WordId> m, const Vector& d_output)
{
    const auto& enc = model.encoder;
    std::vector<Matrix> grads(enc.depth());
    Vector dk = d_output;
    for (std::size_t l = enc.depth() - 1; l >= 1; --l) {
        const auto& k = ctx.activations[l];
        Vector dz = dk.array() * k.array() * (1.0 - k.array());
        grads[l].noalias() = ctx.activations[l - 1] * dz.transpose();
        dk = enc.layers[l] * dz;
    }

    const auto v = enc.vocab_size();
    grads[0] = Matrix::Zero(enc.layers[0].rows(), enc.layers[0].cols());
    if (enc.variant == EncoderVariant::joint) {
        const auto bag = bag_of_words(c, v) + bag_of_words(m, v);
        for (auto [id, count] : bag.entries()) {
            grads[0].row(id) += count * dk.transpose();
        }
    } else {
        const auto d1 = enc.layers[0].cols();
        const auto bag_c = bag_of_words(c, v);
        const auto bag_m = bag_of_words(m, v);
        for (auto [id, count] : bag_c.entries()) grads[0].row(id) += count * dk.head(d1).transpose();
        for (auto [id, count] : bag_m.entries()) grads[0].row(id) += count * dk.tail(d1).transpose();
    }
    return grads;
}

DcgmLoss dcgm_backward(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m,
                       std::span<const WordId> r, std::size_t bptt_cap)
{
    model.validate();
    auto ctx = encode_context(model, c, m);
    auto targets = response_targets(r);
    auto trace = rlm_forward(model.decoder, response_inputs(r), {}, ctx.output());

    DcgmLoss out;
    out.nll = trace_nll(trace, targets);
    out.grad.decoder = rlm_backward(trace, model.decoder, targets, bptt_cap);
    out.grad.encoder = encoder_backward(model, ctx, c, m, out.grad.decoder.bias);
    return out;
}

DcgmLoss dcgm_nce(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m,
                  std::span<const WordId> r, const NoiseDistribution& noise, std::size_t k, Rng& rng, double log_z,
                  std::size_t bptt_cap)
{
    model.validate();
    auto ctx = encode_context(model, c, m);
    Ids framed = response_inputs(r);
    framed.push_back(Vocabulary::kEnd);
    auto nce = nce_loss(model.decoder, framed, noise, k, rng, ctx.output(), log_z, bptt_cap);

    DcgmLoss out;
    out.nll = nce.loss;
    out.grad.decoder = std::move(nce.grad);
    out.grad.encoder = encoder_backward(model, ctx, c, m, out.grad.decoder.bias);
    return out;
}

RlmtSequence rlmt_sequence(std::span<const WordId> c, std::span<const WordId> m, std::span<const WordId> r)
{
    RlmtSequence seq;
    auto& ids = seq.ids;
    ids.push_back(Vocabulary::kStart);
    ids.insert(ids.end(), c.begin(), c.end());
    ids.push_back(Vocabulary::kSeparator);
    ids.insert(ids.end(), m.begin(), m.end());
    ids.push_back(Vocabulary::kSeparator);
    seq.response_start = ids.size();
    ids.insert(ids.end(), r.begin(), r.end());
    ids.push_back(Vocabulary::kEnd);
    return seq;
}

Ids rlmt_response_targets(const RlmtSequence& seq)
{
    // Trace step t predicts ids[t + 1].
    Ids targets(seq.ids.size() - 1, kNoTarget);
    for (std::size_t t = seq.response_start - 1; t < targets.size(); ++t) targets[t] = seq.ids[t + 1];
    return targets;
}

double rlmt_log_prob(const RlmParams& rlm, std::span<const WordId> c, std::span<const WordId> m,
                     std::span<const WordId> r)
{
    auto seq = rlmt_sequence(c, m, r);
    auto trace = rlm_forward(rlm, std::span<const WordId>(seq.ids).first(seq.ids.size() - 1));
    return -trace_nll(trace, rlmt_response_targets(seq));
}

}  // namespace dcgm
