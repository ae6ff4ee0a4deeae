#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dcgm/rnnlm.hpp"
#include "dcgm/text_corpus.hpp"

namespace dcgm {

enum class EncoderVariant {
    joint,  // DCGM-I: one bag over context and message together
    split,  // DCGM-II: context and message embedded separately, then concatenated
};

/// Feed-forward context encoder. layers[0] (V x d1) holds the encoder's own
/// word embeddings and is applied linearly; every later layer is followed by a
/// sigmoid. For the split variant layers[1] takes the 2*d1 concatenation.
struct EncoderParams {
    EncoderVariant variant = EncoderVariant::joint;
    std::vector<Matrix> layers;

    /// Zero weights for layer sizes d1..dL (L >= 2, dL = decoder hidden size).
    static EncoderParams zeros(EncoderVariant variant, std::size_t vocab, std::span<const std::size_t> sizes);

    std::size_t depth() const noexcept { return layers.size(); }
    std::size_t vocab_size() const noexcept { return layers.empty() ? 0 : static_cast<std::size_t>(layers[0].rows()); }
    std::size_t output_size() const noexcept
    {
        return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().cols());
    }
    /// d1..dL
    std::vector<std::size_t> layer_sizes() const;

    void validate() const;
};

/// Encoder activations k_1..k_L; k_L biases every decoder step.
struct ContextVector {
    std::vector<Vector> activations;

    const Vector& output() const { return activations.back(); }
};

ContextVector encode_dcgm1(const EncoderParams& enc, const BagOfWords& b_cm);
ContextVector encode_dcgm2(const EncoderParams& enc, const BagOfWords& b_c, const BagOfWords& b_m);

/// Decoder plus encoder. The decoder reads start, r, end with h_0 = 0; context
/// and message reach it only through the k_L bias.
struct DcgmModel {
    RlmParams decoder;
    EncoderParams encoder;

    void validate() const;
};

/// Builds the bag(s) for the model's variant and runs the encoder.
ContextVector encode_context(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m);

struct DcgmGradients {
    RlmGradients decoder;
    std::vector<Matrix> encoder;
};

struct DcgmLoss {
    double nll = 0.0;
    DcgmGradients grad;
};

/// log p(r | c, m), including the end marker. c, m and r are unframed ids.
double dcgm_log_prob(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m,
                     std::span<const WordId> r);

/// Response NLL and its exact gradient for decoder and encoder. The bias
/// gradient is summed over all decoder steps before entering the encoder.
DcgmLoss dcgm_backward(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m,
                       std::span<const WordId> r, std::size_t bptt_cap = 50);

/// NCE variant of dcgm_backward; `nll` holds the NCE objective.
DcgmLoss dcgm_nce(const DcgmModel& model, std::span<const WordId> c, std::span<const WordId> m,
                  std::span<const WordId> r, const NoiseDistribution& noise, std::size_t k, Rng& rng,
                  double log_z = 0.0, std::size_t bptt_cap = 50);

/// Back-propagates dL/dk_L through the encoder stack.
std::vector<Matrix> encoder_backward(const DcgmModel& model, const ContextVector& ctx, std::span<const WordId> c,
                                     std::span<const WordId> m, const Vector& d_output);

/// start c <sep> m <sep> r end, plus the index in that sequence of r's first
/// token (or of the end marker when r is empty).
struct RlmtSequence {
    Ids ids;
    std::size_t response_start = 0;
};

RlmtSequence rlmt_sequence(std::span<const WordId> c, std::span<const WordId> m, std::span<const WordId> r);

/// Targets for the trace over ids[0..n-1) that score only r and the end marker.
Ids rlmt_response_targets(const RlmtSequence& seq);

/// log p(r | c, m) under a plain RLM trained on concatenated triples: the
/// recurrence runs over start c <sep> m <sep>, then r and the end marker are
/// scored.
double rlmt_log_prob(const RlmParams& rlm, std::span<const WordId> c, std::span<const WordId> m,
                     std::span<const WordId> r);

}  // namespace dcgm
