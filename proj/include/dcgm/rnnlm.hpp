#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dcgm/text_corpus.hpp"

namespace dcgm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Marks a position of a target sequence that contributes no loss.
inline constexpr WordId kNoTarget = -1;

/// Decoder weights of the recurrent language model.
///
///   h_t = sigmoid(W_in[s_t] + W_hh^T h_{t-1} + bias),   o_t = W_out^T h_t
///
/// Row i of `w_in` is the embedding of word i; column w of `w_out` produces the
/// logit of word w.
struct RlmParams {
    Matrix w_in;   // V x K
    Matrix w_hh;   // K x K
    Matrix w_out;  // K x V

    RlmParams() = default;
    /// All-zero parameters.
    RlmParams(std::size_t vocab, std::size_t hidden);

    std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(w_in.rows()); }
    std::size_t hidden_size() const noexcept { return static_cast<std::size_t>(w_in.cols()); }

    /// Throws DimensionError on inconsistent shapes, DivergenceError on non-finite entries.
    void validate() const;
};

/// Gradient of a loss with respect to RlmParams, plus the gradient with respect
/// to the per-step hidden bias summed over all steps.
struct RlmGradients {
    Matrix w_in;
    Matrix w_hh;
    Matrix w_out;
    Vector bias;

    RlmGradients() = default;
    RlmGradients(std::size_t vocab, std::size_t hidden);

    RlmGradients& operator+=(const RlmGradients& other);
};

/// Everything the backward pass needs from a forward pass.
struct ForwardTrace {
    Ids inputs;
    Vector h0;
    Matrix hidden;  // K x T, column t is h_{t+1}
    Matrix probs;   // V x T, column t is the next-word distribution after inputs[t]

    std::size_t steps() const noexcept { return inputs.size(); }
};

Vector sigmoid(const Vector& x);

/// Max-shifted softmax.
Vector softmax(const Vector& logits);

/// Runs the recurrence over every index of `ids`. Empty `h0` / `bias` mean zero.
/// Throws DimensionError for ids outside the vocabulary and DivergenceError
/// when a pre-activation becomes non-finite.
ForwardTrace rlm_forward(const RlmParams& params, std::span<const WordId> ids, const Vector& h0 = {},
                         const Vector& bias = {});

/// Negative log-likelihood of a framed sequence: ids[0] conditions, ids[1..]
/// are predicted.
double sequence_nll(const RlmParams& params, std::span<const WordId> ids, const Vector& bias = {});

/// Negative log-likelihood of `targets` under an existing trace. targets[t] is
/// scored against trace.probs column t; kNoTarget entries are skipped.
double trace_nll(const ForwardTrace& trace, std::span<const WordId> targets);

/// Exact back-propagation through time of trace_nll. Error signals stop
/// crossing block boundaries every `bptt_cap` steps (0 = never); sequences no
/// longer than the cap get the exact gradient.
RlmGradients rlm_backward(const ForwardTrace& trace, const RlmParams& params, std::span<const WordId> targets,
                          std::size_t bptt_cap = 50);

/// Unigram counts raised to `power`, renormalized.
class NoiseDistribution {
public:
    NoiseDistribution() = default;
    explicit NoiseDistribution(std::span<const std::uint64_t> counts, double power = 0.75);

    std::size_t size() const noexcept { return probs_.size(); }
    double prob(WordId w) const { return probs_.at(static_cast<std::size_t>(w)); }
    const std::vector<double>& probs() const noexcept { return probs_; }
    WordId sample(Rng& rng) const;

private:
    std::vector<double> probs_;
    mutable std::discrete_distribution<WordId> dist_;
};

struct NceResult {
    double loss = 0.0;
    RlmGradients grad;
};

/// Noise-contrastive estimation over the predicted positions of a framed
/// sequence (same framing as sequence_nll). Each position scores the true word
/// against `k` noise samples with s(w) = o_t[w] - log_z - log(k * q(w)); the
/// loss is -log sigmoid(s(true)) - sum log(1 - sigmoid(s(noise))). With
/// `log_z` = 0 the model is treated as self-normalized. Only the sampled
/// columns of W_out receive gradient.
NceResult nce_loss(const RlmParams& params, std::span<const WordId> ids, const NoiseDistribution& noise,
                   std::size_t k, Rng& rng, const Vector& bias = {}, double log_z = 0.0,
                   std::size_t bptt_cap = 50);

}  // namespace dcgm
