#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dcgm/model.hpp"
#include "dcgm/text_corpus.hpp"

namespace dcgm {

/// Standard deviation of the Gaussian initializer. The N(0, 0.01) of the
/// original recipe is read as a standard deviation, not a variance.
inline constexpr double kInitStddev = 0.01;

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t batch_size = 100;
    /// Gradients are clamped elementwise to [-clip, clip].
    double clip = 10.0;
    std::size_t max_epochs = 50;
    /// Held-out evaluation cadence in epochs.
    std::size_t eval_every = 1;
    bool early_stopping = true;
    std::uint64_t seed = 1;
    Objective objective = Objective::softmax;
    std::size_t nce_samples = 20;
    /// Fixed log normalizer of the NCE model score; 0 is self-normalization.
    double nce_log_z = 0.0;
    double noise_power = 0.75;
    std::size_t bptt_cap = 50;
    double adagrad_damping = 1e-6;
    double init_stddev = kInitStddev;
    double recurrent_scale = 0.01;
    std::size_t hidden = 512;
    std::vector<std::size_t> encoder_layers{512, 256, 512};
    std::size_t vocab_cap = 50000;
    std::size_t min_bigram_count = 3;
    /// Fraction of the training file held out when no held-out file is given.
    double heldout_fraction = 0.05;
    std::size_t threads = 1;

    /// Throws Error on out-of-range values.
    void validate() const;
};

/// Sets one field from its textual form; throws Error for unknown keys or bad values.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Flat `key = value` lines; `#` starts a comment. Unknown keys are errors.
TrainConfig parse_train_config(std::istream& in, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

/// Every field, one `key = value` per line, in a fixed order.
std::string render_train_config(const TrainConfig& cfg);

/// Gaussian weights with standard deviation `cfg.init_stddev`; W_hh is
/// `cfg.recurrent_scale` times a random orthogonal matrix. Deterministic in `seed`.
Model init_params(ModelFamily family, std::size_t vocab, const TrainConfig& cfg, std::uint64_t seed);

/// Elementwise clamp to [lo, hi].
void clip_gradients(TensorList& grads, double lo, double hi);

struct AdagradState {
    TensorList accum;
    double damping = 1e-6;

    static AdagradState for_model(const Model& model, double damping = 1e-6);
};

/// accum += g^2; param -= lr * g / sqrt(accum + damping).
void adagrad_step(std::span<Matrix* const> params, const TensorList& grads, AdagradState& state, double lr);

struct EpochStats {
    std::size_t epoch = 0;
    /// Exact training loss per predicted event after the epoch's updates.
    double train_objective = 0.0;
    /// Per-event held-out loss; NaN when the epoch was not evaluated.
    double heldout_nll = 0.0;
    double heldout_ppl = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t stop_epoch = 0;
    /// Epoch whose parameters were returned.
    std::size_t returned_epoch = 0;
    bool early_stopped = false;
    bool diverged = false;
    double wall_seconds = 0.0;

    /// Deterministic TSV trajectory (no timing).
    void write_tsv(std::ostream& out) const;
    std::string summary() const;
};

struct TrainResult {
    Model model;
    TrainReport report;
};

/// Minibatch Adagrad with clipping; per-example gradients are reduced in
/// index order so results do not depend on `threads`. Evaluates the held-out
/// set every `eval_every` epochs and stops at the first increase, returning the
/// parameters of the preceding evaluation. A non-finite loss ends training with
/// the last finite parameters.
TrainResult train(std::span<const Example> train_set, std::span<const Example> heldout, ModelFamily family,
                  const Vocabulary& vocab, const TrainConfig& cfg);

/// Per-event exact training loss over a set.
double mean_objective(const Model& model, std::span<const Example> examples);

/// exp of the mean negative log-probability per response event (r and end marker).
double response_perplexity(const Model& model, std::span<const Example> examples);

}  // namespace dcgm
