#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcgm/context_encoders.hpp"
#include "dcgm/rnnlm.hpp"
#include "dcgm/text_corpus.hpp"

namespace dcgm {

enum class ModelFamily : std::uint8_t {
    rlmt = 0,   // plain RLM over start c <sep> m <sep> r end
    dcgm1 = 1,  // joint bag-of-words encoder
    dcgm2 = 2,  // split encoder
};

std::string_view to_string(ModelFamily family);
/// Accepts "rlmt", "dcgm1", "dcgm2". Throws Error otherwise.
ModelFamily parse_family(std::string_view name);

/// Any of the three model families. `net.encoder` has no layers for RLMT.
struct Model {
    ModelFamily family = ModelFamily::rlmt;
    DcgmModel net;
    std::uint64_t vocab_hash = 0;

    std::size_t vocab_size() const noexcept { return net.decoder.vocab_size(); }
    std::size_t hidden_size() const noexcept { return net.decoder.hidden_size(); }
    bool has_encoder() const noexcept { return family != ModelFamily::rlmt; }

    /// Parameter tensors in a fixed order: W_in, W_hh, W_out, encoder layers.
    std::vector<Matrix*> tensors();
    std::vector<const Matrix*> tensors() const;

    void validate() const;
};

/// Zero-initialized model of the given shape; `encoder_sizes` is ignored for RLMT.
Model zero_model(ModelFamily family, std::size_t vocab, std::size_t hidden,
                 std::span<const std::size_t> encoder_sizes = {});

/// One encoded training or scoring example; c, m, r are unframed.
struct Example {
    Ids context;
    Ids message;
    Ids response;
};

Example encode_example(const Triple& t, const Vocabulary& vocab);

/// log p(r | c, m) under the model's family.
double response_log_prob(const Model& model, const Example& ex);

/// Number of predicted positions in log p(r | c, m): |r| + 1.
inline std::size_t response_events(const Example& ex) { return ex.response.size() + 1; }

enum class Objective { softmax, nce };

struct NceSettings {
    const NoiseDistribution* noise = nullptr;
    std::size_t samples = 20;
    double log_z = 0.0;
};

/// Gradients shaped like Model::tensors().
using TensorList = std::vector<Matrix>;

struct ExampleLoss {
    double loss = 0.0;
    std::size_t events = 0;
    TensorList grad;
};

/// Training loss of one example: response tokens for DCGM families, the whole
/// concatenated sequence for RLMT.
ExampleLoss example_loss(const Model& model, const Example& ex, Objective objective, const NceSettings& nce,
                         Rng& rng, std::size_t bptt_cap = 50);

/// Exact-softmax training loss without gradients (same events as example_loss).
double example_nll(const Model& model, const Example& ex, std::size_t* events = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints: "DCGMCKPT", u32 version, u8 family, u64 vocabulary hash, u64 V,
// u64 K, u32 layer count, (u64 rows, u64 cols) per encoder layer, then W_in,
// W_hh, W_out and each encoder layer as row-major little-endian doubles.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const Model& model);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
std::string serialize_checkpoint(const Model& model);

/// Throws ParseError on a malformed container and DimensionError when
/// `expected_vocab_hash` is given and differs from the stored one.
Model load_checkpoint(std::istream& in, std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);
Model load_checkpoint(const std::filesystem::path& path,
                      std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);

}  // namespace dcgm
