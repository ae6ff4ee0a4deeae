#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcgm/metrics.hpp"
#include "dcgm/model.hpp"
#include "dcgm/retrieval.hpp"
#include "dcgm/text_corpus.hpp"

namespace dcgm {

/// Ordered, duplicate-free feature names.
class FeatureRegistry {
public:
    FeatureRegistry() = default;
    explicit FeatureRegistry(std::vector<std::string> names);

    void add(std::string name);
    void append(const FeatureRegistry& other);
    std::size_t size() const noexcept { return names_.size(); }
    bool empty() const noexcept { return names_.empty(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::optional<std::size_t> find(std::string_view name) const;

    /// Throws RegistryMismatch naming the first difference.
    void require_same(const FeatureRegistry& other, std::string_view what) const;

    bool operator==(const FeatureRegistry&) const = default;

private:
    std::vector<std::string> names_;
};

inline constexpr std::size_t kCmmMaxOrder = 4;

/// For n = 1..4 and source in {context, message}: the number of n-gram
/// occurrences of `r` (with multiplicity) that occur at least once in the
/// source. Order: cmm_c_1..cmm_c_4, cmm_m_1..cmm_m_4.
std::array<double, 2 * kCmmMaxOrder> cmm_features(const Tokens& c, const Tokens& m, const Tokens& r);

/// Token count of the response.
double word_penalty(const Tokens& r);

/// What a feature provider sees for one hypothesis.
struct FeatureInput {
    const Tokens& context;
    const Tokens& message;
    const Tokens& response;
    /// Index document the hypothesis was retrieved from, if any.
    std::optional<DocId> source_doc;
};

class FeatureProvider {
public:
    virtual ~FeatureProvider() = default;
    virtual FeatureRegistry names() const = 0;
    virtual void compute(const FeatureInput& in, std::vector<double>& out) const = 0;
};

class CmmProvider final : public FeatureProvider {
public:
    FeatureRegistry names() const override;
    void compute(const FeatureInput& in, std::vector<double>& out) const override;
};

class WordPenaltyProvider final : public FeatureProvider {
public:
    FeatureRegistry names() const override;
    void compute(const FeatureInput& in, std::vector<double>& out) const override;
};

/// BM25 between the item's message and the message of the hypothesis' source
/// triple. Fails for hypotheses without a source document.
class IrScoreProvider final : public FeatureProvider {
public:
    explicit IrScoreProvider(const TripleIndex& index) : index_(&index) {}
    FeatureRegistry names() const override;
    void compute(const FeatureInput& in, std::vector<double>& out) const override;

private:
    const TripleIndex* index_;
};

/// log p(r | c, m) under a trained model.
class ModelLogProbProvider final : public FeatureProvider {
public:
    ModelLogProbProvider(const Model& model, const Vocabulary& vocab, std::string name = "model_logprob");
    FeatureRegistry names() const override;
    void compute(const FeatureInput& in, std::vector<double>& out) const override;

private:
    const Model* model_;
    const Vocabulary* vocab_;
    std::string name_;
};

using ProviderList = std::vector<const FeatureProvider*>;

/// Concatenated provider names. Throws Error on an empty provider list and
/// RegistryMismatch on a name registered twice.
FeatureRegistry build_registry(std::span<const FeatureProvider* const> providers);

/// Feature values in registry order. A provider exception is rethrown as Error
/// prefixed with the provider's feature name.
std::vector<double> extract_features(std::span<const FeatureProvider* const> providers, const FeatureInput& in);

/// Feature-set presets with the registry sizes they produce.
enum class FeatureSet {
    ir,          // ir_score, word_penalty                 (2)
    cmm,         // 8 CMM, word_penalty                    (9)
    ir_cmm,      // ir_score, word_penalty, 8 CMM          (10)
    neural,      // model_logprob, word_penalty            (2)
    neural_cmm,  // model_logprob, word_penalty, 8 CMM     (10)
};

/// Provider lists for a preset; `index` / `model` must be non-null when the
/// preset needs them.
struct ProviderBundle {
    std::vector<std::unique_ptr<FeatureProvider>> owned;
    ProviderList list;
};

ProviderBundle make_providers(FeatureSet set, const TripleIndex* index, const Model* model, const Vocabulary* vocab);
FeatureSet parse_feature_set(std::string_view name);
std::string_view to_string(FeatureSet set);

// ---------------------------------------------------------------------------
// N-best lists and log-linear scoring

struct Hypothesis {
    Tokens tokens;
    std::vector<double> features;
    double total = 0.0;
    std::optional<DocId> source_doc;
};

struct NBestList {
    std::string item_id;
    Tokens context;
    Tokens message;
    std::vector<Hypothesis> hyps;
};

/// Lists sharing one feature registry.
struct NBestSet {
    FeatureRegistry registry;
    std::vector<NBestList> lists;

    /// Throws RegistryMismatch when a hypothesis' feature count differs.
    void validate() const;
};

struct LogLinearWeights {
    FeatureRegistry registry;
    std::vector<double> values;

    static LogLinearWeights zeros(const FeatureRegistry& registry);
    void validate() const;
};

/// w . f. Throws RegistryMismatch when `registry` differs from the weights'.
double score_hypothesis(const LogLinearWeights& w, const FeatureRegistry& registry, std::span<const double> f);

/// Recomputes every total and stable-sorts by it, descending.
NBestList rescore_nbest(const NBestList& list, const LogLinearWeights& w, const FeatureRegistry& registry);
NBestSet rescore_nbest(const NBestSet& set, const LogLinearWeights& w);

/// Index of the hypothesis a rescoring would put first (first maximum).
std::size_t best_hypothesis(const NBestList& list, const LogLinearWeights& w, const FeatureRegistry& registry);

/// `item_id ||| tokens ||| name=value ... ||| total`. Writer output parses
/// back to the identical set, and re-writing it reproduces the same bytes.
void write_nbest(std::ostream& out, const NBestSet& set);
void write_nbest(const std::filesystem::path& path, const NBestSet& set);
NBestSet read_nbest(std::istream& in);
NBestSet read_nbest(const std::filesystem::path& path);

/// `feature_name<TAB>weight` lines in registry order.
void write_weights(std::ostream& out, const LogLinearWeights& w);
void write_weights(const std::filesystem::path& path, const LogLinearWeights& w);
LogLinearWeights read_weights(std::istream& in);
LogLinearWeights read_weights(const std::filesystem::path& path);

/// Fills context/message of each list from a triple collection by item id.
void attach_items(NBestSet& set, std::span<const Triple> items);

/// Appends the providers' features to every hypothesis of `set`.
void augment_features(NBestSet& set, std::span<const FeatureProvider* const> providers);

/// IR n-best lists for `items` against `index`, featurized by `providers`.
NBestSet generate_ir_nbest(const TripleIndex& index, std::span<const Triple> items, std::size_t n,
                           std::span<const FeatureProvider* const> providers);

// ---------------------------------------------------------------------------
// MERT

/// References aligned to the lists of an NBestSet (same order).
using ReferenceLists = std::vector<std::vector<Tokens>>;

/// Aligns reference sets to lists by item id; throws Error for a list without references.
ReferenceLists align_references(const NBestSet& set, std::span<const ReferenceSet> refs);

/// Corpus BLEU of the top hypothesis of every list under `w`.
double tuning_bleu(const NBestSet& set, const ReferenceLists& refs, const LogLinearWeights& w);

struct MertOptions {
    /// Extra passes from random starting points; the best result wins.
    std::size_t random_restarts = 0;
    std::uint64_t seed = 1;
};

struct MertResult {
    LogLinearWeights weights;
    double bleu_before = 0.0;
    double bleu_after = 0.0;
};

/// One pass of exact line search over the features in registry order. For
/// each direction the upper envelopes of all lists are merged into a
/// piecewise-constant corpus BLEU; the leftmost best interval wins and the
/// weight moves to its midpoint (unbounded end intervals use breakpoint -/+ 1).
/// A move is accepted only if it strictly improves tuning BLEU, so the result
/// never scores below `w0`.
MertResult mert_iteration(const NBestSet& set, const ReferenceLists& refs, const LogLinearWeights& w0,
                          const MertOptions& opts = {});

}  // namespace dcgm
