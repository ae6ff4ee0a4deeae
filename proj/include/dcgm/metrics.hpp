#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dcgm/text_corpus.hpp"

namespace dcgm {

inline constexpr std::size_t kBleuOrder = 4;

/// BLEU sufficient statistics. Additive across items, which is what lets MERT
/// sweep corpus BLEU along a line without recomputing n-gram counts.
struct BleuStats {
    std::array<std::int64_t, kBleuOrder> matches{};
    std::array<std::int64_t, kBleuOrder> totals{};
    std::int64_t hyp_len = 0;
    std::int64_t ref_len = 0;

    BleuStats& operator+=(const BleuStats& o);
    BleuStats& operator-=(const BleuStats& o);
    friend BleuStats operator+(BleuStats a, const BleuStats& b) { return a += b; }
    bool operator==(const BleuStats&) const = default;
};

/// Clipped n-gram matches (clip = max count in any single reference) and the
/// closest reference length (ties go to the shorter one). Throws Error when
/// `refs` is empty.
BleuStats bleu_stats(const Tokens& hyp, std::span<const Tokens> refs);

/// Unsmoothed BLEU-4: BP * exp(mean log p_n), BP = min(1, exp(1 - ref/hyp)).
/// Zero when any precision is zero or the hypothesis side is empty.
double corpus_bleu(const BleuStats& stats);

struct BleuBreakdown {
    double bleu = 0.0;
    std::array<double, kBleuOrder> precisions{};
    double brevity_penalty = 0.0;
};

BleuBreakdown bleu_breakdown(const BleuStats& stats);

/// Per-item diagnostic BLEU with add-epsilon smoothing on every precision. Not
/// used for reported corpus scores.
double smoothed_sentence_bleu(const BleuStats& stats, double epsilon = 0.1);

struct MeteorConfig {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;

    void validate() const;
};

/// Exact-match-only METEOR ("meteor-lite"): one-to-one unigram alignment built
/// left to right, each hypothesis word preferring the reference occurrence that
/// extends the current chunk, otherwise the leftmost free one. Returns the
/// maximum over references; 0 without any match.
double meteor_lite(const Tokens& hyp, std::span<const Tokens> refs, const MeteorConfig& cfg = {});

struct MeteorAlignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};

MeteorAlignment meteor_align(const Tokens& hyp, const Tokens& ref);

/// One evaluated item: the system output and its references.
struct EvalItem {
    std::string id;
    Tokens hypothesis;
    std::vector<Tokens> references;
};

struct ItemScore {
    std::string id;
    double sentence_bleu = 0.0;  // smoothed, diagnostic only
    double meteor = 0.0;
};

struct EvalReport {
    BleuStats stats;
    BleuBreakdown bleu;
    double meteor = 0.0;  // mean over items
    std::size_t items = 0;
    std::size_t references = 0;
    std::vector<ItemScore> per_item;
};

/// Corpus BLEU over all items plus mean meteor-lite. Throws Error when there
/// are no items or an item has no references.
EvalReport evaluate(std::span<const EvalItem> items, const MeteorConfig& meteor = {});

/// `metric<TAB>value` rows; with `per_item`, a blank line and an
/// `item_id<TAB>sentence_bleu_smoothed<TAB>meteor_lite` table follow.
void write_report(std::ostream& out, const EvalReport& report, bool per_item = false);

}  // namespace dcgm
