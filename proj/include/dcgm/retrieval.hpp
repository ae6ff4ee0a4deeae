#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcgm/metrics.hpp"
#include "dcgm/text_corpus.hpp"

namespace dcgm {

using DocId = std::uint32_t;

enum class Field { message, response };

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Inverted index over the message and response fields of a triple collection.
///
/// Scores use the non-negative BM25 variant over the *distinct* query terms,
/// visited in lexicographic order:
///
///   sum_t idf(t) * (tf * (k1 + 1)) / (tf + k1 * (1 - b + b * len / avglen))
///   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
class TripleIndex {
public:
    TripleIndex() = default;
    /// Throws Error on an empty collection.
    static TripleIndex build(std::vector<Triple> triples, Bm25Params params = {});

    std::size_t size() const noexcept { return triples_.size(); }
    const Triple& triple(DocId doc) const;
    const std::vector<Triple>& triples() const noexcept { return triples_; }
    std::optional<DocId> find(const std::string& triple_id) const;
    const Bm25Params& params() const noexcept { return params_; }

    std::size_t document_frequency(const std::string& term, Field field) const;
    double average_length(Field field) const { return fields_[index(field)].avg_len; }
    std::size_t document_length(DocId doc, Field field) const;
    double idf(const std::string& term, Field field) const;

    /// BM25 of `query` against one document. Throws Error for an unknown id.
    double score(const Tokens& query, DocId doc, Field field) const;

    /// Postings traversal: every document sharing at least one term with the
    /// query, in ascending document order.
    std::vector<std::pair<DocId, double>> score_all(const Tokens& query, Field field) const;

    /// Versioned binary container: the triples plus the collection statistics,
    /// which are checked against the rebuilt postings on load.
    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static TripleIndex load(std::istream& in);
    static TripleIndex load(const std::filesystem::path& path);

private:
    struct Posting {
        DocId doc;
        std::uint32_t tf;
    };
    struct FieldIndex {
        std::vector<std::vector<Posting>> postings;  // by term id
        std::vector<std::uint32_t> doc_len;
        std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> doc_terms;  // (term id, tf), sorted
        double avg_len = 0.0;
    };

    static std::size_t index(Field f) { return f == Field::message ? 0 : 1; }
    std::vector<std::uint32_t> query_terms(const Tokens& query) const;
    double term_weight(double idf, std::uint32_t tf, std::uint32_t len, const FieldIndex& fi) const;

    Bm25Params params_;
    std::vector<Triple> triples_;
    std::unordered_map<std::string, DocId> ids_;
    std::vector<std::string> terms_;
    std::unordered_map<std::string, std::uint32_t> term_ids_;
    FieldIndex fields_[2];
};

struct RankedCandidate {
    DocId doc = 0;
    double score = 0.0;
};

/// Top-n documents by BM25(message, indexed message), descending; ties by
/// document id. Only documents sharing a term with the message are returned.
/// `exclude_id` drops the triple with that id. Throws Error on an empty index.
std::vector<RankedCandidate> ir_nbest(const TripleIndex& index, const Tokens& message, std::size_t n,
                                      const std::string* exclude_id = nullptr);

struct MinerConfig {
    std::size_t candidates = 15;
    double alpha = 0.7;
    double epsilon = 0.1;

    void validate() const;
};

struct MinedCandidate {
    DocId doc = 0;
    double score = 0.0;
    double message_similarity = 0.0;
    double response_similarity = 0.0;
};

/// Candidate reference responses for a test triple `item`:
///   s = d(m_cand, m) * (alpha * d(r_cand, r) + (1 - alpha) * epsilon)
/// with d the BM25 similarity. Only candidates with s > 0 are kept; the triple
/// sharing `item`'s id is never returned. Descending, ties by document id.
std::vector<MinedCandidate> mine_candidates(const TripleIndex& index, const Triple& item, const MinerConfig& cfg);

double mining_score(double message_similarity, double response_similarity, const MinerConfig& cfg);

struct Rating {
    std::string test_id;
    std::string candidate_id;
    int rating = 0;
};

/// `test_id<TAB>candidate_id<TAB>rating` with ratings in 1..5.
std::vector<Rating> read_ratings(std::istream& in);
std::vector<Rating> read_ratings(const std::filesystem::path& path);

enum class Provenance { original, mined };

struct Reference {
    Tokens tokens;
    Provenance provenance = Provenance::original;
    std::optional<double> rating;
};

struct ReferenceSet {
    std::string test_id;
    std::vector<Reference> refs;

    std::vector<Tokens> token_lists() const;
};

/// One test triple with the candidates mined for it.
struct MinedItem {
    Triple item;
    std::vector<std::pair<std::string, Tokens>> candidates;  // (candidate triple id, response)
};

/// Original response always kept; a mined response is kept when its mean
/// rating is >= threshold. Identical token sequences collapse onto the first.
/// Throws Error for a rating whose (test id, candidate id) was never mined.
std::vector<ReferenceSet> build_reference_sets(std::span<const MinedItem> items, std::span<const Rating> ratings,
                                               double threshold = 4.0);

/// `test_id<TAB>provenance<TAB>response`, grouped by test id in file order.
void write_reference_sets(std::ostream& out, std::span<const ReferenceSet> sets);
void write_reference_sets(const std::filesystem::path& path, std::span<const ReferenceSet> sets);
std::vector<ReferenceSet> read_reference_sets(std::istream& in);
std::vector<ReferenceSet> read_reference_sets(const std::filesystem::path& path);

struct ReferenceStats {
    std::size_t items = 0;
    double mean_refs = 0.0;
    std::size_t min_refs = 0;
    std::size_t max_refs = 0;
};

ReferenceStats reference_stats(std::span<const ReferenceSet> sets);

enum class HypothesisSource { human, system, random };

struct LeaveOneOutResult {
    double mean_bleu = 0.0;
    std::size_t trials = 0;
    std::size_t scored_items = 0;
    /// Items with a single reference; leaving it out would leave nothing to score against.
    std::size_t excluded_items = 0;
};

/// Each trial removes one uniformly chosen reference per item. `human` scores
/// the removed reference against the rest; `system` and `random` score
/// `hypotheses[i]` against the rest. Corpus BLEU is averaged over trials. The
/// same seed draws the same removals for every source.
LeaveOneOutResult leave_one_out_bleu(std::span<const ReferenceSet> sets, HypothesisSource source,
                                     std::span<const Tokens> hypotheses, std::size_t trials, std::uint64_t seed);

}  // namespace dcgm
