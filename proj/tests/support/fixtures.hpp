// Synthetic corpora and independent reference implementations shared by the
// unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dcgm/metrics.hpp"
#include "dcgm/model.hpp"
#include "dcgm/retrieval.hpp"
#include "dcgm/text_corpus.hpp"

namespace fixtures {

using dcgm::Tokens;
using dcgm::Triple;

inline std::string word(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

// ---------------------------------------------------------------------------
// Context-sensitivity corpus: the context holds a topic token t_i that never
// appears in the message; the response is "re <a_i> ok" with a_i a fixed
// function of t_i. Messages are drawn independently of the topic.

struct TopicCorpus {
    std::vector<Triple> triples;
    std::vector<std::size_t> topic;  // per triple
    std::size_t topics = 0;
};

inline Tokens topic_response(std::size_t answer) { return {"re", word("ans", answer), "ok"}; }

inline TopicCorpus make_topic_corpus(std::size_t n, std::size_t topics, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_topic(0, topics - 1);
    std::uniform_int_distribution<std::size_t> pick_filler(0, 11);
    std::uniform_int_distribution<std::size_t> pick_len(1, 3);
    TopicCorpus out;
    out.topics = topics;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t t = pick_topic(rng);
        Triple tr;
        tr.id = word("t", k);
        tr.context.push_back(word("topic", t));
        for (std::size_t j = pick_len(rng); j > 0; --j) tr.context.push_back(word("c", pick_filler(rng)));
        std::shuffle(tr.context.begin(), tr.context.end(), rng);
        for (std::size_t j = pick_len(rng) + 1; j > 0; --j) tr.message.push_back(word("m", pick_filler(rng)));
        // The answer is a fixed permutation of the topic.
        tr.response = topic_response((t * 7 + 3) % topics);
        out.triples.push_back(std::move(tr));
        out.topic.push_back(t);
    }
    return out;
}

inline std::size_t topic_answer(std::size_t t, std::size_t topics) { return (t * 7 + 3) % topics; }

// ---------------------------------------------------------------------------
// Brute-force oracles, written without the library's data structures.

/// Number of n-token windows of r that also occur somewhere in src.
inline std::size_t brute_cmm(const Tokens& src, const Tokens& r, std::size_t n)
{
    if (r.size() < n) return 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
        bool found = false;
        for (std::size_t j = 0; !found && j + n <= src.size(); ++j) {
            bool same = true;
            for (std::size_t k = 0; k < n && same; ++k) same = r[i + k] == src[j + k];
            found = same;
        }
        if (found) ++count;
    }
    return count;
}

/// BM25 by a full scan over raw token lists.
inline double brute_bm25(const Tokens& query, const std::vector<Tokens>& docs, std::size_t d, double k1 = 1.2,
                         double b = 0.75)
{
    double n = static_cast<double>(docs.size());
    double total_len = 0.0;
    for (const auto& doc : docs) total_len += static_cast<double>(doc.size());
    double avg = total_len / n;
    std::set<std::string> terms(query.begin(), query.end());
    double score = 0.0;
    for (const auto& t : terms) {
        double df = 0.0;
        for (const auto& doc : docs) {
            if (std::find(doc.begin(), doc.end(), t) != doc.end()) df += 1.0;
        }
        double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), t));
        if (tf == 0.0) continue;
        double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        double len = static_cast<double>(docs[d].size());
        score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avg));
    }
    return score;
}

inline Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len, std::size_t alphabet, bool allow_empty = true)
{
    std::uniform_int_distribution<std::size_t> len(allow_empty ? 0 : 1, max_len);
    std::uniform_int_distribution<std::size_t> sym(0, alphabet - 1);
    Tokens out(len(rng));
    for (auto& t : out) t = std::string(1, static_cast<char>('a' + sym(rng)));
    return out;
}

// ---------------------------------------------------------------------------
// Multi-reference corpus for the leave-one-out ordering check. Every item
// belongs to a topic with a small phrase inventory; references are phrases of
// the item's topic, the retrieval pool holds further same-topic responses.

struct MultiRefCorpus {
    std::vector<Triple> items;            // test triples
    std::vector<dcgm::ReferenceSet> refs;  // aligned with items
    std::vector<Triple> pool;             // retrieval collection
};

inline Tokens topic_phrase(std::size_t topic, std::mt19937_64& rng)
{
    // Core words shared by the topic, plus two of eight topic-specific variants.
    std::uniform_int_distribution<std::size_t> v(0, 7);
    Tokens out{"i", "think", word("k", topic), word("q", topic)};
    out.push_back(word("v", topic * 8 + v(rng)));
    out.push_back(word("w", topic * 8 + v(rng)));
    out.push_back("today");
    return out;
}

inline MultiRefCorpus make_multiref_corpus(std::size_t items, std::size_t topics, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_topic(0, topics - 1);
    std::uniform_int_distribution<std::size_t> pick_refs(2, 6);
    std::uniform_int_distribution<std::size_t> filler(0, 19);
    MultiRefCorpus out;
    auto message_for = [&](std::size_t t) {
        Tokens m{word("mt", t), word("f", filler(rng)), word("f", filler(rng))};
        std::shuffle(m.begin(), m.end(), rng);
        return m;
    };
    for (std::size_t i = 0; i < items; ++i) {
        std::size_t t = pick_topic(rng);
        Triple tr{word("item", i), {word("ctx", filler(rng))}, message_for(t), topic_phrase(t, rng)};
        dcgm::ReferenceSet rs{tr.id, {}};
        rs.refs.push_back({tr.response, dcgm::Provenance::original, std::nullopt});
        for (std::size_t k = pick_refs(rng) - 1; k > 0; --k) {
            rs.refs.push_back({topic_phrase(t, rng), dcgm::Provenance::mined, 4.5});
        }
        out.items.push_back(std::move(tr));
        out.refs.push_back(std::move(rs));
    }
    for (std::size_t p = 0; p < 20 * topics; ++p) {
        std::size_t t = p % topics;
        Tokens r = topic_phrase(t, rng);
        // Pool responses are noisier than references: one core word is replaced.
        r[2 + p % 2] = word("x", filler(rng));
        out.pool.push_back({word("pool", p), {word("ctx", filler(rng))}, message_for(t), r});
    }
    return out;
}

}  // namespace fixtures
