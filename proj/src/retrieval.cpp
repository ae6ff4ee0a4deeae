#include "dcgm/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include "dcgm/error.hpp"
#include "io_util.hpp"

namespace dcgm {

namespace {

constexpr char kIndexMagic[8] = {'D', 'C', 'G', 'M', 'I', 'D', 'X', '1'};
constexpr std::uint32_t kIndexVersion = 1;

const Tokens& field_tokens(const Triple& t, Field f) { return f == Field::message ? t.message : t.response; }

std::string_view provenance_name(Provenance p) { return p == Provenance::original ? "original" : "mined"; }

}  // namespace

// ---------------------------------------------------------------------------
// Index

TripleIndex TripleIndex::build(std::vector<Triple> triples, Bm25Params params)
{
    if (triples.empty()) throw Error("cannot index an empty triple collection");
    if (triples.size() > std::numeric_limits<DocId>::max()) throw Error("too many triples to index");

    TripleIndex idx;
    idx.params_ = params;
    idx.triples_ = std::move(triples);
    for (DocId d = 0; d < idx.triples_.size(); ++d) {
        if (!idx.ids_.emplace(idx.triples_[d].id, d).second) {
            throw Error("duplicate triple id '" + idx.triples_[d].id + "' in index");
        }
    }

    for (auto field : {Field::message, Field::response}) {
        auto& fi = idx.fields_[index(field)];
        fi.doc_len.resize(idx.triples_.size());
        fi.doc_terms.resize(idx.triples_.size());
        std::uint64_t total_len = 0;
        for (DocId d = 0; d < idx.triples_.size(); ++d) {
            std::map<std::uint32_t, std::uint32_t> tf;
            for (const auto& tok : field_tokens(idx.triples_[d], field)) {
                auto [it, inserted] = idx.term_ids_.emplace(tok, static_cast<std::uint32_t>(idx.terms_.size()));
                if (inserted) idx.terms_.push_back(tok);
                ++tf[it->second];
            }
            fi.doc_len[d] = static_cast<std::uint32_t>(field_tokens(idx.triples_[d], field).size());
            total_len += fi.doc_len[d];
            fi.doc_terms[d].assign(tf.begin(), tf.end());
        }
        fi.avg_len = static_cast<double>(total_len) / static_cast<double>(idx.triples_.size());
    }
    for (auto& fi : idx.fields_) {
        fi.postings.resize(idx.terms_.size());
        for (DocId d = 0; d < fi.doc_terms.size(); ++d) {
            for (auto [term, tf] : fi.doc_terms[d]) fi.postings[term].push_back({d, tf});
        }
    }
    return idx;
}

const Triple& TripleIndex::triple(DocId doc) const
{
    if (doc >= triples_.size()) throw Error("unknown document id " + std::to_string(doc));
    return triples_[doc];
}

std::optional<DocId> TripleIndex::find(const std::string& triple_id) const
{
    auto it = ids_.find(triple_id);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::size_t TripleIndex::document_frequency(const std::string& term, Field field) const
{
    auto it = term_ids_.find(term);
    return it == term_ids_.end() ? 0 : fields_[index(field)].postings[it->second].size();
}

std::size_t TripleIndex::document_length(DocId doc, Field field) const
{
    if (doc >= triples_.size()) throw Error("unknown document id " + std::to_string(doc));
    return fields_[index(field)].doc_len[doc];
}

double TripleIndex::idf(const std::string& term, Field field) const
{
    const auto n = static_cast<double>(triples_.size());
    const auto df = static_cast<double>(document_frequency(term, field));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<std::uint32_t> TripleIndex::query_terms(const Tokens& query) const
{
    std::set<std::string> distinct(query.begin(), query.end());
    std::vector<std::uint32_t> out;
    for (const auto& t : distinct) {
        if (auto it = term_ids_.find(t); it != term_ids_.end()) out.push_back(it->second);
    }
    return out;
}

double TripleIndex::term_weight(double idf, std::uint32_t tf, std::uint32_t len, const FieldIndex& fi) const
{
    const double f = static_cast<double>(tf);
    const double k1 = params_.k1;
    const double b = params_.b;
    return idf * (f * (k1 + 1.0)) / (f + k1 * (1.0 - b + b * static_cast<double>(len) / fi.avg_len));
}

double TripleIndex::score(const Tokens& query, DocId doc, Field field) const
{
    if (doc >= triples_.size()) throw Error("unknown document id " + std::to_string(doc));
    const auto& fi = fields_[index(field)];
    const auto& terms = fi.doc_terms[doc];
    double s = 0.0;
    for (auto term : query_terms(query)) {
        auto it = std::lower_bound(terms.begin(), terms.end(), term,
                                   [](const auto& e, std::uint32_t v) { return e.first < v; });
        if (it == terms.end() || it->first != term) continue;
        s += term_weight(idf(terms_[term], field), it->second, fi.doc_len[doc], fi);
    }
    return s;
}

std::vector<std::pair<DocId, double>> TripleIndex::score_all(const Tokens& query, Field field) const
{
    const auto& fi = fields_[index(field)];
    std::vector<double> acc(triples_.size(), 0.0);
    std::vector<char> hit(triples_.size(), 0);
    for (auto term : query_terms(query)) {
        const double w_idf = idf(terms_[term], field);
        for (const auto& p : fi.postings[term]) {
            acc[p.doc] += term_weight(w_idf, p.tf, fi.doc_len[p.doc], fi);
            hit[p.doc] = 1;
        }
    }
    std::vector<std::pair<DocId, double>> out;
    for (DocId d = 0; d < acc.size(); ++d) {
        if (hit[d]) out.emplace_back(d, acc[d]);
    }
    return out;
}

void TripleIndex::save(std::ostream& out) const
{
    out.write(kIndexMagic, sizeof(kIndexMagic));
    detail::write_pod<std::uint32_t>(out, kIndexVersion);
    detail::write_pod<double>(out, params_.k1);
    detail::write_pod<double>(out, params_.b);
    detail::write_pod<std::uint64_t>(out, triples_.size());
    detail::write_pod<std::uint64_t>(out, terms_.size());
    detail::write_pod<double>(out, fields_[0].avg_len);
    detail::write_pod<double>(out, fields_[1].avg_len);
    for (const auto& t : triples_) {
        detail::write_string(out, t.id);
        detail::write_string(out, join(t.context));
        detail::write_string(out, join(t.message));
        detail::write_string(out, join(t.response));
    }
    if (!out) throw Error("failed writing index");
}

void TripleIndex::save(const std::filesystem::path& path) const
{
    auto out = detail::open_output(path, true);
    save(out);
}

TripleIndex TripleIndex::load(std::istream& in)
{
    char magic[sizeof(kIndexMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) throw ParseError("not an index file");
    auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kIndexVersion) throw ParseError("unsupported index version " + std::to_string(version));
    Bm25Params params;
    params.k1 = detail::read_pod<double>(in);
    params.b = detail::read_pod<double>(in);
    auto n = detail::read_pod<std::uint64_t>(in);
    auto n_terms = detail::read_pod<std::uint64_t>(in);
    auto avg_m = detail::read_pod<double>(in);
    auto avg_r = detail::read_pod<double>(in);
    if (n == 0 || n > (1ULL << 32)) throw ParseError("implausible index size");

    auto split_tokens = [](const std::string& s) {
        Tokens out;
        if (s.empty()) return out;
        for (auto part : detail::split(s, ' ')) out.emplace_back(part);
        return out;
    };
    std::vector<Triple> triples;
    triples.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Triple t;
        t.id = detail::read_string(in);
        t.context = split_tokens(detail::read_string(in));
        t.message = split_tokens(detail::read_string(in));
        t.response = split_tokens(detail::read_string(in));
        triples.push_back(std::move(t));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after index");

    auto idx = build(std::move(triples), params);
    if (idx.terms_.size() != n_terms || idx.fields_[0].avg_len != avg_m || idx.fields_[1].avg_len != avg_r) {
        throw ParseError("index statistics do not match the stored collection");
    }
    return idx;
}

TripleIndex TripleIndex::load(const std::filesystem::path& path)
{
    auto in = detail::open_input(path, true);
    return load(in);
}

// ---------------------------------------------------------------------------
// Retrieval and mining

std::vector<RankedCandidate> ir_nbest(const TripleIndex& index, const Tokens& message, std::size_t n,
                                      const std::string* exclude_id)
{
    if (index.size() == 0) throw Error("IR n-best over an empty index");
    std::vector<RankedCandidate> out;
    for (auto [doc, s] : index.score_all(message, Field::message)) {
        if (exclude_id && index.triple(doc).id == *exclude_id) continue;
        out.push_back({doc, s});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    if (out.size() > n) out.resize(n);
    return out;
}

void MinerConfig::validate() const
{
    if (candidates < 1) throw Error("miner candidate count must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("miner alpha must be in [0, 1]");
    if (!(epsilon > 0.0)) throw Error("miner epsilon must be > 0");
}

double mining_score(double message_similarity, double response_similarity, const MinerConfig& cfg)
{
    return message_similarity * (cfg.alpha * response_similarity + (1.0 - cfg.alpha) * cfg.epsilon);
}

std::vector<MinedCandidate> mine_candidates(const TripleIndex& index, const Triple& item, const MinerConfig& cfg)
{
    cfg.validate();
    std::vector<MinedCandidate> out;
    // Documents outside the message postings have d(m) = 0 and hence score 0.
    for (auto [doc, dm] : index.score_all(item.message, Field::message)) {
        if (index.triple(doc).id == item.id) continue;
        double dr = index.score(item.response, doc, Field::response);
        double s = mining_score(dm, dr, cfg);
        if (s > 0.0) out.push_back({doc, s, dm, dr});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    if (out.size() > cfg.candidates) out.resize(cfg.candidates);
    return out;
}

// ---------------------------------------------------------------------------
// Ratings and reference sets

std::vector<Rating> read_ratings(std::istream& in)
{
    std::vector<Rating> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::chomp(line);
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split(line, '\t');
        if (cols.size() != 3) throw ParseError("ratings need 3 tab-separated columns", lineno);
        Rating r{std::string(detail::trim(cols[0])), std::string(detail::trim(cols[1])), 0};
        try {
            r.rating = detail::parse_int<int>(cols[2], "rating");
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        }
        if (r.rating < 1 || r.rating > 5) throw ParseError("rating must be in 1..5", lineno);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Rating> read_ratings(const std::filesystem::path& path)
{
    auto in = detail::open_input(path);
    return read_ratings(in);
}

std::vector<Tokens> ReferenceSet::token_lists() const
{
    std::vector<Tokens> out;
    for (const auto& r : refs) out.push_back(r.tokens);
    return out;
}

std::vector<ReferenceSet> build_reference_sets(std::span<const MinedItem> items, std::span<const Rating> ratings,
                                               double threshold)
{
    // (test id, candidate id) -> (sum, count)
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> mean;
    for (const auto& it : items) {
        for (const auto& [cid, _] : it.candidates) mean.emplace(std::make_pair(it.item.id, cid), std::make_pair(0.0, 0));
    }
    for (const auto& r : ratings) {
        auto it = mean.find({r.test_id, r.candidate_id});
        if (it == mean.end()) {
            throw Error("rating for unknown candidate '" + r.candidate_id + "' of test item '" + r.test_id + "'");
        }
        it->second.first += r.rating;
        it->second.second += 1;
    }

    std::vector<ReferenceSet> out;
    for (const auto& it : items) {
        ReferenceSet set{it.item.id, {{it.item.response, Provenance::original, std::nullopt}}};
        for (const auto& [cid, tokens] : it.candidates) {
            auto [sum, count] = mean.at({it.item.id, cid});
            if (count == 0) continue;
            double avg = sum / count;
            if (avg < threshold) continue;
            bool duplicate = std::any_of(set.refs.begin(), set.refs.end(),
                                         [&](const Reference& ref) { return ref.tokens == tokens; });
            if (!duplicate) set.refs.push_back({tokens, Provenance::mined, avg});
        }
        out.push_back(std::move(set));
    }
    return out;
}

void write_reference_sets(std::ostream& out, std::span<const ReferenceSet> sets)
{
    for (const auto& s : sets) {
        for (const auto& r : s.refs) out << s.test_id << '\t' << provenance_name(r.provenance) << '\t' << join(r.tokens) << '\n';
    }
}

void write_reference_sets(const std::filesystem::path& path, std::span<const ReferenceSet> sets)
{
    auto out = detail::open_output(path);
    write_reference_sets(out, sets);
}

std::vector<ReferenceSet> read_reference_sets(std::istream& in)
{
    std::vector<ReferenceSet> out;
    std::map<std::string, std::size_t> pos;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::chomp(line);
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split(line, '\t');
        if (cols.size() != 3) throw ParseError("reference sets need 3 tab-separated columns", lineno);
        Provenance prov;
        if (cols[1] == "original") prov = Provenance::original;
        else if (cols[1] == "mined") prov = Provenance::mined;
        else throw ParseError("provenance must be 'original' or 'mined'", lineno);

        std::string id(detail::trim(cols[0]));
        auto [it, inserted] = pos.emplace(id, out.size());
        if (inserted) out.push_back({id, {}});
        out[it->second].refs.push_back({tokenize(cols[2]), prov, std::nullopt});
    }
    return out;
}

std::vector<ReferenceSet> read_reference_sets(const std::filesystem::path& path)
{
    auto in = detail::open_input(path);
    return read_reference_sets(in);
}

ReferenceStats reference_stats(std::span<const ReferenceSet> sets)
{
    ReferenceStats st;
    st.items = sets.size();
    if (sets.empty()) return st;
    st.min_refs = sets.front().refs.size();
    std::size_t total = 0;
    for (const auto& s : sets) {
        total += s.refs.size();
        st.min_refs = std::min(st.min_refs, s.refs.size());
        st.max_refs = std::max(st.max_refs, s.refs.size());
    }
    st.mean_refs = static_cast<double>(total) / static_cast<double>(sets.size());
    return st;
}

// ---------------------------------------------------------------------------
// Leave-one-out bounds

LeaveOneOutResult leave_one_out_bleu(std::span<const ReferenceSet> sets, HypothesisSource source,
                                     std::span<const Tokens> hypotheses, std::size_t trials, std::uint64_t seed)
{
    if (trials < 1) throw Error("leave-one-out needs at least one trial");
    if (source != HypothesisSource::human && hypotheses.size() != sets.size()) {
        throw Error("leave-one-out needs one hypothesis per reference set");
    }
    LeaveOneOutResult res;
    res.trials = trials;
    for (const auto& s : sets) {
        if (s.refs.size() < 2) ++res.excluded_items;
    }
    res.scored_items = sets.size() - res.excluded_items;
    if (res.scored_items == 0) return res;

    std::mt19937_64 rng(seed);
    double sum = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        BleuStats stats;
        for (std::size_t i = 0; i < sets.size(); ++i) {
            const auto& refs = sets[i].refs;
            if (refs.size() < 2) continue;
            std::uniform_int_distribution<std::size_t> pick(0, refs.size() - 1);
            auto left_out = pick(rng);
            std::vector<Tokens> rest;
            for (std::size_t j = 0; j < refs.size(); ++j) {
                if (j != left_out) rest.push_back(refs[j].tokens);
            }
            const Tokens& hyp = source == HypothesisSource::human ? refs[left_out].tokens : hypotheses[i];
            stats += bleu_stats(hyp, rest);
        }
        sum += corpus_bleu(stats);
    }
    res.mean_bleu = sum / static_cast<double>(trials);
    return res;
}

}  // namespace dcgm
