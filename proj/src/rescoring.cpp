#include "dcgm/rescoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dcgm/error.hpp"
#include "io_util.hpp"

namespace dcgm {

namespace {

constexpr std::string_view kSep = " ||| ";

std::string cmm_name(char source, std::size_t n) { return std::string("cmm_") + source + "_" + std::to_string(n); }

}  // namespace

FeatureRegistry::FeatureRegistry(std::vector<std::string> names)
{
    for (auto& n : names) add(std::move(n));
}

void FeatureRegistry::add(std::string name)
{
    if (name.empty()) throw Error("feature name must not be empty");
    if (name.find_first_of(" \t\n=") != std::string::npos) throw Error("invalid feature name '" + name + "'");
    if (find(name)) throw RegistryMismatch("feature '" + name + "' registered twice");
    names_.push_back(std::move(name));
}

void FeatureRegistry::append(const FeatureRegistry& other)
{
    for (const auto& n : other.names_) add(n);
}

std::optional<std::size_t> FeatureRegistry::find(std::string_view name) const
{
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return i;
    }
    return std::nullopt;
}

void FeatureRegistry::require_same(const FeatureRegistry& other, std::string_view what) const
{
    if (*this == other) return;
    std::string msg(what);
    msg += ": feature registry mismatch";
    std::size_t n = std::min(names_.size(), other.names_.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (names_[i] != other.names_[i]) {
            msg += " at position " + std::to_string(i) + " ('" + names_[i] + "' vs '" + other.names_[i] + "')";
            throw RegistryMismatch(msg);
        }
    }
    msg += " (" + std::to_string(names_.size()) + " vs " + std::to_string(other.names_.size()) + " features)";
    throw RegistryMismatch(msg);
}

// ---------------------------------------------------------------------------

std::array<double, 2 * kCmmMaxOrder> cmm_features(const Tokens& c, const Tokens& m, const Tokens& r)
{
    std::array<double, 2 * kCmmMaxOrder> out{};
    const Tokens* sources[2] = {&c, &m};
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t n = 1; n <= kCmmMaxOrder; ++n) {
            auto src = ngrams(*sources[s], n);
            double count = 0.0;
            for (const auto& [gram, k] : ngrams(r, n).counts) {
                if (src.counts.contains(gram)) count += static_cast<double>(k);
            }
            out[s * kCmmMaxOrder + n - 1] = count;
        }
    }
    return out;
}

double word_penalty(const Tokens& r) { return static_cast<double>(r.size()); }

FeatureRegistry CmmProvider::names() const
{
    FeatureRegistry reg;
    for (char s : {'c', 'm'}) {
        for (std::size_t n = 1; n <= kCmmMaxOrder; ++n) reg.add(cmm_name(s, n));
    }
    return reg;
}

void CmmProvider::compute(const FeatureInput& in, std::vector<double>& out) const
{
    auto f = cmm_features(in.context, in.message, in.response);
    out.insert(out.end(), f.begin(), f.end());
}

FeatureRegistry WordPenaltyProvider::names() const { return FeatureRegistry({"word_penalty"}); }

void WordPenaltyProvider::compute(const FeatureInput& in, std::vector<double>& out) const
{
    out.push_back(word_penalty(in.response));
}

FeatureRegistry IrScoreProvider::names() const { return FeatureRegistry({"ir_score"}); }

void IrScoreProvider::compute(const FeatureInput& in, std::vector<double>& out) const
{
    if (!in.source_doc) throw Error("hypothesis has no source document");
    out.push_back(index_->score(in.message, *in.source_doc, Field::message));
}

ModelLogProbProvider::ModelLogProbProvider(const Model& model, const Vocabulary& vocab, std::string name)
    : model_(&model), vocab_(&vocab), name_(std::move(name))
{
    if (model.vocab_hash != vocab.hash()) throw DimensionError("model was trained with a different vocabulary");
}

FeatureRegistry ModelLogProbProvider::names() const { return FeatureRegistry({name_}); }

void ModelLogProbProvider::compute(const FeatureInput& in, std::vector<double>& out) const
{
    Triple t{"", in.context, in.message, in.response};
    out.push_back(response_log_prob(*model_, encode_example(t, *vocab_)));
}

FeatureRegistry build_registry(std::span<const FeatureProvider* const> providers)
{
    if (providers.empty()) throw Error("no feature providers registered");
    FeatureRegistry reg;
    for (const auto* p : providers) reg.append(p->names());
    return reg;
}

std::vector<double> extract_features(std::span<const FeatureProvider* const> providers, const FeatureInput& in)
{
    if (providers.empty()) throw Error("no feature providers registered");
    std::vector<double> out;
    for (const auto* p : providers) {
        auto names = p->names();
        std::size_t before = out.size();
        try {
            p->compute(in, out);
        } catch (const std::exception& e) {
            throw Error("feature '" + names.names().front() + "': " + e.what());
        }
        if (out.size() - before != names.size()) {
            throw Error("feature '" + names.names().front() + "': provider produced " +
                        std::to_string(out.size() - before) + " values for " + std::to_string(names.size()) +
                        " names");
        }
        for (std::size_t i = before; i < out.size(); ++i) {
            if (!std::isfinite(out[i])) {
                throw Error("feature '" + names.names()[i - before] + "': non-finite value");
            }
        }
    }
    return out;
}

ProviderBundle make_providers(FeatureSet set, const TripleIndex* index, const Model* model, const Vocabulary* vocab)
{
    ProviderBundle b;
    auto need_index = [&] {
        if (!index) throw Error("feature set '" + std::string(to_string(set)) + "' needs an index");
        b.owned.push_back(std::make_unique<IrScoreProvider>(*index));
    };
    auto need_model = [&] {
        if (!model || !vocab) {
            throw Error("feature set '" + std::string(to_string(set)) + "' needs a model and vocabulary");
        }
        b.owned.push_back(std::make_unique<ModelLogProbProvider>(*model, *vocab));
    };
    std::size_t expected = 0;
    switch (set) {
    case FeatureSet::ir:
        need_index();
        b.owned.push_back(std::make_unique<WordPenaltyProvider>());
        expected = 2;
        break;
    case FeatureSet::cmm:
        b.owned.push_back(std::make_unique<CmmProvider>());
        b.owned.push_back(std::make_unique<WordPenaltyProvider>());
        expected = 9;
        break;
    case FeatureSet::ir_cmm:
        need_index();
        b.owned.push_back(std::make_unique<WordPenaltyProvider>());
        b.owned.push_back(std::make_unique<CmmProvider>());
        expected = 10;
        break;
    case FeatureSet::neural:
        need_model();
        b.owned.push_back(std::make_unique<WordPenaltyProvider>());
        expected = 2;
        break;
    case FeatureSet::neural_cmm:
        need_model();
        b.owned.push_back(std::make_unique<WordPenaltyProvider>());
        b.owned.push_back(std::make_unique<CmmProvider>());
        expected = 10;
        break;
    }
    for (const auto& p : b.owned) b.list.push_back(p.get());
    auto size = build_registry(b.list).size();
    if (size != expected) {
        throw Error("feature set '" + std::string(to_string(set)) + "' has " + std::to_string(size) +
                    " features, expected " + std::to_string(expected));
    }
    return b;
}

FeatureSet parse_feature_set(std::string_view name)
{
    if (name == "ir") return FeatureSet::ir;
    if (name == "cmm") return FeatureSet::cmm;
    if (name == "ir_cmm") return FeatureSet::ir_cmm;
    if (name == "neural") return FeatureSet::neural;
    if (name == "neural_cmm") return FeatureSet::neural_cmm;
    throw Error("unknown feature set '" + std::string(name) + "' (expected ir, cmm, ir_cmm, neural, neural_cmm)");
}

std::string_view to_string(FeatureSet set)
{
    switch (set) {
    case FeatureSet::ir: return "ir";
    case FeatureSet::cmm: return "cmm";
    case FeatureSet::ir_cmm: return "ir_cmm";
    case FeatureSet::neural: return "neural";
    case FeatureSet::neural_cmm: return "neural_cmm";
    }
    return "?";
}

// ---------------------------------------------------------------------------

void NBestSet::validate() const
{
    for (const auto& list : lists) {
        if (list.hyps.empty()) throw Error("n-best list '" + list.item_id + "' has no hypotheses");
        for (const auto& h : list.hyps) {
            if (h.features.size() != registry.size()) {
                throw RegistryMismatch("n-best list '" + list.item_id + "': hypothesis has " +
                                       std::to_string(h.features.size()) + " features, registry has " +
                                       std::to_string(registry.size()));
            }
        }
    }
}

LogLinearWeights LogLinearWeights::zeros(const FeatureRegistry& registry)
{
    return {registry, std::vector<double>(registry.size(), 0.0)};
}

void LogLinearWeights::validate() const
{
    if (values.size() != registry.size()) throw RegistryMismatch("weight count differs from registry size");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw Error("weight '" + registry.names()[i] + "' is not finite");
    }
}

namespace {

double dot(std::span<const double> w, std::span<const double> f)
{
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * f[i];
    return s;
}

}  // namespace

double score_hypothesis(const LogLinearWeights& w, const FeatureRegistry& registry, std::span<const double> f)
{
    w.registry.require_same(registry, "score_hypothesis");
    if (f.size() != w.values.size()) throw RegistryMismatch("feature vector size differs from registry size");
    return dot(w.values, f);
}

NBestList rescore_nbest(const NBestList& list, const LogLinearWeights& w, const FeatureRegistry& registry)
{
    NBestList out = list;
    for (auto& h : out.hyps) h.total = score_hypothesis(w, registry, h.features);
    std::stable_sort(out.hyps.begin(), out.hyps.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.total > b.total; });
    return out;
}

NBestSet rescore_nbest(const NBestSet& set, const LogLinearWeights& w)
{
    NBestSet out{set.registry, {}};
    out.lists.reserve(set.lists.size());
    for (const auto& l : set.lists) out.lists.push_back(rescore_nbest(l, w, set.registry));
    return out;
}

std::size_t best_hypothesis(const NBestList& list, const LogLinearWeights& w, const FeatureRegistry& registry)
{
    if (list.hyps.empty()) throw Error("n-best list '" + list.item_id + "' has no hypotheses");
    w.registry.require_same(registry, "best_hypothesis");
    std::size_t best = 0;
    double best_score = dot(w.values, list.hyps[0].features);
    for (std::size_t i = 1; i < list.hyps.size(); ++i) {
        double s = dot(w.values, list.hyps[i].features);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Files

void write_nbest(std::ostream& out, const NBestSet& set)
{
    set.validate();
    for (const auto& list : set.lists) {
        if (list.item_id.empty() || list.item_id.find_first_of(" \t\n|") != std::string::npos) {
            throw Error("item id '" + list.item_id + "' cannot be written to an n-best file");
        }
        for (const auto& h : list.hyps) {
            for (const auto& tok : h.tokens) {
                if (tok.empty() || tok.find_first_of(" \t\n") != std::string::npos || tok == "|||") {
                    throw Error("token '" + tok + "' cannot be written to an n-best file");
                }
            }
            out << list.item_id << kSep << join(h.tokens) << kSep;
            for (std::size_t i = 0; i < h.features.size(); ++i) {
                if (i) out << ' ';
                out << set.registry.names()[i] << '=' << detail::format_double(h.features[i]);
            }
            out << kSep << detail::format_double(h.total) << '\n';
        }
    }
    if (!out) throw Error("failed writing n-best file");
}

void write_nbest(const std::filesystem::path& path, const NBestSet& set)
{
    auto out = detail::open_output(path);
    write_nbest(out, set);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto next = line.find("|||", pos);
        if (next == std::string_view::npos) {
            out.push_back(detail::trim(line.substr(pos)));
            return out;
        }
        out.push_back(detail::trim(line.substr(pos, next - pos)));
        pos = next + 3;
    }
}

Tokens split_tokens(std::string_view s)
{
    Tokens out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace

NBestSet read_nbest(std::istream& in)
{
    NBestSet set;
    bool have_registry = false;
    std::unordered_set<std::string> closed;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::chomp(line);
        if (detail::trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != 4) {
            throw ParseError("expected 4 '|||'-separated fields, got " + std::to_string(fields.size()), lineno);
        }
        std::string id(fields[0]);
        if (id.empty()) throw ParseError("empty item id", lineno);

        Hypothesis h;
        h.tokens = split_tokens(fields[1]);
        FeatureRegistry reg;
        for (const auto& pair : split_tokens(fields[2])) {
            auto eq = pair.rfind('=');
            if (eq == std::string::npos || eq == 0) throw ParseError("feature '" + pair + "' is not name=value", lineno);
            double v = 0.0;
            try {
                v = detail::parse_double(std::string_view(pair).substr(eq + 1), "feature value");
            } catch (const Error& e) {
                throw ParseError(e.what(), lineno);
            }
            if (!std::isfinite(v)) throw ParseError("feature '" + pair + "' is not finite", lineno);
            try {
                reg.add(pair.substr(0, eq));
            } catch (const RegistryMismatch& e) {
                throw ParseError(e.what(), lineno);
            }
            h.features.push_back(v);
        }
        try {
            h.total = detail::parse_double(fields[3], "total score");
        } catch (const Error& e) {
            throw ParseError(e.what(), lineno);
        }

        if (!have_registry) {
            set.registry = reg;
            have_registry = true;
        } else if (!(reg == set.registry)) {
            throw RegistryMismatch("line " + std::to_string(lineno) + ": feature names differ from the first line");
        }

        if (set.lists.empty() || set.lists.back().item_id != id) {
            if (!set.lists.empty()) closed.insert(set.lists.back().item_id);
            if (closed.contains(id)) throw ParseError("hypotheses of item '" + id + "' are not contiguous", lineno);
            set.lists.push_back(NBestList{id, {}, {}, {}});
        }
        set.lists.back().hyps.push_back(std::move(h));
    }
    return set;
}

NBestSet read_nbest(const std::filesystem::path& path)
{
    auto in = detail::open_input(path);
    return read_nbest(in);
}

void write_weights(std::ostream& out, const LogLinearWeights& w)
{
    w.validate();
    for (std::size_t i = 0; i < w.values.size(); ++i) {
        out << w.registry.names()[i] << '\t' << detail::format_double(w.values[i]) << '\n';
    }
    if (!out) throw Error("failed writing weights");
}

void write_weights(const std::filesystem::path& path, const LogLinearWeights& w)
{
    auto out = detail::open_output(path);
    write_weights(out, w);
}

LogLinearWeights read_weights(std::istream& in)
{
    LogLinearWeights w;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::chomp(line);
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split(line, '\t');
        if (cols.size() != 2) throw ParseError("expected feature_name<TAB>weight", lineno);
        double v = 0.0;
        try {
            v = detail::parse_double(cols[1], "weight");
            w.registry.add(std::string(cols[0]));
        } catch (const Error& e) {
            throw ParseError(e.what(), lineno);
        }
        if (!std::isfinite(v)) throw ParseError("weight is not finite", lineno);
        w.values.push_back(v);
    }
    if (w.values.empty()) throw Error("weights file is empty");
    return w;
}

LogLinearWeights read_weights(const std::filesystem::path& path)
{
    auto in = detail::open_input(path);
    return read_weights(in);
}

void attach_items(NBestSet& set, std::span<const Triple> items)
{
    std::unordered_map<std::string, const Triple*> by_id;
    for (const auto& t : items) by_id.emplace(t.id, &t);
    for (auto& list : set.lists) {
        auto it = by_id.find(list.item_id);
        if (it == by_id.end()) throw Error("no triple for n-best item '" + list.item_id + "'");
        list.context = it->second->context;
        list.message = it->second->message;
    }
}

void augment_features(NBestSet& set, std::span<const FeatureProvider* const> providers)
{
    auto extra = build_registry(providers);
    FeatureRegistry reg = set.registry;
    reg.append(extra);
    for (auto& list : set.lists) {
        for (auto& h : list.hyps) {
            auto f = extract_features(providers, {list.context, list.message, h.tokens, h.source_doc});
            h.features.insert(h.features.end(), f.begin(), f.end());
        }
    }
    set.registry = std::move(reg);
}

NBestSet generate_ir_nbest(const TripleIndex& index, std::span<const Triple> items, std::size_t n,
                           std::span<const FeatureProvider* const> providers)
{
    NBestSet set;
    set.registry = build_registry(providers);
    for (const auto& item : items) {
        NBestList list{item.id, item.context, item.message, {}};
        for (const auto& cand : ir_nbest(index, item.message, n, &item.id)) {
            Hypothesis h;
            h.tokens = index.triple(cand.doc).response;
            h.source_doc = cand.doc;
            h.features = extract_features(providers, {item.context, item.message, h.tokens, h.source_doc});
            h.total = cand.score;
            list.hyps.push_back(std::move(h));
        }
        if (list.hyps.empty()) throw Error("no retrieval candidates for item '" + item.id + "'");
        set.lists.push_back(std::move(list));
    }
    return set;
}

// ---------------------------------------------------------------------------
// MERT

ReferenceLists align_references(const NBestSet& set, std::span<const ReferenceSet> refs)
{
    std::unordered_map<std::string, const ReferenceSet*> by_id;
    for (const auto& r : refs) by_id.emplace(r.test_id, &r);
    ReferenceLists out;
    out.reserve(set.lists.size());
    for (const auto& list : set.lists) {
        auto it = by_id.find(list.item_id);
        if (it == by_id.end() || it->second->refs.empty()) {
            throw Error("no references for n-best item '" + list.item_id + "'");
        }
        out.push_back(it->second->token_lists());
    }
    return out;
}

namespace {

void check_tuning_inputs(const NBestSet& set, const ReferenceLists& refs)
{
    if (set.lists.empty()) throw Error("MERT needs at least one n-best list");
    set.validate();
    if (refs.size() != set.lists.size()) throw Error("reference lists do not align with the n-best lists");
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].empty()) throw Error("no references for n-best item '" + set.lists[i].item_id + "'");
    }
}

using StatsTable = std::vector<std::vector<BleuStats>>;

StatsTable hypothesis_stats(const NBestSet& set, const ReferenceLists& refs)
{
    StatsTable out(set.lists.size());
    for (std::size_t i = 0; i < set.lists.size(); ++i) {
        for (const auto& h : set.lists[i].hyps) out[i].push_back(bleu_stats(h.tokens, refs[i]));
    }
    return out;
}

double bleu_at(const NBestSet& set, const StatsTable& stats, std::span<const double> w)
{
    BleuStats total;
    for (std::size_t i = 0; i < set.lists.size(); ++i) {
        const auto& hyps = set.lists[i].hyps;
        std::size_t best = 0;
        double best_score = dot(w, hyps[0].features);
        for (std::size_t h = 1; h < hyps.size(); ++h) {
            double s = dot(w, hyps[h].features);
            if (s > best_score) {
                best = h;
                best_score = s;
            }
        }
        total += stats[i][best];
    }
    return corpus_bleu(total);
}

struct Line {
    double slope;
    double intercept;
    std::size_t hyp;
};

struct Segment {
    double start;  // the hypothesis is on top for gamma > start
    std::size_t hyp;
};

/// Upper envelope of score(gamma) = intercept + gamma * slope. Lines are taken
/// by increasing slope; among equal slopes only the highest intercept (then the
/// lowest index) can ever be on top.
std::vector<Segment> upper_envelope(std::vector<Line> lines)
{
    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
        if (a.slope != b.slope) return a.slope < b.slope;
        if (a.intercept != b.intercept) return a.intercept > b.intercept;
        return a.hyp < b.hyp;
    });
    std::vector<Line> hull;
    std::vector<double> starts;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0 && lines[i].slope == lines[i - 1].slope) continue;
        const auto& l = lines[i];
        double x = -std::numeric_limits<double>::infinity();
        while (!hull.empty()) {
            const auto& top = hull.back();
            x = (top.intercept - l.intercept) / (l.slope - top.slope);
            if (x <= starts.back()) {
                hull.pop_back();
                starts.pop_back();
                x = -std::numeric_limits<double>::infinity();
            } else {
                break;
            }
        }
        hull.push_back(l);
        starts.push_back(x);
    }
    std::vector<Segment> out;
    out.reserve(hull.size());
    for (std::size_t i = 0; i < hull.size(); ++i) out.push_back({starts[i], hull[i].hyp});
    return out;
}

/// Best gamma along w + gamma * e_j by sweeping the merged envelopes.
/// Returns the gamma and its predicted corpus BLEU.
std::pair<double, double> line_search(const NBestSet& set, const StatsTable& stats, std::span<const double> w,
                                      std::size_t j)
{
    struct Change {
        double x;
        std::size_t list;
        std::size_t hyp;
    };
    std::vector<Change> changes;
    BleuStats current;
    std::vector<std::size_t> active(set.lists.size());
    for (std::size_t i = 0; i < set.lists.size(); ++i) {
        std::vector<Line> lines;
        const auto& hyps = set.lists[i].hyps;
        for (std::size_t h = 0; h < hyps.size(); ++h) lines.push_back({hyps[h].features[j], dot(w, hyps[h].features), h});
        auto env = upper_envelope(std::move(lines));
        active[i] = env.front().hyp;
        current += stats[i][active[i]];
        for (std::size_t s = 1; s < env.size(); ++s) changes.push_back({env[s].start, i, env[s].hyp});
    }
    std::stable_sort(changes.begin(), changes.end(), [](const Change& a, const Change& b) { return a.x < b.x; });

    if (changes.empty()) return {0.0, corpus_bleu(current)};

    double best_bleu = corpus_bleu(current);
    double best_gamma = changes.front().x - 1.0;
    for (std::size_t k = 0; k < changes.size();) {
        double x = changes[k].x;
        while (k < changes.size() && changes[k].x == x) {
            const auto& c = changes[k];
            current -= stats[c.list][active[c.list]];
            active[c.list] = c.hyp;
            current += stats[c.list][active[c.list]];
            ++k;
        }
        double gamma = k < changes.size() ? 0.5 * (x + changes[k].x) : x + 1.0;
        double b = corpus_bleu(current);
        if (b > best_bleu) {
            best_bleu = b;
            best_gamma = gamma;
        }
    }
    return {best_gamma, best_bleu};
}

std::vector<double> mert_pass(const NBestSet& set, const StatsTable& stats, std::vector<double> w)
{
    double current = bleu_at(set, stats, w);
    for (std::size_t j = 0; j < w.size(); ++j) {
        auto [gamma, predicted] = line_search(set, stats, w, j);
        if (!(predicted > current)) continue;
        auto trial = w;
        trial[j] += gamma;
        double actual = bleu_at(set, stats, trial);
        if (actual > current) {
            w = std::move(trial);
            current = actual;
        }
    }
    return w;
}

}  // namespace

double tuning_bleu(const NBestSet& set, const ReferenceLists& refs, const LogLinearWeights& w)
{
    check_tuning_inputs(set, refs);
    w.registry.require_same(set.registry, "tuning_bleu");
    return bleu_at(set, hypothesis_stats(set, refs), w.values);
}

MertResult mert_iteration(const NBestSet& set, const ReferenceLists& refs, const LogLinearWeights& w0,
                          const MertOptions& opts)
{
    check_tuning_inputs(set, refs);
    w0.validate();
    w0.registry.require_same(set.registry, "mert_iteration");
    auto stats = hypothesis_stats(set, refs);

    MertResult result;
    result.bleu_before = bleu_at(set, stats, w0.values);
    auto best = mert_pass(set, stats, w0.values);
    double best_bleu = bleu_at(set, stats, best);

    if (opts.random_restarts > 0) {
        std::mt19937_64 rng(opts.seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        for (std::size_t r = 0; r < opts.random_restarts; ++r) {
            std::vector<double> start(w0.values.size());
            for (auto& v : start) v = uni(rng);
            auto w = mert_pass(set, stats, std::move(start));
            double b = bleu_at(set, stats, w);
            if (b > best_bleu) {
                best = std::move(w);
                best_bleu = b;
            }
        }
    }

    result.weights = {w0.registry, std::move(best)};
    result.bleu_after = best_bleu;
    return result;
}

}  // namespace dcgm
