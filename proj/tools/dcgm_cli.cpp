// dcgm: command-line front end for the response-generation pipeline.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dcgm/error.hpp"
#include "dcgm/gradcheck.hpp"
#include "dcgm/metrics.hpp"
#include "dcgm/model.hpp"
#include "dcgm/rescoring.hpp"
#include "dcgm/retrieval.hpp"
#include "dcgm/text_corpus.hpp"
#include "dcgm/trainer.hpp"
#include "io_util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dcgm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct Globals {
    std::string config;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string out;
    std::vector<std::string> overrides;
    std::vector<std::string> argv;
};

std::string utc_now()
{
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string file_digest(const fs::path& path)
{
    auto in = detail::open_input(path, true);
    std::ostringstream ss;
    ss << in.rdbuf();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(ss.str())));
    return buf;
}

/// Run record written next to the primary artifact before any output.
class Manifest {
public:
    Manifest(std::string command, const Globals& g) : command_(std::move(command)), globals_(g)
    {
        started_ = utc_now();
    }

    void config(const std::string& key, json value) { config_[key] = std::move(value); }
    void input(const std::string& path)
    {
        if (!path.empty()) inputs_[path] = file_digest(path);
    }
    void artifact(const std::string& path)
    {
        if (!path.empty()) artifacts_.push_back(path);
    }

    /// Writes `<primary artifact>.manifest.json`; a no-op when nothing is written to disk.
    void write() const
    {
        if (artifacts_.empty()) return;
        json j;
        j["command"] = command_;
        j["argv"] = globals_.argv;
        j["seed"] = globals_.seed;
        j["threads"] = globals_.threads;
        j["config"] = config_;
        j["inputs"] = inputs_;
        j["artifacts"] = artifacts_;
        j["timestamps"] = {{"started", started_}, {"manifest_written", utc_now()}};
        fs::path path = artifacts_.front() + ".manifest.json";
        auto out = detail::open_output(path);
        out << j.dump(2) << '\n';
    }

private:
    std::string command_;
    const Globals& globals_;
    std::string started_;
    json config_ = json::object();
    json inputs_ = json::object();
    std::vector<std::string> artifacts_;
};

/// Table output: --out when given, else standard output.
class TableSink {
public:
    explicit TableSink(const std::string& path)
    {
        if (!path.empty()) file_ = detail::open_output(path);
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

TrainConfig resolve_train_config(const Globals& g)
{
    TrainConfig cfg;
    if (!g.config.empty()) cfg = load_train_config(g.config);
    for (const auto& kv : g.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, detail::trim(std::string_view(kv).substr(0, eq)),
                         detail::trim(std::string_view(kv).substr(eq + 1)));
    }
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    cfg.validate();
    return cfg;
}

json config_json(const TrainConfig& cfg)
{
    json j = json::object();
    std::istringstream in(render_train_config(cfg));
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        j[std::string(detail::trim(std::string_view(line).substr(0, eq)))] =
            std::string(detail::trim(std::string_view(line).substr(eq + 1)));
    }
    return j;
}

std::vector<Triple> load_triples(const std::string& path)
{
    auto file = read_triples(fs::path(path), true);
    if (file.triples.empty()) throw Error("empty corpus");
    return std::move(file.triples);
}

const std::vector<std::string> kFamilies{"rlmt", "dcgm1", "dcgm2"};
const std::vector<std::string> kFeatureSets{"ir", "cmm", "ir_cmm", "neural", "neural_cmm"};

/// Loaded artifacts needed by the feature providers.
struct FeatureContext {
    std::optional<TripleIndex> index;
    std::optional<Vocabulary> vocab;
    std::optional<Model> model;

    void load(const std::string& index_path, const std::string& checkpoint, const std::string& vocab_path)
    {
        if (!index_path.empty()) index = TripleIndex::load(fs::path(index_path));
        if (!vocab_path.empty()) vocab = Vocabulary::load(fs::path(vocab_path));
        if (!checkpoint.empty()) {
            if (!vocab) throw Error("--checkpoint requires --vocab");
            model = load_checkpoint(fs::path(checkpoint), vocab->hash());
        }
    }

    ProviderBundle providers(FeatureSet set) const
    {
        return make_providers(set, index ? &*index : nullptr, model ? &*model : nullptr, vocab ? &*vocab : nullptr);
    }
};

/// Reads a hypothesis file: an n-best file (top entry per list) or `id<TAB>response` lines.
std::vector<std::pair<std::string, Tokens>> read_hypotheses(const std::string& path, bool nbest)
{
    std::vector<std::pair<std::string, Tokens>> out;
    if (nbest) {
        for (const auto& list : read_nbest(fs::path(path)).lists) {
            if (list.hyps.empty()) throw Error("n-best list '" + list.item_id + "' is empty");
            out.emplace_back(list.item_id, list.hyps.front().tokens);
        }
        return out;
    }
    auto in = detail::open_input(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        detail::chomp(line);
        if (detail::trim(line).empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("expected id<TAB>response", n);
        out.emplace_back(line.substr(0, tab), tokenize(std::string_view(line).substr(tab + 1)));
    }
    return out;
}

std::vector<EvalItem> eval_items(const std::vector<std::pair<std::string, Tokens>>& hyps,
                                 const std::vector<ReferenceSet>& refs)
{
    std::map<std::string, const ReferenceSet*> by_id;
    for (const auto& r : refs) by_id[r.test_id] = &r;
    std::vector<EvalItem> items;
    for (const auto& [id, tokens] : hyps) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("no references for item '" + id + "'");
        items.push_back({id, tokens, it->second->token_lists()});
    }
    return items;
}

std::vector<EvalItem> eval_items(const NBestSet& set, const std::vector<ReferenceSet>& refs)
{
    std::vector<std::pair<std::string, Tokens>> hyps;
    for (const auto& list : set.lists) {
        if (list.hyps.empty()) throw Error("n-best list '" + list.item_id + "' is empty");
        hyps.emplace_back(list.item_id, list.hyps.front().tokens);
    }
    return eval_items(hyps, refs);
}

// ---------------------------------------------------------------------------
// Commands

struct IngestArgs {
    std::string corpus, out_dir;
};

int cmd_ingest(const Globals& g, const IngestArgs& a)
{
    auto cfg = resolve_train_config(g);
    auto file = read_triples(fs::path(a.corpus), false);
    for (const auto& m : file.malformed) std::cerr << a.corpus << ":" << m.line << ": " << m.reason << '\n';
    if (file.triples.empty() && file.malformed.empty()) throw Error("empty corpus");
    std::size_t records = file.triples.size() + file.malformed.size();
    if (file.malformed.size() * 100 > records) {
        throw Error(std::to_string(file.malformed.size()) + " of " + std::to_string(records) +
                    " lines are malformed (limit 1%)");
    }
    auto kept = filter_triples(file.triples, cfg.min_bigram_count);
    if (kept.empty()) throw Error("no triple survives the bigram filter");
    auto vocab = build_vocab(kept, cfg.vocab_cap);

    fs::create_directories(a.out_dir);
    fs::path dir(a.out_dir);
    Manifest m("ingest", g);
    m.config("min_bigram_count", cfg.min_bigram_count);
    m.config("vocab_cap", cfg.vocab_cap);
    m.input(a.corpus);
    for (const char* name : {"triples.tsv", "vocab.txt", "ingest_stats.tsv"}) m.artifact((dir / name).string());
    m.write();

    write_triples(dir / "triples.tsv", kept);
    vocab.save(dir / "vocab.txt");
    auto stats = detail::open_output(dir / "ingest_stats.tsv");
    stats << "statistic\tvalue\n"
          << "lines\t" << file.lines << '\n'
          << "malformed\t" << file.malformed.size() << '\n'
          << "triples_read\t" << file.triples.size() << '\n'
          << "triples_kept\t" << kept.size() << '\n'
          << "vocab_size\t" << vocab.size() << '\n';
    std::cerr << "kept " << kept.size() << " of " << file.triples.size() << " triples, vocabulary " << vocab.size()
              << '\n';
    return kExitOk;
}

struct TrainArgs {
    std::string family, triples, vocab, heldout, checkpoint, report;
};

int cmd_train(const Globals& g, const TrainArgs& a)
{
    auto cfg = resolve_train_config(g);
    auto family = parse_family(a.family);
    auto vocab = Vocabulary::load(fs::path(a.vocab));
    auto triples = load_triples(a.triples);
    std::vector<Example> train_set, heldout;
    for (const auto& t : triples) train_set.push_back(encode_example(t, vocab));
    if (!a.heldout.empty()) {
        for (const auto& t : load_triples(a.heldout)) heldout.push_back(encode_example(t, vocab));
    } else if (cfg.heldout_fraction > 0.0 && train_set.size() > 1) {
        // The tail of the training file is held out.
        auto n = static_cast<std::size_t>(std::ceil(cfg.heldout_fraction * static_cast<double>(train_set.size())));
        n = std::min(n, train_set.size() - 1);
        heldout.assign(train_set.end() - static_cast<std::ptrdiff_t>(n), train_set.end());
        train_set.resize(train_set.size() - n);
    }
    std::string report = a.report.empty() ? a.checkpoint + ".report.tsv" : a.report;

    Manifest m("train", g);
    m.config("family", a.family);
    m.config("train", config_json(cfg));
    m.config("train_examples", train_set.size());
    m.config("heldout_examples", heldout.size());
    m.input(a.triples);
    m.input(a.vocab);
    m.input(a.heldout);
    m.artifact(a.checkpoint);
    m.artifact(report);
    m.write();

    auto res = train(train_set, heldout, family, vocab, cfg);
    save_checkpoint(fs::path(a.checkpoint), res.model);
    auto out = detail::open_output(report);
    res.report.write_tsv(out);
    std::cerr << res.report.summary() << '\n';
    if (res.report.diverged) {
        std::cerr << "error: training diverged; saved the last finite parameters\n";
        return kExitError;
    }
    return kExitOk;
}

struct IndexArgs {
    std::string triples, index;
};

int cmd_build_index(const Globals& g, const IndexArgs& a)
{
    auto triples = load_triples(a.triples);
    Manifest m("build-index", g);
    m.input(a.triples);
    m.artifact(a.index);
    m.write();
    TripleIndex::build(std::move(triples)).save(fs::path(a.index));
    return kExitOk;
}

struct MineArgs {
    std::string index, items, candidates;
    MinerConfig miner;
};

int cmd_mine_refs(const Globals& g, const MineArgs& a)
{
    a.miner.validate();
    auto index = TripleIndex::load(fs::path(a.index));
    auto items = load_triples(a.items);
    Manifest m("mine-refs", g);
    m.config("candidates", a.miner.candidates);
    m.config("alpha", a.miner.alpha);
    m.config("epsilon", a.miner.epsilon);
    m.input(a.index);
    m.input(a.items);
    m.artifact(a.candidates);
    m.write();
    auto out = detail::open_output(a.candidates);
    for (const auto& item : items) {
        for (const auto& c : mine_candidates(index, item, a.miner)) {
            const auto& t = index.triple(c.doc);
            out << item.id << '\t' << t.id << '\t' << detail::format_double(c.score) << '\t' << join(t.response)
                << '\n';
        }
    }
    return kExitOk;
}

struct BuildRefsArgs {
    std::string items, candidates, ratings, refs;
    double threshold = 4.0;
};

int cmd_build_refs(const Globals& g, const BuildRefsArgs& a)
{
    auto items = load_triples(a.items);
    std::map<std::string, std::size_t> pos;
    std::vector<MinedItem> mined;
    for (const auto& t : items) {
        pos[t.id] = mined.size();
        mined.push_back({t, {}});
    }
    auto in = detail::open_input(a.candidates);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        detail::chomp(line);
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split(line, '\t');
        if (cols.size() != 4) throw ParseError("expected 4 columns in candidate file", n);
        auto it = pos.find(std::string(cols[0]));
        if (it == pos.end()) throw ParseError("candidate for unknown item '" + std::string(cols[0]) + "'", n);
        mined[it->second].candidates.emplace_back(std::string(cols[1]), tokenize(cols[3]));
    }
    auto ratings = read_ratings(fs::path(a.ratings));
    auto sets = build_reference_sets(mined, ratings, a.threshold);

    Manifest m("build-refs", g);
    m.config("threshold", a.threshold);
    m.input(a.items);
    m.input(a.candidates);
    m.input(a.ratings);
    m.artifact(a.refs);
    m.write();
    write_reference_sets(fs::path(a.refs), sets);
    auto st = reference_stats(sets);
    TableSink sink(g.out);
    sink.stream() << "statistic\tvalue\nitems\t" << st.items << "\nmean_refs\t" << detail::format_double(st.mean_refs)
                  << "\nmin_refs\t" << st.min_refs << "\nmax_refs\t" << st.max_refs << '\n';
    return kExitOk;
}

struct NbestArgs {
    std::string index, items, features = "ir_cmm", checkpoint, vocab, nbest;
    std::size_t n = 100;
};

int cmd_nbest(const Globals& g, const NbestArgs& a)
{
    FeatureContext fc;
    fc.load(a.index, a.checkpoint, a.vocab);
    auto items = load_triples(a.items);
    auto bundle = fc.providers(parse_feature_set(a.features));
    Manifest m("nbest", g);
    m.config("n", a.n);
    m.config("features", a.features);
    for (const auto* p : {&a.index, &a.items, &a.checkpoint, &a.vocab}) m.input(*p);
    m.artifact(a.nbest);
    m.write();
    write_nbest(fs::path(a.nbest), generate_ir_nbest(*fc.index, items, a.n, bundle.list));
    return kExitOk;
}

struct AugmentArgs {
    std::string nbest, items, checkpoint, vocab, out;
    std::vector<std::string> add{"cmm"};
};

int cmd_augment(const Globals& g, const AugmentArgs& a)
{
    FeatureContext fc;
    fc.load("", a.checkpoint, a.vocab);
    auto set = read_nbest(fs::path(a.nbest));
    attach_items(set, load_triples(a.items));
    std::vector<std::unique_ptr<FeatureProvider>> owned;
    for (const auto& name : a.add) {
        if (name == "cmm") {
            owned.push_back(std::make_unique<CmmProvider>());
        } else if (name == "word_penalty") {
            owned.push_back(std::make_unique<WordPenaltyProvider>());
        } else if (name == "model_logprob") {
            if (!fc.model) throw Error("model_logprob needs --checkpoint and --vocab");
            owned.push_back(std::make_unique<ModelLogProbProvider>(*fc.model, *fc.vocab));
        } else {
            throw Error("unknown feature provider '" + name + "'");
        }
    }
    ProviderList list;
    for (const auto& p : owned) list.push_back(p.get());
    Manifest m("augment", g);
    m.config("add", a.add);
    for (const auto* p : {&a.nbest, &a.items, &a.checkpoint, &a.vocab}) m.input(*p);
    m.artifact(a.out);
    m.write();
    augment_features(set, list);
    write_nbest(fs::path(a.out), set);
    return kExitOk;
}

struct TuneArgs {
    std::string nbest, refs, init, weights;
    std::size_t restarts = 0;
};

void write_tuning_table(std::ostream& out, const MertResult& r)
{
    out << "metric\tvalue\nbleu_before\t" << detail::format_double(r.bleu_before) << "\nbleu_after\t"
        << detail::format_double(r.bleu_after) << '\n';
}

int cmd_tune(const Globals& g, const TuneArgs& a)
{
    auto set = read_nbest(fs::path(a.nbest));
    auto refs = read_reference_sets(fs::path(a.refs));
    auto w0 = a.init.empty() ? LogLinearWeights::zeros(set.registry) : read_weights(fs::path(a.init));
    w0.registry.require_same(set.registry, "initial weights");
    Manifest m("tune", g);
    m.config("random_restarts", a.restarts);
    for (const auto* p : {&a.nbest, &a.refs, &a.init}) m.input(*p);
    m.artifact(a.weights);
    m.write();
    auto r = mert_iteration(set, align_references(set, refs), w0, {a.restarts, g.seed});
    write_weights(fs::path(a.weights), r.weights);
    TableSink sink(g.out);
    write_tuning_table(sink.stream(), r);
    return kExitOk;
}

struct RescoreArgs {
    std::string nbest, weights, out;
};

int cmd_rescore(const Globals& g, const RescoreArgs& a)
{
    auto set = read_nbest(fs::path(a.nbest));
    auto w = read_weights(fs::path(a.weights));
    w.registry.require_same(set.registry, "weights");
    Manifest m("rescore", g);
    m.input(a.nbest);
    m.input(a.weights);
    m.artifact(a.out);
    m.write();
    write_nbest(fs::path(a.out), rescore_nbest(set, w));
    return kExitOk;
}

struct EvalArgs {
    std::string nbest, hyps, refs;
    bool per_item = false;
};

int cmd_eval(const Globals& g, const EvalArgs& a)
{
    if (a.nbest.empty() == a.hyps.empty()) throw Error("give exactly one of --nbest and --hyps");
    auto hyps = a.nbest.empty() ? read_hypotheses(a.hyps, false) : read_hypotheses(a.nbest, true);
    auto report = evaluate(eval_items(hyps, read_reference_sets(fs::path(a.refs))));
    Manifest m("eval", g);
    m.config("per_item", a.per_item);
    for (const auto* p : {&a.nbest, &a.hyps, &a.refs}) m.input(*p);
    m.artifact(g.out);
    m.write();
    TableSink sink(g.out);
    write_report(sink.stream(), report, a.per_item);
    return kExitOk;
}

struct LooArgs {
    std::string refs, source = "human", hyps, pool;
    std::size_t trials = 100;
};

int cmd_loo(const Globals& g, const LooArgs& a)
{
    auto refs = read_reference_sets(fs::path(a.refs));
    std::vector<Tokens> hyps;
    HypothesisSource source = HypothesisSource::human;
    if (a.source == "system") {
        source = HypothesisSource::system;
        if (a.hyps.empty()) throw Error("--source system needs --hyps");
        std::map<std::string, Tokens> by_id;
        for (auto& [id, t] : read_hypotheses(a.hyps, false)) by_id[id] = t;
        for (const auto& r : refs) {
            auto it = by_id.find(r.test_id);
            if (it == by_id.end()) throw Error("no hypothesis for item '" + r.test_id + "'");
            hyps.push_back(it->second);
        }
    } else if (a.source == "random") {
        source = HypothesisSource::random;
        if (a.pool.empty()) throw Error("--source random needs --pool");
        auto pool = load_triples(a.pool);
        std::mt19937_64 rng(g.seed);
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t i = 0; i < refs.size(); ++i) hyps.push_back(pool[pick(rng)].response);
    }
    auto r = leave_one_out_bleu(refs, source, hyps, a.trials, g.seed);
    Manifest m("loo", g);
    m.config("source", a.source);
    m.config("trials", a.trials);
    for (const auto* p : {&a.refs, &a.hyps, &a.pool}) m.input(*p);
    m.artifact(g.out);
    m.write();
    TableSink sink(g.out);
    sink.stream() << "metric\tvalue\nsource\t" << a.source << "\nmean_bleu\t" << detail::format_double(r.mean_bleu)
                  << "\ntrials\t" << r.trials << "\nscored_items\t" << r.scored_items << "\nexcluded_items\t"
                  << r.excluded_items << '\n';
    return kExitOk;
}

struct GradcheckArgs {
    std::vector<std::string> families{"rlmt", "dcgm1", "dcgm2"};
    GradCheckConfig cfg;
};

int cmd_gradcheck(const Globals& g, GradcheckArgs a)
{
    a.cfg.seed = g.seed;
    TableSink sink(g.out);
    auto& out = sink.stream();
    out << "family\tinstances\tcomponents\tfailures\tworst_relative_error\tstatus\n";
    bool ok = true;
    for (const auto& name : a.families) {
        auto r = gradient_check(parse_family(name), a.cfg);
        ok = ok && r.passed();
        out << name << '\t' << r.instances << '\t' << r.components << '\t' << r.failures << '\t'
            << detail::format_double(r.worst.relative) << '\t' << (r.passed() ? "PASS" : "FAIL") << '\n';
    }
    return ok ? kExitOk : kExitError;
}

struct ReplArgs {
    std::string index, checkpoint, vocab, weights, features = "ir_cmm";
    std::size_t k = 10;
};

int cmd_repl(const Globals&, const ReplArgs& a)
{
    FeatureContext fc;
    fc.load(a.index, a.checkpoint, a.vocab);
    auto bundle = fc.providers(parse_feature_set(a.features));
    auto registry = build_registry(bundle.list);
    std::optional<LogLinearWeights> w;
    if (!a.weights.empty()) {
        w = read_weights(fs::path(a.weights));
        w->registry.require_same(registry, "weights");
    }
    std::string context, message;
    while (true) {
        std::cout << "context> " << std::flush;
        if (!std::getline(std::cin, context)) break;
        std::cout << "message> " << std::flush;
        if (!std::getline(std::cin, message)) break;
        if (detail::trim(message).empty()) continue;
        try {
            std::vector<Triple> item{{"<query>", tokenize(context), tokenize(message), {}}};
            auto set = generate_ir_nbest(*fc.index, item, a.k, bundle.list);
            const auto& list = w ? rescore_nbest(set, *w).lists[0] : set.lists[0];
            std::cout << "rank\tsource\ttotal\tresponse";
            for (const auto& name : registry.names()) std::cout << '\t' << name;
            std::cout << '\n';
            for (std::size_t i = 0; i < list.hyps.size(); ++i) {
                const auto& h = list.hyps[i];
                std::cout << i + 1 << '\t' << fc.index->triple(*h.source_doc).id << '\t'
                          << detail::format_double(h.total) << '\t' << join(h.tokens);
                for (double f : h.features) std::cout << '\t' << detail::format_double(f);
                std::cout << '\n';
            }
        } catch (const std::exception& e) {
            std::cout << "error: " << e.what() << '\n';
        }
    }
    std::cout << '\n';
    return kExitOk;
}

struct PipelineArgs {
    std::string tune_nbest, tune_refs, test_nbest, test_refs, init, out_dir;
    std::size_t restarts = 0;
    bool per_item = false;
};

int cmd_pipeline(const Globals& g, const PipelineArgs& a)
{
    auto tune = read_nbest(fs::path(a.tune_nbest));
    auto test = read_nbest(fs::path(a.test_nbest));
    test.registry.require_same(tune.registry, "test n-best");
    auto tune_refs = read_reference_sets(fs::path(a.tune_refs));
    auto test_refs = read_reference_sets(fs::path(a.test_refs));
    auto w0 = a.init.empty() ? LogLinearWeights::zeros(tune.registry) : read_weights(fs::path(a.init));
    w0.registry.require_same(tune.registry, "initial weights");
    auto aligned = align_references(tune, tune_refs);
    align_references(test, test_refs);

    fs::create_directories(a.out_dir);
    fs::path dir(a.out_dir);
    Manifest m("pipeline", g);
    m.config("random_restarts", a.restarts);
    m.config("per_item", a.per_item);
    for (const auto* p : {&a.tune_nbest, &a.tune_refs, &a.test_nbest, &a.test_refs, &a.init}) m.input(*p);
    for (const char* name : {"weights.tsv", "test.rescored.nbest", "report.tsv", "baseline_report.tsv", "tuning.tsv"}) {
        m.artifact((dir / name).string());
    }
    m.write();

    auto tuned = mert_iteration(tune, aligned, w0, {a.restarts, g.seed});
    write_weights(dir / "weights.tsv", tuned.weights);
    auto rescored = rescore_nbest(test, tuned.weights);
    write_nbest(dir / "test.rescored.nbest", rescored);
    {
        auto out = detail::open_output(dir / "report.tsv");
        write_report(out, evaluate(eval_items(rescored, test_refs)), a.per_item);
    }
    {
        auto out = detail::open_output(dir / "baseline_report.tsv");
        write_report(out, evaluate(eval_items(test, test_refs)), a.per_item);
    }
    {
        auto out = detail::open_output(dir / "tuning.tsv");
        write_tuning_table(out, tuned);
    }
    TableSink sink(g.out);
    write_tuning_table(sink.stream(), tuned);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    Globals g;
    g.argv.assign(argv, argv + argc);
    CLI::App app{"Context-sensitive response generation: training, retrieval, rescoring and evaluation"};
    app.require_subcommand(1);
    app.add_option("--config", g.config, "Training config file (key = value lines)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--out", g.out, "Write the command's table here instead of standard output");
    app.add_option("--set", g.overrides, "Override a config value (key=value); repeatable");

    std::function<int()> run;
    auto sub = [&](const char* name, const char* help) {
        auto* s = app.add_subcommand(name, help);
        s->fallthrough();
        return s;
    };

    IngestArgs ingest;
    auto* s = sub("ingest", "Filter a triple TSV and build the vocabulary");
    s->add_option("--corpus", ingest.corpus, "id<TAB>context<TAB>message<TAB>response file")->required();
    s->add_option("--out-dir", ingest.out_dir, "Directory for triples.tsv, vocab.txt, ingest_stats.tsv")->required();
    s->callback([&] { run = [&] { return cmd_ingest(g, ingest); }; });

    TrainArgs tr;
    s = sub("train", "Train an rlmt, dcgm1 or dcgm2 model");
    s->add_option("--family", tr.family)->required()->check(CLI::IsMember(kFamilies));
    s->add_option("--triples", tr.triples)->required();
    s->add_option("--vocab", tr.vocab)->required();
    s->add_option("--heldout", tr.heldout, "Held-out triples (default: tail of the training file)");
    s->add_option("--checkpoint", tr.checkpoint)->required();
    s->add_option("--report", tr.report, "Trajectory TSV (default: <checkpoint>.report.tsv)");
    s->callback([&] { run = [&] { return cmd_train(g, tr); }; });

    IndexArgs idx;
    s = sub("build-index", "Build the BM25 index over a triple file");
    s->add_option("--triples", idx.triples)->required();
    s->add_option("--index", idx.index)->required();
    s->callback([&] { run = [&] { return cmd_build_index(g, idx); }; });

    MineArgs mine;
    s = sub("mine-refs", "Propose candidate references for test triples");
    s->add_option("--index", mine.index)->required();
    s->add_option("--items", mine.items)->required();
    s->add_option("--candidates-out", mine.candidates)->required();
    s->add_option("--candidates", mine.miner.candidates, "Candidates per item")->capture_default_str();
    s->add_option("--alpha", mine.miner.alpha)->capture_default_str();
    s->add_option("--epsilon", mine.miner.epsilon)->capture_default_str();
    s->callback([&] { run = [&] { return cmd_mine_refs(g, mine); }; });

    BuildRefsArgs br;
    s = sub("build-refs", "Keep rated candidates as references");
    s->add_option("--items", br.items)->required();
    s->add_option("--candidates", br.candidates)->required();
    s->add_option("--ratings", br.ratings)->required();
    s->add_option("--refs", br.refs)->required();
    s->add_option("--threshold", br.threshold)->capture_default_str();
    s->callback([&] { run = [&] { return cmd_build_refs(g, br); }; });

    NbestArgs nb;
    s = sub("nbest", "Retrieve and featurize IR n-best lists");
    s->add_option("--index", nb.index)->required();
    s->add_option("--items", nb.items)->required();
    s->add_option("--n", nb.n)->capture_default_str();
    s->add_option("--features", nb.features)->check(CLI::IsMember(kFeatureSets))->capture_default_str();
    s->add_option("--checkpoint", nb.checkpoint);
    s->add_option("--vocab", nb.vocab);
    s->add_option("--nbest", nb.nbest)->required();
    s->callback([&] { run = [&] { return cmd_nbest(g, nb); }; });

    AugmentArgs aug;
    s = sub("augment", "Append features to an existing n-best file");
    s->add_option("--nbest", aug.nbest)->required();
    s->add_option("--items", aug.items, "Triples supplying context and message per item")->required();
    s->add_option("--add", aug.add, "cmm, word_penalty, model_logprob")->delimiter(',')->capture_default_str();
    s->add_option("--checkpoint", aug.checkpoint);
    s->add_option("--vocab", aug.vocab);
    s->add_option("--nbest-out", aug.out)->required();
    s->callback([&] { run = [&] { return cmd_augment(g, aug); }; });

    TuneArgs tune;
    s = sub("tune", "One MERT iteration on a tuning n-best set");
    s->add_option("--nbest", tune.nbest)->required();
    s->add_option("--refs", tune.refs)->required();
    s->add_option("--init", tune.init, "Starting weights (default: zeros)");
    s->add_option("--weights", tune.weights)->required();
    s->add_option("--restarts", tune.restarts)->capture_default_str();
    s->callback([&] { run = [&] { return cmd_tune(g, tune); }; });

    RescoreArgs rs;
    s = sub("rescore", "Rerank n-best lists under tuned weights");
    s->add_option("--nbest", rs.nbest)->required();
    s->add_option("--weights", rs.weights)->required();
    s->add_option("--nbest-out", rs.out)->required();
    s->callback([&] { run = [&] { return cmd_rescore(g, rs); }; });

    EvalArgs ev;
    s = sub("eval", "BLEU and meteor-lite report");
    s->add_option("--nbest", ev.nbest, "Score the top entry of each list");
    s->add_option("--hyps", ev.hyps, "id<TAB>response file");
    s->add_option("--refs", ev.refs)->required();
    s->add_flag("--per-item", ev.per_item);
    s->callback([&] { run = [&] { return cmd_eval(g, ev); }; });

    LooArgs loo;
    s = sub("loo", "Leave-one-out multi-reference BLEU");
    s->add_option("--refs", loo.refs)->required();
    s->add_option("--source", loo.source)->check(CLI::IsMember({"human", "system", "random"}))->capture_default_str();
    s->add_option("--hyps", loo.hyps, "id<TAB>response file for --source system");
    s->add_option("--pool", loo.pool, "Triples to draw responses from for --source random");
    s->add_option("--trials", loo.trials)->capture_default_str();
    s->callback([&] { run = [&] { return cmd_loo(g, loo); }; });

    GradcheckArgs gc;
    s = sub("gradcheck", "Finite-difference check of the analytic gradients");
    s->add_option("--family", gc.families)->check(CLI::IsMember(kFamilies))->delimiter(',')->capture_default_str();
    s->add_option("--instances", gc.cfg.instances)->capture_default_str();
    s->add_option("--epsilon", gc.cfg.epsilon)->capture_default_str();
    s->add_option("--tolerance", gc.cfg.tolerance)->capture_default_str();
    s->callback([&] { run = [&] { return cmd_gradcheck(g, gc); }; });

    ReplArgs repl;
    s = sub("repl", "Interactive retrieval and rescoring");
    s->add_option("--index", repl.index)->required();
    s->add_option("--checkpoint", repl.checkpoint);
    s->add_option("--vocab", repl.vocab);
    s->add_option("--weights", repl.weights);
    s->add_option("--features", repl.features)->check(CLI::IsMember(kFeatureSets))->capture_default_str();
    s->add_option("-k,--k", repl.k)->capture_default_str();
    s->callback([&] { run = [&] { return cmd_repl(g, repl); }; });

    PipelineArgs pl;
    s = sub("pipeline", "Tune on one n-best set, rescore and evaluate another");
    s->add_option("--tune-nbest", pl.tune_nbest)->required();
    s->add_option("--tune-refs", pl.tune_refs)->required();
    s->add_option("--test-nbest", pl.test_nbest)->required();
    s->add_option("--test-refs", pl.test_refs)->required();
    s->add_option("--init", pl.init);
    s->add_option("--out-dir", pl.out_dir)->required();
    s->add_option("--restarts", pl.restarts)->capture_default_str();
    s->add_flag("--per-item", pl.per_item);
    s->callback([&] { run = [&] { return cmd_pipeline(g, pl); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        return run();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}
