// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcgm/error.hpp"
#include "dcgm/gradcheck.hpp"
#include "dcgm/metrics.hpp"
#include "dcgm/model.hpp"
#include "dcgm/rescoring.hpp"
#include "dcgm/retrieval.hpp"
#include "dcgm/rnnlm.hpp"
#include "dcgm/trainer.hpp"
#include "fixtures.hpp"

using namespace dcgm;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness()
{
    auto t0 = std::chrono::steady_clock::now();
    GradCheckConfig cfg;
    bool ok = true;
    double worst = 0.0;
    std::size_t components = 0;
    for (auto f : {ModelFamily::rlmt, ModelFamily::dcgm1, ModelFamily::dcgm2}) {
        auto r = gradient_check(f, cfg);
        ok = ok && r.passed() && r.instances == 25;
        worst = std::max(worst, r.worst.relative);
        components += r.components;
    }
    double secs = seconds_since(t0);
    ok = ok && secs < 60.0;
    return {ok, fmt("3 families x 25 instances, %zu components, worst relative error %.2e, %.1fs", components, worst,
                    secs)};
}

Eigen::VectorXd flatten(const RlmGradients& g)
{
    Eigen::VectorXd v(g.w_in.size() + g.w_hh.size() + g.w_out.size());
    v << g.w_in.reshaped(), g.w_hh.reshaped(), g.w_out.reshaped();
    return v;
}

Outcome nce_fidelity()
{
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t v = 20, k = 8, samples = 20, resamplings = 500;
    double worst = 1.0;
    for (std::uint64_t m = 0; m < 10; ++m) {
        Rng rng(100 + m);
        RlmParams p(v, k);
        std::normal_distribution<double> g(0.0, 0.1);
        for (auto* t : {&p.w_in, &p.w_hh, &p.w_out}) {
            for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = g(rng);
        }
        std::vector<std::uint64_t> counts(v);
        std::uniform_int_distribution<std::uint64_t> cd(10, 100);
        for (auto& c : counts) c = cd(rng);
        NoiseDistribution noise(counts);
        Ids ids{Vocabulary::kStart};
        std::uniform_int_distribution<WordId> wd(Vocabulary::kNumReserved, static_cast<WordId>(v - 1));
        for (int t = 0; t < 6; ++t) ids.push_back(wd(rng));
        ids.push_back(Vocabulary::kEnd);
        std::span<const WordId> s(ids);
        auto exact = flatten(rlm_backward(rlm_forward(p, s.first(s.size() - 1)), p, s.subspan(1)));
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(exact.size());
        double log_z = std::log(static_cast<double>(v));
        for (std::size_t r = 0; r < resamplings; ++r) mean += flatten(nce_loss(p, ids, noise, samples, rng, {}, log_z).grad);
        double cos = mean.dot(exact) / (mean.norm() * exact.norm());
        worst = std::min(worst, cos);
    }
    double secs = seconds_since(t0);
    return {worst >= 0.99 && secs < 60.0,
            fmt("10 models, k=%zu, %zu resamplings, min cosine %.4f, %.1fs", samples, resamplings, worst, secs)};
}

double pairwise_accuracy(const Model& model, const std::vector<Example>& test, const std::vector<std::size_t>& topics,
                         std::size_t n_topics, const Vocabulary& vocab)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> other(0, n_topics - 2);
    double score = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::size_t answer = fixtures::topic_answer(topics[i], n_topics);
        std::size_t b = other(rng);
        if (b >= answer) ++b;
        Example bad = test[i];
        bad.response = encode(fixtures::topic_response(b), vocab);
        double good_lp = response_log_prob(model, test[i]);
        double bad_lp = response_log_prob(model, bad);
        score += good_lp > bad_lp ? 1.0 : (good_lp == bad_lp ? 0.5 : 0.0);
    }
    return score / static_cast<double>(test.size());
}

Outcome context_sensitivity()
{
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t n_topics = 20;
    auto corpus = fixtures::make_topic_corpus(2000, n_topics, 7);
    auto vocab = build_vocab(corpus.triples, 1000);

    auto split = [&](bool drop_context, std::vector<Example>& tr, std::vector<Example>& dev, std::vector<Example>& te,
                     std::vector<std::size_t>& te_topics) {
        for (std::size_t i = 0; i < corpus.triples.size(); ++i) {
            Triple t = corpus.triples[i];
            if (drop_context) t.context.clear();
            auto ex = encode_example(t, vocab);
            if (i < 1700) {
                tr.push_back(ex);
            } else if (i < 1800) {
                dev.push_back(ex);
            } else {
                te.push_back(ex);
                te_topics.push_back(corpus.topic[i]);
            }
        }
    };

    TrainConfig cfg;
    cfg.hidden = 16;
    cfg.encoder_layers = {16, 16, 16};
    cfg.init_stddev = 0.3;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 100;
    cfg.max_epochs = 100;

    auto run = [&](ModelFamily f, bool drop_context) {
        std::vector<Example> tr, dev, te;
        std::vector<std::size_t> topics;
        split(drop_context, tr, dev, te, topics);
        auto res = train(tr, dev, f, vocab, cfg);
        return pairwise_accuracy(res.model, te, topics, n_topics, vocab);
    };
    double d1 = run(ModelFamily::dcgm1, false);
    double d2 = run(ModelFamily::dcgm2, false);
    double ablation = run(ModelFamily::dcgm1, true);
    double secs = seconds_since(t0);
    bool ok = d1 >= 0.9 && d2 >= 0.9 && std::abs(ablation - 0.5) <= 0.1 && secs < 600.0;
    return {ok, fmt("200 held-out items: dcgm1 %.3f, dcgm2 %.3f, message-only ablation %.3f, %.1fs", d1, d2, ablation,
                    secs)};
}

Outcome overfit_sanity()
{
    Triple t{"x", tokenize("did you watch the game last night ?"), tokenize("yes , what a finish !"),
             tokenize("i could not believe that last goal")};
    std::vector<Triple> corpus;
    for (int i = 0; i < 50; ++i) {
        Triple u = t;
        u.id = "x" + std::to_string(i);
        corpus.push_back(u);
    }
    auto vocab = build_vocab(corpus, 1000);
    std::vector<Example> ex;
    for (const auto& u : corpus) ex.push_back(encode_example(u, vocab));
    double worst = 0.0;
    for (auto f : {ModelFamily::rlmt, ModelFamily::dcgm1, ModelFamily::dcgm2}) {
        for (std::uint64_t seed : {1, 2, 3}) {
            TrainConfig cfg;
            cfg.hidden = 16;
            cfg.encoder_layers = {16, 8, 16};
            cfg.max_epochs = 200;
            cfg.seed = seed;
            auto r = train(ex, {}, f, vocab, cfg);
            worst = std::max(worst, response_perplexity(r.model, ex));
        }
    }
    return {worst < 1.3, fmt("3 families x 3 seeds, 200 epochs, worst perplexity %.4f", worst)};
}

Outcome loo_ordering()
{
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        auto corpus = fixtures::make_multiref_corpus(300, 10, seed);
        std::span<const Triple> items(corpus.items);
        std::span<const ReferenceSet> refs(corpus.refs);
        auto test_items = items.first(200), tune_items = items.subspan(200);
        auto test_refs = refs.first(200), tune_refs = refs.subspan(200);

        auto index = TripleIndex::build(corpus.pool);
        auto bundle = make_providers(FeatureSet::ir_cmm, &index, nullptr, nullptr);
        auto tune = generate_ir_nbest(index, tune_items, 20, bundle.list);
        auto w0 = LogLinearWeights::zeros(tune.registry);
        w0.values[*tune.registry.find("ir_score")] = 1.0;
        auto tuned = mert_iteration(tune, align_references(tune, tune_refs), w0);

        auto test = generate_ir_nbest(index, test_items, 20, bundle.list);
        std::vector<Tokens> system, random;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, corpus.pool.size() - 1);
        for (const auto& list : test.lists) {
            system.push_back(list.hyps[best_hypothesis(list, tuned.weights, test.registry)].tokens);
            random.push_back(corpus.pool[pick(rng)].response);
        }
        auto r = leave_one_out_bleu(test_refs, HypothesisSource::random, random, 100, seed);
        auto s = leave_one_out_bleu(test_refs, HypothesisSource::system, system, 100, seed);
        auto h = leave_one_out_bleu(test_refs, HypothesisSource::human, {}, 100, seed);
        ok = ok && r.mean_bleu < s.mean_bleu && s.mean_bleu < h.mean_bleu;
        detail += fmt("%sseed %llu: %.4f < %.4f < %.4f", detail.empty() ? "" : "; ",
                      static_cast<unsigned long long>(seed), r.mean_bleu, s.mean_bleu, h.mean_bleu);
    }
    return {ok, "random < system < human, " + detail};
}

NBestSet random_nbest(std::mt19937_64& rng, std::size_t lists, std::size_t hyps, std::size_t features)
{
    std::normal_distribution<double> g(0.0, 1.0);
    NBestSet set;
    for (std::size_t f = 0; f < features; ++f) set.registry.add("f" + std::to_string(f));
    for (std::size_t l = 0; l < lists; ++l) {
        NBestList list{"i" + std::to_string(l), {}, {}, {}};
        for (std::size_t h = 0; h < hyps; ++h) {
            Hypothesis hyp;
            hyp.tokens = fixtures::random_tokens(rng, 7, 3, false);
            for (std::size_t f = 0; f < features; ++f) hyp.features.push_back(g(rng));
            list.hyps.push_back(std::move(hyp));
        }
        set.lists.push_back(std::move(list));
    }
    return set;
}

ReferenceLists random_references(std::mt19937_64& rng, std::size_t lists)
{
    ReferenceLists refs(lists);
    for (auto& r : refs) {
        for (int k = 0; k < 2; ++k) r.push_back(fixtures::random_tokens(rng, 7, 3, false));
    }
    return refs;
}

Outcome mert_monotonicity()
{
    std::mt19937_64 rng(2024);
    std::size_t decreases = 0, improved = 0;
    for (int rep = 0; rep < 100; ++rep) {
        auto set = random_nbest(rng, 5, 8, 4);
        auto refs = random_references(rng, 5);
        std::normal_distribution<double> g(0.0, 1.0);
        LogLinearWeights w0{set.registry, {g(rng), g(rng), g(rng), g(rng)}};
        auto r = mert_iteration(set, refs, w0);
        double check = tuning_bleu(set, refs, r.weights);
        if (r.bleu_after < r.bleu_before || check != r.bleu_after) ++decreases;
        if (r.bleu_after > r.bleu_before) ++improved;
    }

    std::size_t oracle_misses = 0, grid_misses = 0;
    const std::size_t oracle_fixtures = 50;
    for (std::size_t rep = 0; rep < oracle_fixtures; ++rep) {
        auto base = random_nbest(rng, 3, 3, 1);
        auto refs = random_references(rng, 3);
        double oracle = -1.0;
        std::vector<std::size_t> best(3);
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) {
                for (std::size_t c = 0; c < 3; ++c) {
                    std::size_t pick[3] = {a, b, c};
                    BleuStats s;
                    for (std::size_t l = 0; l < 3; ++l) s += bleu_stats(base.lists[l].hyps[pick[l]].tokens, refs[l]);
                    double v = corpus_bleu(s);
                    if (v > oracle) {
                        oracle = v;
                        best = {a, b, c};
                    }
                }
            }
        }
        NBestSet marked;
        marked.registry = FeatureRegistry({"oracle", "noise"});
        for (std::size_t l = 0; l < 3; ++l) {
            NBestList list = base.lists[l];
            for (std::size_t h = 0; h < 3; ++h) {
                list.hyps[h].features = {h == best[l] ? 1.0 : 0.0, base.lists[l].hyps[h].features[0]};
            }
            marked.lists.push_back(std::move(list));
        }
        auto r = mert_iteration(marked, refs, LogLinearWeights::zeros(marked.registry));
        if (r.bleu_after != oracle) ++oracle_misses;
        double grid = 0.0;
        for (int i = -400; i <= 400; ++i) {
            LogLinearWeights w{marked.registry, {i * 0.05, 0.0}};
            grid = std::max(grid, tuning_bleu(marked, refs, w));
        }
        if (grid != oracle) ++grid_misses;
    }
    bool ok = decreases == 0 && oracle_misses == 0 && grid_misses == 0;
    return {ok, fmt("100 random fixtures: %zu decreases (%zu improved); %zu oracle fixtures: %zu MERT misses, %zu grid "
                    "misses",
                    decreases, improved, oracle_fixtures, oracle_misses, grid_misses)};
}

Outcome oracle_equivalences()
{
    std::size_t bm25_checks = 0, bm25_bad = 0;
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<Triple> ts;
        std::size_t n = 1 + rep % 15;
        for (std::size_t i = 0; i < n; ++i) {
            ts.push_back({std::to_string(i), fixtures::random_tokens(rng, 4, 6, false),
                          fixtures::random_tokens(rng, 8, 6, false), fixtures::random_tokens(rng, 8, 6, false)});
        }
        auto idx = TripleIndex::build(ts);
        for (auto f : {Field::message, Field::response}) {
            std::vector<Tokens> docs;
            for (const auto& t : ts) docs.push_back(f == Field::message ? t.message : t.response);
            for (int q = 0; q < 5; ++q) {
                auto query = fixtures::random_tokens(rng, 6, 8);
                std::vector<double> full(n, 0.0);
                for (auto [doc, s] : idx.score_all(query, f)) full[doc] = s;
                for (DocId d = 0; d < n; ++d) {
                    double oracle = fixtures::brute_bm25(query, docs, d);
                    ++bm25_checks;
                    if (idx.score(query, d, f) != oracle || full[d] != oracle) ++bm25_bad;
                }
            }
        }
    }

    std::size_t bleu_bad = 0;
    {
        std::vector<Tokens> refs{{"a", "b", "c", "e"}};
        auto s = bleu_stats({"a", "b", "c", "d"}, refs);
        if (s.matches != std::array<std::int64_t, 4>{3, 2, 1, 0} || s.totals != std::array<std::int64_t, 4>{4, 3, 2, 1} ||
            corpus_bleu(s) != 0.0) {
            ++bleu_bad;
        }
        Tokens h{"a", "b", "c", "d", "e"};
        std::vector<Tokens> self{h};
        auto e = bleu_stats(h, self);
        if (e.matches != e.totals || corpus_bleu(e) != 1.0) ++bleu_bad;
        std::vector<Tokens> two{{"a"}, {"a"}};
        auto c = bleu_stats({"a", "a"}, two);
        if (c.matches[0] != 1 || c.totals[0] != 2) ++bleu_bad;
        BleuStats bp;
        bp.matches = bp.totals = {4, 3, 2, 1};
        bp.hyp_len = 4;
        bp.ref_len = 8;
        if (std::abs(corpus_bleu(bp) - std::exp(-1.0)) > 1e-15) ++bleu_bad;
    }

    std::size_t cmm_bad = 0;
    for (int i = 0; i < 1000; ++i) {
        auto c = fixtures::random_tokens(rng, 8, 4);
        auto m = fixtures::random_tokens(rng, 8, 4);
        auto r = fixtures::random_tokens(rng, 8, 4);
        auto f = cmm_features(c, m, r);
        for (std::size_t n = 1; n <= kCmmMaxOrder; ++n) {
            if (f[n - 1] != static_cast<double>(fixtures::brute_cmm(c, r, n)) ||
                f[kCmmMaxOrder + n - 1] != static_cast<double>(fixtures::brute_cmm(m, r, n))) {
                ++cmm_bad;
                break;
            }
        }
    }
    bool ok = bm25_bad == 0 && bleu_bad == 0 && cmm_bad == 0;
    return {ok, fmt("bm25 %zu/%zu exact, bleu worked examples %zu mismatches, cmm 1000 instances %zu mismatches",
                    bm25_checks - bm25_bad, bm25_checks, bleu_bad, cmm_bad)};
}

Outcome feature_accounting()
{
    std::vector<Triple> corpus{{"1", {"hi"}, {"a", "b"}, {"c"}}, {"2", {"yo"}, {"b"}, {"d"}}};
    auto idx = TripleIndex::build(corpus);
    auto vocab = build_vocab(corpus, 10);
    auto model = zero_model(ModelFamily::dcgm2, vocab.size(), 4, std::vector<std::size_t>{4, 4});
    model.vocab_hash = vocab.hash();
    auto size = [&](FeatureSet s) {
        auto b = make_providers(s, &idx, &model, &vocab);
        return build_registry(b.list).size();
    };
    std::size_t ir_cmm = size(FeatureSet::ir_cmm), neural_cmm = size(FeatureSet::neural_cmm),
                neural = size(FeatureSet::neural);

    NBestSet mt;
    for (int i = 0; i < 9; ++i) mt.registry.add("mt_" + std::to_string(i));
    mt.lists.push_back({"1", {"hi"}, {"a", "b"}, {{{"a", "c"}, std::vector<double>(9, 0.0), 0.0, std::nullopt}}});
    CmmProvider cmm;
    ProviderList pl{&cmm};
    augment_features(mt, pl);
    bool ok = ir_cmm == 10 && neural_cmm == 10 && neural == 2 && mt.registry.size() == 17;
    return {ok, fmt("IR+CMM %zu, DCGM+CMM %zu, neural-only %zu, MT+CMM %zu", ir_cmm, neural_cmm, neural,
                    mt.registry.size())};
}

struct PipelineOutputs {
    std::string checkpoint, train_report, weights, nbest, eval_report;
    bool operator==(const PipelineOutputs&) const = default;
};

PipelineOutputs run_pipeline(std::size_t threads)
{
    auto corpus = fixtures::make_multiref_corpus(120, 6, 5);
    auto vocab = build_vocab(corpus.pool, 1000);
    std::vector<Example> train_set, heldout;
    for (std::size_t i = 0; i < corpus.pool.size(); ++i) {
        (i % 10 == 0 ? heldout : train_set).push_back(encode_example(corpus.pool[i], vocab));
    }
    TrainConfig cfg;
    cfg.hidden = 8;
    cfg.encoder_layers = {8, 8};
    cfg.max_epochs = 4;
    cfg.batch_size = 16;
    cfg.seed = 11;
    cfg.threads = threads;
    cfg.objective = Objective::nce;
    auto trained = train(train_set, heldout, ModelFamily::dcgm2, vocab, cfg);
    trained.model.vocab_hash = vocab.hash();

    PipelineOutputs out;
    out.checkpoint = serialize_checkpoint(trained.model);
    std::ostringstream tr;
    trained.report.write_tsv(tr);
    out.train_report = tr.str();

    auto index = TripleIndex::build(corpus.pool);
    auto bundle = make_providers(FeatureSet::neural_cmm, &index, &trained.model, &vocab);
    std::span<const Triple> items(corpus.items);
    auto set = generate_ir_nbest(index, items, 10, bundle.list);
    auto refs = align_references(set, corpus.refs);
    auto tuned = mert_iteration(set, refs, LogLinearWeights::zeros(set.registry), {2, 9});
    std::ostringstream w, nb;
    write_weights(w, tuned.weights);
    out.weights = w.str();
    auto rescored = rescore_nbest(set, tuned.weights);
    write_nbest(nb, rescored);
    out.nbest = nb.str();

    std::vector<EvalItem> eval;
    for (std::size_t i = 0; i < rescored.lists.size(); ++i) {
        eval.push_back({rescored.lists[i].item_id, rescored.lists[i].hyps[0].tokens, refs[i]});
    }
    std::ostringstream er;
    write_report(er, evaluate(eval), true);
    out.eval_report = er.str();
    return out;
}

Outcome determinism()
{
    auto a = run_pipeline(1);
    auto b = run_pipeline(1);
    auto c = run_pipeline(3);
    bool ok = a == b && a == c;
    return {ok, fmt("checkpoint %zu bytes, weights, n-best, train and eval reports identical across two runs%s",
                    a.checkpoint.size(), a == c ? " and across thread counts 1/3" : "; thread counts differ")};
}

}  // namespace

int main()
{
    std::vector<std::function<Outcome()>> criteria{
        gradient_correctness, nce_fidelity,     context_sensitivity, overfit_sanity, loo_ordering,
        mert_monotonicity,    oracle_equivalences, feature_accounting, determinism,
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s criterion %zu: %s\n", o.pass ? "PASS" : "FAIL", i + 1, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
