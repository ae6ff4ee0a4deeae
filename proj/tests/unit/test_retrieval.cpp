#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dcgm/error.hpp"
#include "dcgm/retrieval.hpp"
#include "fixtures.hpp"

using namespace dcgm;

namespace {

std::vector<Triple> five_triples()
{
    auto t = [](const char* id, const char* c, const char* m, const char* r) {
        return Triple{id, tokenize(c), tokenize(m), tokenize(r)};
    };
    return {
        t("a", "hi", "did you see the game last night", "yes the game was great"),
        t("b", "hey", "what are you doing tonight", "watching the game"),
        t("c", "yo", "the game was boring", "i fell asleep"),
        t("d", "so", "are you coming to the party", "yes i am coming"),
        t("e", "ok", "night night", "good night"),
    };
}

std::vector<Tokens> field(const std::vector<Triple>& ts, Field f)
{
    std::vector<Tokens> out;
    for (const auto& t : ts) out.push_back(f == Field::message ? t.message : t.response);
    return out;
}

}  // namespace

TEST_CASE("bm25 basics")
{
    std::vector<Triple> two{{"1", {"c"}, {"x", "y"}, {"r"}}, {"2", {"c"}, {"z"}, {"r"}}};
    auto idx = TripleIndex::build(two);
    CHECK(idx.idf("x", Field::message) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(idx.score({"q"}, 0, Field::message) == 0.0);
    CHECK_THROWS_AS(idx.score({"x"}, 5, Field::message), Error);
    CHECK_THROWS_AS(TripleIndex::build({}), Error);
}

TEST_CASE("bm25 equals the brute-force scan on the 5-triple fixture")
{
    auto ts = five_triples();
    auto idx = TripleIndex::build(ts);
    for (auto f : {Field::message, Field::response}) {
        auto docs = field(ts, f);
        for (const auto& t : ts) {
            for (const auto* q : {&t.message, &t.response, &t.context}) {
                std::vector<double> full(ts.size(), 0.0);
                for (auto [doc, s] : idx.score_all(*q, f)) full[doc] = s;
                for (DocId d = 0; d < ts.size(); ++d) {
                    double oracle = fixtures::brute_bm25(*q, docs, d);
                    CHECK(idx.score(*q, d, f) == oracle);
                    CHECK(full[d] == oracle);
                }
            }
        }
    }
}

TEST_CASE("bm25 equals the brute-force scan on random collections")
{
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<Triple> ts;
        std::size_t n = 1 + rep % 12;
        for (std::size_t i = 0; i < n; ++i) {
            ts.push_back({std::to_string(i), fixtures::random_tokens(rng, 4, 6, false),
                          fixtures::random_tokens(rng, 8, 6, false), fixtures::random_tokens(rng, 8, 6, false)});
        }
        auto idx = TripleIndex::build(ts);
        auto docs = field(ts, Field::message);
        for (int q = 0; q < 5; ++q) {
            auto query = fixtures::random_tokens(rng, 6, 8);
            for (DocId d = 0; d < n; ++d) CHECK(idx.score(query, d, Field::message) == fixtures::brute_bm25(query, docs, d));
        }
    }
}

TEST_CASE("index save/load")
{
    auto idx = TripleIndex::build(five_triples());
    std::stringstream ss;
    idx.save(ss);
    auto back = TripleIndex::load(ss);
    CHECK(back.triples() == idx.triples());
    Tokens q = tokenize("the game tonight");
    for (DocId d = 0; d < 5; ++d) CHECK(back.score(q, d, Field::message) == idx.score(q, d, Field::message));

    std::string bytes;
    {
        std::ostringstream o;
        idx.save(o);
        bytes = o.str();
    }
    std::istringstream bad(bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(TripleIndex::load(bad), ParseError);
}

TEST_CASE("ir_nbest")
{
    auto ts = five_triples();
    auto idx = TripleIndex::build(ts);
    for (DocId d = 0; d < ts.size(); ++d) {
        auto top = ir_nbest(idx, ts[d].message, 1);
        REQUIRE(top.size() == 1);
        CHECK(top[0].doc == d);
    }
    auto all = ir_nbest(idx, tokenize("the game"), 10);
    for (std::size_t i = 1; i < all.size(); ++i) {
        CHECK(all[i - 1].score >= all[i].score);
        if (all[i - 1].score == all[i].score) CHECK(all[i - 1].doc < all[i].doc);
    }
    std::string exclude = "a";
    auto ex = ir_nbest(idx, ts[0].message, 5, &exclude);
    for (const auto& c : ex) CHECK(c.doc != 0);
    CHECK(ir_nbest(idx, {"unseen"}, 3).empty());
}

TEST_CASE("mining score")
{
    MinerConfig cfg;
    cfg.alpha = 0.5;
    cfg.epsilon = 0.1;
    CHECK(mining_score(2.0, 1.0, cfg) == doctest::Approx(1.1).epsilon(1e-15));
    cfg.alpha = 0.0;
    CHECK(mining_score(3.0, 100.0, cfg) == doctest::Approx(0.3).epsilon(1e-15));
    cfg.alpha = 0.7;
    CHECK(mining_score(0.0, 5.0, cfg) == 0.0);
    CHECK(mining_score(1.0, 2.0, cfg) > mining_score(1.0, 1.0, cfg));
    CHECK(mining_score(2.0, 1.0, cfg) > mining_score(1.0, 1.0, cfg));

    MinerConfig bad;
    bad.alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.candidates = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("mine_candidates")
{
    auto ts = five_triples();
    auto idx = TripleIndex::build(ts);
    MinerConfig cfg;
    auto got = mine_candidates(idx, ts[0], cfg);
    for (const auto& c : got) {
        CHECK(c.doc != 0);
        CHECK(c.score == doctest::Approx(mining_score(c.message_similarity, c.response_similarity, cfg)));
        CHECK(c.message_similarity == idx.score(ts[0].message, c.doc, Field::message));
        CHECK(c.response_similarity == idx.score(ts[0].response, c.doc, Field::response));
    }
    for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].score >= got[i].score);
    cfg.candidates = 1;
    CHECK(mine_candidates(idx, ts[0], cfg).size() <= 1);
}

TEST_CASE("ratings and reference sets")
{
    std::istringstream in("t1\tc1\t5\nt1\tc1\t4\nt1\tc2\t2\nt1\tc3\t4\n");
    auto ratings = read_ratings(in);
    CHECK(ratings.size() == 4);
    std::istringstream bad("t1\tc1\t6\n");
    CHECK_THROWS_AS(read_ratings(bad), ParseError);

    MinedItem item{{"t1", {"c"}, {"m"}, {"orig"}},
                   {{"c1", {"good", "one"}}, {"c2", {"bad"}}, {"c3", {"good", "one"}}, {"c4", {"unrated"}}}};
    std::vector<MinedItem> items{item};
    auto sets = build_reference_sets(items, ratings, 4.0);
    REQUIRE(sets.size() == 1);
    REQUIRE(sets[0].refs.size() == 2);
    CHECK(sets[0].refs[0].provenance == Provenance::original);
    CHECK(sets[0].refs[1].tokens == Tokens{"good", "one"});
    CHECK(*sets[0].refs[1].rating == 4.5);

    std::vector<Rating> low{{"t1", "c1", 1}, {"t1", "c2", 3}};
    auto only = build_reference_sets(items, low, 4.0);
    CHECK(only[0].refs.size() == 1);

    std::vector<Rating> unknown{{"t1", "zz", 5}};
    CHECK_THROWS_AS(build_reference_sets(items, unknown, 4.0), Error);

    std::stringstream ss;
    write_reference_sets(ss, sets);
    auto back = read_reference_sets(ss);
    REQUIRE(back.size() == 1);
    CHECK(back[0].token_lists() == sets[0].token_lists());

    auto st = reference_stats(sets);
    CHECK(st.items == 1);
    CHECK(st.mean_refs == 2.0);
    CHECK(st.min_refs == 2);
    CHECK(st.max_refs == 2);
}

TEST_CASE("leave-one-out BLEU")
{
    Tokens x{"a", "b", "c", "d", "e"};
    std::vector<ReferenceSet> sets;
    for (int i = 0; i < 5; ++i) {
        sets.push_back({std::to_string(i), {{x, Provenance::original, {}}, {x, Provenance::mined, 5.0}}});
    }
    auto human = leave_one_out_bleu(sets, HypothesisSource::human, {}, 10, 1);
    CHECK(human.mean_bleu == doctest::Approx(1.0));
    CHECK(human.excluded_items == 0);

    std::vector<Tokens> disjoint(5, Tokens{"p", "q", "r", "s"});
    auto random = leave_one_out_bleu(sets, HypothesisSource::random, disjoint, 10, 1);
    CHECK(random.mean_bleu == 0.0);

    sets.push_back({"single", {{x, Provenance::original, {}}}});
    disjoint.push_back({"p"});
    auto with_single = leave_one_out_bleu(sets, HypothesisSource::human, {}, 10, 1);
    CHECK(with_single.excluded_items == 1);
    CHECK(with_single.scored_items == 5);
    CHECK_THROWS_AS(leave_one_out_bleu(sets, HypothesisSource::system, {}, 10, 1), Error);
    CHECK_THROWS_AS(leave_one_out_bleu(sets, HypothesisSource::human, {}, 0, 1), Error);
}
