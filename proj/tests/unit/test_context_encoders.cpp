#include <cmath>

#include "doctest.h"
#include "dcgm/context_encoders.hpp"
#include "dcgm/error.hpp"
#include "dcgm/gradcheck.hpp"
#include "dcgm/model.hpp"

using namespace dcgm;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

DcgmModel random_dcgm(EncoderVariant variant, Rng& rng, std::size_t v = 20, std::size_t k = 8,
                      std::vector<std::size_t> sizes = {10, 6, 8})
{
    DcgmModel m{RlmParams(v, k), EncoderParams::zeros(variant, v, sizes)};
    std::normal_distribution<double> g(0.0, 0.5);
    for (auto* t : {&m.decoder.w_in, &m.decoder.w_hh, &m.decoder.w_out}) {
        for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = g(rng);
    }
    for (auto& l : m.encoder.layers) {
        for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = g(rng);
    }
    return m;
}

}  // namespace

TEST_CASE("encoder shapes")
{
    std::vector<std::size_t> sizes{10, 6, 8};
    auto joint = EncoderParams::zeros(EncoderVariant::joint, 20, sizes);
    auto split = EncoderParams::zeros(EncoderVariant::split, 20, sizes);
    CHECK(joint.layers[1].rows() == 10);
    CHECK(split.layers[1].rows() == 20);
    CHECK(split.layers[0].rows() == 20);
    CHECK(split.layers[0].cols() == 10);
    CHECK(joint.output_size() == 8);
    CHECK(joint.layer_sizes() == sizes);
    CHECK_THROWS_AS(EncoderParams::zeros(EncoderVariant::joint, 20, std::vector<std::size_t>{8}), DimensionError);
}

TEST_CASE("encode_dcgm1")
{
    std::vector<std::size_t> sizes{4, 3, 5};
    auto enc = EncoderParams::zeros(EncoderVariant::joint, 6, sizes);
    auto ctx = encode_dcgm1(enc, bag_of_words(Ids{4, 5}, 6));
    CHECK(ctx.activations[0].isZero(0.0));
    CHECK(ctx.activations[1].isApprox(Vector::Constant(3, 0.5)));
    CHECK(ctx.output().isApprox(Vector::Constant(5, 0.5)));

    Rng rng(1);
    enc.layers[0].setRandom();
    CHECK(encode_dcgm1(enc, BagOfWords(6)).activations[0].isZero(0.0));

    SUBCASE("1-dim hand composition")
    {
        auto e = EncoderParams::zeros(EncoderVariant::joint, 3, std::vector<std::size_t>{1, 1, 1});
        e.layers[0] << 0.5, -1.0, 2.0;
        e.layers[1] << 1.5;
        e.layers[2] << -0.8;
        auto c = encode_dcgm1(e, bag_of_words(Ids{0, 2, 2}, 3));
        double k1 = 0.5 + 2.0 * 2.0;
        double k2 = sig(1.5 * k1);
        double k3 = sig(-0.8 * k2);
        CHECK(c.activations[0](0) == doctest::Approx(k1).epsilon(1e-15));
        CHECK(c.activations[1](0) == doctest::Approx(k2).epsilon(1e-15));
        CHECK(c.output()(0) == doctest::Approx(k3).epsilon(1e-15));
    }
    CHECK_THROWS_AS(encode_dcgm1(enc, BagOfWords(5)), DimensionError);
    CHECK_THROWS_AS(encode_dcgm2(enc, BagOfWords(6), BagOfWords(6)), DimensionError);
}

TEST_CASE("encode_dcgm2")
{
    Rng rng(2);
    auto m = random_dcgm(EncoderVariant::split, rng);
    auto bc = bag_of_words(Ids{4, 5, 6}, 20), bm = bag_of_words(Ids{7, 8}, 20);
    auto a = encode_dcgm2(m.encoder, bc, bm);
    auto b = encode_dcgm2(m.encoder, bm, bc);
    CHECK(a.activations[0].head(10).isApprox(b.activations[0].tail(10), 0.0));
    CHECK(a.activations[0].tail(10).isApprox(b.activations[0].head(10), 0.0));
    CHECK_FALSE(a.output().isApprox(b.output(), 1e-9));

    auto same = encode_dcgm2(m.encoder, bc, bc);
    CHECK(same.activations[0].head(10) == same.activations[0].tail(10));

    auto zero = EncoderParams::zeros(EncoderVariant::split, 20, std::vector<std::size_t>{10, 6, 8});
    CHECK(encode_dcgm2(zero, bc, bm).output().isApprox(Vector::Constant(8, 0.5)));
}

TEST_CASE("dcgm_log_prob")
{
    SUBCASE("uniform model")
    {
        DcgmModel m{RlmParams(20, 8), EncoderParams::zeros(EncoderVariant::joint, 20, std::vector<std::size_t>{10, 6, 8})};
        CHECK(dcgm_log_prob(m, Ids{4}, Ids{5}, Ids{6, 7, 8}) == doctest::Approx(-4.0 * std::log(20.0)));
        CHECK(rlmt_log_prob(m.decoder, Ids{4}, Ids{5}, Ids{6, 7, 8}) == doctest::Approx(-4.0 * std::log(20.0)));
    }
    SUBCASE("matches the decoder trace with a constant bias")
    {
        Rng rng(3);
        auto m = random_dcgm(EncoderVariant::joint, rng);
        Ids c{4, 9}, msg{5}, r{6, 7};
        auto k = encode_context(m, c, msg).output();
        double expected = -sequence_nll(m.decoder, Ids{Vocabulary::kStart, 6, 7, Vocabulary::kEnd}, k);
        CHECK(dcgm_log_prob(m, c, msg, r) == doctest::Approx(expected).epsilon(1e-14));
    }
    SUBCASE("context changes the score of a 1-dim hand model")
    {
        DcgmModel m{RlmParams(6, 1), EncoderParams::zeros(EncoderVariant::joint, 6, std::vector<std::size_t>{1, 1})};
        m.decoder.w_out << 0, 3.0, 0, 0, 3.0, -3.0;
        m.encoder.layers[0] << 0, 0, 0, 0, 4.0, -4.0;
        m.encoder.layers[1] << 2.0;
        double with4 = dcgm_log_prob(m, Ids{4}, Ids{}, Ids{4});
        double with5 = dcgm_log_prob(m, Ids{5}, Ids{}, Ids{4});
        CHECK(with4 > with5);
        // h = sigmoid(k) with k = sigmoid(2 * 4); p(w) = e^{3h} / (3 + 2 e^{3h} + e^{-3h}) for w in {4, </s>}.
        double k = sig(8.0), h = sig(k);
        auto step = [](double hh, int w) {
            double z = 3.0 + 2.0 * std::exp(3.0 * hh) + std::exp(-3.0 * hh);
            return w == 4 || w == 1 ? 3.0 * hh - std::log(z) : -std::log(z);
        };
        double expected = step(h, 4) + step(sig(k), 1);
        CHECK(with4 == doctest::Approx(expected).epsilon(1e-14));
    }
    SUBCASE("DCGM-I is symmetric in c and m, DCGM-II is not")
    {
        Rng rng(4);
        auto j = random_dcgm(EncoderVariant::joint, rng);
        auto s = random_dcgm(EncoderVariant::split, rng);
        Ids c{4, 5, 6}, msg{7, 8}, r{9, 10};
        CHECK(dcgm_log_prob(j, c, msg, r) == doctest::Approx(dcgm_log_prob(j, msg, c, r)).epsilon(1e-14));
        CHECK(dcgm_log_prob(s, c, msg, r) != doctest::Approx(dcgm_log_prob(s, msg, c, r)).epsilon(1e-9));
    }
}

TEST_CASE("dcgm_backward")
{
    SUBCASE("finite differences, both variants")
    {
        GradCheckConfig cfg;
        cfg.instances = 5;
        for (auto f : {ModelFamily::dcgm1, ModelFamily::dcgm2}) {
            auto res = gradient_check(f, cfg);
            CHECK(res.passed());
            CHECK(res.worst.relative <= 1e-4);
        }
    }
    SUBCASE("no encoder gradient when the loss ignores the bias")
    {
        Rng rng(5);
        auto m = random_dcgm(EncoderVariant::split, rng);
        m.decoder.w_out.setZero();
        auto loss = dcgm_backward(m, Ids{4, 5}, Ids{6}, Ids{7});
        for (const auto& g : loss.grad.encoder) CHECK(g.isZero(0.0));
    }
    SUBCASE("embedding rows of absent tokens get zero gradient")
    {
        Rng rng(6);
        auto m = random_dcgm(EncoderVariant::joint, rng);
        auto loss = dcgm_backward(m, Ids{4, 5}, Ids{6}, Ids{7, 8});
        for (int w = 0; w < 20; ++w) {
            bool present = w == 4 || w == 5 || w == 6;
            CHECK(loss.grad.encoder[0].row(w).isZero(0.0) != present);
        }
    }
    SUBCASE("nll agrees with dcgm_log_prob")
    {
        Rng rng(7);
        auto m = random_dcgm(EncoderVariant::split, rng);
        auto loss = dcgm_backward(m, Ids{4}, Ids{6, 9}, Ids{7, 8});
        CHECK(loss.nll == doctest::Approx(-dcgm_log_prob(m, Ids{4}, Ids{6, 9}, Ids{7, 8})).epsilon(1e-14));
    }
}

TEST_CASE("rlmt")
{
    auto seq = rlmt_sequence(Ids{4, 5}, Ids{6}, Ids{7, 8});
    CHECK(seq.ids == Ids{Vocabulary::kStart, 4, 5, Vocabulary::kSeparator, 6, Vocabulary::kSeparator, 7, 8,
                         Vocabulary::kEnd});
    CHECK(seq.response_start == 6);
    auto targets = rlmt_response_targets(seq);
    CHECK(targets == Ids{kNoTarget, kNoTarget, kNoTarget, kNoTarget, kNoTarget, 7, 8, Vocabulary::kEnd});

    SUBCASE("restriction of the full-sequence trace")
    {
        Rng rng(8);
        RlmParams p(12, 4);
        std::normal_distribution<double> g(0.0, 0.7);
        for (auto* t : {&p.w_in, &p.w_hh, &p.w_out}) {
            for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = g(rng);
        }
        std::span<const WordId> ids(seq.ids);
        auto tr = rlm_forward(p, ids.first(ids.size() - 1));
        double sum = 0.0;
        for (std::size_t t = 5; t < 8; ++t) sum += std::log(tr.probs(ids[t + 1], static_cast<Eigen::Index>(t)));
        CHECK(rlmt_log_prob(p, Ids{4, 5}, Ids{6}, Ids{7, 8}) == doctest::Approx(sum).epsilon(1e-14));
    }
    SUBCASE("K=1, V=5 hand recurrence")
    {
        RlmParams p(5, 1);
        p.w_in << 0.1, 0.2, 0.3, 0.4, 0.5;
        p.w_hh << -0.6;
        p.w_out << 0.5, -0.5, 1.0, 0.0, 2.0;
        // Sequence: <s> 4 <sep> <sep> 4 </s>  (c = [4], m = [], r = [4])
        double h = 0.0;
        auto step = [&](int w) { h = sig(p.w_in(w, 0) + p.w_hh(0, 0) * h); };
        auto logp = [&](int w) {
            double z = 0.0;
            for (int v = 0; v < 5; ++v) z += std::exp(p.w_out(0, v) * h);
            return p.w_out(0, w) * h - std::log(z);
        };
        step(0);
        step(4);
        step(3);
        step(3);
        double expected = logp(4);
        step(4);
        expected += logp(1);
        CHECK(rlmt_log_prob(p, Ids{4}, Ids{}, Ids{4}) == doctest::Approx(expected).epsilon(1e-14));
    }
}
