#include "dcgm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <ostream>

#include "dcgm/error.hpp"
#include "io_util.hpp"

namespace dcgm {

BleuStats& BleuStats::operator+=(const BleuStats& o)
{
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        matches[n] += o.matches[n];
        totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
}

BleuStats& BleuStats::operator-=(const BleuStats& o)
{
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        matches[n] -= o.matches[n];
        totals[n] -= o.totals[n];
    }
    hyp_len -= o.hyp_len;
    ref_len -= o.ref_len;
    return *this;
}

BleuStats bleu_stats(const Tokens& hyp, std::span<const Tokens> refs)
{
    if (refs.empty()) throw Error("BLEU needs at least one reference");

    BleuStats stats;
    stats.hyp_len = static_cast<std::int64_t>(hyp.size());

    auto best = static_cast<std::int64_t>(refs.front().size());
    for (const auto& r : refs) {
        auto len = static_cast<std::int64_t>(r.size());
        auto d = std::llabs(len - stats.hyp_len);
        auto d_best = std::llabs(best - stats.hyp_len);
        if (d < d_best || (d == d_best && len < best)) best = len;
    }
    stats.ref_len = best;

    for (std::size_t n = 1; n <= kBleuOrder; ++n) {
        auto h = ngrams(hyp, n);
        std::map<Tokens, std::size_t> max_ref;
        for (const auto& r : refs) {
            for (const auto& [gram, c] : ngrams(r, n).counts) {
                auto& m = max_ref[gram];
                m = std::max(m, c);
            }
        }
        std::int64_t matched = 0;
        for (const auto& [gram, c] : h.counts) {
            auto it = max_ref.find(gram);
            if (it != max_ref.end()) matched += static_cast<std::int64_t>(std::min(c, it->second));
        }
        stats.matches[n - 1] = matched;
        stats.totals[n - 1] = static_cast<std::int64_t>(h.total());
    }
    return stats;
}

BleuBreakdown bleu_breakdown(const BleuStats& stats)
{
    BleuBreakdown out;
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        out.precisions[n] = stats.totals[n] > 0 ? static_cast<double>(stats.matches[n]) /
                                                      static_cast<double>(stats.totals[n])
                                                : 0.0;
    }
    if (stats.hyp_len <= 0) return out;
    out.brevity_penalty =
        std::min(1.0, std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len)));
    double log_sum = 0.0;
    for (double p : out.precisions) {
        if (p <= 0.0) return out;
        log_sum += std::log(p);
    }
    out.bleu = out.brevity_penalty * std::exp(log_sum / static_cast<double>(kBleuOrder));
    return out;
}

double corpus_bleu(const BleuStats& stats) { return bleu_breakdown(stats).bleu; }

double smoothed_sentence_bleu(const BleuStats& stats, double epsilon)
{
    if (stats.hyp_len <= 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        log_sum += std::log((static_cast<double>(stats.matches[n]) + epsilon) /
                            (static_cast<double>(stats.totals[n]) + epsilon));
    }
    double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len)));
    return bp * std::exp(log_sum / static_cast<double>(kBleuOrder));
}

// ---------------------------------------------------------------------------
// METEOR, exact-match stage only

void MeteorConfig::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("meteor alpha must be in (0, 1)");
    if (!(beta > 0.0)) throw Error("meteor beta must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("meteor gamma must be in [0, 1]");
}

MeteorAlignment meteor_align(const Tokens& hyp, const Tokens& ref)
{
    std::vector<bool> used(ref.size(), false);
    MeteorAlignment out;
    std::ptrdiff_t prev_h = -2;
    std::ptrdiff_t prev_r = -2;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        std::ptrdiff_t pick = -1;
        // Prefer the occurrence that continues the current chunk.
        if (prev_h == static_cast<std::ptrdiff_t>(i) - 1 && prev_r + 1 < static_cast<std::ptrdiff_t>(ref.size()) &&
            prev_r >= 0) {
            auto next = static_cast<std::size_t>(prev_r + 1);
            if (!used[next] && ref[next] == hyp[i]) pick = prev_r + 1;
        }
        for (std::size_t j = 0; pick < 0 && j < ref.size(); ++j) {
            if (!used[j] && ref[j] == hyp[i]) pick = static_cast<std::ptrdiff_t>(j);
        }
        if (pick < 0) continue;

        used[static_cast<std::size_t>(pick)] = true;
        bool extends = prev_h == static_cast<std::ptrdiff_t>(i) - 1 && prev_r == pick - 1;
        if (!extends) ++out.chunks;
        ++out.matches;
        prev_h = static_cast<std::ptrdiff_t>(i);
        prev_r = pick;
    }
    return out;
}

double meteor_lite(const Tokens& hyp, std::span<const Tokens> refs, const MeteorConfig& cfg)
{
    cfg.validate();
    double best = 0.0;
    for (const auto& ref : refs) {
        auto a = meteor_align(hyp, ref);
        if (a.matches == 0) continue;
        double m = static_cast<double>(a.matches);
        double p = m / static_cast<double>(hyp.size());
        double r = m / static_cast<double>(ref.size());
        double fmean = p * r / (cfg.alpha * p + (1.0 - cfg.alpha) * r);
        double penalty = cfg.gamma * std::pow(static_cast<double>(a.chunks) / m, cfg.beta);
        best = std::max(best, fmean * (1.0 - penalty));
    }
    return best;
}

// ---------------------------------------------------------------------------

EvalReport evaluate(std::span<const EvalItem> items, const MeteorConfig& meteor)
{
    if (items.empty()) throw Error("nothing to evaluate");
    meteor.validate();
    EvalReport r;
    double meteor_sum = 0.0;
    for (const auto& item : items) {
        if (item.references.empty()) throw Error("item '" + item.id + "' has no references");
        auto s = bleu_stats(item.hypothesis, item.references);
        r.stats += s;
        double m = meteor_lite(item.hypothesis, item.references, meteor);
        meteor_sum += m;
        r.references += item.references.size();
        r.per_item.push_back({item.id, smoothed_sentence_bleu(s), m});
    }
    r.items = items.size();
    r.bleu = bleu_breakdown(r.stats);
    r.meteor = meteor_sum / static_cast<double>(items.size());
    return r;
}

void write_report(std::ostream& out, const EvalReport& r, bool per_item)
{
    using detail::format_double;
    out << "metric\tvalue\n";
    out << "bleu\t" << format_double(r.bleu.bleu) << '\n';
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
        out << "precision_" << n + 1 << '\t' << format_double(r.bleu.precisions[n]) << '\n';
    }
    out << "brevity_penalty\t" << format_double(r.bleu.brevity_penalty) << '\n';
    out << "hyp_length\t" << r.stats.hyp_len << '\n';
    out << "ref_length\t" << r.stats.ref_len << '\n';
    out << "meteor_lite\t" << format_double(r.meteor) << '\n';
    out << "items\t" << r.items << '\n';
    out << "references\t" << r.references << '\n';
    if (per_item) {
        out << "\nitem_id\tsentence_bleu_smoothed\tmeteor_lite\n";
        for (const auto& s : r.per_item) {
            out << s.id << '\t' << format_double(s.sentence_bleu) << '\t' << format_double(s.meteor) << '\n';
        }
    }
    if (!out) throw Error("failed writing report");
}

}  // namespace dcgm
