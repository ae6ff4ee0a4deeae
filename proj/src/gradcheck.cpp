#include "dcgm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dcgm/error.hpp"

namespace dcgm {

double relative_error(double analytic, double numeric, double floor)
{
    double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

namespace {

struct Scan {
    ComponentError worst{0.0, 0.0, -1.0};
    std::size_t components = 0;
    std::size_t failures = 0;
};

Scan scan(const Model& model, const Example& ex, double epsilon, double floor, double tolerance)
{
    Rng unused(0);
    auto exact = example_loss(model, ex, Objective::softmax, {}, unused, 0);

    Model probe = model;
    auto params = probe.tensors();
    if (params.size() != exact.grad.size()) throw DimensionError("gradient and parameter lists differ");

    Scan out;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& w = *params[p];
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                double saved = w(i, j);
                w(i, j) = saved + epsilon;
                double up = example_nll(probe, ex);
                w(i, j) = saved - epsilon;
                double down = example_nll(probe, ex);
                w(i, j) = saved;
                double numeric = (up - down) / (2.0 * epsilon);
                double analytic = exact.grad[p](i, j);
                double rel = relative_error(analytic, numeric, floor);
                if (rel > tolerance) ++out.failures;
                if (rel > out.worst.relative) out.worst = {analytic, numeric, rel};
                ++out.components;
            }
        }
    }
    return out;
}

}  // namespace

ComponentError check_example(const Model& model, const Example& ex, double epsilon, double floor,
                             std::size_t* components)
{
    auto s = scan(model, ex, epsilon, floor, std::numeric_limits<double>::infinity());
    if (components) *components = s.components;
    return s.worst;
}

Model random_model(ModelFamily family, const GradCheckConfig& cfg, Rng& rng)
{
    Model m = zero_model(family, cfg.vocab, cfg.hidden, cfg.encoder);
    std::normal_distribution<double> gauss(0.0, cfg.weight_stddev);
    for (Matrix* t : m.tensors()) {
        for (Eigen::Index i = 0; i < t->rows(); ++i) {
            for (Eigen::Index j = 0; j < t->cols(); ++j) (*t)(i, j) = gauss(rng);
        }
    }
    return m;
}

Example random_example(const GradCheckConfig& cfg, Rng& rng)
{
    if (cfg.vocab <= static_cast<std::size_t>(Vocabulary::kNumReserved)) {
        throw DimensionError("gradient check needs regular words in the vocabulary");
    }
    std::uniform_int_distribution<std::size_t> len(1, std::max<std::size_t>(1, cfg.max_length));
    std::uniform_int_distribution<WordId> word(Vocabulary::kNumReserved, static_cast<WordId>(cfg.vocab - 1));
    auto draw = [&] {
        Ids ids(len(rng));
        for (auto& w : ids) w = word(rng);
        return ids;
    };
    Example ex;
    ex.context = draw();
    ex.message = draw();
    ex.response = draw();
    return ex;
}

GradCheckResult gradient_check(ModelFamily family, const GradCheckConfig& cfg)
{
    if (!(cfg.epsilon > 0.0)) throw Error("gradient check epsilon must be > 0");
    Rng rng(cfg.seed);
    GradCheckResult res;
    res.family = family;
    res.worst.relative = -1.0;
    for (std::size_t k = 0; k < cfg.instances; ++k) {
        Model m = random_model(family, cfg, rng);
        Example ex = random_example(cfg, rng);
        auto s = scan(m, ex, cfg.epsilon, cfg.floor, cfg.tolerance);
        res.components += s.components;
        res.failures += s.failures;
        if (s.worst.relative > res.worst.relative) res.worst = s.worst;
        ++res.instances;
    }
    return res;
}

}  // namespace dcgm
