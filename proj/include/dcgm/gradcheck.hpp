#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dcgm/model.hpp"

namespace dcgm {

struct GradCheckConfig {
    std::size_t vocab = 20;
    std::size_t hidden = 8;
    std::vector<std::size_t> encoder{10, 6, 8};
    std::size_t instances = 25;
    double epsilon = 1e-4;
    double tolerance = 1e-4;
    /// Denominator floor of the relative error, so components whose gradient
    /// is numerically zero are compared in absolute terms.
    double floor = 1e-8;
    /// Weights of the random instances are N(0, stddev^2).
    double weight_stddev = 0.5;
    std::size_t max_length = 6;
    std::uint64_t seed = 1;
};

struct ComponentError {
    double analytic = 0.0;
    double numeric = 0.0;
    double relative = 0.0;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Central differences of example_nll for every parameter component, compared
/// with the softmax gradient of example_loss. Returns the worst component.
ComponentError check_example(const Model& model, const Example& ex, double epsilon, double floor,
                             std::size_t* components = nullptr);

/// A model of the given family with N(0, stddev^2) weights.
Model random_model(ModelFamily family, const GradCheckConfig& cfg, Rng& rng);
/// Random unframed c, m, r of length 1..max_length over the regular words.
Example random_example(const GradCheckConfig& cfg, Rng& rng);

struct GradCheckResult {
    ModelFamily family = ModelFamily::rlmt;
    std::size_t instances = 0;
    std::size_t components = 0;
    std::size_t failures = 0;
    ComponentError worst;

    bool passed() const noexcept { return failures == 0; }
};

GradCheckResult gradient_check(ModelFamily family, const GradCheckConfig& cfg);

}  // namespace dcgm
