#include "dcgm/rnnlm.hpp"

#include <cmath>
#include <string>

#include "dcgm/error.hpp"

namespace dcgm {

namespace {

void check_ids(std::span<const WordId> ids, std::size_t vocab)
{
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw DimensionError("word id " + std::to_string(id) + " outside vocabulary of size " +
                                 std::to_string(vocab));
        }
    }
}

Vector or_zero(const Vector& v, std::size_t k, const char* what)
{
    if (v.size() == 0) return Vector::Zero(static_cast<Eigen::Index>(k));
    if (static_cast<std::size_t>(v.size()) != k) {
        throw DimensionError(std::string(what) + " has size " + std::to_string(v.size()) + ", hidden size is " +
                             std::to_string(k));
    }
    return v;
}

// Hidden states only; column t holds h_{t+1}.
Matrix forward_hidden(const RlmParams& params, std::span<const WordId> ids, const Vector& h0, const Vector& bias)
{
    const auto k = static_cast<Eigen::Index>(params.hidden_size());
    Matrix hidden(k, static_cast<Eigen::Index>(ids.size()));
    Vector h = h0;
    for (std::size_t t = 0; t < ids.size(); ++t) {
        Vector a = params.w_in.row(ids[t]).transpose() + params.w_hh.transpose() * h + bias;
        if (!a.allFinite()) {
            throw DivergenceError("non-finite hidden pre-activation at step " + std::to_string(t));
        }
        h = sigmoid(a);
        hidden.col(static_cast<Eigen::Index>(t)) = h;
    }
    return hidden;
}

// Back-propagates per-step output-side error signals dh_out (K x T) through the
// recurrence; fills w_in, w_hh and bias of `grad`.
void backprop_hidden(const RlmParams& params, std::span<const WordId> inputs, const Vector& h0, const Matrix& hidden,
                     const Matrix& dh_out, std::size_t bptt_cap, RlmGradients& grad)
{
    const auto k = hidden.rows();
    Vector carry = Vector::Zero(k);
    for (auto t = static_cast<Eigen::Index>(inputs.size()) - 1; t >= 0; --t) {
        const auto h = hidden.col(t);
        Vector dh = dh_out.col(t) + carry;
        Vector da = dh.array() * h.array() * (1.0 - h.array());
        const Vector& h_prev = t > 0 ? Vector(hidden.col(t - 1)) : h0;

        grad.w_in.row(inputs[static_cast<std::size_t>(t)]) += da.transpose();
        grad.w_hh.noalias() += h_prev * da.transpose();
        grad.bias += da;

        bool cut = bptt_cap > 0 && static_cast<std::size_t>(t) % bptt_cap == 0;
        carry = cut ? Vector::Zero(k) : Vector(params.w_hh * da);
    }
}

}  // namespace

RlmParams::RlmParams(std::size_t vocab, std::size_t hidden)
    : w_in(Matrix::Zero(static_cast<Eigen::Index>(vocab), static_cast<Eigen::Index>(hidden))),
      w_hh(Matrix::Zero(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(hidden))),
      w_out(Matrix::Zero(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(vocab)))
{}

void RlmParams::validate() const
{
    const auto v = w_in.rows();
    const auto k = w_in.cols();
    if (w_hh.rows() != k || w_hh.cols() != k || w_out.rows() != k || w_out.cols() != v) {
        throw DimensionError("inconsistent RLM shapes: W_in " + std::to_string(v) + "x" + std::to_string(k) +
                             ", W_hh " + std::to_string(w_hh.rows()) + "x" + std::to_string(w_hh.cols()) +
                             ", W_out " + std::to_string(w_out.rows()) + "x" + std::to_string(w_out.cols()));
    }
    if (!w_in.allFinite() || !w_hh.allFinite() || !w_out.allFinite()) {
        throw DivergenceError("non-finite RLM parameter");
    }
}

RlmGradients::RlmGradients(std::size_t vocab, std::size_t hidden)
    : w_in(Matrix::Zero(static_cast<Eigen::Index>(vocab), static_cast<Eigen::Index>(hidden))),
      w_hh(Matrix::Zero(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(hidden))),
      w_out(Matrix::Zero(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(vocab))),
      bias(Vector::Zero(static_cast<Eigen::Index>(hidden)))
{}

RlmGradients& RlmGradients::operator+=(const RlmGradients& other)
{
    w_in += other.w_in;
    w_hh += other.w_hh;
    w_out += other.w_out;
    bias += other.bias;
    return *this;
}

Vector sigmoid(const Vector& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

Vector softmax(const Vector& logits)
{
    Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return e / e.sum();
}

ForwardTrace rlm_forward(const RlmParams& params, std::span<const WordId> ids, const Vector& h0, const Vector& bias)
{
    params.validate();
    check_ids(ids, params.vocab_size());
    const auto k = params.hidden_size();

    ForwardTrace trace;
    trace.inputs.assign(ids.begin(), ids.end());
    trace.h0 = or_zero(h0, k, "h0");
    trace.hidden = forward_hidden(params, ids, trace.h0, or_zero(bias, k, "bias"));
    trace.probs.resize(params.w_out.cols(), static_cast<Eigen::Index>(ids.size()));
    for (Eigen::Index t = 0; t < trace.hidden.cols(); ++t) {
        trace.probs.col(t) = softmax(params.w_out.transpose() * trace.hidden.col(t));
    }
    return trace;
}

double trace_nll(const ForwardTrace& trace, std::span<const WordId> targets)
{
    if (targets.size() != trace.steps()) {
        throw DimensionError("target count differs from trace length");
    }
    double nll = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t] == kNoTarget) continue;
        if (targets[t] < 0 || targets[t] >= trace.probs.rows()) {
            throw DimensionError("target id " + std::to_string(targets[t]) + " outside vocabulary");
        }
        nll -= std::log(trace.probs(targets[t], static_cast<Eigen::Index>(t)));
    }
    return nll;
}

double sequence_nll(const RlmParams& params, std::span<const WordId> ids, const Vector& bias)
{
    if (ids.size() < 2) {
        throw DimensionError("a framed sequence needs at least two ids");
    }
    auto trace = rlm_forward(params, ids.first(ids.size() - 1), {}, bias);
    return trace_nll(trace, ids.subspan(1));
}

RlmGradients rlm_backward(const ForwardTrace& trace, const RlmParams& params, std::span<const WordId> targets,
                          std::size_t bptt_cap)
{
    if (targets.size() != trace.steps()) {
        throw DimensionError("target count differs from trace length");
    }
    for (auto w : targets) {
        if (w != kNoTarget) check_ids(std::span<const WordId>(&w, 1), params.vocab_size());
    }

    RlmGradients grad(params.vocab_size(), params.hidden_size());
    // dL/do_t = p_t - onehot(target_t) on scored steps.
    Matrix dlogits = Matrix::Zero(trace.probs.rows(), trace.probs.cols());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t] == kNoTarget) continue;
        auto col = static_cast<Eigen::Index>(t);
        dlogits.col(col) = trace.probs.col(col);
        dlogits(targets[t], col) -= 1.0;
    }
    grad.w_out.noalias() = trace.hidden * dlogits.transpose();
    Matrix dh_out = params.w_out * dlogits;
    backprop_hidden(params, trace.inputs, trace.h0, trace.hidden, dh_out, bptt_cap, grad);
    return grad;
}

// ---------------------------------------------------------------------------
// NCE

NoiseDistribution::NoiseDistribution(std::span<const std::uint64_t> counts, double power)
{
    probs_.resize(counts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        probs_[i] = counts[i] == 0 ? 0.0 : std::pow(static_cast<double>(counts[i]), power);
        total += probs_[i];
    }
    if (total <= 0.0) {
        throw Error("noise distribution needs at least one positive count");
    }
    for (auto& p : probs_) p /= total;
    dist_ = std::discrete_distribution<WordId>(probs_.begin(), probs_.end());
}

WordId NoiseDistribution::sample(Rng& rng) const { return dist_(rng); }

NceResult nce_loss(const RlmParams& params, std::span<const WordId> ids, const NoiseDistribution& noise,
                   std::size_t k, Rng& rng, const Vector& bias, double log_z, std::size_t bptt_cap)
{
    if (k == 0) throw Error("NCE needs at least one noise sample");
    if (ids.size() < 2) throw DimensionError("a framed sequence needs at least two ids");
    params.validate();
    check_ids(ids, params.vocab_size());
    if (noise.size() != params.vocab_size()) {
        throw DimensionError("noise distribution size differs from vocabulary size");
    }

    const auto hidden_size = params.hidden_size();
    const auto inputs = ids.first(ids.size() - 1);
    const auto targets = ids.subspan(1);
    const Vector h0 = Vector::Zero(static_cast<Eigen::Index>(hidden_size));
    const Matrix hidden = forward_hidden(params, inputs, h0, or_zero(bias, hidden_size, "bias"));

    NceResult result{0.0, RlmGradients(params.vocab_size(), hidden_size)};
    Matrix dh_out = Matrix::Zero(static_cast<Eigen::Index>(hidden_size), static_cast<Eigen::Index>(inputs.size()));
    const double log_k = std::log(static_cast<double>(k));

    auto score = [&](WordId w, Eigen::Index t) {
        double q = noise.prob(w);
        return params.w_out.col(w).dot(hidden.col(t)) - log_z - log_k - std::log(q);
    };
    // d/ds of the loss is (sigma(s) - label); accumulate into W_out and dh.
    auto accumulate = [&](WordId w, Eigen::Index t, double g) {
        result.grad.w_out.col(w) += g * hidden.col(t);
        dh_out.col(t) += g * params.w_out.col(w);
    };

    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto t = static_cast<Eigen::Index>(i);
        const WordId w = targets[i];
        if (noise.prob(w) <= 0.0) {
            throw Error("noise distribution assigns zero probability to observed word " + std::to_string(w));
        }
        double s = score(w, t);
        // -log sigmoid(s) = log1p(exp(-s))
        result.loss += s > 0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
        accumulate(w, t, 1.0 / (1.0 + std::exp(-s)) - 1.0);

        for (std::size_t j = 0; j < k; ++j) {
            WordId n = noise.sample(rng);
            double sn = score(n, t);
            // -log(1 - sigmoid(s)) = log1p(exp(s))
            result.loss += sn > 0 ? sn + std::log1p(std::exp(-sn)) : std::log1p(std::exp(sn));
            accumulate(n, t, 1.0 / (1.0 + std::exp(-sn)));
        }
    }
    backprop_hidden(params, inputs, h0, hidden, dh_out, bptt_cap, result.grad);
    return result;
}

}  // namespace dcgm
