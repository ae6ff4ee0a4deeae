#include "dcgm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "dcgm/error.hpp"
#include "io_util.hpp"

namespace dcgm {

namespace {

std::vector<std::size_t> parse_sizes(std::string_view value)
{
    std::vector<std::size_t> out;
    for (auto part : detail::split(value, ',')) out.push_back(detail::parse_int<std::size_t>(part, "layer size"));
    return out;
}

std::string render_sizes(const std::vector<std::size_t>& sizes)
{
    std::string out;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i > 0) out += ',';
        out += std::to_string(sizes[i]);
    }
    return out;
}

bool parse_bool(std::string_view v)
{
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("invalid boolean '" + std::string(v) + "'");
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng)
{
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    // Row-major fill so the draw order matches the checkpoint layout.
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

// Per-example stream so NCE draws do not depend on thread scheduling.
Rng example_rng(std::uint64_t seed, std::size_t epoch, std::size_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index)};
    return Rng(seq);
}

bool all_finite(const TensorList& ts)
{
    return std::all_of(ts.begin(), ts.end(), [](const Matrix& m) { return m.allFinite(); });
}

std::vector<Matrix> snapshot(const Model& model)
{
    std::vector<Matrix> out;
    for (const auto* m : model.tensors()) out.push_back(*m);
    return out;
}

void restore(Model& model, const std::vector<Matrix>& snap)
{
    auto ts = model.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = snap[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be > 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (!(clip > 0.0) || !std::isfinite(clip)) throw Error("clip must be finite and > 0");
    if (eval_every < 1) throw Error("eval_every must be >= 1");
    if (nce_samples < 1) throw Error("nce_samples must be >= 1");
    if (!(adagrad_damping > 0.0)) throw Error("adagrad_damping must be > 0");
    if (!(init_stddev >= 0.0)) throw Error("init_stddev must be >= 0");
    if (hidden < 1) throw Error("hidden must be >= 1");
    if (encoder_layers.size() < 2) throw Error("encoder_layers needs at least two sizes");
    if (encoder_layers.back() != hidden) throw Error("last encoder layer must equal hidden");
    if (std::find(encoder_layers.begin(), encoder_layers.end(), 0U) != encoder_layers.end()) {
        throw Error("encoder layer sizes must be >= 1");
    }
    if (vocab_cap < 1) throw Error("vocab_cap must be >= 1");
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) throw Error("heldout_fraction must be in [0, 1)");
    if (threads < 1) throw Error("threads must be >= 1");
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value)
{
    value = detail::trim(value);
    if (key == "learning_rate") cfg.learning_rate = detail::parse_double(value, "learning_rate");
    else if (key == "batch_size") cfg.batch_size = detail::parse_int<std::size_t>(value, "batch_size");
    else if (key == "clip") cfg.clip = detail::parse_double(value, "clip");
    else if (key == "max_epochs") cfg.max_epochs = detail::parse_int<std::size_t>(value, "max_epochs");
    else if (key == "eval_every") cfg.eval_every = detail::parse_int<std::size_t>(value, "eval_every");
    else if (key == "early_stopping") cfg.early_stopping = parse_bool(value);
    else if (key == "seed") cfg.seed = detail::parse_int<std::uint64_t>(value, "seed");
    else if (key == "objective") {
        if (value == "softmax") cfg.objective = Objective::softmax;
        else if (value == "nce") cfg.objective = Objective::nce;
        else throw Error("objective must be softmax or nce");
    }
    else if (key == "nce_samples") cfg.nce_samples = detail::parse_int<std::size_t>(value, "nce_samples");
    else if (key == "nce_log_z") cfg.nce_log_z = detail::parse_double(value, "nce_log_z");
    else if (key == "noise_power") cfg.noise_power = detail::parse_double(value, "noise_power");
    else if (key == "bptt_cap") cfg.bptt_cap = detail::parse_int<std::size_t>(value, "bptt_cap");
    else if (key == "adagrad_damping") cfg.adagrad_damping = detail::parse_double(value, "adagrad_damping");
    else if (key == "init_stddev") cfg.init_stddev = detail::parse_double(value, "init_stddev");
    else if (key == "recurrent_scale") cfg.recurrent_scale = detail::parse_double(value, "recurrent_scale");
    else if (key == "hidden") cfg.hidden = detail::parse_int<std::size_t>(value, "hidden");
    else if (key == "encoder_layers") cfg.encoder_layers = parse_sizes(value);
    else if (key == "vocab_cap") cfg.vocab_cap = detail::parse_int<std::size_t>(value, "vocab_cap");
    else if (key == "min_bigram_count") cfg.min_bigram_count = detail::parse_int<std::size_t>(value, "min_bigram_count");
    else if (key == "heldout_fraction") cfg.heldout_fraction = detail::parse_double(value, "heldout_fraction");
    else if (key == "threads") cfg.threads = detail::parse_int<std::size_t>(value, "threads");
    else throw Error("unknown config key '" + std::string(key) + "'");
}

TrainConfig parse_train_config(std::istream& in, TrainConfig base)
{
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto body = detail::trim(line);
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", lineno);
        try {
            set_config_value(base, detail::trim(body.substr(0, eq)), body.substr(eq + 1));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        } catch (const Error& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    base.validate();
    return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base)
{
    auto in = detail::open_input(path);
    return parse_train_config(in, std::move(base));
}

std::string render_train_config(const TrainConfig& cfg)
{
    std::ostringstream out;
    auto d = [](double v) { return detail::format_double(v); };
    out << "learning_rate = " << d(cfg.learning_rate) << '\n'
        << "batch_size = " << cfg.batch_size << '\n'
        << "clip = " << d(cfg.clip) << '\n'
        << "max_epochs = " << cfg.max_epochs << '\n'
        << "eval_every = " << cfg.eval_every << '\n'
        << "early_stopping = " << (cfg.early_stopping ? "true" : "false") << '\n'
        << "seed = " << cfg.seed << '\n'
        << "objective = " << (cfg.objective == Objective::softmax ? "softmax" : "nce") << '\n'
        << "nce_samples = " << cfg.nce_samples << '\n'
        << "nce_log_z = " << d(cfg.nce_log_z) << '\n'
        << "noise_power = " << d(cfg.noise_power) << '\n'
        << "bptt_cap = " << cfg.bptt_cap << '\n'
        << "adagrad_damping = " << d(cfg.adagrad_damping) << '\n'
        << "init_stddev = " << d(cfg.init_stddev) << '\n'
        << "recurrent_scale = " << d(cfg.recurrent_scale) << '\n'
        << "hidden = " << cfg.hidden << '\n'
        << "encoder_layers = " << render_sizes(cfg.encoder_layers) << '\n'
        << "vocab_cap = " << cfg.vocab_cap << '\n'
        << "min_bigram_count = " << cfg.min_bigram_count << '\n'
        << "heldout_fraction = " << d(cfg.heldout_fraction) << '\n'
        << "threads = " << cfg.threads << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Initialization and updates

Model init_params(ModelFamily family, std::size_t vocab, const TrainConfig& cfg, std::uint64_t seed)
{
    Model model = zero_model(family, vocab, cfg.hidden, cfg.encoder_layers);
    Rng rng(seed);
    auto& dec = model.net.decoder;
    const auto k = static_cast<Eigen::Index>(cfg.hidden);

    dec.w_in = gaussian(dec.w_in.rows(), dec.w_in.cols(), cfg.init_stddev, rng);

    // Orthonormalize a Gaussian matrix; the sign fix makes Q Haar-distributed.
    Matrix g = gaussian(k, k, 1.0, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < k; ++i) {
        if (r(i, i) < 0) q.col(i) *= -1.0;
    }
    dec.w_hh = cfg.recurrent_scale * q;

    dec.w_out = gaussian(dec.w_out.rows(), dec.w_out.cols(), cfg.init_stddev, rng);
    for (auto& w : model.net.encoder.layers) w = gaussian(w.rows(), w.cols(), cfg.init_stddev, rng);
    return model;
}

void clip_gradients(TensorList& grads, double lo, double hi)
{
    if (!(lo < hi)) throw Error("clip range must satisfy lo < hi");
    for (auto& g : grads) g = g.cwiseMax(lo).cwiseMin(hi);
}

AdagradState AdagradState::for_model(const Model& model, double damping)
{
    AdagradState state;
    state.damping = damping;
    for (const auto* m : model.tensors()) state.accum.push_back(Matrix::Zero(m->rows(), m->cols()));
    return state;
}

void adagrad_step(std::span<Matrix* const> params, const TensorList& grads, AdagradState& state, double lr)
{
    if (params.size() != grads.size() || params.size() != state.accum.size()) {
        throw DimensionError("adagrad: parameter, gradient and state counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = grads[i];
        auto& acc = state.accum[i];
        if (p.rows() != g.rows() || p.cols() != g.cols() || acc.rows() != g.rows() || acc.cols() != g.cols()) {
            throw DimensionError("adagrad: shape mismatch in tensor " + std::to_string(i));
        }
        acc.array() += g.array().square();
        p.array() -= lr * g.array() / (acc.array() + state.damping).sqrt();
    }
}

// ---------------------------------------------------------------------------
// Training loop

void TrainReport::write_tsv(std::ostream& out) const
{
    out << "epoch\ttrain_objective\theldout_nll\theldout_ppl\n";
    for (const auto& e : epochs) {
        out << e.epoch << '\t' << detail::format_double(e.train_objective) << '\t'
            << detail::format_double(e.heldout_nll) << '\t' << detail::format_double(e.heldout_ppl) << '\n';
    }
}

std::string TrainReport::summary() const
{
    std::ostringstream out;
    out << "epochs run: " << stop_epoch << "\nreturned parameters from epoch: " << returned_epoch
        << "\nearly stopped: " << (early_stopped ? "yes" : "no") << "\ndiverged: " << (diverged ? "yes" : "no");
    if (!epochs.empty()) {
        out << "\nfinal train objective: " << epochs.back().train_objective;
    }
    out << "\nwall-clock seconds: " << wall_seconds << '\n';
    return out.str();
}

double mean_objective(const Model& model, std::span<const Example> examples)
{
    double loss = 0.0;
    std::size_t events = 0;
    for (const auto& ex : examples) {
        std::size_t n = 0;
        loss += example_nll(model, ex, &n);
        events += n;
    }
    return events == 0 ? 0.0 : loss / static_cast<double>(events);
}

double response_perplexity(const Model& model, std::span<const Example> examples)
{
    double nll = 0.0;
    std::size_t events = 0;
    for (const auto& ex : examples) {
        nll -= response_log_prob(model, ex);
        events += response_events(ex);
    }
    return events == 0 ? 1.0 : std::exp(nll / static_cast<double>(events));
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> heldout, ModelFamily family,
                  const Vocabulary& vocab, const TrainConfig& cfg)
{
    cfg.validate();
    if (train_set.empty()) throw Error("empty training set");
    const auto started = std::chrono::steady_clock::now();

    TrainResult result;
    result.model = init_params(family, vocab.size(), cfg, cfg.seed);
    result.model.vocab_hash = vocab.hash();
    auto& model = result.model;
    auto& report = result.report;

    NoiseDistribution noise;
    NceSettings nce;
    if (cfg.objective == Objective::nce) {
        noise = NoiseDistribution(vocab.counts(), cfg.noise_power);
        nce = {&noise, cfg.nce_samples, cfg.nce_log_z};
    }

    auto state = AdagradState::for_model(model, cfg.adagrad_damping);
    auto params = model.tensors();
    std::vector<Matrix> kept = snapshot(model);
    std::vector<Matrix> last_finite = kept;
    std::size_t last_finite_epoch = 0;
    double prev_heldout = std::numeric_limits<double>::infinity();

    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        bool finite = true;

        for (std::size_t start = 0; start < order.size() && finite; start += cfg.batch_size) {
            const auto count = std::min(cfg.batch_size, order.size() - start);
            std::vector<ExampleLoss> losses(count);
            std::vector<std::string> failures(count);

            auto work = [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    auto idx = order[start + i];
                    auto rng = example_rng(cfg.seed, epoch, idx);
                    try {
                        losses[i] = example_loss(model, train_set[idx], cfg.objective, nce, rng, cfg.bptt_cap);
                    } catch (const DivergenceError& e) {
                        failures[i] = e.what();
                    }
                }
            };
            const auto workers = std::min(cfg.threads, count);
            if (workers <= 1) {
                work(0, count);
            } else {
                std::vector<std::jthread> pool;
                for (std::size_t w = 0; w < workers; ++w) {
                    pool.emplace_back(work, w * count / workers, (w + 1) * count / workers);
                }
            }

            // Reduce in index order.
            TensorList grad;
            for (std::size_t i = 0; i < count; ++i) {
                if (!failures[i].empty() || !std::isfinite(losses[i].loss)) {
                    finite = false;
                    break;
                }
                if (grad.empty()) {
                    grad = std::move(losses[i].grad);
                } else {
                    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += losses[i].grad[j];
                }
            }
            if (!finite) break;
            for (auto& g : grad) g /= static_cast<double>(count);
            clip_gradients(grad, -cfg.clip, cfg.clip);
            adagrad_step(params, grad, state, cfg.learning_rate);
            finite = all_finite(grad);
        }

        EpochStats stats;
        stats.epoch = epoch;
        if (finite) {
            try {
                stats.train_objective = mean_objective(model, train_set);
            } catch (const DivergenceError&) {
                finite = false;
            }
            finite = finite && std::isfinite(stats.train_objective);
        }
        if (!finite) {
            restore(model, last_finite);
            report.diverged = true;
            report.stop_epoch = epoch;
            report.returned_epoch = last_finite_epoch;
            break;
        }
        last_finite = snapshot(model);
        last_finite_epoch = epoch;

        stats.heldout_nll = std::numeric_limits<double>::quiet_NaN();
        stats.heldout_ppl = std::numeric_limits<double>::quiet_NaN();
        bool evaluate = !heldout.empty() && epoch % cfg.eval_every == 0;
        if (evaluate) {
            stats.heldout_nll = mean_objective(model, heldout);
            stats.heldout_ppl = std::exp(stats.heldout_nll);
        }
        report.epochs.push_back(stats);
        report.stop_epoch = epoch;

        if (evaluate) {
            if (cfg.early_stopping && stats.heldout_nll > prev_heldout) {
                restore(model, kept);
                report.early_stopped = true;
                break;
            }
            prev_heldout = stats.heldout_nll;
            kept = snapshot(model);
            report.returned_epoch = epoch;
        } else if (heldout.empty()) {
            kept = snapshot(model);
            report.returned_epoch = epoch;
        }
    }
    if (!report.early_stopped && !report.diverged && !heldout.empty()) {
        // Parameters after the last epoch are returned even if it was not evaluated.
        report.returned_epoch = report.stop_epoch;
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace dcgm
