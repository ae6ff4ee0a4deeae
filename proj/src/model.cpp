#include "dcgm/model.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "dcgm/error.hpp"
#include "io_util.hpp"

namespace dcgm {

namespace {

constexpr char kMagic[8] = {'D', 'C', 'G', 'M', 'C', 'K', 'P', 'T'};

void write_matrix(std::ostream& out, const Matrix& m)
{
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) detail::write_pod<double>(out, m(i, j));
    }
}

Matrix read_matrix(std::istream& in, std::uint64_t rows, std::uint64_t cols)
{
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = detail::read_pod<double>(in);
    }
    return m;
}

}  // namespace

std::string_view to_string(ModelFamily family)
{
    switch (family) {
    case ModelFamily::rlmt: return "rlmt";
    case ModelFamily::dcgm1: return "dcgm1";
    case ModelFamily::dcgm2: return "dcgm2";
    }
    return "?";
}

ModelFamily parse_family(std::string_view name)
{
    if (name == "rlmt") return ModelFamily::rlmt;
    if (name == "dcgm1") return ModelFamily::dcgm1;
    if (name == "dcgm2") return ModelFamily::dcgm2;
    throw Error("unknown model family '" + std::string(name) + "' (expected rlmt, dcgm1 or dcgm2)");
}

std::vector<Matrix*> Model::tensors()
{
    std::vector<Matrix*> out{&net.decoder.w_in, &net.decoder.w_hh, &net.decoder.w_out};
    for (auto& w : net.encoder.layers) out.push_back(&w);
    return out;
}

std::vector<const Matrix*> Model::tensors() const
{
    std::vector<const Matrix*> out{&net.decoder.w_in, &net.decoder.w_hh, &net.decoder.w_out};
    for (const auto& w : net.encoder.layers) out.push_back(&w);
    return out;
}

void Model::validate() const
{
    if (has_encoder()) {
        net.validate();
        auto expected = family == ModelFamily::dcgm1 ? EncoderVariant::joint : EncoderVariant::split;
        if (net.encoder.variant != expected) throw DimensionError("encoder variant does not match model family");
    } else {
        net.decoder.validate();
        if (!net.encoder.layers.empty()) throw DimensionError("RLMT models carry no encoder");
    }
}

Model zero_model(ModelFamily family, std::size_t vocab, std::size_t hidden, std::span<const std::size_t> encoder_sizes)
{
    Model model;
    model.family = family;
    model.net.decoder = RlmParams(vocab, hidden);
    if (family != ModelFamily::rlmt) {
        if (encoder_sizes.empty() || encoder_sizes.back() != hidden) {
            throw DimensionError("last encoder layer must match the decoder hidden size");
        }
        auto variant = family == ModelFamily::dcgm1 ? EncoderVariant::joint : EncoderVariant::split;
        model.net.encoder = EncoderParams::zeros(variant, vocab, encoder_sizes);
    }
    return model;
}

Example encode_example(const Triple& t, const Vocabulary& vocab)
{
    return {encode(t.context, vocab), encode(t.message, vocab), encode(t.response, vocab)};
}

double response_log_prob(const Model& model, const Example& ex)
{
    if (model.has_encoder()) return dcgm_log_prob(model.net, ex.context, ex.message, ex.response);
    return rlmt_log_prob(model.net.decoder, ex.context, ex.message, ex.response);
}

ExampleLoss example_loss(const Model& model, const Example& ex, Objective objective, const NceSettings& nce, Rng& rng,
                         std::size_t bptt_cap)
{
    if (objective == Objective::nce && nce.noise == nullptr) {
        throw Error("NCE objective needs a noise distribution");
    }
    ExampleLoss out;
    if (model.has_encoder()) {
        auto loss = objective == Objective::softmax
                        ? dcgm_backward(model.net, ex.context, ex.message, ex.response, bptt_cap)
                        : dcgm_nce(model.net, ex.context, ex.message, ex.response, *nce.noise, nce.samples, rng,
                                   nce.log_z, bptt_cap);
        out.loss = loss.nll;
        out.events = response_events(ex);
        out.grad = {std::move(loss.grad.decoder.w_in), std::move(loss.grad.decoder.w_hh),
                    std::move(loss.grad.decoder.w_out)};
        for (auto& g : loss.grad.encoder) out.grad.push_back(std::move(g));
        return out;
    }

    auto seq = rlmt_sequence(ex.context, ex.message, ex.response);
    out.events = seq.ids.size() - 1;
    RlmGradients grad;
    if (objective == Objective::softmax) {
        std::span<const WordId> ids(seq.ids);
        auto trace = rlm_forward(model.net.decoder, ids.first(ids.size() - 1));
        out.loss = trace_nll(trace, ids.subspan(1));
        grad = rlm_backward(trace, model.net.decoder, ids.subspan(1), bptt_cap);
    } else {
        auto res = nce_loss(model.net.decoder, seq.ids, *nce.noise, nce.samples, rng, {}, nce.log_z, bptt_cap);
        out.loss = res.loss;
        grad = std::move(res.grad);
    }
    out.grad = {std::move(grad.w_in), std::move(grad.w_hh), std::move(grad.w_out)};
    return out;
}

double example_nll(const Model& model, const Example& ex, std::size_t* events)
{
    if (model.has_encoder()) {
        if (events) *events = response_events(ex);
        return -dcgm_log_prob(model.net, ex.context, ex.message, ex.response);
    }
    auto seq = rlmt_sequence(ex.context, ex.message, ex.response);
    if (events) *events = seq.ids.size() - 1;
    return sequence_nll(model.net.decoder, seq.ids);
}

// ---------------------------------------------------------------------------

void save_checkpoint(std::ostream& out, const Model& model)
{
    model.validate();
    out.write(kMagic, sizeof(kMagic));
    detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
    detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(model.family));
    detail::write_pod<std::uint64_t>(out, model.vocab_hash);
    detail::write_pod<std::uint64_t>(out, model.vocab_size());
    detail::write_pod<std::uint64_t>(out, model.hidden_size());
    const auto& layers = model.net.encoder.layers;
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
    for (const auto& w : layers) {
        detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(w.rows()));
        detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(w.cols()));
    }
    for (const auto* m : model.tensors()) write_matrix(out, *m);
    if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Model& model)
{
    auto out = detail::open_output(path, true);
    save_checkpoint(out, model);
}

std::string serialize_checkpoint(const Model& model)
{
    std::ostringstream out(std::ios::binary);
    save_checkpoint(out, model);
    return out.str();
}

Model load_checkpoint(std::istream& in, std::optional<std::uint64_t> expected_vocab_hash)
{
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ParseError("not a checkpoint file");
    auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    auto family_tag = detail::read_pod<std::uint8_t>(in);
    if (family_tag > 2) throw ParseError("unknown model family tag " + std::to_string(family_tag));

    Model model;
    model.family = static_cast<ModelFamily>(family_tag);
    model.vocab_hash = detail::read_pod<std::uint64_t>(in);
    if (expected_vocab_hash && *expected_vocab_hash != model.vocab_hash) {
        throw DimensionError("checkpoint was trained against a different vocabulary");
    }
    auto v = detail::read_pod<std::uint64_t>(in);
    auto k = detail::read_pod<std::uint64_t>(in);
    auto depth = detail::read_pod<std::uint32_t>(in);
    if (v == 0 || k == 0 || v > (1ULL << 24) || k > (1ULL << 16) || depth > 64) {
        throw ParseError("implausible checkpoint dimensions");
    }
    std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes(depth);
    for (auto& [r, c] : shapes) {
        r = detail::read_pod<std::uint64_t>(in);
        c = detail::read_pod<std::uint64_t>(in);
        if (r > (1ULL << 26) || c > (1ULL << 16)) throw ParseError("implausible encoder layer shape");
    }
    auto& dec = model.net.decoder;
    dec.w_in = read_matrix(in, v, k);
    dec.w_hh = read_matrix(in, k, k);
    dec.w_out = read_matrix(in, k, v);
    model.net.encoder.variant = model.family == ModelFamily::dcgm2 ? EncoderVariant::split : EncoderVariant::joint;
    for (auto [r, c] : shapes) model.net.encoder.layers.push_back(read_matrix(in, r, c));
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after checkpoint");
    model.validate();
    return model;
}

Model load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_vocab_hash)
{
    auto in = detail::open_input(path, true);
    return load_checkpoint(in, expected_vocab_hash);
}

}  // namespace dcgm
