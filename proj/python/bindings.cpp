#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dcgm/error.hpp"
#include "dcgm/gradcheck.hpp"
#include "dcgm/metrics.hpp"
#include "dcgm/model.hpp"
#include "dcgm/rescoring.hpp"
#include "dcgm/retrieval.hpp"
#include "dcgm/text_corpus.hpp"
#include "dcgm/trainer.hpp"

namespace py = pybind11;
using namespace dcgm;

namespace {

TrainConfig config_from(const py::dict& d)
{
    TrainConfig cfg;
    for (auto [k, v] : d) {
        std::string value;
        if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
            for (auto item : v) value += (value.empty() ? "" : ",") + py::str(item).cast<std::string>();
        } else if (py::isinstance<py::bool_>(v)) {
            value = v.cast<bool>() ? "true" : "false";
        } else {
            value = py::str(v).cast<std::string>();
        }
        set_config_value(cfg, k.cast<std::string>(), value);
    }
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_dcgm, m)
{
    m.doc() = "Context-sensitive neural response generation and rescoring";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
    py::register_exception<RegistryMismatch>(m, "RegistryMismatch", base.ptr());

    m.def("tokenize", &tokenize, py::arg("text"));

    py::class_<Triple>(m, "Triple")
        .def(py::init([](std::string id, Tokens c, Tokens msg, Tokens r) {
                 return Triple{std::move(id), std::move(c), std::move(msg), std::move(r)};
             }),
             py::arg("id"), py::arg("context"), py::arg("message"), py::arg("response"))
        .def_readwrite("id", &Triple::id)
        .def_readwrite("context", &Triple::context)
        .def_readwrite("message", &Triple::message)
        .def_readwrite("response", &Triple::response);

    m.def("read_triples", [](const std::filesystem::path& p) { return read_triples(p, true).triples; });
    m.def("filter_triples", [](const std::vector<Triple>& ts, std::size_t min_count) { return filter_triples(ts, min_count); },
          py::arg("triples"), py::arg("min_count") = 3);

    py::class_<Vocabulary>(m, "Vocabulary")
        .def("__len__", &Vocabulary::size)
        .def("id", &Vocabulary::id)
        .def("token", &Vocabulary::token)
        .def("hash", &Vocabulary::hash)
        .def("save", py::overload_cast<const std::filesystem::path&>(&Vocabulary::save, py::const_))
        .def_static("load", py::overload_cast<const std::filesystem::path&>(&Vocabulary::load));
    m.def("build_vocab", [](const std::vector<Triple>& ts, std::size_t cap) { return build_vocab(ts, cap); },
          py::arg("triples"), py::arg("cap") = 50000);

    py::class_<Model>(m, "Model")
        .def_property_readonly("family", [](const Model& mo) { return std::string(to_string(mo.family)); })
        .def_property_readonly("vocab_size", &Model::vocab_size)
        .def_property_readonly("hidden_size", &Model::hidden_size)
        .def("to_bytes", [](const Model& mo) { return py::bytes(serialize_checkpoint(mo)); })
        .def("save", [](const Model& mo, const std::filesystem::path& p) { save_checkpoint(p, mo); })
        .def("log_prob",
             [](const Model& mo, const Vocabulary& v, const Tokens& c, const Tokens& msg, const Tokens& r) {
                 return response_log_prob(mo, encode_example({"", c, msg, r}, v));
             },
             py::arg("vocab"), py::arg("context"), py::arg("message"), py::arg("response"));
    m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); });

    py::class_<EpochStats>(m, "EpochStats")
        .def_readonly("epoch", &EpochStats::epoch)
        .def_readonly("train_objective", &EpochStats::train_objective)
        .def_readonly("heldout_nll", &EpochStats::heldout_nll);
    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("epochs", &TrainReport::epochs)
        .def_readonly("stop_epoch", &TrainReport::stop_epoch)
        .def_readonly("returned_epoch", &TrainReport::returned_epoch)
        .def_readonly("early_stopped", &TrainReport::early_stopped)
        .def_readonly("diverged", &TrainReport::diverged)
        .def("summary", &TrainReport::summary);

    m.def(
        "train",
        [](const std::vector<Triple>& train_set, const std::vector<Triple>& heldout, const std::string& family,
           const Vocabulary& vocab, const py::dict& config) {
            auto cfg = config_from(config);
            std::vector<Example> tr, ho;
            for (const auto& t : train_set) tr.push_back(encode_example(t, vocab));
            for (const auto& t : heldout) ho.push_back(encode_example(t, vocab));
            TrainResult res;
            {
                py::gil_scoped_release release;
                res = train(tr, ho, parse_family(family), vocab, cfg);
            }
            return py::make_tuple(res.model, res.report);
        },
        py::arg("train_set"), py::arg("heldout"), py::arg("family"), py::arg("vocab"), py::arg("config") = py::dict());
    m.def(
        "response_perplexity",
        [](const Model& mo, const Vocabulary& v, const std::vector<Triple>& ts) {
            std::vector<Example> ex;
            for (const auto& t : ts) ex.push_back(encode_example(t, v));
            return response_perplexity(mo, ex);
        },
        py::arg("model"), py::arg("vocab"), py::arg("triples"));

    py::enum_<Field>(m, "Field").value("message", Field::message).value("response", Field::response);
    py::class_<TripleIndex>(m, "TripleIndex")
        .def_static("build", [](std::vector<Triple> ts) { return TripleIndex::build(std::move(ts)); })
        .def_static("load", py::overload_cast<const std::filesystem::path&>(&TripleIndex::load))
        .def("save", py::overload_cast<const std::filesystem::path&>(&TripleIndex::save, py::const_))
        .def("__len__", &TripleIndex::size)
        .def("triple", &TripleIndex::triple, py::return_value_policy::copy)
        .def("score", &TripleIndex::score, py::arg("query"), py::arg("doc"), py::arg("field") = Field::message)
        .def(
            "ir_nbest",
            [](const TripleIndex& idx, const Tokens& message, std::size_t n) {
                std::vector<std::pair<DocId, double>> out;
                for (const auto& c : ir_nbest(idx, message, n)) out.emplace_back(c.doc, c.score);
                return out;
            },
            py::arg("message"), py::arg("n"));

    m.def("bleu_stats", [](const Tokens& h, const std::vector<Tokens>& refs) {
        auto s = bleu_stats(h, refs);
        return py::dict(py::arg("matches") = s.matches, py::arg("totals") = s.totals, py::arg("hyp_len") = s.hyp_len,
                        py::arg("ref_len") = s.ref_len);
    });
    m.def(
        "corpus_bleu",
        [](const std::vector<Tokens>& hyps, const std::vector<std::vector<Tokens>>& refs) {
            if (hyps.size() != refs.size()) throw Error("hypothesis and reference counts differ");
            BleuStats s;
            for (std::size_t i = 0; i < hyps.size(); ++i) s += bleu_stats(hyps[i], refs[i]);
            return corpus_bleu(s);
        },
        py::arg("hypotheses"), py::arg("references"));
    m.def("meteor_lite", [](const Tokens& h, const std::vector<Tokens>& refs) { return meteor_lite(h, refs); });

    m.def("cmm_features", &cmm_features, py::arg("context"), py::arg("message"), py::arg("response"));
    m.def("feature_names", [](const std::string& set, const TripleIndex* idx, const Model* mo, const Vocabulary* v) {
        auto b = make_providers(parse_feature_set(set), idx, mo, v);
        return build_registry(b.list).names();
    }, py::arg("feature_set"), py::arg("index") = nullptr, py::arg("model") = nullptr, py::arg("vocab") = nullptr);

    py::class_<NBestSet>(m, "NBestSet")
        .def_property_readonly("feature_names", [](const NBestSet& s) { return s.registry.names(); })
        .def("__len__", [](const NBestSet& s) { return s.lists.size(); })
        .def("items", [](const NBestSet& s) {
            std::vector<std::string> ids;
            for (const auto& l : s.lists) ids.push_back(l.item_id);
            return ids;
        })
        .def("hypotheses", [](const NBestSet& s, std::size_t i) {
            std::vector<std::tuple<Tokens, std::vector<double>, double>> out;
            for (const auto& h : s.lists.at(i).hyps) out.emplace_back(h.tokens, h.features, h.total);
            return out;
        })
        .def("to_text", [](const NBestSet& s) {
            std::ostringstream out;
            write_nbest(out, s);
            return out.str();
        })
        .def_static("from_text", [](const std::string& text) {
            std::istringstream in(text);
            return read_nbest(in);
        });
    m.def(
        "generate_ir_nbest",
        [](const TripleIndex& idx, const std::vector<Triple>& items, std::size_t n, const std::string& set,
           const Model* mo, const Vocabulary* v) {
            auto b = make_providers(parse_feature_set(set), &idx, mo, v);
            return generate_ir_nbest(idx, items, n, b.list);
        },
        py::arg("index"), py::arg("items"), py::arg("n"), py::arg("feature_set") = "ir_cmm", py::arg("model") = nullptr,
        py::arg("vocab") = nullptr);

    m.def(
        "mert",
        [](const NBestSet& set, const std::vector<std::vector<Tokens>>& refs, std::vector<double> w0,
           std::size_t restarts, std::uint64_t seed) {
            LogLinearWeights w{set.registry, std::move(w0)};
            if (w.values.empty()) w = LogLinearWeights::zeros(set.registry);
            auto r = mert_iteration(set, refs, w, {restarts, seed});
            return py::make_tuple(r.weights.values, r.bleu_before, r.bleu_after);
        },
        py::arg("nbest"), py::arg("references"), py::arg("initial") = std::vector<double>{},
        py::arg("random_restarts") = 0, py::arg("seed") = 1);
    m.def(
        "rescore",
        [](const NBestSet& set, std::vector<double> weights) {
            return rescore_nbest(set, LogLinearWeights{set.registry, std::move(weights)});
        },
        py::arg("nbest"), py::arg("weights"));

    m.def(
        "gradient_check",
        [](const std::string& family, std::size_t instances, std::uint64_t seed) {
            GradCheckConfig cfg;
            cfg.instances = instances;
            cfg.seed = seed;
            auto r = gradient_check(parse_family(family), cfg);
            return py::dict(py::arg("passed") = r.passed(), py::arg("components") = r.components,
                            py::arg("failures") = r.failures, py::arg("worst_relative_error") = r.worst.relative);
        },
        py::arg("family"), py::arg("instances") = 25, py::arg("seed") = 1);
}
