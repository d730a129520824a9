#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "dialcart/acquisition.hpp"
#include "dialcart/cartography.hpp"
#include "dialcart/classifier.hpp"
#include "dialcart/corpus.hpp"
#include "dialcart/error.hpp"
#include "dialcart/experiment.hpp"
#include "dialcart/synth.hpp"

namespace py = pybind11;
using namespace dialcart;

namespace {

FeatureVector sparse(const std::vector<double>& dense) {
    FeatureVector v;
    v.dimension = dense.size();
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] != 0.0) v.entries.emplace_back(static_cast<std::uint32_t>(i), dense[i]);
    }
    return v;
}

TrainingDynamics dynamics_from(const std::vector<std::vector<double>>& gold_prob,
                               const std::vector<std::vector<int>>& correct) {
    if (gold_prob.size() != correct.size()) throw Error(ErrorCode::InvalidArgument, "row count mismatch");
    TrainingDynamics d;
    d.instances = gold_prob.size();
    d.epochs = gold_prob.empty() ? 0 : gold_prob[0].size();
    for (std::size_t i = 0; i < d.instances; ++i) {
        if (gold_prob[i].size() != d.epochs || correct[i].size() != d.epochs) {
            throw Error(ErrorCode::InvalidArgument, "ragged dynamics matrix");
        }
        d.gold_prob.insert(d.gold_prob.end(), gold_prob[i].begin(), gold_prob[i].end());
        for (int c : correct[i]) d.correct.push_back(static_cast<std::uint8_t>(c != 0));
    }
    return d;
}

py::dict point_dict(const DataMapPoint& p) {
    py::dict d;
    d["id"] = p.id;
    d["confidence"] = p.confidence;
    d["variability"] = p.variability;
    d["correctness"] = p.correctness;
    d["bucket"] = std::string(to_string(p.bucket));
    return d;
}

// A trained model bundled with the hasher that produced its features.
struct TextModel {
    FeatureHasher hasher;
    TrainRun run;
    LabelScheme scheme;

    std::vector<double> predict_proba(const std::string& text) const {
        return dialcart::predict_proba(run.params, featurize(text, hasher));
    }
    std::string predict(const std::string& text) const { return scheme.tags()[argmax(predict_proba(text))].name; }
};

TextModel train_texts(const std::vector<std::string>& texts, const std::vector<std::string>& tags,
                      const std::string& scheme_json, int epochs, std::size_t dimension, std::uint64_t seed) {
    if (texts.size() != tags.size()) throw Error(ErrorCode::InvalidArgument, "texts and tags differ in length");
    const auto scheme = scheme_json.empty() ? LabelScheme::default_scheme() : LabelScheme::from_json_text(scheme_json);
    HasherConfig hc;
    hc.dimension = dimension;
    FeatureHasher hasher(hc);
    std::vector<FeatureVector> x;
    std::vector<std::size_t> y;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        x.push_back(featurize(texts[i], hasher));
        y.push_back(scheme.require_index(tags[i]));
    }
    TrainConfig tc;
    tc.epochs = epochs;
    tc.seed = seed;
    auto run = train(Dataset{x, y, scheme.size()}, tc, scheme.version());
    return TextModel{hasher, std::move(run), scheme};
}

py::list simulate(const std::string& corpus_text, const std::string& scheme_json, const std::string& strategy,
                  std::uint64_t seed, std::size_t batch, std::size_t initial, std::size_t rounds,
                  double test_fraction, int epochs, std::size_t dimension) {
    const auto scheme = LabelScheme::from_json_text(scheme_json);
    const auto corpus = parse_corpus(corpus_text, scheme);
    const auto split = split_sessions(corpus, test_fraction, seed);
    HasherConfig hc;
    hc.dimension = dimension;
    const auto data = make_simulation_data(corpus.subset(split.train_sessions, scheme),
                                           corpus.subset(split.test_sessions, scheme), scheme, FeatureHasher(hc));
    ExperimentConfig cfg;
    cfg.initial_labeled = initial;
    cfg.batch_size = batch;
    if (rounds > 0) cfg.rounds = rounds;
    cfg.train.epochs = epochs;
    StrategyConfig sc;
    sc.kind = parse_strategy(strategy);
    sc.batch_size = batch;
    sc.ensemble_size = std::min(5, epochs);
    py::list out;
    for (const auto& r : run_simulation(data, sc, cfg, seed)) {
        py::dict d;
        d["round"] = r.round;
        d["labeled_count"] = r.labeled_count;
        d["accuracy"] = r.accuracy;
        d["macro_f1"] = r.macro_f1;
        d["acquired_ids"] = r.acquired_ids;
        d["cumulative_per_label"] = r.cumulative_per_label;
        d["partial"] = r.partial;
        out.append(d);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dialogue-act data cartography and active learning";

    static PyObject* error_type = py::exception<Error>(m, "DialcartError", PyExc_ValueError).ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error_type, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def("confidence", [](const std::vector<double>& p) { return confidence(p); });
    m.def("variability", [](const std::vector<double>& p) { return variability(p); });
    m.def("correctness", [](const std::vector<int>& flags) {
        std::vector<std::uint8_t> f(flags.begin(), flags.end());
        return correctness(f);
    });
    m.def("bucket", [](double cor) { return std::string(to_string(bucket(cor))); });
    m.def(
        "data_map",
        [](const std::vector<std::vector<double>>& gold_prob, const std::vector<std::vector<int>>& correct,
           const std::vector<std::string>& ids) {
            py::list out;
            for (const auto& p : build_data_map(dynamics_from(gold_prob, correct), ids)) out.append(point_dict(p));
            return out;
        },
        py::arg("gold_prob"), py::arg("correct"), py::arg("ids"));

    m.def("entropy", [](const std::vector<double>& p) { return entropy_score(p); });
    m.def("least_confidence", [](const std::vector<double>& p) { return least_confidence_score(p); });
    m.def("coremse_uncertainty", [](const std::vector<std::vector<double>>& members) {
        return coremse_uncertainty(members);
    });
    m.def(
        "select",
        [](const std::string& strategy, const std::vector<std::size_t>& ids, std::size_t batch_size,
           const std::vector<std::vector<double>>& predictive, const std::vector<std::vector<std::vector<double>>>& ensembles,
           const std::vector<std::vector<double>>& features, std::uint64_t seed,
           std::size_t candidate_cap) {
            std::vector<Candidate> cands(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i) {
                cands[i].id = ids[i];
                if (i < predictive.size()) cands[i].predictive = predictive[i];
                if (i < ensembles.size()) cands[i].ensemble = ensembles[i];
                if (i < features.size()) cands[i].features = sparse(features[i]);
            }
            StrategyConfig cfg;
            cfg.kind = parse_strategy(strategy);
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            cfg.candidate_cap = candidate_cap;
            return select_batch(cands, cfg);
        },
        py::arg("strategy"), py::arg("ids"), py::arg("batch_size"), py::arg("predictive") = std::vector<std::vector<double>>{},
        py::arg("ensembles") = std::vector<std::vector<std::vector<double>>>{},
        py::arg("features") = std::vector<std::vector<double>>{}, py::arg("seed") = 0,
        py::arg("candidate_cap") = 0);

    m.def("accuracy", [](const std::vector<std::string>& p, const std::vector<std::string>& g) {
        return accuracy<std::string>(p, g);
    });
    m.def("macro_f1", [](const std::vector<std::string>& p, const std::vector<std::string>& g) {
        return macro_f1<std::string>(p, g);
    });
    m.def("per_label_f1", [](const std::vector<std::string>& p, const std::vector<std::string>& g) {
        return per_label_f1<std::string>(p, g);
    });
    m.def("cohens_kappa", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        return cohens_kappa(a, b);
    });
    m.def("tokenize", &tokenize);
    m.def("sentence_units", &sentence_units);

    m.def(
        "synthesize",
        [](const std::string& imbalance, std::size_t sentences, std::size_t sessions, std::size_t classes,
           double noise, std::uint64_t seed) {
            SynthConfig cfg;
            cfg.imbalance = parse_imbalance(imbalance);
            cfg.sentences = sentences;
            cfg.sessions = sessions;
            cfg.classes = classes;
            cfg.noise = noise;
            cfg.seed = seed;
            const auto s = synthesize_corpus(cfg);
            py::dict d;
            d["corpus"] = export_corpus(s.corpus);
            d["scheme"] = s.scheme.to_json_text();
            d["flipped"] = std::vector<std::string>(s.flipped.begin(), s.flipped.end());
            return d;
        },
        py::arg("imbalance") = "table1", py::arg("sentences") = 2000, py::arg("sessions") = 50,
        py::arg("classes") = 5, py::arg("noise") = 0.0, py::arg("seed") = 0);

    py::class_<TextModel>(m, "Model")
        .def("predict_proba", &TextModel::predict_proba)
        .def("predict", &TextModel::predict)
        .def_property_readonly("epoch_loss", [](const TextModel& t) { return t.run.epoch_loss; })
        .def("data_map", [](const TextModel& t, const std::vector<std::string>& ids) {
            py::list out;
            for (const auto& p : build_data_map(t.run.dynamics, ids)) out.append(point_dict(p));
            return out;
        });
    m.def("train", &train_texts, py::arg("texts"), py::arg("tags"), py::arg("scheme") = "", py::arg("epochs") = 30,
          py::arg("dimension") = 1u << 14, py::arg("seed") = 0);
    m.def("simulate", &simulate, py::arg("corpus"), py::arg("scheme"), py::arg("strategy") = "coremse",
          py::arg("seed") = 0, py::arg("batch") = 50, py::arg("initial") = 50, py::arg("rounds") = 0,
          py::arg("test_fraction") = 0.2, py::arg("epochs") = 30, py::arg("dimension") = 1u << 14);
}
