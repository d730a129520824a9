#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialcart/acquisition.hpp"
#include "dialcart/cartography.hpp"
#include "dialcart/classifier.hpp"
#include "dialcart/corpus.hpp"
#include "dialcart/error.hpp"
#include "dialcart/experiment.hpp"
#include "dialcart/reporting.hpp"
#include "dialcart/service.hpp"
#include "dialcart/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dialcart;

namespace {

struct CorpusArgs {
    std::string corpus;
    std::string scheme;
};

void add_corpus_args(CLI::App* cmd, CorpusArgs& a) {
    cmd->add_option("--corpus", a.corpus, "Line-delimited corpus file")->required();
    cmd->add_option("--scheme", a.scheme, "Label scheme JSON (default: built-in 31-tag scheme)");
}

LabelScheme load_scheme(const CorpusArgs& a) {
    return a.scheme.empty() ? LabelScheme::default_scheme() : LabelScheme::load(a.scheme);
}

struct ModelArgs {
    HasherConfig hasher;
    TrainConfig train;
};

void add_model_args(CLI::App* cmd, ModelArgs& m) {
    cmd->add_option("--epochs", m.train.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--learning-rate", m.train.learning_rate, "AdamW learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", m.train.weight_decay, "AdamW weight decay")->capture_default_str();
    cmd->add_option("--train-batch", m.train.batch_size, "Mini-batch size")->capture_default_str();
    cmd->add_option("--dimension", m.hasher.dimension, "Hashed feature dimension")->capture_default_str();
    cmd->add_option("--max-ngram", m.hasher.max_n, "Largest word n-gram")->capture_default_str();
    cmd->add_option("--max-tokens", m.hasher.max_tokens, "Token truncation length")->capture_default_str();
}

// Resolved options of the active subcommand, defaults included.
std::string resolved_config(const CLI::App& app) {
    const auto* sub = app.get_subcommands().front();
    const auto prefix = sub->get_name() + ".";
    std::istringstream all(app.config_to_str(true, false));
    std::string out, line;
    while (std::getline(all, line)) {
        if (line.starts_with(prefix)) out += line + "\n";
    }
    return out;
}

std::string prepare_out(const std::string& out, const CLI::App& app) {
    fs::create_directories(out);
    const auto config = resolved_config(app);
    write_text_file(fs::path(out) / "config.toml", config);
    return sha256_hex(config);
}

struct Labeled {
    std::vector<std::string> ids;
    std::vector<std::string> tags;
    std::vector<std::string> roles;
    std::vector<FeatureVector> features;
    std::vector<std::size_t> labels;
};

Labeled labeled_sentences(const Corpus& corpus, const LabelScheme& scheme, const FeatureHasher& hasher) {
    Labeled out;
    for (const auto& s : corpus.sentences()) {
        if (!s.gold) continue;
        out.ids.push_back(s.id.str());
        out.tags.push_back(*s.gold);
        out.roles.push_back(std::string(to_string(s.role)));
        out.features.push_back(hasher(s.text));
        out.labels.push_back(scheme.require_index(*s.gold));
    }
    if (out.ids.empty()) throw Error(ErrorCode::Insufficient, "corpus has no labeled sentences");
    return out;
}

SplitSpec load_split(const fs::path& path) {
    const auto j = json::parse(read_text_file(path));
    SplitSpec s;
    s.train_sessions = j.at("train_sessions").get<std::vector<std::string>>();
    s.test_sessions = j.at("test_sessions").get<std::vector<std::string>>();
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
}

json split_json(const SplitSpec& s) {
    return {{"train_sessions", s.train_sessions}, {"test_sessions", s.test_sessions}, {"seed", s.seed}};
}

int fail(std::string_view code, const std::string& message, const std::string& detail = {}) {
    std::cerr << json{{"error", {{"code", code}, {"message", message}, {"detail", detail}}}}.dump() << "\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dataset cartography and active learning for dialogue act classification", "dialcart"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML config file; command-line flags take precedence");

    std::string out;
    std::uint64_t seed = 0;

    // synth ------------------------------------------------------------------
    SynthConfig synth_cfg;
    std::string imbalance = "table1";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled tutoring corpus");
    synth->add_option("--sessions", synth_cfg.sessions)->capture_default_str();
    synth->add_option("--sentences", synth_cfg.sentences)->capture_default_str();
    synth->add_option("--imbalance", imbalance, "table1 or uniform")->capture_default_str();
    synth->add_option("--classes", synth_cfg.classes, "Class count for the uniform profile")->capture_default_str();
    synth->add_option("--noise", synth_cfg.noise, "Label flip probability")->capture_default_str();
    synth->add_option("--distractor", synth_cfg.distractor)->capture_default_str();
    synth->add_option("--seed", seed)->capture_default_str();
    synth->add_option("--out", out)->required();

    // ingest -----------------------------------------------------------------
    CorpusArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "Validate a corpus and report label statistics");
    add_corpus_args(ingest, ingest_args);
    ingest->add_option("--out", out)->required();

    // split ------------------------------------------------------------------
    CorpusArgs split_args;
    double test_fraction = 0.2;
    auto* split = app.add_subcommand("split", "Session-level train/test split");
    add_corpus_args(split, split_args);
    split->add_option("--test-fraction", test_fraction)->capture_default_str();
    split->add_option("--seed", seed)->capture_default_str();
    split->add_option("--out", out)->required();

    // train ------------------------------------------------------------------
    CorpusArgs train_args;
    ModelArgs train_model;
    std::string train_split;
    auto* train_cmd = app.add_subcommand("train", "Train the classifier on labeled sentences");
    add_corpus_args(train_cmd, train_args);
    add_model_args(train_cmd, train_model);
    train_cmd->add_option("--split", train_split, "Split file; trains on its train sessions, evaluates on test");
    train_cmd->add_option("--seed", seed)->capture_default_str();
    train_cmd->add_option("--out", out)->required();

    // cartography -------------------------------------------------------------
    CorpusArgs carto_args;
    ModelArgs carto_model;
    std::string carto_split;
    auto* carto = app.add_subcommand("cartography", "Training dynamics data map");
    add_corpus_args(carto, carto_args);
    add_model_args(carto, carto_model);
    carto->add_option("--split", carto_split, "Split file; maps only its train sessions");
    carto->add_option("--seed", seed)->capture_default_str();
    carto->add_option("--out", out)->required();

    // simulate ---------------------------------------------------------------
    CorpusArgs sim_args;
    ModelArgs sim_model;
    std::string sim_split;
    std::vector<std::string> strategies;
    std::size_t n_seeds = 6;
    std::size_t batch = 50;
    std::size_t initial = 50;
    std::size_t rounds = 0;
    std::size_t candidate_cap = 0;
    int ensemble = 5;
    int jobs = 1;
    auto* simulate = app.add_subcommand("simulate", "Simulated pool-based active learning");
    add_corpus_args(simulate, sim_args);
    add_model_args(simulate, sim_model);
    simulate->add_option("--split", sim_split, "Split file (default: fresh split with --test-fraction)");
    simulate->add_option("--test-fraction", test_fraction)->capture_default_str();
    simulate->add_option("--strategy", strategies, "random, entropy, least_confidence, coremse or all")
        ->default_str("all");
    simulate->add_option("--seeds", n_seeds, "Number of repetitions (seeds 0..N-1)")->capture_default_str();
    simulate->add_option("--seed", seed, "Split seed")->capture_default_str();
    simulate->add_option("--batch", batch)->capture_default_str();
    simulate->add_option("--initial", initial)->capture_default_str();
    simulate->add_option("--rounds", rounds, "Acquisition rounds (0: until the pool is exhausted)")
        ->capture_default_str();
    simulate->add_option("--candidates", candidate_cap, "CoreMSE shortlist size (0: 10 x batch)")
        ->capture_default_str();
    simulate->add_option("--ensemble", ensemble, "CoreMSE epoch snapshots")->capture_default_str();
    simulate->add_option("--jobs", jobs, "Parallel (strategy, seed) cells")->capture_default_str();
    simulate->add_option("--out", out)->required();

    // report -----------------------------------------------------------------
    std::string report_in;
    auto* report = app.add_subcommand("report", "Re-render plots from simulation tables");
    report->add_option("--in", report_in, "Simulation output directory")->required()->check(CLI::ExistingDirectory);
    report->add_option("--out", out)->required();

    // serve ------------------------------------------------------------------
    std::string data_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Run the annotation service");
    serve->add_option("--data-dir", data_dir, "Persistence root (default: $DIALCART_DATA_DIR)");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();

    // select -----------------------------------------------------------------
    std::string project;
    std::size_t select_size = 50;
    auto* select = app.add_subcommand("select", "Offline replay of the next batch a service project would issue");
    select->add_option("--data-dir", data_dir, "Persistence root (default: $DIALCART_DATA_DIR)");
    select->add_option("--project", project)->required();
    select->add_option("--size", select_size)->capture_default_str();

    // kappa ------------------------------------------------------------------
    std::string coder_a, coder_b, kappa_scheme;
    auto* kappa = app.add_subcommand("kappa", "Cohen's kappa between two annotations of the same corpus");
    kappa->add_option("--a", coder_a, "Corpus labeled by the first coder")->required();
    kappa->add_option("--b", coder_b, "Corpus labeled by the second coder")->required();
    kappa->add_option("--scheme", kappa_scheme);
    kappa->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), e.get_name());
    }

    try {
        if (*synth) {
            synth_cfg.imbalance = parse_imbalance(imbalance);
            synth_cfg.seed = seed;
            prepare_out(out, app);
            const auto s = synthesize_corpus(synth_cfg);
            export_corpus(s.corpus, fs::path(out) / "corpus.jsonl");
            s.scheme.save(fs::path(out) / "scheme.json");
            std::string flipped;
            for (const auto& id : s.flipped) flipped += id + "\n";
            write_text_file(fs::path(out) / "flipped.txt", flipped);
            std::cout << json{{"sentences", s.corpus.sentences().size()},
                              {"sessions", s.corpus.sessions().size()},
                              {"tags", s.scheme.size()},
                              {"flipped", s.flipped.size()}}
                             .dump()
                      << "\n";
        } else if (*ingest) {
            const auto scheme = load_scheme(ingest_args);
            const auto corpus = ingest_corpus(ingest_args.corpus, scheme);
            const auto hash = prepare_out(out, app);
            export_corpus(corpus, fs::path(out) / "corpus.jsonl");
            scheme.save(fs::path(out) / "scheme.json");
            Table freq{{"tag", "fraction"}, {}, hash};
            for (const auto& [tag, f] : label_frequency(corpus)) freq.rows.push_back({tag, format_double(f)});
            save_table(freq, fs::path(out) / "label_frequency.csv");
            std::size_t labeled = 0;
            for (const auto& s : corpus.sentences()) labeled += s.gold ? 1 : 0;
            const json summary{{"sessions", corpus.sessions().size()},
                               {"utterances", corpus.utterance_count()},
                               {"sentences", corpus.sentences().size()},
                               {"labeled", labeled},
                               {"scheme_version", scheme.version()}};
            write_text_file(fs::path(out) / "summary.json", summary.dump(2) + "\n");
            std::cout << summary.dump() << "\n";
        } else if (*split) {
            const auto scheme = load_scheme(split_args);
            const auto corpus = ingest_corpus(split_args.corpus, scheme);
            const auto spec = split_sessions(corpus, test_fraction, seed);
            prepare_out(out, app);
            write_text_file(fs::path(out) / "split.json", split_json(spec).dump(2) + "\n");
            export_corpus(corpus.subset(spec.train_sessions, scheme), fs::path(out) / "train.jsonl");
            export_corpus(corpus.subset(spec.test_sessions, scheme), fs::path(out) / "test.jsonl");
            std::cout << json{{"train_sessions", spec.train_sessions.size()},
                              {"test_sessions", spec.test_sessions.size()}}
                             .dump()
                      << "\n";
        } else if (*train_cmd) {
            const auto scheme = load_scheme(train_args);
            const auto corpus = ingest_corpus(train_args.corpus, scheme);
            const auto hash = prepare_out(out, app);
            const FeatureHasher hasher(train_model.hasher);
            std::optional<SplitSpec> spec;
            if (!train_split.empty()) spec = load_split(train_split);
            const auto train_corpus = spec ? corpus.subset(spec->train_sessions, scheme) : corpus;
            const auto data = labeled_sentences(train_corpus, scheme, hasher);
            auto tc = train_model.train;
            tc.seed = seed;
            const auto run = train(Dataset{data.features, data.labels, scheme.size()}, tc, scheme.version());
            save_checkpoint(Checkpoint{train_model.hasher, scheme.version(), {run.params}},
                            fs::path(out) / "model.ckpt");
            Table loss{{"epoch", "loss"}, {}, hash};
            for (std::size_t e = 0; e < run.epoch_loss.size(); ++e) {
                loss.rows.push_back({std::to_string(e + 1), format_double(run.epoch_loss[e])});
            }
            save_table(loss, fs::path(out) / "loss.csv");
            json metrics{{"train_instances", data.ids.size()}, {"final_loss", run.epoch_loss.back()}};
            if (spec) {
                const auto test = labeled_sentences(corpus.subset(spec->test_sessions, scheme), scheme, hasher);
                std::vector<std::size_t> preds;
                for (const auto& f : test.features) preds.push_back(argmax(predict_proba(run.params, f)));
                const std::span<const std::size_t> pp(preds), gg(test.labels);
                metrics["test_instances"] = preds.size();
                metrics["accuracy"] = accuracy(pp, gg);
                metrics["macro_f1"] = macro_f1(pp, gg);
            }
            write_text_file(fs::path(out) / "metrics.json", metrics.dump(2) + "\n");
            std::cout << metrics.dump() << "\n";
        } else if (*carto) {
            const auto scheme = load_scheme(carto_args);
            const auto corpus = ingest_corpus(carto_args.corpus, scheme);
            const auto hash = prepare_out(out, app);
            const FeatureHasher hasher(carto_model.hasher);
            const auto mapped = carto_split.empty()
                                    ? corpus
                                    : corpus.subset(load_split(carto_split).train_sessions, scheme);
            const auto data = labeled_sentences(mapped, scheme, hasher);
            auto tc = carto_model.train;
            tc.seed = seed;
            const auto run = train(Dataset{data.features, data.labels, scheme.size()}, tc, scheme.version());
            const auto points = build_data_map(run.dynamics, data.ids);
            std::vector<DataMapRow> rows;
            std::map<std::string, std::string> tag_of;
            for (std::size_t i = 0; i < points.size(); ++i) {
                rows.push_back({points[i], data.tags[i], data.roles[i]});
                tag_of[data.ids[i]] = data.tags[i];
            }
            save_table(data_map_table(rows, hash), fs::path(out) / "data_map.csv");
            write_text_file(fs::path(out) / "data_map.svg", emit_data_map_plot(points));
            save_table(bucket_distribution_table(per_label_bucket_distribution(points, tag_of), hash),
                       fs::path(out) / "bucket_distribution.csv");
            std::array<std::size_t, 4> counts{};
            for (const auto& p : points) ++counts[static_cast<std::size_t>(p.bucket)];
            json summary;
            for (auto b : kBuckets) summary[std::string(to_string(b))] = counts[static_cast<std::size_t>(b)];
            std::cout << summary.dump() << "\n";
        } else if (*simulate) {
            const auto scheme = load_scheme(sim_args);
            const auto corpus = ingest_corpus(sim_args.corpus, scheme);
            const auto hash = prepare_out(out, app);
            const auto spec = sim_split.empty() ? split_sessions(corpus, test_fraction, seed) : load_split(sim_split);
            write_text_file(fs::path(out) / "split.json", split_json(spec).dump(2) + "\n");
            const auto data = make_simulation_data(corpus.subset(spec.train_sessions, scheme),
                                                   corpus.subset(spec.test_sessions, scheme), scheme,
                                                   FeatureHasher(sim_model.hasher));
            ExperimentConfig cfg;
            cfg.initial_labeled = initial;
            cfg.batch_size = batch;
            if (rounds > 0) cfg.rounds = rounds;
            cfg.train = sim_model.train;
            cfg.jobs = jobs;
            cfg.seeds.clear();
            for (std::size_t s = 0; s < n_seeds; ++s) cfg.seeds.push_back(s);
            if (strategies.empty() || (strategies.size() == 1 && strategies[0] == "all")) {
                strategies = {"random", "entropy", "least_confidence", "coremse"};
            }
            for (const auto& name : strategies) {
                StrategyConfig sc;
                sc.kind = parse_strategy(name);
                sc.batch_size = batch;
                sc.candidate_cap = candidate_cap;
                sc.ensemble_size = ensemble;
                cfg.strategies.push_back(sc);
            }
            const auto results = run_experiment(data, cfg);
            write_experiment_results(out, results, scheme, hash);
            write_manifest(out);
            std::cout << read_text_file(fs::path(out) / "summary.csv");
        } else if (*report) {
            if (fs::weakly_canonical(report_in) != fs::weakly_canonical(out)) {
                fs::create_directories(out);
                fs::copy(report_in, out, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
            }
            prepare_out(out, app);
            for (const auto& p : render_report(out)) std::cout << p.string() << "\n";
            write_manifest(out);
        } else if (*serve) {
            if (data_dir.empty()) {
                const char* env = std::getenv(kDataDirEnv);
                if (!env) return fail("invalid_argument", "set --data-dir or DIALCART_DATA_DIR");
                data_dir = env;
            }
            AnnotationService service(data_dir);
            httplib::Server server;
            register_routes(server, service);
            std::cerr << "listening on " << host << ":" << port << " data=" << data_dir << "\n";
            if (!server.listen(host, port)) return fail("io_error", "cannot listen", host + ":" + std::to_string(port));
        } else if (*select) {
            if (data_dir.empty()) {
                const char* env = std::getenv(kDataDirEnv);
                if (!env) return fail("invalid_argument", "set --data-dir or DIALCART_DATA_DIR");
                data_dir = env;
            }
            const AnnotationService service(data_dir);
            const auto state = service.selection_state(project);
            const auto exported = service.export_project(project);
            StrategyConfig sc;
            sc.kind = state.model ? parse_strategy(exported["options"]["strategy"].get<std::string>())
                                  : Strategy::Random;
            sc.candidate_cap = exported["options"]["candidate_cap"].get<std::size_t>();
            sc.ensemble_size = exported["options"]["ensemble_size"].get<int>();
            const auto candidates = build_candidates(state, sc);
            sc.batch_size = std::min(select_size, candidates.size());
            sc.seed = batch_seed(exported["options"]["seed"].get<std::uint64_t>(), exported["tickets"].size());
            json ids = json::array();
            for (auto idx : select_batch(candidates, sc)) ids.push_back(state.corpus.sentences()[idx].id.str());
            std::cout << json{{"strategy", to_string(sc.kind)}, {"sentence_ids", ids}}.dump() << "\n";
        } else if (*kappa) {
            const auto scheme = kappa_scheme.empty() ? LabelScheme::default_scheme() : LabelScheme::load(kappa_scheme);
            const auto a = ingest_corpus(coder_a, scheme);
            const auto b = ingest_corpus(coder_b, scheme);
            std::map<std::string, std::string> second;
            for (const auto& s : b.sentences()) {
                if (s.gold) second[s.id.str()] = *s.gold;
            }
            std::vector<std::string> la, lb;
            for (const auto& s : a.sentences()) {
                if (!s.gold) continue;
                if (auto it = second.find(s.id.str()); it != second.end()) {
                    la.push_back(*s.gold);
                    lb.push_back(it->second);
                }
            }
            if (la.empty()) throw Error(ErrorCode::Insufficient, "the two annotations share no labeled sentence");
            const json result{{"kappa", cohens_kappa(la, lb)}, {"overlap", la.size()}};
            if (!out.empty()) {
                prepare_out(out, app);
                write_text_file(fs::path(out) / "kappa.json", result.dump(2) + "\n");
            }
            std::cout << result.dump() << "\n";
        }
    } catch (const Error& e) {
        return fail(to_string(e.code()), e.what(), e.detail());
    } catch (const json::exception& e) {
        return fail("parse_error", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
