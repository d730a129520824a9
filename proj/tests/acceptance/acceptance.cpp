// Acceptance suite: one PASS/FAIL line per criterion, tolerances and time
// budgets pinned below. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dialcart/acquisition.hpp"
#include "dialcart/cartography.hpp"
#include "dialcart/classifier.hpp"
#include "dialcart/corpus.hpp"
#include "dialcart/experiment.hpp"
#include "dialcart/synth.hpp"

using namespace dialcart;

namespace {

constexpr double kCartographyTol = 1e-12;
constexpr double kGradientTol = 1e-4;
constexpr double kNoiseRecall = 0.70;
constexpr double kF1Slack = 0.01;
constexpr double kFullDataAccuracy = 0.9;

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(const char* name, double budget_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > budget_s) {
        o.pass = false;
        o.detail += " over time budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s %s (%.2fs / %.0fs) %s\n", o.pass ? "PASS" : "FAIL", name, secs, budget_s, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// Cartography ----------------------------------------------------------------

Outcome cartography_oracle() {
    std::mt19937_64 gen(20240611);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    std::size_t bucket_mismatch = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        TrainingDynamics d;
        d.instances = 1 + gen() % 200;
        d.epochs = 1 + gen() % 30;
        for (std::size_t k = 0; k < d.instances * d.epochs; ++k) {
            d.gold_prob.push_back(unit(gen));
            d.correct.push_back(static_cast<std::uint8_t>(gen() % 2));
        }
        std::vector<std::string> ids(d.instances);
        for (std::size_t i = 0; i < d.instances; ++i) ids[i] = std::to_string(i);
        const auto map = build_data_map(d, ids);
        for (std::size_t i = 0; i < d.instances; ++i) {
            double sum = 0.0;
            long hits = 0;
            for (std::size_t e = 0; e < d.epochs; ++e) {
                sum += d.gold_prob[i * d.epochs + e];
                hits += d.correct[i * d.epochs + e];
            }
            const double mean = sum / static_cast<double>(d.epochs);
            double sq = 0.0;
            for (std::size_t e = 0; e < d.epochs; ++e) {
                const double diff = d.gold_prob[i * d.epochs + e] - mean;
                sq += diff * diff;
            }
            const double var = std::sqrt(sq / static_cast<double>(d.epochs));
            const double cor = static_cast<double>(hits) / static_cast<double>(d.epochs);
            worst = std::max({worst, std::abs(map[i].confidence - mean), std::abs(map[i].variability - var),
                              std::abs(map[i].correctness - cor)});
            Bucket expect = Bucket::Impossible;
            if (cor >= 0.75) {
                expect = Bucket::Easy;
            } else if (cor >= 0.5) {
                expect = Bucket::Medium;
            } else if (cor >= 0.25) {
                expect = Bucket::Hard;
            }
            if (map[i].bucket != expect) ++bucket_mismatch;
        }
    }
    const bool edges = bucket(0.75) == Bucket::Easy && bucket(0.5) == Bucket::Medium && bucket(0.25) == Bucket::Hard &&
                       bucket(std::nextafter(0.75, 0.0)) == Bucket::Medium &&
                       bucket(std::nextafter(0.5, 0.0)) == Bucket::Hard &&
                       bucket(std::nextafter(0.25, 0.0)) == Bucket::Impossible && bucket(0.0) == Bucket::Impossible;
    return {worst <= kCartographyTol && bucket_mismatch == 0 && edges,
            fmt("max_abs_err=%.3g bucket_mismatch=%.0f edges=%.0f", worst, static_cast<double>(bucket_mismatch),
                edges ? 1.0 : 0.0)};
}

// Strategies -----------------------------------------------------------------

std::vector<double> random_dist(std::mt19937_64& gen, std::size_t classes) {
    std::gamma_distribution<double> g(0.5, 1.0);
    std::vector<double> p(classes);
    double s = 0.0;
    for (auto& v : p) s += v = g(gen) + 1e-12;
    for (auto& v : p) v /= s;
    return p;
}

// Sort every id by score with a full comparator, keep the first b.
std::vector<std::size_t> argsort_top(const std::vector<std::size_t>& ids, const std::vector<double>& scores,
                                     std::size_t b) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (scores[x] != scores[y]) return scores[x] > scores[y];
        return ids[x] < ids[y];
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < b; ++i) out.push_back(ids[order[i]]);
    return out;
}

double naive_entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

double naive_least_confidence(const std::vector<double>& p) {
    double m = p[0];
    for (double v : p) m = std::max(m, v);
    return 1.0 - m;
}

double naive_ensemble_variance(const std::vector<std::vector<double>>& members) {
    const double k = static_cast<double>(members.size());
    double total = 0.0;
    for (std::size_t c = 0; c < members[0].size(); ++c) {
        double mean = 0.0;
        for (const auto& m : members) mean += m[c];
        mean /= k;
        for (const auto& m : members) total += (m[c] - mean) * (m[c] - mean) / k;
    }
    return total;
}

double dense_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Stage one keeps the M most uncertain candidates; stage two starts from the
// most uncertain of them and repeatedly adds the point farthest from the
// chosen set.
std::vector<std::size_t> coremse_replay(const std::vector<std::size_t>& ids,
                                        const std::vector<std::vector<std::vector<double>>>& ensembles,
                                        const std::vector<std::vector<double>>& dense, std::size_t b, std::size_t m) {
    std::vector<double> u;
    for (const auto& e : ensembles) u.push_back(naive_ensemble_variance(e));
    const auto shortlist = argsort_top(ids, u, std::min(m, ids.size()));
    std::map<std::size_t, std::size_t> at;
    for (std::size_t i = 0; i < ids.size(); ++i) at[ids[i]] = i;
    std::vector<std::size_t> chosen = {shortlist[0]};
    while (chosen.size() < b) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (auto id : shortlist) {
            if (std::find(chosen.begin(), chosen.end(), id) != chosen.end()) continue;
            double d = INFINITY;
            for (auto c : chosen) d = std::min(d, dense_distance(dense[at[id]], dense[at[c]]));
            const bool better = d > best_d || (d == best_d && (u[at[id]] > u[at[best]] ||
                                                               (u[at[id]] == u[at[best]] && id < best)));
            if (best_d < 0.0 || better) {
                best = id;
                best_d = d;
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

Outcome strategy_correctness() {
    std::mt19937_64 gen(77);
    std::size_t mismatches = 0, trials = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + gen() % 100;
        const std::size_t classes = 2 + gen() % 6;
        const std::size_t b = 1 + gen() % n;
        std::vector<Candidate> cands;
        std::vector<std::size_t> ids;
        std::vector<double> ent, lc;
        std::set<std::size_t> used;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t id;
            do id = gen() % 1000; while (!used.insert(id).second);
            Candidate c;
            c.id = id;
            c.predictive = random_dist(gen, classes);
            if (trial % 5 == 0 && i > 0) c.predictive = cands[gen() % i].predictive;  // exact ties
            ids.push_back(id);
            ent.push_back(naive_entropy(c.predictive));
            lc.push_back(naive_least_confidence(c.predictive));
            cands.push_back(std::move(c));
        }
        StrategyConfig cfg;
        cfg.batch_size = b;
        cfg.kind = Strategy::MaxEntropy;
        mismatches += select_batch(cands, cfg) != argsort_top(ids, ent, b);
        cfg.kind = Strategy::LeastConfidence;
        mismatches += select_batch(cands, cfg) != argsort_top(ids, lc, b);
        trials += 2;
    }
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 1 + gen() % 8;
        const std::size_t classes = 2 + gen() % 4;
        const std::size_t dim = 1 + gen() % 6;
        const std::size_t b = 1 + gen() % n;
        const std::size_t m = b + gen() % (n - b + 1);
        const int k = 2 + static_cast<int>(gen() % 4);
        std::vector<Candidate> cands;
        std::vector<std::size_t> ids;
        std::vector<std::vector<std::vector<double>>> ensembles;
        std::vector<std::vector<double>> dense;
        for (std::size_t i = 0; i < n; ++i) {
            Candidate c;
            c.id = 10 * i + gen() % 10;
            for (int j = 0; j < k; ++j) c.ensemble.push_back(random_dist(gen, classes));
            std::vector<double> x(dim, 0.0);
            c.features.dimension = dim;
            for (std::size_t d = 0; d < dim; ++d) {
                if (gen() % 3 == 0) continue;
                x[d] = static_cast<double>(gen() % 5) - 2.0;
                if (x[d] != 0.0) c.features.entries.emplace_back(static_cast<std::uint32_t>(d), x[d]);
            }
            ids.push_back(c.id);
            ensembles.push_back(c.ensemble);
            dense.push_back(x);
            cands.push_back(std::move(c));
        }
        StrategyConfig cfg;
        cfg.kind = Strategy::CoreMSE;
        cfg.batch_size = b;
        cfg.candidate_cap = m;
        mismatches += select_batch(cands, cfg) != coremse_replay(ids, ensembles, dense, b, m);
        ++trials;
    }
    return {mismatches == 0, fmt("trials=%.0f mismatches=%.0f", static_cast<double>(trials),
                                 static_cast<double>(mismatches))};
}

// Active-learning loop -------------------------------------------------------

SynthCorpus synth(Imbalance imbalance, std::size_t classes, std::size_t sentences, double noise, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.imbalance = imbalance;
    cfg.classes = classes;
    cfg.sentences = sentences;
    cfg.noise = noise;
    cfg.seed = seed;
    return synthesize_corpus(cfg);
}

Outcome loop_invariants() {
    const auto pool = synth(Imbalance::Table1, 0, 2000, 0.0, 1);
    const auto test = synth(Imbalance::Table1, 0, 400, 0.0, 2);
    const auto data = make_simulation_data(pool.corpus, test.corpus, pool.scheme, FeatureHasher());
    if (data.pool_features.size() != 2000) return {false, "pool size is not 2000"};
    ExperimentConfig cfg;
    cfg.initial_labeled = 50;
    cfg.batch_size = 50;
    StrategyConfig sc;
    sc.kind = Strategy::CoreMSE;
    sc.batch_size = 50;
    const std::uint64_t seed = 3;
    const auto run = run_simulation(data, sc, cfg, seed);
    const auto replay = run_simulation(data, sc, cfg, seed);

    std::set<std::size_t> labeled;
    for (auto id : initial_sample(2000, 50, seed)) labeled.insert(id);
    std::size_t violations = 0;
    for (const auto& rr : run) {
        for (auto id : rr.acquired_ids) {
            if (id >= 2000 || !labeled.insert(id).second) ++violations;
        }
        std::size_t cumulative = 0;
        for (const auto& [tag, count] : rr.cumulative_per_label) cumulative += count;
        if (cumulative != rr.round * 50) ++violations;
        if (rr.labeled_count != labeled.size()) ++violations;
        if (rr.round == 0 && !rr.acquired_ids.empty()) ++violations;
    }
    const bool exhausted = labeled.size() == 2000 && run.size() == 40;
    const bool identical = run == replay;
    return {violations == 0 && exhausted && identical,
            fmt("rounds=%.0f violations=%.0f exhausted=%.0f replay_identical=%.0f", static_cast<double>(run.size()),
                static_cast<double>(violations), exhausted, identical)};
}

// Gradient -------------------------------------------------------------------

Outcome gradient_check() {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = 1 + gen() % 10;
        const std::size_t classes = 2 + gen() % 3;
        const std::size_t n = 1 + gen() % 8;
        std::vector<FeatureVector> x(n);
        std::vector<std::size_t> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i].dimension = dim;
            for (std::size_t d = 0; d < dim; ++d) {
                if (gen() % 2) x[i].entries.emplace_back(static_cast<std::uint32_t>(d), normal(gen));
            }
            y[i] = gen() % classes;
        }
        ModelParams p(classes, dim);
        for (auto& w : p.weights) w = normal(gen);
        for (auto& b : p.bias) b = normal(gen);
        const Dataset data{x, y, classes};
        const auto grad = cross_entropy_gradient(p, data);
        const double h = 1e-5;
        auto rel = [&](double analytic, double numeric) {
            return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
        };
        for (std::size_t k = 0; k < p.weights.size(); ++k) {
            auto plus = p, minus = p;
            plus.weights[k] += h;
            minus.weights[k] -= h;
            const double numeric = (cross_entropy(plus, data) - cross_entropy(minus, data)) / (2 * h);
            worst = std::max(worst, rel(grad.weights[k], numeric));
        }
        for (std::size_t k = 0; k < p.bias.size(); ++k) {
            auto plus = p, minus = p;
            plus.bias[k] += h;
            minus.bias[k] -= h;
            const double numeric = (cross_entropy(plus, data) - cross_entropy(minus, data)) / (2 * h);
            worst = std::max(worst, rel(grad.bias[k], numeric));
        }
    }
    return {worst <= kGradientTol, fmt("max_rel_err=%.3g", worst)};
}

// Noise detection ------------------------------------------------------------

Outcome noise_detection() {
    std::string detail;
    bool pass = true;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto corpus = synth(Imbalance::Uniform, 5, 2000, 0.05, 100 + seed);
        const auto data = make_simulation_data(corpus.corpus, corpus.corpus, corpus.scheme, FeatureHasher());
        TrainConfig tc;
        tc.epochs = 30;
        tc.seed = seed;
        const auto run = train(Dataset{data.pool_features, data.pool_labels, corpus.scheme.size()}, tc);
        const auto map = build_data_map(run.dynamics, data.pool_ids);
        std::vector<std::size_t> order(map.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return map[a].confidence < map[b].confidence; });
        std::set<std::string> bottom;
        for (std::size_t i = 0; i < order.size() / 2; ++i) bottom.insert(map[order[i]].id);
        std::size_t caught = 0;
        for (const auto& id : corpus.flipped) caught += bottom.count(id);
        const double recall = static_cast<double>(caught) / static_cast<double>(corpus.flipped.size());
        pass = pass && !corpus.flipped.empty() && recall >= kNoiseRecall;
        detail += fmt("seed%.0f=%.3f(n=%.0f) ", static_cast<double>(seed), recall,
                      static_cast<double>(corpus.flipped.size()));
    }
    return {pass, detail};
}

// Directional benefit --------------------------------------------------------

Outcome directional_benefit() {
    const auto corpus = synth(Imbalance::Table1, 0, 2000, 0.0, 7);
    const auto split = split_sessions(corpus.corpus, 0.2, 7);
    const auto data = make_simulation_data(corpus.corpus.subset(split.train_sessions, corpus.scheme),
                                           corpus.corpus.subset(split.test_sessions, corpus.scheme), corpus.scheme,
                                           FeatureHasher());
    ExperimentConfig cfg;
    cfg.initial_labeled = 50;
    cfg.batch_size = 50;
    cfg.rounds = 11;
    cfg.strategies = {StrategyConfig{Strategy::Random, 50, 0, 5, 0}, StrategyConfig{Strategy::CoreMSE, 50, 0, 5, 0}};
    const auto results = run_experiment(data, cfg);

    std::vector<LearningCurve> curves;
    for (const auto& s : results.strategies) {
        std::vector<CurveSeries> series;
        for (const auto& run : s.runs) series.push_back(metric_series(run, true));
        curves.push_back(aggregate_over_seeds(series, std::string(to_string(s.strategy.kind)), "macro_f1"));
    }
    const auto& random = curves[0];
    const auto& coremse = curves[1];
    if (random.labeled_counts.back() != 600) return {false, "curve does not reach 600 labels"};
    const double f1_random = random.mean.back();
    const double f1_coremse = coremse.mean.back();
    const double auc_random = area_under_curve(random, 600);
    const double auc_coremse = area_under_curve(coremse, 600);

    TrainConfig tc;
    const auto full = train(Dataset{data.pool_features, data.pool_labels, corpus.scheme.size()}, tc);
    std::vector<std::size_t> preds;
    for (const auto& x : data.test_features) preds.push_back(argmax(predict_proba(full.params, x)));
    const double full_acc = accuracy<std::size_t>(preds, data.test_labels);

    const bool pass = f1_coremse >= f1_random - kF1Slack && auc_coremse >= auc_random && full_acc >= kFullDataAccuracy;
    return {pass, fmt("f1@600 coremse=%.4f random=%.4f auc coremse=%.4f random=%.4f", f1_coremse, f1_random,
                      auc_coremse, auc_random) +
                      fmt(" full_data_acc=%.4f", full_acc)};
}

// Metric units ---------------------------------------------------------------

Outcome metric_units() {
    const std::vector<std::string> golds = {"a", "a", "b", "b"};
    const std::vector<std::string> preds = {"a", "a", "a", "a"};
    const auto f1 = per_label_f1<std::string>(preds, golds);
    const double macro = macro_f1<std::string>(preds, golds);
    const std::vector<std::string> ka = {"1", "1", "0", "0"};
    const std::vector<std::string> kb = {"1", "0", "0", "1"};
    const double kappa = cohens_kappa(ka, kb);
    const bool pass = f1.at("a") == 2.0 / 3.0 && f1.at("b") == 0.0 && macro == 1.0 / 3.0 && kappa == 0.0;
    return {pass, fmt("macro_f1=%.17g kappa=%.17g", macro, kappa)};
}

} // namespace

int main() {
    report("cartography_oracle_equivalence", 10, cartography_oracle);
    report("strategy_correctness_small_pools", 10, strategy_correctness);
    report("al_loop_invariants", 120, loop_invariants);
    report("gradient_check", 5, gradient_check);
    report("noise_detection", 60, noise_detection);
    report("directional_al_benefit", 600, directional_benefit);
    report("metric_unit_checks", 1, metric_units);
    return failures == 0 ? 0 : 1;
}
