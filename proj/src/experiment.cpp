#include "dialcart/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "dialcart/rng.hpp"

namespace dialcart {

namespace {

// Sub-seed salts, so that the streams a seed drives stay independent.
constexpr std::uint64_t kInitialStream = 0x1a17;
constexpr std::uint64_t kTrainStream = 0x7a15;
constexpr std::uint64_t kSelectStream = 0x5e1e;

} // namespace

SimulationData make_simulation_data(const Corpus& train, const Corpus& test, const LabelScheme& scheme,
                                    const FeatureHasher& hasher) {
    SimulationData data;
    data.scheme = scheme;
    for (const auto& s : train.sentences()) {
        if (!s.gold) continue;
        data.pool_ids.push_back(s.id.str());
        data.pool_features.push_back(hasher(s.text));
        data.pool_labels.push_back(scheme.require_index(*s.gold));
    }
    for (const auto& s : test.sentences()) {
        if (!s.gold) continue;
        data.test_features.push_back(hasher(s.text));
        data.test_labels.push_back(scheme.require_index(*s.gold));
    }
    return data;
}

std::size_t GoldOracle::reveal(std::size_t id) {
    if (id >= labels_.size()) throw Error(ErrorCode::NotFound, "oracle has no instance " + std::to_string(id));
    ++reveals_;
    return labels_[id];
}

std::vector<std::size_t> initial_sample(std::size_t pool_size, std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> all(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) all[i] = i;
    return random_select(all, count, derive_seed(seed, kInitialStream));
}

std::vector<RoundResult> run_simulation(const SimulationData& data, const StrategyConfig& strategy,
                                        const ExperimentConfig& config, std::uint64_t seed) {
    const std::size_t pool = data.pool_features.size();
    if (data.pool_labels.size() != pool) throw Error(ErrorCode::InvalidArgument, "pool labels/features mismatch");
    if (data.test_features.empty()) throw Error(ErrorCode::Insufficient, "test set is empty");
    if (config.batch_size == 0 || config.initial_labeled == 0) {
        throw Error(ErrorCode::InvalidArgument, "initial size and batch size must be positive");
    }
    if (config.initial_labeled > pool) {
        throw Error(ErrorCode::Insufficient, "pool of " + std::to_string(pool) + " cannot supply " +
                                                 std::to_string(config.initial_labeled) + " initial labels");
    }
    if (config.rounds && config.initial_labeled + *config.rounds * config.batch_size > pool) {
        throw Error(ErrorCode::Insufficient, "pool too small for the requested number of rounds");
    }
    const bool ensemble = strategy.kind == Strategy::CoreMSE;
    TrainConfig tc = config.train;
    tc.keep_snapshots = ensemble ? strategy.ensemble_size : 1;
    if (ensemble && (strategy.ensemble_size < 1 || strategy.ensemble_size > tc.epochs)) {
        throw Error(ErrorCode::InvalidArgument, "ensemble size must lie in [1, epochs]");
    }

    GoldOracle oracle(data.pool_labels);
    std::vector<bool> labeled(pool, false);
    std::vector<FeatureVector> train_features;
    std::vector<std::size_t> train_labels;
    std::map<std::string, std::size_t> cumulative;
    for (const auto& t : data.scheme.tags()) cumulative[t.name] = 0;

    auto acquire = [&](std::size_t id) -> std::size_t {
        if (id >= pool || labeled[id]) {
            throw Error(ErrorCode::Duplicate, "instance " + std::to_string(id) + " is not acquirable");
        }
        labeled[id] = true;
        const std::size_t c = oracle.reveal(id);
        train_features.push_back(data.pool_features[id]);
        train_labels.push_back(c);
        return c;
    };
    for (auto id : initial_sample(pool, config.initial_labeled, seed)) acquire(id);

    std::vector<RoundResult> results;
    std::vector<std::size_t> preds(data.test_features.size());
    TrainRun model;

    for (std::size_t round = 0;; ++round) {
        RoundResult rr;
        rr.round = round;

        if (round > 0) {
            std::vector<Candidate> candidates;
            for (std::size_t id = 0; id < pool; ++id) {
                if (labeled[id]) continue;
                Candidate c;
                c.id = id;
                c.predictive = predict_proba(model.params, data.pool_features[id]);
                if (ensemble) {
                    for (const auto& snap : model.snapshots) c.ensemble.push_back(predict_proba(snap, data.pool_features[id]));
                    c.features = data.pool_features[id];
                }
                candidates.push_back(std::move(c));
            }
            StrategyConfig sc = strategy;
            sc.batch_size = std::min(config.batch_size, candidates.size());
            sc.seed = derive_seed(seed, kSelectStream, round);
            rr.partial = sc.batch_size < config.batch_size;
            rr.acquired_ids = select_batch(candidates, sc);
            for (auto id : rr.acquired_ids) {
                const auto& tag = data.scheme.name(acquire(id));
                rr.acquired_per_label[tag] += 1;
                cumulative[tag] += 1;
            }
        }

        tc.seed = derive_seed(seed, kTrainStream, round);
        model = train(Dataset{train_features, train_labels, data.scheme.size()}, tc, data.scheme.version());

        for (std::size_t i = 0; i < preds.size(); ++i) {
            preds[i] = argmax(predict_proba(model.params, data.test_features[i]));
        }
        const std::span<const std::size_t> p(preds);
        const std::span<const std::size_t> g(data.test_labels);
        rr.accuracy = accuracy(p, g);
        rr.macro_f1 = macro_f1(p, g);
        for (const auto& [c, f1] : per_label_f1(p, g)) rr.per_label_f1[data.scheme.name(c)] = f1;
        rr.labeled_count = train_features.size();
        rr.cumulative_per_label = cumulative;
        results.push_back(std::move(rr));

        const bool exhausted = train_features.size() == pool;
        if (results.back().partial || exhausted || (config.rounds && round == *config.rounds)) break;
    }
    return results;
}

SamplingTable cumulative_sampling_frequency(std::span<const RoundResult> results, const LabelScheme& scheme) {
    SamplingTable table;
    for (const auto& t : scheme.tags()) table.tags.push_back(t.name);
    table.counts.assign(table.tags.size(), {});
    std::vector<double> running(table.tags.size(), 0.0);
    for (const auto& rr : results) {
        if (!table.rounds.empty() && rr.round <= table.rounds.back()) {
            throw Error(ErrorCode::InvalidArgument, "round results are not ordered");
        }
        table.rounds.push_back(rr.round);
        for (std::size_t t = 0; t < table.tags.size(); ++t) {
            if (auto it = rr.acquired_per_label.find(table.tags[t]); it != rr.acquired_per_label.end()) {
                running[t] += static_cast<double>(it->second);
            }
            table.counts[t].push_back(running[t]);
        }
    }
    return table;
}

CurveSeries metric_series(std::span<const RoundResult> results, bool macro) {
    CurveSeries s;
    for (const auto& rr : results) {
        s.labeled_counts.push_back(rr.labeled_count);
        s.values.push_back(macro ? rr.macro_f1 : rr.accuracy);
    }
    return s;
}

LearningCurve aggregate_over_seeds(std::span<const CurveSeries> curves, std::string strategy, std::string metric) {
    if (curves.empty()) throw Error(ErrorCode::InvalidArgument, "no curves to aggregate");
    LearningCurve out;
    out.strategy = std::move(strategy);
    out.metric = std::move(metric);
    out.labeled_counts = curves.front().labeled_counts;
    for (const auto& c : curves) {
        if (c.labeled_counts != out.labeled_counts || c.values.size() != c.labeled_counts.size()) {
            throw Error(ErrorCode::InvalidArgument, "learning curves use different labeled-count grids");
        }
    }
    const double k = static_cast<double>(curves.size());
    for (std::size_t i = 0; i < out.labeled_counts.size(); ++i) {
        double mean = 0.0;
        for (const auto& c : curves) mean += c.values[i];
        mean /= k;
        // Pairwise form, so identical curves give exactly zero spread.
        double sq = 0.0;
        for (std::size_t a = 0; a < curves.size(); ++a) {
            for (std::size_t b = a + 1; b < curves.size(); ++b) {
                const double d = curves[a].values[i] - curves[b].values[i];
                sq += d * d;
            }
        }
        out.mean.push_back(mean);
        out.std.push_back(std::sqrt(sq / (k * k)));
        out.n.push_back(curves.size());
    }
    return out;
}

double area_under_curve(const LearningCurve& curve, std::size_t max_labeled) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < curve.labeled_counts.size(); ++i) {
        if (curve.labeled_counts[i] <= max_labeled) {
            pts.emplace_back(static_cast<double>(curve.labeled_counts[i]), curve.mean[i]);
        }
    }
    if (pts.empty()) throw Error(ErrorCode::InvalidArgument, "curve has no points below the cutoff");
    if (pts.size() == 1) return pts.front().second;
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
    }
    return area / (pts.back().first - pts.front().first);
}

ExperimentResults run_experiment(const SimulationData& data, const ExperimentConfig& config) {
    if (config.strategies.empty()) throw Error(ErrorCode::InvalidArgument, "no strategies configured");
    if (config.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "no seeds configured");

    ExperimentResults results;
    for (const auto& s : config.strategies) {
        results.strategies.push_back({s, config.seeds, std::vector<std::vector<RoundResult>>(config.seeds.size())});
    }
    const std::size_t cells = config.strategies.size() * config.seeds.size();
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t cell = next++; cell < cells; cell = next++) {
            const std::size_t si = cell / config.seeds.size();
            const std::size_t ki = cell % config.seeds.size();
            try {
                StrategyConfig sc = config.strategies[si];
                sc.batch_size = config.batch_size;
                results.strategies[si].runs[ki] = run_simulation(data, sc, config, config.seeds[ki]);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, config.jobs)), 1, cells);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

} // namespace dialcart
