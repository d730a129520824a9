#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dialcart/acquisition.hpp"
#include "dialcart/classifier.hpp"
#include "dialcart/corpus.hpp"
#include "dialcart/error.hpp"

namespace dialcart {

// ---------------------------------------------------------------------------
// Metrics

template <typename Label>
double accuracy(std::span<const Label> preds, std::span<const Label> golds) {
    if (preds.size() != golds.size()) throw Error(ErrorCode::InvalidArgument, "prediction/gold length mismatch");
    if (preds.empty()) throw Error(ErrorCode::InvalidArgument, "accuracy of an empty prediction set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// One-vs-rest F1 for every label seen in either list. A label with no
/// true positives scores 0.
template <typename Label>
std::map<Label, double> per_label_f1(std::span<const Label> preds, std::span<const Label> golds) {
    if (preds.size() != golds.size()) throw Error(ErrorCode::InvalidArgument, "prediction/gold length mismatch");
    struct Counts {
        std::size_t tp = 0, fp = 0, fn = 0;
    };
    std::map<Label, Counts> counts;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == golds[i]) {
            counts[golds[i]].tp += 1;
        } else {
            counts[preds[i]].fp += 1;
            counts[golds[i]].fn += 1;
        }
    }
    std::map<Label, double> out;
    for (const auto& [label, c] : counts) {
        // 2PR/(P+R) reduces to 2tp / (2tp + fp + fn).
        out[label] = c.tp == 0 ? 0.0 : 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
    }
    return out;
}

/// Mean per-label F1 over the labels present in `golds`.
template <typename Label>
double macro_f1(std::span<const Label> preds, std::span<const Label> golds) {
    const auto f1 = per_label_f1(preds, golds);
    std::map<Label, bool> present;
    for (const auto& g : golds) present[g] = true;
    if (present.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [label, _] : present) total += f1.at(label);
    return total / static_cast<double>(present.size());
}

// ---------------------------------------------------------------------------
// Simulation

/// Feature vectors for the pool and the held-out test set. Pool gold labels
/// are only reachable through GoldOracle.
struct SimulationData {
    LabelScheme scheme;
    std::vector<std::string> pool_ids;
    std::vector<FeatureVector> pool_features;
    std::vector<std::size_t> pool_labels;
    std::vector<FeatureVector> test_features;
    std::vector<std::size_t> test_labels;
};

/// Labeled sentences of `train` form the pool, labeled sentences of `test`
/// the evaluation set.
SimulationData make_simulation_data(const Corpus& train, const Corpus& test, const LabelScheme& scheme,
                                    const FeatureHasher& hasher);

/// Stand-in for the annotator: reveals a pool label once it is acquired.
class GoldOracle {
public:
    explicit GoldOracle(std::span<const std::size_t> labels) : labels_(labels) {}
    std::size_t reveal(std::size_t id);
    std::size_t reveals() const { return reveals_; }

private:
    std::span<const std::size_t> labels_;
    std::size_t reveals_ = 0;
};

struct ExperimentConfig {
    std::size_t initial_labeled = 50;
    std::size_t batch_size = 50;
    /// nullopt runs until the pool is exhausted.
    std::optional<std::size_t> rounds;
    std::vector<StrategyConfig> strategies;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5};
    TrainConfig train;
    int jobs = 1;
};

struct RoundResult {
    std::size_t round = 0;
    std::size_t labeled_count = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::map<std::string, double> per_label_f1;
    std::vector<std::size_t> acquired_ids;
    /// Tag counts among this round's acquisitions.
    std::map<std::string, std::size_t> acquired_per_label;
    /// Running totals of acquired_per_label; excludes the initial sample.
    std::map<std::string, std::size_t> cumulative_per_label;
    /// Set on a final round that acquired fewer than batch_size ids.
    bool partial = false;

    bool operator==(const RoundResult&) const = default;
};

/// Round 0 trains on the initial random sample; every later round acquires
/// one batch, retrains from scratch, and evaluates on the test set.
std::vector<RoundResult> run_simulation(const SimulationData& data, const StrategyConfig& strategy,
                                        const ExperimentConfig& config, std::uint64_t seed);

/// Initial labeled sample for a seed, shared across strategies.
std::vector<std::size_t> initial_sample(std::size_t pool_size, std::size_t count, std::uint64_t seed);

struct SamplingTable {
    std::vector<std::string> tags;
    std::vector<std::size_t> rounds;
    /// counts[t][r]: cumulative acquisitions of tags[t] up to rounds[r].
    std::vector<std::vector<double>> counts;
};

SamplingTable cumulative_sampling_frequency(std::span<const RoundResult> results, const LabelScheme& scheme);

struct CurveSeries {
    std::vector<std::size_t> labeled_counts;
    std::vector<double> values;
};

struct LearningCurve {
    std::string strategy;
    std::string metric;
    std::vector<std::size_t> labeled_counts;
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<std::size_t> n;
};

/// Pointwise mean and population standard deviation.
LearningCurve aggregate_over_seeds(std::span<const CurveSeries> curves, std::string strategy = {},
                                   std::string metric = {});

CurveSeries metric_series(std::span<const RoundResult> results, bool macro);

/// Trapezoidal area of the mean curve over labeled counts <= max_labeled,
/// normalized by the covered x-range.
double area_under_curve(const LearningCurve& curve, std::size_t max_labeled);

struct StrategyRuns {
    StrategyConfig strategy;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<RoundResult>> runs;  // parallel to seeds
};

struct ExperimentResults {
    std::vector<StrategyRuns> strategies;
};

/// Runs every (strategy, seed) cell, up to config.jobs at a time.
ExperimentResults run_experiment(const SimulationData& data, const ExperimentConfig& config);

} // namespace dialcart
