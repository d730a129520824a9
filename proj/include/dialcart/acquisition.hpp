#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "dialcart/classifier.hpp"

namespace dialcart {

enum class Strategy { Random, MaxEntropy, LeastConfidence, CoreMSE };

/// "random", "entropy", "least_confidence", "coremse".
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

/// An unlabeled pool instance as seen by a strategy. Carries no gold label.
struct Candidate {
    std::size_t id = 0;
    std::vector<double> predictive;
    /// Per ensemble member distributions; required by CoreMSE only.
    std::vector<std::vector<double>> ensemble;
    FeatureVector features;
};

struct StrategyConfig {
    Strategy kind = Strategy::Random;
    std::size_t batch_size = 50;
    /// Uncertainty shortlist size for CoreMSE; 0 means 10 x batch_size.
    std::size_t candidate_cap = 0;
    int ensemble_size = 5;
    std::uint64_t seed = 0;

    std::size_t effective_cap() const { return candidate_cap == 0 ? 10 * batch_size : candidate_cap; }
};

std::vector<std::size_t> random_select(std::span<const std::size_t> pool, std::size_t b, std::uint64_t seed);

/// Natural-log entropy; 0 ln 0 = 0.
double entropy_score(std::span<const double> dist);
/// 1 - max probability. Larger means less confident.
double least_confidence_score(std::span<const double> dist);
/// Total ensemble variance: sum over classes of the population variance of
/// the members' probabilities.
double coremse_uncertainty(std::span<const std::vector<double>> members);

/// Ids of the `b` largest scores, ties by ascending id, best first.
std::vector<std::size_t> top_b(std::span<const std::size_t> ids, std::span<const double> scores, std::size_t b);
std::vector<std::size_t> top_b_by_score(std::span<const Candidate> candidates,
                                        const std::function<double(const Candidate&)>& score, std::size_t b);

/// Greedy k-center (max-min Euclidean) selection over ids not in
/// `preselected`. The first pick is the top-scored id when `scores` is
/// given, the lowest id when nothing is preselected, and otherwise the point
/// farthest from the preselected set. Distance ties go to the higher score,
/// then the lower id.
std::vector<std::size_t> farthest_first(const std::map<std::size_t, FeatureVector>& features,
                                        const std::set<std::size_t>& preselected, std::size_t b,
                                        const std::map<std::size_t, double>* scores = nullptr);

std::vector<std::size_t> coremse_select(std::span<const Candidate> candidates, const StrategyConfig& config);

/// Dispatch on config.kind.
std::vector<std::size_t> select_batch(std::span<const Candidate> candidates, const StrategyConfig& config);

} // namespace dialcart
