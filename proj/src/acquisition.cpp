#include "dialcart/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dialcart/error.hpp"
#include "dialcart/rng.hpp"

namespace dialcart {

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::Random: return "random";
    case Strategy::MaxEntropy: return "entropy";
    case Strategy::LeastConfidence: return "least_confidence";
    case Strategy::CoreMSE: return "coremse";
    }
    return "random";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : {Strategy::Random, Strategy::MaxEntropy, Strategy::LeastConfidence, Strategy::CoreMSE}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::InvalidArgument,
                "unknown strategy '" + std::string(name) + "' (expected random, entropy, least_confidence, coremse)",
                std::string(name));
}

namespace {

void check_batch(std::size_t b, std::size_t available) {
    if (b == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    if (b > available) {
        throw Error(ErrorCode::InvalidArgument, "batch size " + std::to_string(b) + " exceeds the " +
                                                    std::to_string(available) + " available candidates");
    }
}

void check_distribution(std::span<const double> dist) {
    if (dist.empty()) throw Error(ErrorCode::InvalidArgument, "empty distribution");
    double total = 0.0;
    for (double p : dist) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw Error(ErrorCode::InvalidArgument, "distribution entry outside [0, 1]");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidArgument, "distribution sums to " + std::to_string(total));
    }
}

struct Point {
    std::size_t id;
    const FeatureVector* features;
    double score;
};

// `points` sorted by ascending id; `anchors` are the preselected features.
std::vector<std::size_t> greedy_k_center(std::span<const Point> points, std::span<const FeatureVector* const> anchors,
                                         std::size_t b, bool scored) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> nearest(points.size(), inf);
    std::vector<bool> taken(points.size(), false);
    for (const auto* a : anchors) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(*points[i].features, *a));
        }
    }

    // a beats b: larger key, then larger score (when scored), then lower id.
    auto better = [&](std::size_t a, std::size_t b_, double key_a, double key_b) {
        if (key_a != key_b) return key_a > key_b;
        if (scored && points[a].score != points[b_].score) return points[a].score > points[b_].score;
        return points[a].id < points[b_].id;
    };

    std::vector<std::size_t> picked;
    picked.reserve(b);
    for (std::size_t round = 0; round < b; ++round) {
        std::size_t best = points.size();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (taken[i]) continue;
            if (best == points.size()) {
                best = i;
                continue;
            }
            const bool first = round == 0 && (scored || anchors.empty());
            const double ki = first ? (scored ? points[i].score : 0.0) : nearest[i];
            const double kb = first ? (scored ? points[best].score : 0.0) : nearest[best];
            if (better(i, best, ki, kb)) best = i;
        }
        taken[best] = true;
        picked.push_back(points[best].id);
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!taken[i]) nearest[i] = std::min(nearest[i], squared_distance(*points[i].features, *points[best].features));
        }
    }
    return picked;
}

} // namespace

std::vector<std::size_t> random_select(std::span<const std::size_t> pool, std::size_t b, std::uint64_t seed) {
    check_batch(b, pool.size());
    std::vector<std::size_t> ids(pool.begin(), pool.end());
    Rng rng(seed);
    for (std::size_t i = 0; i < b; ++i) {
        std::swap(ids[i], ids[i + rng.index(ids.size() - i)]);
    }
    ids.resize(b);
    return ids;
}

double entropy_score(std::span<const double> dist) {
    check_distribution(dist);
    double h = 0.0;
    for (double p : dist) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double least_confidence_score(std::span<const double> dist) {
    check_distribution(dist);
    return 1.0 - *std::max_element(dist.begin(), dist.end());
}

double coremse_uncertainty(std::span<const std::vector<double>> members) {
    if (members.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble is empty");
    const std::size_t classes = members.front().size();
    for (const auto& m : members) {
        if (m.size() != classes) throw Error(ErrorCode::InvalidArgument, "ensemble members differ in class count");
        check_distribution(m);
    }
    // Pairwise form of the population variance: exactly zero iff all
    // members agree, which the mean-centred form does not guarantee.
    const double k = static_cast<double>(members.size());
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        double sum = 0.0;
        for (std::size_t a = 0; a < members.size(); ++a) {
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                const double d = members[a][c] - members[b][c];
                sum += d * d;
            }
        }
        total += sum / (k * k);
    }
    return total;
}

std::vector<std::size_t> top_b(std::span<const std::size_t> ids, std::span<const double> scores, std::size_t b) {
    if (ids.size() != scores.size()) throw Error(ErrorCode::InvalidArgument, "ids and scores differ in length");
    check_batch(b, ids.size());
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t c) {
        if (scores[a] != scores[c]) return scores[a] > scores[c];
        return ids[a] < ids[c];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(b), order.end(), before);
    std::vector<std::size_t> out(b);
    for (std::size_t i = 0; i < b; ++i) out[i] = ids[order[i]];
    return out;
}

std::vector<std::size_t> top_b_by_score(std::span<const Candidate> candidates,
                                        const std::function<double(const Candidate&)>& score, std::size_t b) {
    std::vector<std::size_t> ids;
    std::vector<double> scores;
    ids.reserve(candidates.size());
    scores.reserve(candidates.size());
    for (const auto& c : candidates) {
        ids.push_back(c.id);
        scores.push_back(score(c));
    }
    return top_b(ids, scores, b);
}

std::vector<std::size_t> farthest_first(const std::map<std::size_t, FeatureVector>& features,
                                        const std::set<std::size_t>& preselected, std::size_t b,
                                        const std::map<std::size_t, double>* scores) {
    std::vector<Point> points;
    std::vector<const FeatureVector*> anchors;
    for (const auto& [id, fv] : features) {
        if (preselected.count(id)) {
            anchors.push_back(&fv);
            continue;
        }
        double s = 0.0;
        if (scores) {
            const auto it = scores->find(id);
            if (it == scores->end()) throw Error(ErrorCode::InvalidArgument, "no score for id " + std::to_string(id));
            s = it->second;
        }
        points.push_back({id, &fv, s});
    }
    for (auto id : preselected) {
        if (!features.count(id)) {
            throw Error(ErrorCode::InvalidArgument, "preselected id " + std::to_string(id) + " has no features");
        }
    }
    check_batch(b, points.size());
    return greedy_k_center(points, anchors, b, scores != nullptr);
}

std::vector<std::size_t> coremse_select(std::span<const Candidate> candidates, const StrategyConfig& config) {
    const std::size_t b = config.batch_size;
    check_batch(b, candidates.size());
    if (config.effective_cap() < b) throw Error(ErrorCode::InvalidArgument, "candidate cap is below batch size");

    std::vector<std::size_t> ids;
    std::vector<double> uncertainty;
    for (const auto& c : candidates) {
        if (c.ensemble.empty()) {
            throw Error(ErrorCode::InvalidArgument, "candidate " + std::to_string(c.id) + " has no ensemble distributions");
        }
        ids.push_back(c.id);
        uncertainty.push_back(coremse_uncertainty(c.ensemble));
    }
    const std::size_t keep = std::min(config.effective_cap(), candidates.size());
    auto shortlist = top_b(ids, uncertainty, keep);
    std::sort(shortlist.begin(), shortlist.end());

    std::map<std::size_t, std::size_t> position;
    for (std::size_t i = 0; i < candidates.size(); ++i) position[candidates[i].id] = i;
    std::vector<Point> points;
    points.reserve(shortlist.size());
    for (auto id : shortlist) {
        const auto i = position.at(id);
        points.push_back({id, &candidates[i].features, uncertainty[i]});
    }
    return greedy_k_center(points, {}, b, true);
}

std::vector<std::size_t> select_batch(std::span<const Candidate> candidates, const StrategyConfig& config) {
    switch (config.kind) {
    case Strategy::Random: {
        std::vector<std::size_t> ids;
        ids.reserve(candidates.size());
        for (const auto& c : candidates) ids.push_back(c.id);
        return random_select(ids, config.batch_size, config.seed);
    }
    case Strategy::MaxEntropy:
        return top_b_by_score(candidates, [](const Candidate& c) { return entropy_score(c.predictive); },
                              config.batch_size);
    case Strategy::LeastConfidence:
        return top_b_by_score(candidates, [](const Candidate& c) { return least_confidence_score(c.predictive); },
                              config.batch_size);
    case Strategy::CoreMSE:
        return coremse_select(candidates, config);
    }
    throw Error(ErrorCode::InvalidArgument, "unhandled strategy");
}

} // namespace dialcart
