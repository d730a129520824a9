#include "dialcart/cartography.hpp"

#include <algorithm>
#include <cmath>

#include "dialcart/error.hpp"

namespace dialcart {

std::string_view to_string(Bucket bucket) {
    switch (bucket) {
    case Bucket::Easy: return "Easy";
    case Bucket::Medium: return "Medium";
    case Bucket::Hard: return "Hard";
    case Bucket::Impossible: return "Impossible";
    }
    return "Impossible";
}

Bucket parse_bucket(std::string_view text) {
    for (Bucket b : kBuckets) {
        if (to_string(b) == text) return b;
    }
    throw Error(ErrorCode::Parse, "unknown bucket '" + std::string(text) + "'", std::string(text));
}

double confidence(std::span<const double> gold_probs) {
    if (gold_probs.empty()) throw Error(ErrorCode::InvalidArgument, "confidence of an empty epoch record");
    double s = 0.0;
    for (double p : gold_probs) s += p;
    return s / static_cast<double>(gold_probs.size());
}

double variability(std::span<const double> gold_probs) {
    const double mu = confidence(gold_probs);
    double s = 0.0;
    for (double p : gold_probs) s += (p - mu) * (p - mu);
    return std::sqrt(s / static_cast<double>(gold_probs.size()));
}

double correctness(std::span<const std::uint8_t> correct_flags) {
    if (correct_flags.empty()) throw Error(ErrorCode::InvalidArgument, "correctness of an empty epoch record");
    std::size_t hits = 0;
    for (auto f : correct_flags) hits += f ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(correct_flags.size());
}

Bucket bucket(double cor) {
    if (!(cor >= 0.0 && cor <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "correctness " + std::to_string(cor) + " outside [0, 1]");
    }
    if (cor >= 0.75) return Bucket::Easy;
    if (cor >= 0.5) return Bucket::Medium;
    if (cor >= 0.25) return Bucket::Hard;
    return Bucket::Impossible;
}

std::vector<DataMapPoint> build_data_map(const TrainingDynamics& dynamics, std::span<const std::string> ids) {
    if (ids.size() != dynamics.instances) {
        throw Error(ErrorCode::InvalidArgument, std::to_string(ids.size()) + " ids for " +
                                                    std::to_string(dynamics.instances) + " dynamics rows");
    }
    if (dynamics.gold_prob.size() != dynamics.instances * dynamics.epochs ||
        dynamics.correct.size() != dynamics.instances * dynamics.epochs) {
        throw Error(ErrorCode::InvalidArgument, "training dynamics are not rectangular");
    }
    std::vector<DataMapPoint> points;
    points.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        DataMapPoint p;
        p.id = ids[i];
        p.confidence = confidence(dynamics.probs(i));
        p.variability = variability(dynamics.probs(i));
        p.correctness = correctness(dynamics.flags(i));
        p.bucket = bucket(p.correctness);
        points.push_back(std::move(p));
    }
    return points;
}

std::vector<BucketRow> per_label_bucket_distribution(std::span<const DataMapPoint> points,
                                                     const std::map<std::string, std::string>& labels) {
    std::map<std::string, std::array<std::size_t, 4>> counts;
    for (const auto& p : points) {
        const auto it = labels.find(p.id);
        if (it == labels.end()) {
            throw Error(ErrorCode::NotFound, "data map point '" + p.id + "' has no label", p.id);
        }
        counts[it->second][static_cast<std::size_t>(p.bucket)] += 1;
    }
    std::vector<BucketRow> rows;
    for (const auto& [tag, c] : counts) {
        BucketRow row;
        row.tag = tag;
        for (auto v : c) row.count += v;
        for (std::size_t b = 0; b < 4; ++b) {
            row.fractions[b] = static_cast<double>(c[b]) / static_cast<double>(row.count);
        }
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const BucketRow& a, const BucketRow& b) { return a.count > b.count; });
    return rows;
}

} // namespace dialcart
