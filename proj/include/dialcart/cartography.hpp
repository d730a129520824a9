#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dialcart/classifier.hpp"

namespace dialcart {

enum class Bucket { Easy, Medium, Hard, Impossible };

inline constexpr std::array<Bucket, 4> kBuckets = {Bucket::Easy, Bucket::Medium, Bucket::Hard, Bucket::Impossible};

std::string_view to_string(Bucket bucket);
Bucket parse_bucket(std::string_view text);

/// Mean gold-label probability across epochs.
double confidence(std::span<const double> gold_probs);
/// Population standard deviation of the gold-label probability.
double variability(std::span<const double> gold_probs);
/// Fraction of epochs on which the argmax prediction was correct.
double correctness(std::span<const std::uint8_t> correct_flags);

/// Easy: cor >= 0.75; Medium: [0.5, 0.75); Hard: [0.25, 0.5); Impossible: [0, 0.25).
Bucket bucket(double cor);

struct DataMapPoint {
    std::string id;
    double confidence = 0.0;
    double variability = 0.0;
    double correctness = 0.0;
    Bucket bucket = Bucket::Impossible;

    bool operator==(const DataMapPoint&) const = default;
};

std::vector<DataMapPoint> build_data_map(const TrainingDynamics& dynamics, std::span<const std::string> ids);

struct BucketRow {
    std::string tag;
    std::size_t count = 0;
    std::array<double, 4> fractions{};  // indexed like kBuckets
};

/// Per-tag normalized bucket histogram, most frequent tag first
/// (ties by tag name).
std::vector<BucketRow> per_label_bucket_distribution(std::span<const DataMapPoint> points,
                                                     const std::map<std::string, std::string>& labels);

} // namespace dialcart
