#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Reference text classifier: hashed word n-grams feeding a multinomial linear
// model. The free functions featurize / train / predict_proba /
// epoch_snapshots form the classifier contract the rest of the library
// depends on; a different backbone only needs to provide the same four.

namespace dialcart {

/// Sparse vector; entries are sorted by index and unique.
struct FeatureVector {
    std::size_t dimension = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;

    double squared_norm() const;
    bool operator==(const FeatureVector&) const = default;
};

double squared_distance(const FeatureVector& a, const FeatureVector& b);

struct HasherConfig {
    int min_n = 1;
    int max_n = 2;
    std::size_t dimension = 1u << 14;
    std::uint64_t salt = 0;
    /// Inputs are truncated to this many word tokens before hashing.
    std::size_t max_tokens = 128;

    bool operator==(const HasherConfig&) const = default;
};

class FeatureHasher {
public:
    explicit FeatureHasher(HasherConfig config = {});

    const HasherConfig& config() const { return config_; }
    FeatureVector operator()(std::string_view text) const;

private:
    HasherConfig config_;
};

/// Lowercased word tokens; punctuation and whitespace separate tokens.
std::vector<std::string> tokenize(std::string_view text);

FeatureVector featurize(std::string_view text, const FeatureHasher& hasher);

struct ModelParams {
    std::size_t classes = 0;
    std::size_t dimension = 0;
    std::vector<double> weights;  // classes x dimension, row-major
    std::vector<double> bias;
    std::string scheme_version;

    ModelParams() = default;
    ModelParams(std::size_t classes, std::size_t dimension, std::string scheme_version = {});

    std::span<const double> row(std::size_t c) const { return {weights.data() + c * dimension, dimension}; }
    std::span<double> row(std::size_t c) { return {weights.data() + c * dimension, dimension}; }

    bool operator==(const ModelParams&) const = default;
};

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 50;
    double learning_rate = 0.1;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Number of trailing epoch snapshots kept for epoch_snapshots().
    int keep_snapshots = 1;
};

/// Per instance, per epoch gold-label probability and argmax correctness,
/// recorded at the end of each epoch. Row-major N x E.
struct TrainingDynamics {
    std::size_t instances = 0;
    std::size_t epochs = 0;
    std::vector<double> gold_prob;
    std::vector<std::uint8_t> correct;

    std::span<const double> probs(std::size_t i) const { return {gold_prob.data() + i * epochs, epochs}; }
    std::span<const std::uint8_t> flags(std::size_t i) const { return {correct.data() + i * epochs, epochs}; }
};

struct TrainRun {
    ModelParams params;
    TrainingDynamics dynamics;
    /// Mean training cross-entropy at the end of every epoch.
    std::vector<double> epoch_loss;
    /// Trailing epoch snapshots, oldest first; back() == params.
    std::vector<ModelParams> snapshots;
    int epochs = 0;
};

struct Dataset {
    std::span<const FeatureVector> features;
    std::span<const std::size_t> labels;
    std::size_t classes = 0;
};

TrainRun train(const Dataset& data, const TrainConfig& config, std::string scheme_version = {});

std::vector<double> logits(const ModelParams& params, const FeatureVector& features);
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> predict_proba(const ModelParams& params, const FeatureVector& features);
/// Argmax with ties resolved to the lowest class index.
std::size_t argmax(std::span<const double> values);

/// Last `k` epoch snapshots, oldest first.
std::vector<ModelParams> epoch_snapshots(const TrainRun& run, int k);

/// Mean cross-entropy over `data` (no regularizer).
double cross_entropy(const ModelParams& params, const Dataset& data);
/// Analytic gradient of cross_entropy, shaped like the parameters.
ModelParams cross_entropy_gradient(const ModelParams& params, const Dataset& data);

struct Checkpoint {
    HasherConfig hasher;
    std::string scheme_version;
    /// One entry for a plain model; an ensemble stores its snapshots oldest
    /// first with the final model last.
    std::vector<ModelParams> params;

    bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace dialcart
