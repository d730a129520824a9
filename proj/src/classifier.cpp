#include "dialcart/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include "dialcart/error.hpp"
#include "dialcart/rng.hpp"

namespace dialcart {

double FeatureVector::squared_norm() const {
    double s = 0.0;
    for (const auto& [idx, w] : entries) s += w * w;
    return s;
}

double squared_distance(const FeatureVector& a, const FeatureVector& b) {
    double s = 0.0;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    while (ia != a.entries.end() || ib != b.entries.end()) {
        double d = 0.0;
        if (ib == b.entries.end() || (ia != a.entries.end() && ia->first < ib->first)) {
            d = ia->second;
            ++ia;
        } else if (ia == a.entries.end() || ib->first < ia->first) {
            d = -ib->second;
            ++ib;
        } else {
            d = ia->second - ib->second;
            ++ia;
            ++ib;
        }
        s += d * d;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Hashing

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

bool is_token_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '\'' || c >= 0x80;
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (is_token_byte(c)) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

FeatureHasher::FeatureHasher(HasherConfig config) : config_(config) {
    if (config_.dimension < 2) throw Error(ErrorCode::InvalidArgument, "hash dimension must be at least 2");
    if (config_.dimension > (std::size_t{1} << 31)) {
        throw Error(ErrorCode::InvalidArgument, "hash dimension too large");
    }
    if (config_.min_n < 1 || config_.max_n < config_.min_n) {
        throw Error(ErrorCode::InvalidArgument, "invalid n-gram range");
    }
}

FeatureVector FeatureHasher::operator()(std::string_view text) const {
    auto tokens = tokenize(text);
    if (tokens.size() > config_.max_tokens) tokens.resize(config_.max_tokens);

    std::map<std::uint32_t, double> counts;
    for (int n = config_.min_n; n <= config_.max_n; ++n) {
        const auto len = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
            std::uint64_t h = kFnvOffset;
            for (std::size_t k = 0; k < len; ++k) {
                if (k > 0) h = fnv1a(h, "\x1f");
                h = fnv1a(h, tokens[i + k]);
            }
            const auto idx = static_cast<std::uint32_t>(mix_seed(h ^ config_.salt) % config_.dimension);
            counts[idx] += 1.0;
        }
    }

    FeatureVector fv;
    fv.dimension = config_.dimension;
    double norm = 0.0;
    for (const auto& [idx, c] : counts) norm += c * c;
    norm = std::sqrt(norm);
    fv.entries.reserve(counts.size());
    for (const auto& [idx, c] : counts) fv.entries.emplace_back(idx, c / norm);
    return fv;
}

FeatureVector featurize(std::string_view text, const FeatureHasher& hasher) { return hasher(text); }

// ---------------------------------------------------------------------------
// Model

ModelParams::ModelParams(std::size_t classes_, std::size_t dimension_, std::string scheme_version_)
    : classes(classes_),
      dimension(dimension_),
      weights(classes_ * dimension_, 0.0),
      bias(classes_, 0.0),
      scheme_version(std::move(scheme_version_)) {}

std::vector<double> logits(const ModelParams& params, const FeatureVector& features) {
    if (features.dimension != params.dimension) {
        throw Error(ErrorCode::InvalidArgument, "feature dimension " + std::to_string(features.dimension) +
                                                    " does not match model dimension " +
                                                    std::to_string(params.dimension));
    }
    std::vector<double> z(params.bias.begin(), params.bias.end());
    for (std::size_t c = 0; c < params.classes; ++c) {
        const double* w = params.weights.data() + c * params.dimension;
        double s = 0.0;
        for (const auto& [idx, x] : features.entries) s += w[idx] * x;
        z[c] += s;
    }
    return z;
}

std::vector<double> softmax(std::span<const double> z) {
    std::vector<double> p(z.size());
    if (z.empty()) return p;
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
        p[c] = std::exp(z[c] - top);
        total += p[c];
    }
    for (auto& v : p) v /= total;
    return p;
}

std::vector<double> predict_proba(const ModelParams& params, const FeatureVector& features) {
    const auto z = logits(params, features);
    return softmax(z);
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

namespace {

void check_dataset(const Dataset& data) {
    if (data.features.empty()) throw Error(ErrorCode::Insufficient, "training set is empty");
    if (data.features.size() != data.labels.size()) {
        throw Error(ErrorCode::InvalidArgument, "features and labels differ in length");
    }
    if (data.classes == 0) throw Error(ErrorCode::InvalidArgument, "class count must be positive");
    const std::size_t dim = data.features.front().dimension;
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        if (data.labels[i] >= data.classes) {
            throw Error(ErrorCode::InvalidArgument, "class index " + std::to_string(data.labels[i]) +
                                                        " out of range for " + std::to_string(data.classes) +
                                                        " classes");
        }
        if (data.features[i].dimension != dim) {
            throw Error(ErrorCode::InvalidArgument, "inconsistent feature dimensions in training set");
        }
    }
}

// Accumulates the gradient of the summed (not averaged) cross-entropy of
// one example into grad_w / grad_b; returns that example's loss.
double accumulate_gradient(const ModelParams& params, const FeatureVector& x, std::size_t label, double scale,
                           std::vector<double>& grad_w, std::vector<double>& grad_b) {
    auto p = predict_proba(params, x);
    const double loss = -std::log(std::max(p[label], 1e-300));
    p[label] -= 1.0;
    for (std::size_t c = 0; c < params.classes; ++c) {
        const double g = p[c] * scale;
        grad_b[c] += g;
        double* row = grad_w.data() + c * params.dimension;
        for (const auto& [idx, v] : x.entries) row[idx] += g * v;
    }
    return loss;
}

} // namespace

double cross_entropy(const ModelParams& params, const Dataset& data) {
    check_dataset(data);
    double total = 0.0;
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        const auto p = predict_proba(params, data.features[i]);
        total += -std::log(std::max(p[data.labels[i]], 1e-300));
    }
    return total / static_cast<double>(data.features.size());
}

ModelParams cross_entropy_gradient(const ModelParams& params, const Dataset& data) {
    check_dataset(data);
    ModelParams grad(params.classes, params.dimension, params.scheme_version);
    const double scale = 1.0 / static_cast<double>(data.features.size());
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        accumulate_gradient(params, data.features[i], data.labels[i], scale, grad.weights, grad.bias);
    }
    return grad;
}

TrainRun train(const Dataset& data, const TrainConfig& config, std::string scheme_version) {
    check_dataset(data);
    if (config.epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be positive");
    if (config.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    if (!(config.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    if (config.weight_decay < 0.0) throw Error(ErrorCode::InvalidArgument, "weight decay must be non-negative");

    const std::size_t n = data.features.size();
    const std::size_t classes = data.classes;
    const std::size_t dim = data.features.front().dimension;
    const auto epochs = static_cast<std::size_t>(config.epochs);
    const auto keep = static_cast<std::size_t>(std::clamp(config.keep_snapshots, 1, config.epochs));

    TrainRun run;
    run.epochs = config.epochs;
    run.params = ModelParams(classes, dim, std::move(scheme_version));
    run.dynamics.instances = n;
    run.dynamics.epochs = epochs;
    run.dynamics.gold_prob.assign(n * epochs, 0.0);
    run.dynamics.correct.assign(n * epochs, 0);

    ModelParams& params = run.params;
    std::vector<double> grad_w(classes * dim, 0.0), grad_b(classes, 0.0);
    std::vector<double> m_w(classes * dim, 0.0), v_w(classes * dim, 0.0);
    std::vector<double> m_b(classes, 0.0), v_b(classes, 0.0);
    std::deque<ModelParams> snapshots;

    std::vector<std::size_t> order(n);
    std::uint64_t step = 0;
    const double decay = 1.0 - config.learning_rate * config.weight_decay;

    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng rng(derive_seed(config.seed, e));
        rng.shuffle(std::span<std::size_t>(order));

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                accumulate_gradient(params, data.features[i], data.labels[i], scale, grad_w, grad_b);
            }

            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            const double step_size = config.learning_rate / bc1;
            const double inv_sqrt_bc2 = 1.0 / std::sqrt(bc2);
            const double b1 = config.beta1, b2 = config.beta2, eps = config.epsilon;

            double* w = params.weights.data();
            double* gw = grad_w.data();
            double* mw = m_w.data();
            double* vw = v_w.data();
            for (std::size_t j = 0, total = classes * dim; j < total; ++j) {
                const double g = gw[j];
                mw[j] = b1 * mw[j] + (1.0 - b1) * g;
                vw[j] = b2 * vw[j] + (1.0 - b2) * g * g;
                w[j] = w[j] * decay - step_size * mw[j] / (std::sqrt(vw[j]) * inv_sqrt_bc2 + eps);
                gw[j] = 0.0;
            }
            // Bias terms are not decayed.
            for (std::size_t c = 0; c < classes; ++c) {
                const double g = grad_b[c];
                m_b[c] = b1 * m_b[c] + (1.0 - b1) * g;
                v_b[c] = b2 * v_b[c] + (1.0 - b2) * g * g;
                params.bias[c] -= step_size * m_b[c] / (std::sqrt(v_b[c]) * inv_sqrt_bc2 + eps);
                grad_b[c] = 0.0;
            }
        }

        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = predict_proba(params, data.features[i]);
            const std::size_t y = data.labels[i];
            loss += -std::log(std::max(p[y], 1e-300));
            run.dynamics.gold_prob[i * epochs + e] = p[y];
            run.dynamics.correct[i * epochs + e] = argmax(p) == y ? 1 : 0;
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss)) {
            throw Error(ErrorCode::Numeric, "training loss became non-finite at epoch " + std::to_string(e + 1) +
                                                " (learning rate " + std::to_string(config.learning_rate) + ")");
        }
        run.epoch_loss.push_back(loss);

        if (epochs - e <= keep) snapshots.push_back(params);
    }
    run.snapshots.assign(snapshots.begin(), snapshots.end());
    return run;
}

std::vector<ModelParams> epoch_snapshots(const TrainRun& run, int k) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "snapshot count must be positive");
    if (k > run.epochs) {
        throw Error(ErrorCode::InvalidArgument, "requested " + std::to_string(k) + " snapshots from a " +
                                                    std::to_string(run.epochs) + "-epoch run");
    }
    if (static_cast<std::size_t>(k) > run.snapshots.size()) {
        throw Error(ErrorCode::Insufficient, "run retained only " + std::to_string(run.snapshots.size()) +
                                                 " snapshots; raise TrainConfig::keep_snapshots");
    }
    return {run.snapshots.end() - k, run.snapshots.end()};
}

// ---------------------------------------------------------------------------
// Checkpoints. Little-endian binary; doubles stored as raw IEEE-754 bits.

namespace {

constexpr char kMagic[8] = {'D', 'C', 'A', 'R', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw Error(ErrorCode::Parse, "checkpoint is truncated");
    }
    std::uint64_t get(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(checkpoint.hasher.min_n));
    w.u32(static_cast<std::uint32_t>(checkpoint.hasher.max_n));
    w.u64(checkpoint.hasher.dimension);
    w.u64(checkpoint.hasher.salt);
    w.u64(checkpoint.hasher.max_tokens);
    w.str(checkpoint.scheme_version);
    w.u32(static_cast<std::uint32_t>(checkpoint.params.size()));
    for (const auto& p : checkpoint.params) {
        w.u64(p.classes);
        w.u64(p.dimension);
        for (double v : p.weights) w.f64(v);
        for (double v : p.bias) w.f64(v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    if (r.raw(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
        throw Error(ErrorCode::Parse, "not a model checkpoint (bad magic)");
    }
    if (const auto version = r.u32(); version != kCheckpointVersion) {
        throw Error(ErrorCode::Parse, "unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.hasher.min_n = static_cast<int>(r.u32());
    ck.hasher.max_n = static_cast<int>(r.u32());
    ck.hasher.dimension = r.u64();
    ck.hasher.salt = r.u64();
    ck.hasher.max_tokens = r.u64();
    ck.scheme_version = r.str();
    const auto count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto classes = r.u64();
        const auto dim = r.u64();
        if (classes == 0 || dim == 0 || classes > (1u << 16) || dim > (std::uint64_t{1} << 31)) {
            throw Error(ErrorCode::Parse, "checkpoint has implausible model shape");
        }
        ModelParams p(classes, dim, ck.scheme_version);
        for (auto& v : p.weights) v = r.f64();
        for (auto& v : p.bias) v = r.f64();
        ck.params.push_back(std::move(p));
    }
    if (!r.done()) throw Error(ErrorCode::Parse, "trailing bytes after checkpoint");
    return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write checkpoint " + path.string(), path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path.string(), path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

} // namespace dialcart
