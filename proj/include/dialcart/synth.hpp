#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>

#include "dialcart/corpus.hpp"

namespace dialcart {

enum class Imbalance {
    /// Seven student acts at fixed skewed frequencies (4.93% down to
    /// 0.07%) plus a majority "Other" class.
    Table1,
    /// `classes` equally frequent classes.
    Uniform,
};

Imbalance parse_imbalance(std::string_view name);
std::string_view to_string(Imbalance imbalance);

struct SynthConfig {
    std::size_t sessions = 50;
    std::size_t sentences = 2000;
    Imbalance imbalance = Imbalance::Table1;
    std::size_t classes = 5;  // Uniform only
    /// Probability that a sentence's label is replaced by another
    /// role-compatible tag after its text is generated.
    double noise = 0.0;
    /// Probability of adding one keyword from a different class.
    double distractor = 0.25;
    std::uint64_t seed = 0;
};

struct SynthCorpus {
    LabelScheme scheme;
    Corpus corpus;
    /// Sentence ids (SentenceId::str) whose label was flipped.
    std::set<std::string> flipped;
};

/// Each class owns a keyword vocabulary; sentences mix two class keywords,
/// an optional distractor keyword, and shared filler words. Without noise
/// the classes are linearly separable in bag-of-words space.
SynthCorpus synthesize_corpus(const SynthConfig& config);

} // namespace dialcart
