#include "dialcart/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "dialcart/error.hpp"
#include "dialcart/rng.hpp"

namespace dialcart {

Imbalance parse_imbalance(std::string_view name) {
    if (name == "table1") return Imbalance::Table1;
    if (name == "uniform") return Imbalance::Uniform;
    throw Error(ErrorCode::InvalidArgument, "unknown imbalance profile '" + std::string(name) + "'", std::string(name));
}

std::string_view to_string(Imbalance imbalance) { return imbalance == Imbalance::Table1 ? "table1" : "uniform"; }

namespace {

struct ClassSpec {
    TagSpec tag;
    double weight;
    std::vector<std::string> keywords;
    bool question;
};

const std::vector<std::string> kFiller = {
    "the",   "a",     "we",    "you",   "this",  "that",  "then",  "now",   "just",  "maybe",
    "well",  "here",  "there", "one",   "two",   "step",  "number", "part", "about", "with",
    "for",   "and",   "of",    "to",    "in",    "on",    "at",    "from",  "by",    "again",
    "still", "also",  "much",  "very",  "bit",   "some",  "any",   "each",  "both",  "every"};

// Syllable-built pseudo-words keep generated vocabularies disjoint.
std::string pseudo_word(std::size_t cls, std::size_t j) {
    static constexpr std::array<const char*, 12> kOnset = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"};
    static constexpr std::array<const char*, 5> kVowel = {"a", "e", "i", "o", "u"};
    std::string w = "q";
    std::size_t x = cls * 97 + j * 13 + 7;
    for (int s = 0; s < 3; ++s) {
        w += kOnset[x % kOnset.size()];
        x /= kOnset.size();
        w += kVowel[(x + static_cast<std::size_t>(s)) % kVowel.size()];
        x = x / kVowel.size() + cls + j * 3 + 1;
    }
    return w + std::to_string(cls) + "x" + std::to_string(j);
}

std::vector<ClassSpec> class_specs(const SynthConfig& config) {
    std::vector<ClassSpec> specs;
    if (config.imbalance == Imbalance::Table1) {
        specs = {
            {{"Confirmation Question", TagRole::Student}, 4.93,
             {"so", "that'd", "be", "right", "correct", "is", "equals", "confirm"}, true},
            {{"Request Feedback by Image", TagRole::Student}, 4.34, {}, false},
            {{"Understanding", TagRole::Student}, 1.46,
             {"oh", "get", "it", "got", "makes", "sense", "see", "understand"}, false},
            {{"Direction Question", TagRole::Student}, 1.20,
             {"what", "do", "next", "should", "how", "proceed", "after", "start"}, true},
            {{"Information Question", TagRole::Student}, 1.06,
             {"isn't", "there", "formula", "find", "term", "rule", "definition", "nth"}, true},
            {{"Not Understanding", TagRole::Student}, 0.24,
             {"don't", "know", "confused", "lost", "unsure", "no", "idea", "unclear"}, false},
            {{"Ready Answer", TagRole::Student}, 0.07,
             {"yep", "ready", "go", "set", "let's", "begin", "prepared", "okay"}, false},
        };
        double listed = 0.0;
        for (const auto& s : specs) listed += s.weight;
        std::vector<std::string> other;
        for (std::size_t j = 0; j < 30; ++j) other.push_back(pseudo_word(99, j));
        specs.push_back({{"Other", TagRole::Both}, 100.0 - listed, other, false});
        // Function words above overlap the filler list; keep classes disjoint.
        for (auto& s : specs) {
            for (auto& k : s.keywords) {
                if (std::find(kFiller.begin(), kFiller.end(), k) != kFiller.end()) k += "k";
            }
        }
    } else {
        if (config.classes < 2) throw Error(ErrorCode::InvalidArgument, "uniform profile needs at least 2 classes");
        for (std::size_t c = 0; c < config.classes; ++c) {
            ClassSpec s{{"Class-" + std::to_string(c + 1), TagRole::Both}, 1.0, {}, c % 2 == 1};
            for (std::size_t j = 0; j < 8; ++j) s.keywords.push_back(pseudo_word(c, j));
            specs.push_back(std::move(s));
        }
    }
    return specs;
}

// Largest-remainder quotas with at least one sentence per class.
std::vector<std::size_t> quotas(const std::vector<ClassSpec>& specs, std::size_t total) {
    double weight = 0.0;
    for (const auto& s : specs) weight += s.weight;
    std::vector<std::size_t> q(specs.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < specs.size(); ++c) {
        const double exact = specs[c].weight / weight * static_cast<double>(total);
        q[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(exact)));
        assigned += q[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % remainders.size()) {
        ++q[remainders[k].second];
        ++assigned;
    }
    // Rounding up tiny classes can overshoot; take back from the largest.
    while (assigned > total) {
        --*std::max_element(q.begin(), q.end());
        --assigned;
    }
    return q;
}

} // namespace

SynthCorpus synthesize_corpus(const SynthConfig& config) {
    if (config.sessions < 1) throw Error(ErrorCode::InvalidArgument, "need at least one session");
    if (config.sentences < config.sessions) {
        throw Error(ErrorCode::InvalidArgument, "need at least one sentence per session");
    }
    if (config.noise < 0.0 || config.noise > 1.0 || config.distractor < 0.0 || config.distractor > 1.0) {
        throw Error(ErrorCode::InvalidArgument, "noise and distractor rates must lie in [0, 1]");
    }
    const auto specs = class_specs(config);
    std::vector<TagSpec> tags;
    for (const auto& s : specs) tags.push_back(s.tag);
    SynthCorpus out;
    out.scheme = LabelScheme(tags, "synth-" + std::string(to_string(config.imbalance)) + "-" +
                                       std::to_string(specs.size()));

    Rng rng(config.seed);
    std::vector<std::size_t> labels;
    const auto q = quotas(specs, config.sentences);
    for (std::size_t c = 0; c < specs.size(); ++c) labels.insert(labels.end(), q[c], c);
    rng.shuffle(std::span<std::size_t>(labels));

    auto make_text = [&](std::size_t c) {
        const auto& spec = specs[c];
        if (spec.keywords.empty()) return std::string(kImagePlaceholder);
        std::vector<std::string> words;
        for (int k = 0; k < 2; ++k) words.push_back(spec.keywords[rng.index(spec.keywords.size())]);
        if (rng.bernoulli(config.distractor)) {
            std::size_t other = rng.index(specs.size() - 1);
            if (other >= c) ++other;
            if (!specs[other].keywords.empty()) {
                words.push_back(specs[other].keywords[rng.index(specs[other].keywords.size())]);
            }
        }
        const std::size_t fillers = 2 + rng.index(4);
        for (std::size_t k = 0; k < fillers; ++k) words.push_back(kFiller[rng.index(kFiller.size())]);
        rng.shuffle(std::span<std::string>(words));
        std::string text;
        for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
        text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
        text += spec.question ? "?" : ".";
        return text;
    };

    std::vector<Session> sessions(config.sessions);
    const std::size_t per_session = config.sentences / config.sessions;
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < config.sessions; ++s) {
        auto& session = sessions[s];
        char id[32];
        std::snprintf(id, sizeof(id), "S%03zu", s + 1);
        session.id = id;
        const std::size_t end = s + 1 == config.sessions ? labels.size() : cursor + per_session;
        long seq = 0;
        while (cursor < end) {
            const std::size_t c = labels[cursor];
            const bool student_only = specs[c].tag.role == TagRole::Student;
            Utterance u;
            u.session_id = session.id;
            u.seq = ++seq;
            u.role = student_only || rng.bernoulli(0.4) ? Role::Student : Role::Tutor;
            // One or two sentences per utterance; merge with the next label
            // when its role allows it.
            std::vector<std::size_t> classes = {c};
            ++cursor;
            if (cursor < end && rng.bernoulli(0.3) && !specs[c].keywords.empty() &&
                !specs[labels[cursor]].keywords.empty()) {
                const std::size_t n = labels[cursor];
                const auto role = specs[n].tag.role;
                if (role == TagRole::Both || (role == TagRole::Student) == (u.role == Role::Student)) {
                    classes.push_back(n);
                    ++cursor;
                }
            }
            for (std::size_t k = 0; k < classes.size(); ++k) {
                u.text += (k ? " " : "") + make_text(classes[k]);
            }
            for (std::size_t k = 0; k < classes.size(); ++k) {
                std::size_t label = classes[k];
                if (rng.bernoulli(config.noise)) {
                    std::vector<std::size_t> alternatives;
                    for (std::size_t a = 0; a < specs.size(); ++a) {
                        const auto role = specs[a].tag.role;
                        const bool fits = role == TagRole::Both || (role == TagRole::Student) == (u.role == Role::Student);
                        if (a != label && fits) alternatives.push_back(a);
                    }
                    if (!alternatives.empty()) {
                        label = alternatives[rng.index(alternatives.size())];
                        out.flipped.insert(SentenceId{u.session_id, u.seq, k}.str());
                    }
                }
                u.labels[k] = specs[label].tag.name;
            }
            session.utterances.push_back(std::move(u));
        }
    }
    out.corpus = Corpus(std::move(sessions), out.scheme);
    return out;
}

} // namespace dialcart
