#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dialcart {

enum class Role { Tutor, Student };
enum class TagRole { Tutor, Student, Both };

std::string_view to_string(Role role);
std::string_view to_string(TagRole role);
Role parse_role(std::string_view text);
TagRole parse_tag_role(std::string_view text);

struct TagSpec {
    std::string name;
    TagRole role = TagRole::Both;

    bool operator==(const TagSpec&) const = default;
};

/// Ordered dialogue-act tag set. Declaration order is the class index.
class LabelScheme {
public:
    LabelScheme() = default;
    LabelScheme(std::vector<TagSpec> tags, std::string version);

    /// Seven student acts with their observed frequencies, followed by
    /// unnamed placeholders up to 31 classes.
    static LabelScheme default_scheme();
    static LabelScheme load(const std::filesystem::path& path);
    static LabelScheme from_json_text(std::string_view text);
    std::string to_json_text() const;
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tags_.size(); }
    const std::vector<TagSpec>& tags() const { return tags_; }
    const std::string& version() const { return version_; }
    const std::string& name(std::size_t index) const { return tags_.at(index).name; }

    std::optional<std::size_t> index_of(std::string_view tag) const;
    /// Throws UnknownTag when absent.
    std::size_t require_index(std::string_view tag) const;
    bool allows(std::size_t index, Role role) const;

    bool operator==(const LabelScheme&) const = default;

private:
    std::vector<TagSpec> tags_;
    std::string version_;
};

struct Utterance {
    std::string session_id;
    long seq = 0;
    Role role = Role::Tutor;
    std::string text;
    /// Gold tags keyed by sentence index (post segmentation and filtering).
    std::map<std::size_t, std::string> labels;

    bool operator==(const Utterance&) const = default;
};

struct Session {
    std::string id;
    std::vector<Utterance> utterances;

    bool operator==(const Session&) const = default;
};

struct SentenceId {
    std::string session_id;
    long seq = 0;
    std::size_t index = 0;

    std::string str() const;
    static SentenceId parse(std::string_view text);
    auto operator<=>(const SentenceId&) const = default;
};

struct Sentence {
    SentenceId id;
    Role role = Role::Tutor;
    std::string text;
    std::optional<std::string> gold;
    /// Position of the owning utterance in Corpus::sessions.
    std::size_t session_pos = 0;
    std::size_t utterance_pos = 0;
};

/// Immutable after ingest.
class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<Session> sessions, const LabelScheme& scheme);

    const std::vector<Session>& sessions() const { return sessions_; }
    /// Flattened sentence units in session, seq, index order.
    const std::vector<Sentence>& sentences() const { return sentences_; }
    std::size_t utterance_count() const;

    /// Restrict to the given sessions, preserving order.
    Corpus subset(std::span<const std::string> session_ids, const LabelScheme& scheme) const;

    bool operator==(const Corpus& other) const { return sessions_ == other.sessions_; }

private:
    std::vector<Session> sessions_;
    std::vector<Sentence> sentences_;
};

/// Parse the line-delimited corpus format. Errors carry the 1-based line.
Corpus ingest_corpus(const std::filesystem::path& path, const LabelScheme& scheme);
Corpus parse_corpus(std::string_view text, const LabelScheme& scheme);
std::string export_corpus(const Corpus& corpus);
void export_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::vector<std::string> segment_utterance(std::string_view text);

inline constexpr std::string_view kImagePlaceholder = "[Image]";
std::vector<std::string> filter_meaningless(std::span<const std::string> sentences);

/// segment_utterance followed by filter_meaningless.
std::vector<std::string> sentence_units(std::string_view text);

struct SplitSpec {
    std::vector<std::string> train_sessions;
    std::vector<std::string> test_sessions;
    std::uint64_t seed = 0;

    bool operator==(const SplitSpec&) const = default;
};

SplitSpec split_sessions(const Corpus& corpus, double test_fraction, std::uint64_t seed);

/// Tag fractions over labeled sentences, most frequent first (ties by name).
std::vector<std::pair<std::string, double>> label_frequency(const Corpus& corpus);

double cohens_kappa(std::span<const std::string> a, std::span<const std::string> b);

} // namespace dialcart
