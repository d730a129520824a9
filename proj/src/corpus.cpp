#include "dialcart/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dialcart/error.hpp"
#include "dialcart/rng.hpp"

namespace dialcart {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::UnknownTag: return "unknown_tag";
    case ErrorCode::Duplicate: return "duplicate";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Busy: return "busy";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::Insufficient: return "insufficient";
    case ErrorCode::Numeric: return "numeric_error";
    case ErrorCode::Io: return "io_error";
    }
    return "error";
}

std::string_view to_string(Role role) { return role == Role::Tutor ? "tutor" : "student"; }

std::string_view to_string(TagRole role) {
    switch (role) {
    case TagRole::Tutor: return "tutor";
    case TagRole::Student: return "student";
    case TagRole::Both: return "both";
    }
    return "both";
}

Role parse_role(std::string_view text) {
    if (text == "tutor") return Role::Tutor;
    if (text == "student") return Role::Student;
    throw Error(ErrorCode::Parse, "unknown role '" + std::string(text) + "'", std::string(text));
}

TagRole parse_tag_role(std::string_view text) {
    if (text == "tutor") return TagRole::Tutor;
    if (text == "student") return TagRole::Student;
    if (text == "both") return TagRole::Both;
    throw Error(ErrorCode::Parse, "unknown tag role '" + std::string(text) + "'", std::string(text));
}

// ---------------------------------------------------------------------------
// LabelScheme

LabelScheme::LabelScheme(std::vector<TagSpec> tags, std::string version)
    : tags_(std::move(tags)), version_(std::move(version)) {
    if (tags_.empty()) {
        throw Error(ErrorCode::InvalidArgument, "label scheme has no tags");
    }
    std::set<std::string_view> seen;
    for (const auto& t : tags_) {
        if (t.name.empty()) {
            throw Error(ErrorCode::InvalidArgument, "label scheme contains an empty tag name");
        }
        if (!seen.insert(t.name).second) {
            throw Error(ErrorCode::Duplicate, "duplicate tag '" + t.name + "' in label scheme", t.name);
        }
    }
}

LabelScheme LabelScheme::default_scheme() {
    std::vector<TagSpec> tags = {
        {"Confirmation Question", TagRole::Student},
        {"Request Feedback by Image", TagRole::Student},
        {"Understanding", TagRole::Student},
        {"Direction Question", TagRole::Student},
        {"Information Question", TagRole::Student},
        {"Not Understanding", TagRole::Student},
        {"Ready Answer", TagRole::Student},
    };
    // The remaining acts are not enumerated here; keep the class count at 31.
    for (int i = static_cast<int>(tags.size()) + 1; i <= 31; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "DA-%02d", i);
        tags.push_back({name, TagRole::Both});
    }
    return LabelScheme(std::move(tags), "default-31");
}

LabelScheme LabelScheme::from_json_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, std::string("scheme file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("tags") || !doc["tags"].is_array()) {
        throw Error(ErrorCode::Parse, "scheme file must be an object with a 'tags' array");
    }
    std::vector<TagSpec> tags;
    for (const auto& t : doc["tags"]) {
        if (!t.is_object() || !t.contains("name") || !t["name"].is_string()) {
            throw Error(ErrorCode::Parse, "scheme tag entries need a string 'name'");
        }
        TagSpec spec{t["name"].get<std::string>(), TagRole::Both};
        if (t.contains("role")) {
            spec.role = parse_tag_role(t["role"].get<std::string>());
        }
        tags.push_back(std::move(spec));
    }
    return LabelScheme(std::move(tags), doc.value("version", std::string{}));
}

LabelScheme LabelScheme::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open scheme file " + path.string(), path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string LabelScheme::to_json_text() const {
    json doc;
    doc["version"] = version_;
    doc["tags"] = json::array();
    for (const auto& t : tags_) {
        doc["tags"].push_back({{"name", t.name}, {"role", to_string(t.role)}});
    }
    return doc.dump(2) + "\n";
}

void LabelScheme::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write scheme file " + path.string(), path.string());
    }
    out << to_json_text();
}

std::optional<std::size_t> LabelScheme::index_of(std::string_view tag) const {
    for (std::size_t i = 0; i < tags_.size(); ++i) {
        if (tags_[i].name == tag) return i;
    }
    return std::nullopt;
}

std::size_t LabelScheme::require_index(std::string_view tag) const {
    if (auto idx = index_of(tag)) return *idx;
    throw Error(ErrorCode::UnknownTag, "unknown tag '" + std::string(tag) + "'", std::string(tag));
}

bool LabelScheme::allows(std::size_t index, Role role) const {
    const TagRole r = tags_.at(index).role;
    return r == TagRole::Both || (r == TagRole::Tutor) == (role == Role::Tutor);
}

// ---------------------------------------------------------------------------
// Segmentation and filtering

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Decodes one UTF-8 code point starting at `i`; advances `i`. Invalid
// sequences yield U+FFFD and consume one byte.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto c0 = static_cast<unsigned char>(s[i]);
    std::size_t len = c0 < 0x80 ? 1 : (c0 >> 5) == 0x6 ? 2 : (c0 >> 4) == 0xe ? 3 : (c0 >> 3) == 0x1e ? 4 : 0;
    if (len == 0 || i + len > s.size()) {
        ++i;
        return 0xfffd;
    }
    char32_t cp = len == 1 ? c0 : len == 2 ? (c0 & 0x1f) : len == 3 ? (c0 & 0x0f) : (c0 & 0x07);
    for (std::size_t k = 1; k < len; ++k) {
        const auto ck = static_cast<unsigned char>(s[i + k]);
        if ((ck >> 6) != 0x2) {
            ++i;
            return 0xfffd;
        }
        cp = (cp << 6) | (ck & 0x3f);
    }
    i += len;
    return cp;
}

bool is_alnum_code_point(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    // Latin-1 supplement and Latin Extended-A/B letters.
    return cp >= 0xc0 && cp <= 0x24f && cp != 0xd7 && cp != 0xf7;
}

bool has_alnum(std::string_view s) {
    for (std::size_t i = 0; i < s.size();) {
        if (is_alnum_code_point(next_code_point(s, i))) return true;
    }
    return false;
}

} // namespace

std::vector<std::string> segment_utterance(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        std::string piece = trim(text.substr(start, end - start));
        if (!piece.empty()) out.push_back(std::move(piece));
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            flush(i);
        } else if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
                   is_space(static_cast<unsigned char>(text[i + 1]))) {
            flush(i + 1);
        }
    }
    flush(text.size());
    return out;
}

std::vector<std::string> filter_meaningless(std::span<const std::string> sentences) {
    std::vector<std::string> out;
    for (const auto& s : sentences) {
        if (s == kImagePlaceholder || has_alnum(s)) out.push_back(s);
    }
    return out;
}

std::vector<std::string> sentence_units(std::string_view text) {
    const auto pieces = segment_utterance(text);
    return filter_meaningless(pieces);
}

// ---------------------------------------------------------------------------
// Corpus

std::string SentenceId::str() const {
    return session_id + ":" + std::to_string(seq) + ":" + std::to_string(index);
}

SentenceId SentenceId::parse(std::string_view text) {
    const auto last = text.rfind(':');
    const auto mid = last == std::string_view::npos ? last : text.rfind(':', last - 1);
    if (last == std::string_view::npos || mid == std::string_view::npos || mid == 0) {
        throw Error(ErrorCode::Parse, "malformed sentence id '" + std::string(text) + "'", std::string(text));
    }
    SentenceId id;
    id.session_id = std::string(text.substr(0, mid));
    try {
        id.seq = std::stol(std::string(text.substr(mid + 1, last - mid - 1)));
        id.index = std::stoul(std::string(text.substr(last + 1)));
    } catch (const std::exception&) {
        throw Error(ErrorCode::Parse, "malformed sentence id '" + std::string(text) + "'", std::string(text));
    }
    return id;
}

Corpus::Corpus(std::vector<Session> sessions, const LabelScheme& scheme) : sessions_(std::move(sessions)) {
    std::set<std::string> session_ids;
    for (std::size_t s = 0; s < sessions_.size(); ++s) {
        auto& session = sessions_[s];
        if (!session_ids.insert(session.id).second) {
            throw Error(ErrorCode::Duplicate, "duplicate session '" + session.id + "'", session.id);
        }
        std::stable_sort(session.utterances.begin(), session.utterances.end(),
                         [](const Utterance& a, const Utterance& b) { return a.seq < b.seq; });
        for (std::size_t u = 0; u < session.utterances.size(); ++u) {
            const auto& utt = session.utterances[u];
            if (u > 0 && session.utterances[u - 1].seq == utt.seq) {
                throw Error(ErrorCode::Duplicate,
                            "duplicate utterance (" + session.id + ", " + std::to_string(utt.seq) + ")",
                            session.id + ":" + std::to_string(utt.seq));
            }
            const auto units = sentence_units(utt.text);
            for (const auto& [idx, tag] : utt.labels) {
                if (idx >= units.size()) {
                    throw Error(ErrorCode::InvalidArgument,
                                "label sentence_index " + std::to_string(idx) + " out of range for utterance (" +
                                    session.id + ", " + std::to_string(utt.seq) + ")",
                                session.id + ":" + std::to_string(utt.seq));
                }
                const auto c = scheme.require_index(tag);
                if (!scheme.allows(c, utt.role)) {
                    throw Error(ErrorCode::InvalidArgument,
                                "tag '" + tag + "' is not applicable to role " + std::string(to_string(utt.role)),
                                tag);
                }
            }
            for (std::size_t k = 0; k < units.size(); ++k) {
                Sentence sentence;
                sentence.id = SentenceId{session.id, utt.seq, k};
                sentence.role = utt.role;
                sentence.text = units[k];
                if (auto it = utt.labels.find(k); it != utt.labels.end()) sentence.gold = it->second;
                sentence.session_pos = s;
                sentence.utterance_pos = u;
                sentences_.push_back(std::move(sentence));
            }
        }
    }
}

std::size_t Corpus::utterance_count() const {
    std::size_t n = 0;
    for (const auto& s : sessions_) n += s.utterances.size();
    return n;
}

Corpus Corpus::subset(std::span<const std::string> session_ids, const LabelScheme& scheme) const {
    const std::set<std::string> wanted(session_ids.begin(), session_ids.end());
    std::vector<Session> kept;
    for (const auto& s : sessions_) {
        if (wanted.count(s.id)) kept.push_back(s);
    }
    return Corpus(std::move(kept), scheme);
}

namespace {

Utterance parse_utterance_line(std::string_view line, const LabelScheme& scheme) {
    json rec = json::parse(line);
    if (!rec.is_object()) throw Error(ErrorCode::Parse, "record is not an object");
    auto require = [&](const char* key) -> const json& {
        if (!rec.contains(key)) throw Error(ErrorCode::Parse, std::string("missing field '") + key + "'", key);
        return rec[key];
    };
    Utterance u;
    const auto& sid = require("session_id");
    u.session_id = sid.is_string() ? sid.get<std::string>() : sid.dump();
    u.seq = require("seq").get<long>();
    u.role = parse_role(require("role").get<std::string>());
    u.text = require("text").get<std::string>();
    if (rec.contains("labels") && !rec["labels"].is_null()) {
        for (const auto& l : rec["labels"]) {
            const auto idx = l.at("sentence_index").get<std::size_t>();
            auto tag = l.at("tag").get<std::string>();
            scheme.require_index(tag);
            if (!u.labels.emplace(idx, std::move(tag)).second) {
                throw Error(ErrorCode::Duplicate, "sentence_index " + std::to_string(idx) + " labeled twice");
            }
        }
    }
    return u;
}

} // namespace

Corpus parse_corpus(std::string_view text, const LabelScheme& scheme) {
    std::vector<Session> sessions;
    std::unordered_map<std::string, std::size_t> session_pos;
    std::set<std::pair<std::string, long>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        Utterance u;
        try {
            u = parse_utterance_line(line, scheme);
        } catch (const Error& e) {
            throw Error(e.code(), where + ": " + e.what(), e.detail().empty() ? where : e.detail());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Parse, where + ": malformed record: " + e.what(), where);
        }
        if (!seen.emplace(u.session_id, u.seq).second) {
            throw Error(ErrorCode::Duplicate,
                        where + ": duplicate (session, seq) (" + u.session_id + ", " + std::to_string(u.seq) + ")",
                        where);
        }
        auto [it, inserted] = session_pos.emplace(u.session_id, sessions.size());
        if (inserted) sessions.push_back(Session{u.session_id, {}});
        sessions[it->second].utterances.push_back(std::move(u));
        if (end == text.size()) break;
    }
    return Corpus(std::move(sessions), scheme);
}

Corpus ingest_corpus(const std::filesystem::path& path, const LabelScheme& scheme) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open corpus file " + path.string(), path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_corpus(buf.str(), scheme);
}

std::string export_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& s : corpus.sessions()) {
        for (const auto& u : s.utterances) {
            json rec;
            rec["session_id"] = u.session_id;
            rec["seq"] = u.seq;
            rec["role"] = to_string(u.role);
            rec["text"] = u.text;
            json labels = json::array();
            for (const auto& [idx, tag] : u.labels) {
                labels.push_back({{"sentence_index", idx}, {"tag", tag}});
            }
            rec["labels"] = std::move(labels);
            out += rec.dump();
            out += '\n';
        }
    }
    return out;
}

void export_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write corpus file " + path.string(), path.string());
    }
    out << export_corpus(corpus);
}

// ---------------------------------------------------------------------------
// Splits, frequencies, agreement

SplitSpec split_sessions(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
    const auto& sessions = corpus.sessions();
    if (sessions.size() < 2) {
        throw Error(ErrorCode::Insufficient, "need at least 2 sessions to split, got " +
                                                 std::to_string(sessions.size()));
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "test fraction must lie in (0, 1)");
    }
    const std::size_t n = sessions.size();
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<bool> is_test(n, false);
    for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

    SplitSpec split;
    split.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        (is_test[i] ? split.test_sessions : split.train_sessions).push_back(sessions[i].id);
    }
    return split;
}

std::vector<std::pair<std::string, double>> label_frequency(const Corpus& corpus) {
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& s : corpus.sentences()) {
        if (s.gold) {
            ++counts[*s.gold];
            ++total;
        }
    }
    if (total == 0) throw Error(ErrorCode::Insufficient, "corpus has no labeled sentences");
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [tag, n] : counts) {
        out.emplace_back(tag, static_cast<double>(n) / static_cast<double>(total));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

double cohens_kappa(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::InvalidArgument, "label lists differ in length (" + std::to_string(a.size()) +
                                                    " vs " + std::to_string(b.size()) + ")");
    }
    if (a.empty()) throw Error(ErrorCode::InvalidArgument, "label lists are empty");
    const double n = static_cast<double>(a.size());
    std::map<std::string_view, std::pair<double, double>> marginals;
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) agree += 1.0;
        marginals[a[i]].first += 1.0;
        marginals[b[i]].second += 1.0;
    }
    const double p_o = agree / n;
    double p_e = 0.0;
    for (const auto& [tag, m] : marginals) p_e += (m.first / n) * (m.second / n);
    if (p_e >= 1.0) return p_o >= 1.0 ? 1.0 : 0.0;
    return (p_o - p_e) / (1.0 - p_e);
}

} // namespace dialcart
