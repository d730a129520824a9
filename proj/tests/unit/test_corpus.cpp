#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dialcart/corpus.hpp"
#include "dialcart/error.hpp"

using namespace dialcart;

namespace {

LabelScheme two_tag_scheme() {
    return LabelScheme({{"Greeting", TagRole::Both}, {"Confirmation Question", TagRole::Student}}, "t2");
}

std::string strip_space(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c != ' ' && c != '\t' && c != '\n' && c != '\r') out += c;
    }
    return out;
}

} // namespace

TEST_CASE("ingest: one session with two utterances") {
    const auto scheme = two_tag_scheme();
    const std::string text =
        R"({"session_id":"a","seq":2,"role":"student","text":"So it is 5?","labels":[{"sentence_index":0,"tag":"Confirmation Question"}]})"
        "\n"
        R"({"session_id":"a","seq":1,"role":"tutor","text":"Hello there."})"
        "\n";
    const auto corpus = parse_corpus(text, scheme);
    REQUIRE(corpus.sessions().size() == 1);
    const auto& utts = corpus.sessions()[0].utterances;
    REQUIRE(utts.size() == 2);
    CHECK(utts[0].seq == 1);
    CHECK(utts[1].seq == 2);
    REQUIRE(corpus.sentences().size() == 2);
    CHECK(corpus.sentences()[1].gold == "Confirmation Question");
    CHECK_FALSE(corpus.sentences()[0].gold.has_value());
}

TEST_CASE("ingest: unknown tag names the tag and the line") {
    const std::string text =
        R"({"session_id":"a","seq":1,"role":"tutor","text":"Hi."})"
        "\n"
        R"({"session_id":"a","seq":2,"role":"tutor","text":"Hi.","labels":[{"sentence_index":0,"tag":"FooBar"}]})";
    try {
        parse_corpus(text, two_tag_scheme());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownTag);
        const std::string msg = e.what();
        CHECK(msg.find("FooBar") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
}

TEST_CASE("ingest: malformed line, duplicate seq, role mismatch") {
    const auto scheme = two_tag_scheme();
    try {
        parse_corpus("{\"session_id\":\"a\"\n", scheme);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Parse);
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
    const std::string dup = R"({"session_id":"a","seq":1,"role":"tutor","text":"x"})"
                            "\n"
                            R"({"session_id":"a","seq":1,"role":"tutor","text":"y"})";
    CHECK_THROWS_AS(parse_corpus(dup, scheme), Error);
    try {
        parse_corpus(dup, scheme);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Duplicate);
    }
    // A student-only act on a tutor sentence.
    const std::string role =
        R"({"session_id":"a","seq":1,"role":"tutor","text":"Is it 5?","labels":[{"sentence_index":0,"tag":"Confirmation Question"}]})";
    CHECK_THROWS_AS(parse_corpus(role, scheme), Error);
}

TEST_CASE("export then ingest is structurally identical on random corpora") {
    const auto scheme = two_tag_scheme();
    std::mt19937_64 gen(7);
    const std::vector<std::string> pieces = {"Oh, I get it.", "Thanks!", "[Image]", "What next?", "No idea",
                                             "caf\xc3\xa9 ok.", "\xf0\x9f\x98\x80"};
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Session> sessions;
        const int ns = 1 + static_cast<int>(gen() % 4);
        for (int s = 0; s < ns; ++s) {
            Session session;
            session.id = "s" + std::to_string(s);
            const int nu = 1 + static_cast<int>(gen() % 5);
            for (int u = 0; u < nu; ++u) {
                Utterance utt;
                utt.session_id = session.id;
                utt.seq = u * 3 + 1;
                utt.role = gen() % 2 ? Role::Student : Role::Tutor;
                const int np = 1 + static_cast<int>(gen() % 3);
                for (int p = 0; p < np; ++p) utt.text += (p ? " " : "") + pieces[gen() % pieces.size()];
                const auto units = sentence_units(utt.text);
                for (std::size_t k = 0; k < units.size(); ++k) {
                    if (gen() % 2) {
                        utt.labels[k] = utt.role == Role::Student && gen() % 2 ? "Confirmation Question" : "Greeting";
                    }
                }
                session.utterances.push_back(utt);
            }
            sessions.push_back(session);
        }
        const Corpus original(sessions, scheme);
        const auto again = parse_corpus(export_corpus(original), scheme);
        CHECK(again.sessions() == original.sessions());
        CHECK(export_corpus(again) == export_corpus(original));
    }
}

TEST_CASE("segment_utterance examples") {
    CHECK(segment_utterance("No, it is incorrect!") == std::vector<std::string>{"No, it is incorrect!"});
    CHECK(segment_utterance("Oh, I get it. Thanks!") == std::vector<std::string>{"Oh, I get it.", "Thanks!"});
    CHECK(segment_utterance("").empty());
    CHECK(segment_utterance("first line\nsecond line") == std::vector<std::string>{"first line", "second line"});
    CHECK(segment_utterance("3.14 is pi") == std::vector<std::string>{"3.14 is pi"});
}

TEST_CASE("segment_utterance preserves non-whitespace characters (fuzz)") {
    std::mt19937_64 gen(11);
    const std::string alphabet = "ab .!?\n\t,x1";
    for (int trial = 0; trial < 2000; ++trial) {
        std::string text;
        const int len = static_cast<int>(gen() % 40);
        for (int i = 0; i < len; ++i) text += alphabet[gen() % alphabet.size()];
        std::string joined;
        for (const auto& s : segment_utterance(text)) {
            CHECK_FALSE(s.empty());
            joined += s;
        }
        CHECK(strip_space(joined) == strip_space(text));
    }
}

TEST_CASE("filter_meaningless examples") {
    const std::vector<std::string> a = {"\xf0\x9f\x98\x80", "ok"};
    CHECK(filter_meaningless(a) == std::vector<std::string>{"ok"});
    const std::vector<std::string> b = {"[Image]"};
    CHECK(filter_meaningless(b) == std::vector<std::string>{"[Image]"});
    const std::vector<std::string> c = {"!!!", "?"};
    CHECK(filter_meaningless(c).empty());
    const std::vector<std::string> d = {"7", "\xc3\xa9"};
    CHECK(filter_meaningless(d).size() == 2);
}

TEST_CASE("split_sessions examples and partition property") {
    const auto scheme = two_tag_scheme();
    auto make = [&](int n) {
        std::vector<Session> sessions;
        for (int s = 0; s < n; ++s) {
            Session session{"s" + std::to_string(s), {{"s" + std::to_string(s), 1, Role::Tutor, "Hello.", {}}}};
            sessions.push_back(session);
        }
        return Corpus(sessions, scheme);
    };
    const auto fifty = make(50);
    const auto split = split_sessions(fifty, 0.2, 3);
    CHECK(split.test_sessions.size() == 10);
    CHECK(split.train_sessions.size() == 40);
    CHECK(split_sessions(fifty, 0.2, 3) == split);

    const auto two = split_sessions(make(2), 0.5, 0);
    CHECK(two.test_sessions.size() == 1);
    CHECK(two.train_sessions.size() == 1);

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto s = split_sessions(make(7), 0.3, seed);
        std::multiset<std::string> all(s.train_sessions.begin(), s.train_sessions.end());
        all.insert(s.test_sessions.begin(), s.test_sessions.end());
        CHECK(all.size() == 7);
        CHECK(std::set<std::string>(all.begin(), all.end()).size() == 7);
    }
    CHECK_THROWS_AS(split_sessions(make(1), 0.5, 0), Error);
    CHECK_THROWS_AS(split_sessions(fifty, 0.0, 0), Error);
    CHECK_THROWS_AS(split_sessions(fifty, 1.0, 0), Error);
}

TEST_CASE("label_frequency") {
    const auto scheme = two_tag_scheme();
    auto corpus_with = [&](int greetings, int questions) {
        Session s{"a", {}};
        long seq = 0;
        for (int i = 0; i < greetings; ++i) s.utterances.push_back({"a", ++seq, Role::Tutor, "Hi.", {{0, "Greeting"}}});
        for (int i = 0; i < questions; ++i) {
            s.utterances.push_back({"a", ++seq, Role::Student, "Is it?", {{0, "Confirmation Question"}}});
        }
        return Corpus({s}, scheme);
    };
    const auto f = label_frequency(corpus_with(3, 1));
    REQUIRE(f.size() == 2);
    CHECK(f[0].first == "Greeting");
    CHECK(f[0].second == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(f[1].second == doctest::Approx(0.25).epsilon(1e-15));

    const auto single = label_frequency(corpus_with(4, 0));
    REQUIRE(single.size() == 1);
    CHECK(single[0].second == 1.0);

    // 493 of 10000 sentences.
    const auto table = label_frequency(corpus_with(10000 - 493, 493));
    CHECK(table[1].first == "Confirmation Question");
    CHECK(table[1].second == doctest::Approx(0.0493).epsilon(1e-12));
    double sum = 0.0;
    for (const auto& [tag, v] : table) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);

    CHECK_THROWS_AS(label_frequency(Corpus({Session{"a", {{"a", 1, Role::Tutor, "Hi.", {}}}}}, scheme)), Error);
}

TEST_CASE("cohens_kappa examples and properties") {
    const std::vector<std::string> a = {"1", "1", "0", "0"};
    const std::vector<std::string> b = {"1", "0", "0", "1"};
    CHECK(cohens_kappa(a, b) == 0.0);
    CHECK(cohens_kappa(a, a) == 1.0);
    const std::vector<std::string> same = {"x", "x", "x"};
    CHECK(cohens_kappa(same, same) == 1.0);
    CHECK_THROWS_AS(cohens_kappa(a, std::vector<std::string>{"1"}), Error);
    CHECK_THROWS_AS(cohens_kappa(std::vector<std::string>{}, std::vector<std::string>{}), Error);

    std::mt19937_64 gen(5);
    std::vector<std::string> x, y;
    for (int i = 0; i < 20000; ++i) {
        x.push_back(std::to_string(gen() % 4));
        y.push_back(std::to_string(gen() % 4));
    }
    CHECK(std::abs(cohens_kappa(x, y)) < 0.05);

    // Symmetry and invariance under a bijective renaming applied to both.
    const std::map<std::string, std::string> rename = {{"0", "d"}, {"1", "a"}, {"2", "c"}, {"3", "b"}};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> p, q, rp, rq;
        for (int i = 0; i < 30; ++i) {
            p.push_back(std::to_string(gen() % 4));
            q.push_back(gen() % 3 ? p.back() : std::to_string(gen() % 4));
            rp.push_back(rename.at(p.back()));
            rq.push_back(rename.at(q.back()));
        }
        const double k = cohens_kappa(p, q);
        CHECK(cohens_kappa(q, p) == doctest::Approx(k).epsilon(1e-12));
        CHECK(cohens_kappa(rp, rq) == doctest::Approx(k).epsilon(1e-12));
        CHECK(k <= 1.0);
        CHECK(k >= -1.0);
    }
}

TEST_CASE("label scheme validation and persistence") {
    CHECK_THROWS_AS(LabelScheme({}, "v"), Error);
    CHECK_THROWS_AS(LabelScheme({{"a", TagRole::Both}, {"a", TagRole::Tutor}}, "v"), Error);
    const auto d = LabelScheme::default_scheme();
    CHECK(d.size() == 31);
    CHECK(d.name(0) == "Confirmation Question");
    CHECK(d.name(1) == "Request Feedback by Image");
    CHECK(d.name(6) == "Ready Answer");
    CHECK(LabelScheme::from_json_text(d.to_json_text()) == d);
    CHECK(d.allows(0, Role::Student));
    CHECK_FALSE(d.allows(0, Role::Tutor));
    CHECK_THROWS_AS(LabelScheme::from_json_text(R"({"version":"x","tags":[{"name":"a","role":"robot"}]})"), Error);
}

TEST_CASE("sentence ids round-trip") {
    const SentenceId id{"S01", 12, 3};
    CHECK(id.str() == "S01:12:3");
    CHECK(SentenceId::parse(id.str()) == id);
    CHECK_THROWS_AS(SentenceId::parse("nonsense"), Error);
}
