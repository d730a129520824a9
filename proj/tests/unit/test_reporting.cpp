#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "dialcart/error.hpp"
#include "dialcart/reporting.hpp"
#include "dialcart/synth.hpp"

using namespace dialcart;
namespace fs = std::filesystem;

namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("dialcart_reporting_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("csv round-trips awkward fields") {
    Table t;
    t.config_hash = "abc123";
    t.header = {"a", "b", "c"};
    t.rows = {{"plain", "with,comma", "with \"quote\""},
              {"multi\nline", "", "#leading hash"},
              {" spaced ", "caf\xc3\xa9", "x"}};
    CHECK(parse_csv(write_csv(t)) == t);

    Table bare{{"only"}, {{"1"}, {"2"}}, ""};
    const auto text = write_csv(bare);
    CHECK(text == "only\n1\n2\n");
    CHECK(parse_csv(text) == bare);

    std::mt19937_64 gen(3);
    const std::string alphabet = "ab,\"\n #\r";
    for (int trial = 0; trial < 300; ++trial) {
        Table r;
        r.header = {"h1", "h2"};
        for (int row = 0; row < 3; ++row) {
            std::vector<std::string> cells;
            for (int c = 0; c < 2; ++c) {
                std::string s;
                const int len = static_cast<int>(gen() % 6);
                for (int i = 0; i < len; ++i) s += alphabet[gen() % alphabet.size()];
                cells.push_back(s);
            }
            r.rows.push_back(cells);
        }
        CHECK(parse_csv(write_csv(r)) == r);
    }
    CHECK_THROWS_AS(parse_csv("a,b\n1\n"), Error);
    CHECK_THROWS_AS(parse_csv("a\n\"open\n"), Error);
}

TEST_CASE("format_double round-trips exactly") {
    std::mt19937_64 gen(5);
    for (int i = 0; i < 5000; ++i) {
        std::uint64_t bits = gen();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v)) continue;
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0) == "1");
    CHECK_THROWS_AS(parse_double("1.5x"), Error);
}

TEST_CASE("sha256 matches published test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("data map table round-trip and plot") {
    const std::vector<DataMapPoint> points = {{"a", 0.9, 0.05, 1.0, Bucket::Easy},
                                              {"b", 0.6, 0.2, 0.5, Bucket::Medium},
                                              {"c", 0.3, 0.4, 0.25, Bucket::Hard},
                                              {"d", 0.1, 0.5, 0.0, Bucket::Impossible}};
    std::vector<DataMapRow> rows;
    for (const auto& p : points) rows.push_back({p, "tag, with comma", "student"});
    const auto table = data_map_table(rows, "h");
    CHECK(table.header == std::vector<std::string>{"id", "tag", "role", "confidence", "variability", "correctness",
                                                   "bucket"});
    const auto back = data_map_from_table(parse_csv(write_csv(table)));
    REQUIRE(back.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back[i].point == points[i]);
        CHECK(back[i].tag == "tag, with comma");
    }

    const auto svg = emit_data_map_plot(points);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("version=\"1.1\"") != std::string::npos);
    for (const char* cls : {"bucket-easy", "bucket-medium", "bucket-hard", "bucket-impossible"}) {
        const auto open = svg.find(std::string("class=\"") + cls + "\"");
        REQUIRE(open != std::string::npos);
        const auto close = svg.find("</g>", open);
        CHECK(count(svg.substr(open, close - open), "<circle") == 1);
    }
    for (const char* label : {">Easy<", ">Medium<", ">Hard<", ">Impossible<"}) CHECK(svg.find(label) != std::string::npos);
    // Axis ticks span [0, 0.5] x [0, 1].
    CHECK(svg.find(">0.50<") != std::string::npos);
    CHECK(svg.find(">1.00<") != std::string::npos);
    CHECK(emit_data_map_plot(points) == svg);
    CHECK_THROWS_AS(emit_data_map_plot(std::vector<DataMapPoint>{}), Error);
}

TEST_CASE("bucket distribution table") {
    const std::vector<BucketRow> rows = {{"a", 4, {0.5, 0, 0.5, 0}}, {"b", 1, {0, 1, 0, 0}}};
    const auto t = bucket_distribution_table(rows);
    CHECK(t.header == std::vector<std::string>{"tag", "count", "easy", "medium", "hard", "impossible"});
    CHECK(t.rows[0] == std::vector<std::string>{"a", "4", "0.5", "0", "0.5", "0"});
}

TEST_CASE("learning curves: schema, round-trip, band, grid checks") {
    const std::vector<LearningCurve> curves = {
        {"random", "macro_f1", {50, 100, 150}, {0.2, 0.3, 0.35}, {0.01, 0.02, 0.0}, {6, 6, 6}},
        {"coremse", "macro_f1", {50, 100, 150}, {0.2, 0.4, 0.45}, {0.0, 0.05, 0.01}, {6, 6, 6}}};
    const auto report = emit_learning_curves(curves, "macro_f1", "hash");
    CHECK(report.table.header == std::vector<std::string>{"strategy", "labeled_count", "mean", "std"});
    CHECK(report.table.rows.size() == 6);
    CHECK(report.table.config_hash == "hash");
    const auto back = learning_curves_from_table(parse_csv(write_csv(report.table)), "macro_f1");
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].strategy == curves[i].strategy);
        CHECK(back[i].labeled_counts == curves[i].labeled_counts);
        CHECK(back[i].mean == curves[i].mean);
        CHECK(back[i].std == curves[i].std);
    }
    CHECK(count(report.svg, "<polygon") == 2);
    CHECK(count(report.svg, "<polyline") == 2);
    CHECK(emit_learning_curves(curves, "macro_f1", "hash").svg == report.svg);

    const std::vector<LearningCurve> single = {{"random", "accuracy", {50}, {0.5}, {0.0}, {1}}};
    const auto one = emit_learning_curves(single, "accuracy");
    CHECK(one.table.rows.size() == 1);
    CHECK(one.svg.find("nan") == std::string::npos);
    CHECK(one.svg.find("inf") == std::string::npos);

    auto bad = curves;
    bad[1].labeled_counts = {50, 100, 200};
    CHECK_THROWS_AS(emit_learning_curves(bad, "macro_f1"), Error);
    CHECK_THROWS_AS(emit_learning_curves(std::vector<LearningCurve>{}, "macro_f1"), Error);
}

TEST_CASE("sampling frequency charts") {
    SamplingTable st{{"x", "y"}, {0, 1, 2}, {{0, 30, 70}, {0, 20, 30}}};
    const auto report = emit_sampling_frequency({{"coremse", st}, {"random", st}}, "h");
    CHECK(report.svgs.size() == 2);
    CHECK(report.table.header == std::vector<std::string>{"strategy", "round", "tag", "cumulative"});
    const auto back = sampling_tables_from_table(parse_csv(write_csv(report.table)));
    REQUIRE(back.size() == 2);
    CHECK(back[0].second.counts == st.counts);
    CHECK(back[0].second.rounds == st.rounds);

    // Stacked heights add up to r * 50 per round.
    const std::regex bar_re("<g class=\"bar\" data-round=\"(\\d+)\">([^]*?)</g>");
    const std::regex count_re("data-count=\"([0-9.e+-]+)\"");
    const auto& svg = report.svgs[0].second;
    std::size_t bars = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), bar_re); it != std::sregex_iterator(); ++it) {
        const std::string body = (*it)[2];
        double total = 0.0;
        for (auto c = std::sregex_iterator(body.begin(), body.end(), count_re); c != std::sregex_iterator(); ++c) {
            total += std::stod((*c)[1]);
        }
        CHECK(total == 50.0 * std::stod((*it)[1]));
        ++bars;
    }
    CHECK(bars == 3);

    SamplingTable empty{{"x"}, {}, {{}}};
    const auto e = emit_sampling_frequency({{"random", empty}});
    CHECK(e.table.rows.empty());
    CHECK(e.svgs.size() == 1);
    CHECK(e.svgs[0].second.find("</svg>") != std::string::npos);

    SamplingTable decreasing{{"x"}, {0, 1}, {{5, 4}}};
    CHECK_THROWS_AS(emit_sampling_frequency({{"random", decreasing}}), Error);
}

TEST_CASE("experiment results directory, manifest, and re-rendering") {
    SynthConfig sc;
    sc.imbalance = Imbalance::Uniform;
    sc.classes = 3;
    sc.sessions = 6;
    sc.sentences = 160;
    const auto pool = synthesize_corpus(sc);
    sc.seed = 99;
    sc.sentences = 60;
    const auto test = synthesize_corpus(sc);
    const auto data = make_simulation_data(pool.corpus, test.corpus, pool.scheme, FeatureHasher({1, 1, 256, 0, 128}));
    ExperimentConfig cfg;
    cfg.initial_labeled = 20;
    cfg.batch_size = 20;
    cfg.rounds = 3;
    cfg.seeds = {0, 1};
    cfg.train.epochs = 3;
    cfg.strategies = {StrategyConfig{Strategy::Random, 20, 0, 2, 0}, StrategyConfig{Strategy::CoreMSE, 20, 0, 2, 0}};
    const auto results = run_experiment(data, cfg);

    const auto dir = scratch("results");
    write_experiment_results(dir, results, pool.scheme, "cfg");
    for (const char* f : {"runs/random_seed0.csv", "runs/coremse_seed1.csv", "runs/random_seed0_labels.csv",
                          "learning_curve_accuracy.csv", "learning_curve_macro_f1.csv", "learning_curve_macro_f1.svg",
                          "per_label_f1.csv", "summary.csv", "sampling_frequency.csv",
                          "sampling_frequency_coremse.svg", "sampling_frequency_random.svg"}) {
        CHECK_MESSAGE(fs::exists(dir / f), f);
    }
    const auto run = load_table(dir / "runs/coremse_seed1.csv");
    CHECK(run.config_hash == "cfg");
    CHECK(run.rows.size() == 4);

    const auto before = read_text_file(dir / "learning_curve_macro_f1.svg");
    fs::remove(dir / "learning_curve_macro_f1.svg");
    render_report(dir);
    CHECK(read_text_file(dir / "learning_curve_macro_f1.svg") == before);

    const auto entries = write_manifest(dir);
    const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    CHECK(manifest["files"].size() == entries.size());
    for (const auto& e : entries) {
        CHECK(e.path != "manifest.json");
        CHECK(sha256_hex(read_text_file(dir / e.path)) == e.sha256);
    }
    fs::remove_all(dir);
}
