#include "dialcart/reporting.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "dialcart/error.hpp"

namespace dialcart {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// CSV

namespace {

bool needs_quotes(std::string_view f) {
    return f.find_first_of(",\"\r\n") != std::string_view::npos || (!f.empty() && f.front() == '#');
}

void append_field(std::string& out, std::string_view f) {
    if (!needs_quotes(f)) {
        out += f;
        return;
    }
    out += '"';
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

void append_row(std::string& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        append_field(out, row[i]);
    }
    out += '\n';
}

constexpr std::string_view kHashPrefix = "# config_hash=";

} // namespace

std::string write_csv(const Table& table) {
    std::string out;
    if (!table.config_hash.empty()) {
        out += kHashPrefix;
        out += table.config_hash;
        out += '\n';
    }
    append_row(out, table.header);
    for (const auto& r : table.rows) {
        if (r.size() != table.header.size()) {
            throw Error(ErrorCode::InvalidArgument, "table row width differs from header width");
        }
        append_row(out, r);
    }
    return out;
}

Table parse_csv(std::string_view text) {
    Table table;
    std::size_t pos = 0;
    if (text.starts_with(kHashPrefix)) {
        const auto end = text.find('\n');
        auto hash = text.substr(kHashPrefix.size(), end == std::string_view::npos ? text.npos : end - kHashPrefix.size());
        if (!hash.empty() && hash.back() == '\r') hash.remove_suffix(1);
        table.config_hash = std::string(hash);
        pos = end == std::string_view::npos ? text.size() : end + 1;
    }
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool in_record = false;
    while (pos < text.size()) {
        const char c = text[pos++];
        if (quoted) {
            if (c == '"') {
                if (pos < text.size() && text[pos] == '"') {
                    field += '"';
                    ++pos;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        in_record = true;
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
            record.push_back(std::move(field));
            field.clear();
            records.push_back(std::move(record));
            record.clear();
            in_record = false;
        } else {
            field += c;
        }
    }
    if (quoted) throw Error(ErrorCode::Parse, "unterminated quoted CSV field");
    if (in_record) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    if (records.empty()) throw Error(ErrorCode::Parse, "CSV has no header");
    table.header = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != table.header.size()) {
            throw Error(ErrorCode::Parse, "CSV record " + std::to_string(i + 1) + " has " +
                                              std::to_string(records[i].size()) + " fields, header has " +
                                              std::to_string(table.header.size()));
        }
        table.rows.push_back(std::move(records[i]));
    }
    return table;
}

void write_text_file(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string(), path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void save_table(const Table& table, const fs::path& path) { write_text_file(path, write_csv(table)); }
Table load_table(const fs::path& path) { return parse_csv(read_text_file(path)); }

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::Parse, "not a number: '" + std::string(text) + "'", std::string(text));
    }
    return v;
}

namespace {

std::size_t parse_size(std::string_view text) {
    std::size_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::Parse, "not a count: '" + std::string(text) + "'", std::string(text));
    }
    return v;
}

std::size_t column(const Table& t, std::string_view name) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i] == name) return i;
    }
    throw Error(ErrorCode::Parse, "table lacks column '" + std::string(name) + "'", std::string(name));
}

} // namespace

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::Io, "sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xf];
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVG helpers

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;

// Linear plot frame with axes, ticks, and labels.
struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }

    void open(std::string& svg, const std::string& title, const std::string& xlabel, const std::string& ylabel) const {
        svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt2(kWidth) + "\" height=\"" +
               fmt2(kHeight) + "\" viewBox=\"0 0 " + fmt2(kWidth) + " " + fmt2(kHeight) + "\">\n";
        svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        svg += "<text x=\"" + fmt2(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"15\">" + xml_escape(title) + "</text>\n";
        svg += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
        svg += "<line x1=\"" + fmt2(px(x0)) + "\" y1=\"" + fmt2(py(y0)) + "\" x2=\"" + fmt2(px(x1)) + "\" y2=\"" +
               fmt2(py(y0)) + "\"/>\n";
        svg += "<line x1=\"" + fmt2(px(x0)) + "\" y1=\"" + fmt2(py(y0)) + "\" x2=\"" + fmt2(px(x0)) + "\" y2=\"" +
               fmt2(py(y1)) + "\"/>\n";
        svg += "</g>\n<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
        for (int i = 0; i <= 5; ++i) {
            const double xv = x0 + (x1 - x0) * i / 5.0;
            const double yv = y0 + (y1 - y0) * i / 5.0;
            svg += "<text x=\"" + fmt2(px(xv)) + "\" y=\"" + fmt2(py(y0) + 16) + "\" text-anchor=\"middle\">" +
                   fmt2(xv) + "</text>\n";
            svg += "<text x=\"" + fmt2(px(x0) - 6) + "\" y=\"" + fmt2(py(yv) + 4) + "\" text-anchor=\"end\">" +
                   fmt2(yv) + "</text>\n";
        }
        svg += "</g>\n";
        svg += "<text x=\"" + fmt2((px(x0) + px(x1)) / 2) + "\" y=\"" + fmt2(kHeight - 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(xlabel) +
               "</text>\n";
        svg += "<text transform=\"translate(18 " + fmt2((py(y0) + py(y1)) / 2) +
               ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
               xml_escape(ylabel) + "</text>\n";
    }
};

void legend_entry(std::string& svg, int index, const std::string& color, const std::string& label) {
    const double x = kWidth - kRight + 16;
    const double y = kTop + 10 + 20.0 * index;
    svg += "<rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(y - 9) + "\" width=\"12\" height=\"12\" fill=\"" + color +
           "\"/>\n<text x=\"" + fmt2(x + 18) + "\" y=\"" + fmt2(y + 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(label) + "</text>\n";
}

const char* bucket_color(Bucket b) {
    switch (b) {
    case Bucket::Easy: return "#1b9e77";
    case Bucket::Medium: return "#7570b3";
    case Bucket::Hard: return "#d95f02";
    case Bucket::Impossible: return "#e7298a";
    }
    return "#000000";
}

const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors;
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Data maps

Table data_map_table(std::span<const DataMapRow> rows, const std::string& config_hash) {
    Table t;
    t.config_hash = config_hash;
    t.header = {"id", "tag", "role", "confidence", "variability", "correctness", "bucket"};
    for (const auto& r : rows) {
        t.rows.push_back({r.point.id, r.tag, r.role, format_double(r.point.confidence),
                          format_double(r.point.variability), format_double(r.point.correctness),
                          std::string(to_string(r.point.bucket))});
    }
    return t;
}

std::vector<DataMapRow> data_map_from_table(const Table& t) {
    const auto id = column(t, "id"), tag = column(t, "tag"), role = column(t, "role"), conf = column(t, "confidence"),
               var = column(t, "variability"), cor = column(t, "correctness"), bk = column(t, "bucket");
    std::vector<DataMapRow> rows;
    for (const auto& r : t.rows) {
        DataMapRow row;
        row.point.id = r[id];
        row.point.confidence = parse_double(r[conf]);
        row.point.variability = parse_double(r[var]);
        row.point.correctness = parse_double(r[cor]);
        row.point.bucket = parse_bucket(r[bk]);
        row.tag = r[tag];
        row.role = r[role];
        rows.push_back(std::move(row));
    }
    return rows;
}

Table bucket_distribution_table(std::span<const BucketRow> rows, const std::string& config_hash) {
    Table t;
    t.config_hash = config_hash;
    t.header = {"tag", "count", "easy", "medium", "hard", "impossible"};
    for (const auto& r : rows) {
        t.rows.push_back({r.tag, std::to_string(r.count), format_double(r.fractions[0]), format_double(r.fractions[1]),
                          format_double(r.fractions[2]), format_double(r.fractions[3])});
    }
    return t;
}

std::string emit_data_map_plot(std::span<const DataMapPoint> points) {
    if (points.empty()) throw Error(ErrorCode::InvalidArgument, "cannot plot an empty data map");
    const Frame f{0.0, 0.5, 0.0, 1.0};
    std::string svg;
    f.open(svg, "Data map", "variability", "confidence");
    for (Bucket b : kBuckets) {
        svg += "<g class=\"bucket-" + lowercase(to_string(b)) + "\" fill=\"" + bucket_color(b) +
               "\" fill-opacity=\"0.7\">\n";
        for (const auto& p : points) {
            if (p.bucket != b) continue;
            svg += "<circle cx=\"" + fmt2(f.px(std::clamp(p.variability, 0.0, 0.5))) + "\" cy=\"" +
                   fmt2(f.py(std::clamp(p.confidence, 0.0, 1.0))) + "\" r=\"3\"/>\n";
        }
        svg += "</g>\n";
    }
    int i = 0;
    for (Bucket b : kBuckets) legend_entry(svg, i++, bucket_color(b), std::string(to_string(b)));
    svg += "</svg>\n";
    return svg;
}

// ---------------------------------------------------------------------------
// Learning curves

CurveReport emit_learning_curves(std::span<const LearningCurve> curves, const std::string& metric,
                                 const std::string& config_hash) {
    if (curves.empty()) throw Error(ErrorCode::InvalidArgument, "no learning curves to emit");
    const auto& grid = curves.front().labeled_counts;
    if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "learning curve has no points");
    for (const auto& c : curves) {
        if (c.labeled_counts != grid || c.mean.size() != grid.size() || c.std.size() != grid.size()) {
            throw Error(ErrorCode::InvalidArgument, "learning curves use different labeled-count grids");
        }
    }

    CurveReport report;
    report.table.config_hash = config_hash;
    report.table.header = {"strategy", "labeled_count", "mean", "std"};
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            report.table.rows.push_back({c.strategy, std::to_string(grid[i]), format_double(c.mean[i]),
                                         format_double(c.std[i])});
        }
    }

    const double x0 = static_cast<double>(grid.front());
    double x1 = static_cast<double>(grid.back());
    if (x1 <= x0) x1 = x0 + 1.0;
    const Frame f{x0, x1, 0.0, 1.0};
    std::string& svg = report.svg;
    f.open(svg, "Learning curve (" + metric + ")", "labeled instances", metric);
    for (std::size_t s = 0; s < curves.size(); ++s) {
        const auto& c = curves[s];
        const auto& color = palette()[s % palette().size()];
        svg += "<g class=\"series\" data-strategy=\"" + xml_escape(c.strategy) + "\">\n";
        std::string band, upper, lower, line;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double x = f.px(static_cast<double>(grid[i]));
            upper += fmt2(x) + "," + fmt2(f.py(std::min(1.0, c.mean[i] + c.std[i]))) + " ";
            line += fmt2(x) + "," + fmt2(f.py(c.mean[i])) + " ";
        }
        for (std::size_t i = grid.size(); i-- > 0;) {
            const double x = f.px(static_cast<double>(grid[i]));
            lower += fmt2(x) + "," + fmt2(f.py(std::max(0.0, c.mean[i] - c.std[i]))) + " ";
        }
        svg += "<polygon points=\"" + upper + lower + "\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
        svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        for (std::size_t i = 0; i < grid.size(); ++i) {
            svg += "<circle cx=\"" + fmt2(f.px(static_cast<double>(grid[i]))) + "\" cy=\"" + fmt2(f.py(c.mean[i])) +
                   "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
        }
        svg += "</g>\n";
        legend_entry(svg, static_cast<int>(s), color, c.strategy);
    }
    svg += "</svg>\n";
    return report;
}

std::vector<LearningCurve> learning_curves_from_table(const Table& t, const std::string& metric) {
    const auto s = column(t, "strategy"), x = column(t, "labeled_count"), m = column(t, "mean"), sd = column(t, "std");
    std::vector<LearningCurve> curves;
    for (const auto& r : t.rows) {
        if (curves.empty() || curves.back().strategy != r[s]) {
            curves.push_back(LearningCurve{r[s], metric, {}, {}, {}, {}});
        }
        auto& c = curves.back();
        c.labeled_counts.push_back(parse_size(r[x]));
        c.mean.push_back(parse_double(r[m]));
        c.std.push_back(parse_double(r[sd]));
        c.n.push_back(0);
    }
    return curves;
}

// ---------------------------------------------------------------------------
// Sampling frequency

SamplingReport emit_sampling_frequency(const std::vector<std::pair<std::string, SamplingTable>>& tables,
                                       const std::string& config_hash) {
    SamplingReport report;
    report.table.config_hash = config_hash;
    report.table.header = {"strategy", "round", "tag", "cumulative"};
    for (const auto& [strategy, st] : tables) {
        if (st.counts.size() != st.tags.size()) throw Error(ErrorCode::InvalidArgument, "sampling table shape mismatch");
        for (std::size_t t = 0; t < st.tags.size(); ++t) {
            if (st.counts[t].size() != st.rounds.size()) {
                throw Error(ErrorCode::InvalidArgument, "sampling table shape mismatch");
            }
            for (std::size_t r = 1; r < st.rounds.size(); ++r) {
                if (st.counts[t][r] < st.counts[t][r - 1]) {
                    throw Error(ErrorCode::InvalidArgument,
                                "cumulative count for '" + st.tags[t] + "' decreases at round " +
                                    std::to_string(st.rounds[r]),
                                st.tags[t]);
                }
            }
        }
        for (std::size_t r = 0; r < st.rounds.size(); ++r) {
            for (std::size_t t = 0; t < st.tags.size(); ++t) {
                report.table.rows.push_back(
                    {strategy, std::to_string(st.rounds[r]), st.tags[t], format_double(st.counts[t][r])});
            }
        }

        double top = 1.0;
        for (std::size_t r = 0; r < st.rounds.size(); ++r) {
            double total = 0.0;
            for (std::size_t t = 0; t < st.tags.size(); ++t) total += st.counts[t][r];
            top = std::max(top, total);
        }
        const double slots = static_cast<double>(std::max<std::size_t>(st.rounds.size(), 1));
        const Frame f{0.0, slots, 0.0, top};
        std::string svg;
        f.open(svg, "Cumulative sampling frequency (" + strategy + ")", "round", "cumulative acquisitions");
        const double bar = (f.px(1.0) - f.px(0.0)) * 0.8;
        for (std::size_t r = 0; r < st.rounds.size(); ++r) {
            svg += "<g class=\"bar\" data-round=\"" + std::to_string(st.rounds[r]) + "\">\n";
            double base = 0.0;
            for (std::size_t t = 0; t < st.tags.size(); ++t) {
                const double v = st.counts[t][r];
                if (v <= 0.0) continue;
                const double y_top = f.py(base + v);
                svg += "<rect x=\"" + fmt2(f.px(static_cast<double>(r)) + bar * 0.125) + "\" y=\"" + fmt2(y_top) +
                       "\" width=\"" + fmt2(bar) + "\" height=\"" + fmt2(f.py(base) - y_top) + "\" fill=\"" +
                       palette()[t % palette().size()] + "\" data-tag=\"" + xml_escape(st.tags[t]) + "\" data-count=\"" +
                       format_double(v) + "\"/>\n";
                base += v;
            }
            svg += "</g>\n";
        }
        for (std::size_t t = 0; t < st.tags.size(); ++t) {
            legend_entry(svg, static_cast<int>(t), palette()[t % palette().size()], st.tags[t]);
        }
        svg += "</svg>\n";
        report.svgs.emplace_back(strategy, std::move(svg));
    }
    return report;
}

std::vector<std::pair<std::string, SamplingTable>> sampling_tables_from_table(const Table& t) {
    const auto s = column(t, "strategy"), rc = column(t, "round"), tc = column(t, "tag"), cc = column(t, "cumulative");
    std::vector<std::pair<std::string, SamplingTable>> out;
    for (const auto& r : t.rows) {
        if (out.empty() || out.back().first != r[s]) out.emplace_back(r[s], SamplingTable{});
        auto& st = out.back().second;
        const auto round = parse_size(r[rc]);
        if (st.rounds.empty() || st.rounds.back() != round) st.rounds.push_back(round);
        auto it = std::find(st.tags.begin(), st.tags.end(), r[tc]);
        if (it == st.tags.end()) {
            st.tags.push_back(r[tc]);
            st.counts.emplace_back();
            it = st.tags.end() - 1;
        }
        st.counts[static_cast<std::size_t>(it - st.tags.begin())].push_back(parse_double(r[cc]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Results directory

std::vector<ManifestEntry> write_manifest(const fs::path& dir) {
    std::vector<ManifestEntry> entries;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir).generic_string();
        if (rel == "manifest.json") continue;
        const auto bytes = read_text_file(e.path());
        entries.push_back({rel, bytes.size(), sha256_hex(bytes)});
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    nlohmann::json doc;
    doc["files"] = nlohmann::json::array();
    for (const auto& e : entries) doc["files"].push_back({{"path", e.path}, {"bytes", e.bytes}, {"sha256", e.sha256}});
    write_text_file(dir / "manifest.json", doc.dump(2) + "\n");
    return entries;
}

void write_experiment_results(const fs::path& dir, const ExperimentResults& results, const LabelScheme& scheme,
                              const std::string& config_hash) {
    fs::create_directories(dir / "runs");
    std::vector<LearningCurve> acc_curves, f1_curves;
    std::vector<std::pair<std::string, SamplingTable>> sampling;
    Table per_label;
    per_label.config_hash = config_hash;
    per_label.header = {"strategy", "labeled_count", "tag", "mean_f1"};
    Table summary;
    summary.config_hash = config_hash;
    summary.header = {"strategy", "seeds", "final_labeled_count", "final_accuracy", "final_macro_f1", "auc_macro_f1"};

    for (const auto& sr : results.strategies) {
        const std::string name(to_string(sr.strategy.kind));
        std::vector<CurveSeries> acc, f1;
        std::vector<SamplingTable> seed_tables;
        for (std::size_t k = 0; k < sr.seeds.size(); ++k) {
            const auto& run = sr.runs[k];
            const std::string stem = name + "_seed" + std::to_string(sr.seeds[k]);

            Table rounds;
            rounds.config_hash = config_hash;
            rounds.header = {"round", "labeled_count", "accuracy", "macro_f1", "partial", "acquired_ids"};
            Table labels;
            labels.config_hash = config_hash;
            labels.header = {"round", "tag", "f1", "cumulative_acquired"};
            for (const auto& rr : run) {
                std::string ids;
                for (auto id : rr.acquired_ids) ids += (ids.empty() ? "" : " ") + std::to_string(id);
                rounds.rows.push_back({std::to_string(rr.round), std::to_string(rr.labeled_count),
                                       format_double(rr.accuracy), format_double(rr.macro_f1),
                                       rr.partial ? "1" : "0", ids});
                for (const auto& t : scheme.tags()) {
                    const auto f = rr.per_label_f1.find(t.name);
                    const auto c = rr.cumulative_per_label.find(t.name);
                    labels.rows.push_back({std::to_string(rr.round), t.name,
                                           f == rr.per_label_f1.end() ? "" : format_double(f->second),
                                           std::to_string(c == rr.cumulative_per_label.end() ? 0 : c->second)});
                }
            }
            save_table(rounds, dir / "runs" / (stem + ".csv"));
            save_table(labels, dir / "runs" / (stem + "_labels.csv"));
            acc.push_back(metric_series(run, false));
            f1.push_back(metric_series(run, true));
            seed_tables.push_back(cumulative_sampling_frequency(run, scheme));
        }

        // Seeds can end on different grids only if a run failed; truncate to
        // the shortest common prefix.
        std::size_t common = acc.front().labeled_counts.size();
        for (const auto& s : acc) common = std::min(common, s.labeled_counts.size());
        for (auto* series : {&acc, &f1}) {
            for (auto& s : *series) {
                s.labeled_counts.resize(common);
                s.values.resize(common);
            }
        }
        acc_curves.push_back(aggregate_over_seeds(acc, name, "accuracy"));
        f1_curves.push_back(aggregate_over_seeds(f1, name, "macro_f1"));

        SamplingTable mean_table = seed_tables.front();
        mean_table.rounds.resize(common);
        for (auto& row : mean_table.counts) row.assign(common, 0.0);
        for (const auto& st : seed_tables) {
            for (std::size_t t = 0; t < st.tags.size(); ++t) {
                for (std::size_t r = 0; r < common; ++r) {
                    mean_table.counts[t][r] += st.counts[t][r] / static_cast<double>(seed_tables.size());
                }
            }
        }
        sampling.emplace_back(name, std::move(mean_table));

        for (std::size_t r = 0; r < common; ++r) {
            for (const auto& t : scheme.tags()) {
                double total = 0.0;
                std::size_t n = 0;
                for (const auto& run : sr.runs) {
                    if (auto it = run[r].per_label_f1.find(t.name); it != run[r].per_label_f1.end()) {
                        total += it->second;
                        ++n;
                    }
                }
                if (n == 0) continue;
                per_label.rows.push_back({name, std::to_string(acc.front().labeled_counts[r]), t.name,
                                          format_double(total / static_cast<double>(n))});
            }
        }
        const auto& fc = f1_curves.back();
        summary.rows.push_back({name, std::to_string(sr.seeds.size()), std::to_string(fc.labeled_counts.back()),
                                format_double(acc_curves.back().mean.back()), format_double(fc.mean.back()),
                                format_double(area_under_curve(fc, fc.labeled_counts.back()))});
    }

    // Strategies can differ in grid length when a pool runs out; align them.
    std::size_t common = acc_curves.front().labeled_counts.size();
    for (const auto& c : acc_curves) common = std::min(common, c.labeled_counts.size());
    for (auto* curves : {&acc_curves, &f1_curves}) {
        for (auto& c : *curves) {
            c.labeled_counts.resize(common);
            c.mean.resize(common);
            c.std.resize(common);
            c.n.resize(common);
        }
    }
    const auto acc_report = emit_learning_curves(acc_curves, "accuracy", config_hash);
    const auto f1_report = emit_learning_curves(f1_curves, "macro_f1", config_hash);
    save_table(acc_report.table, dir / "learning_curve_accuracy.csv");
    write_text_file(dir / "learning_curve_accuracy.svg", acc_report.svg);
    save_table(f1_report.table, dir / "learning_curve_macro_f1.csv");
    write_text_file(dir / "learning_curve_macro_f1.svg", f1_report.svg);
    save_table(per_label, dir / "per_label_f1.csv");
    save_table(summary, dir / "summary.csv");
    const auto samp = emit_sampling_frequency(sampling, config_hash);
    save_table(samp.table, dir / "sampling_frequency.csv");
    for (const auto& [name, svg] : samp.svgs) write_text_file(dir / ("sampling_frequency_" + name + ".svg"), svg);
}

std::vector<fs::path> render_report(const fs::path& dir) {
    std::vector<fs::path> written;
    if (fs::exists(dir / "datamap.csv")) {
        const auto rows = data_map_from_table(load_table(dir / "datamap.csv"));
        std::vector<DataMapPoint> points;
        for (const auto& r : rows) points.push_back(r.point);
        write_text_file(dir / "datamap.svg", emit_data_map_plot(points));
        written.push_back(dir / "datamap.svg");
    }
    for (const std::string metric : {"accuracy", "macro_f1"}) {
        const auto csv = dir / ("learning_curve_" + metric + ".csv");
        if (!fs::exists(csv)) continue;
        const auto table = load_table(csv);
        const auto curves = learning_curves_from_table(table, metric);
        const auto svg = dir / ("learning_curve_" + metric + ".svg");
        write_text_file(svg, emit_learning_curves(curves, metric, table.config_hash).svg);
        written.push_back(svg);
    }
    if (fs::exists(dir / "sampling_frequency.csv")) {
        const auto table = load_table(dir / "sampling_frequency.csv");
        const auto report = emit_sampling_frequency(sampling_tables_from_table(table), table.config_hash);
        for (const auto& [name, svg] : report.svgs) {
            const auto path = dir / ("sampling_frequency_" + name + ".svg");
            write_text_file(path, svg);
            written.push_back(path);
        }
    }
    if (written.empty()) throw Error(ErrorCode::NotFound, "no report tables found in " + dir.string(), dir.string());
    write_manifest(dir);
    return written;
}

} // namespace dialcart
