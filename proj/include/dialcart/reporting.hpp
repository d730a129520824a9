#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dialcart/cartography.hpp"
#include "dialcart/experiment.hpp"

namespace dialcart {

/// CSV table. When config_hash is set it is written as a leading
/// "# config_hash=<hex>" line ahead of the header.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::string config_hash;

    bool operator==(const Table&) const = default;
};

std::string write_csv(const Table& table);
Table parse_csv(std::string_view text);
void save_table(const Table& table, const std::filesystem::path& path);
Table load_table(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

std::string sha256_hex(std::string_view bytes);

// ---------------------------------------------------------------------------
// Data maps

struct DataMapRow {
    DataMapPoint point;
    std::string tag;
    std::string role;
};

Table data_map_table(std::span<const DataMapRow> rows, const std::string& config_hash = {});
std::vector<DataMapRow> data_map_from_table(const Table& table);
Table bucket_distribution_table(std::span<const BucketRow> rows, const std::string& config_hash = {});

/// Scatter: variability on x over [0, 0.5], confidence on y over [0, 1],
/// one colour class per bucket.
std::string emit_data_map_plot(std::span<const DataMapPoint> points);

// ---------------------------------------------------------------------------
// Learning curves

struct CurveReport {
    Table table;
    std::string svg;
};

/// Columns: strategy, labeled_count, mean, std.
CurveReport emit_learning_curves(std::span<const LearningCurve> curves, const std::string& metric,
                                 const std::string& config_hash = {});
std::vector<LearningCurve> learning_curves_from_table(const Table& table, const std::string& metric);

// ---------------------------------------------------------------------------
// Sampling frequency

struct SamplingReport {
    Table table;
    /// One stacked-bar chart per strategy, in input order.
    std::vector<std::pair<std::string, std::string>> svgs;
};

/// Columns: strategy, round, tag, cumulative. Rejects non-monotone rows.
SamplingReport emit_sampling_frequency(const std::vector<std::pair<std::string, SamplingTable>>& tables,
                                       const std::string& config_hash = {});
std::vector<std::pair<std::string, SamplingTable>> sampling_tables_from_table(const Table& table);

// ---------------------------------------------------------------------------
// Results directory

struct ManifestEntry {
    std::string path;  // relative to the directory
    std::size_t bytes = 0;
    std::string sha256;
};

/// Writes manifest.json listing every regular file below `dir` except the
/// manifest itself.
std::vector<ManifestEntry> write_manifest(const std::filesystem::path& dir);

/// Per (strategy, seed) round tables plus aggregated curve, per-label F1
/// and sampling-frequency tables and their plots.
void write_experiment_results(const std::filesystem::path& dir, const ExperimentResults& results,
                              const LabelScheme& scheme, const std::string& config_hash);

/// Regenerates every plot from the CSV tables found in `dir`.
std::vector<std::filesystem::path> render_report(const std::filesystem::path& dir);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace dialcart
