#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialcart/acquisition.hpp"
#include "dialcart/classifier.hpp"
#include "dialcart/corpus.hpp"

namespace httplib {
class Server;
}

namespace dialcart {

/// Environment variable naming the persistence root.
inline constexpr const char* kDataDirEnv = "DIALCART_DATA_DIR";

struct LabelEntry {
    std::string sentence_id;
    std::string tag;
    std::string annotator;
    std::string timestamp;
    std::string ticket_id;

    bool operator==(const LabelEntry&) const = default;
};

struct BatchItem {
    std::string sentence_id;
    std::size_t index = 0;  // position in Corpus::sentences()
    std::string text;
    Role role = Role::Tutor;
    /// Up to two preceding utterances of the same session, oldest first.
    std::vector<std::pair<Role, std::string>> context;
};

struct BatchTicket {
    std::string ticket_id;
    std::string annotator;
    std::vector<BatchItem> items;
    std::string issued_at;
    std::string strategy;
    std::uint64_t model_generation = 0;
    bool final = false;
};

struct ProjectOptions {
    StrategyConfig strategy;
    HasherConfig hasher;
    TrainConfig train;
    std::uint64_t seed = 0;
};

struct CreateProjectRequest {
    std::string corpus_text;   // line-delimited corpus
    std::string scheme_text;   // scheme JSON
    ProjectOptions options;
};

/// Everything an offline selection needs to reproduce a live batch.
struct SelectionState {
    LabelScheme scheme;
    Corpus corpus;
    std::vector<LabelEntry> log;
    std::optional<Checkpoint> model;
};

/// Candidates for the next batch: pool sentences (no gold label) that no
/// annotator has labeled yet, in corpus order, scored by `model` when given.
std::vector<Candidate> build_candidates(const SelectionState& state, const StrategyConfig& strategy);

/// Seed used for the n-th batch a project issues.
std::uint64_t batch_seed(std::uint64_t project_seed, std::size_t tickets_issued);

/// Human-in-the-loop annotation projects persisted under a data directory as
/// append-only logs plus model checkpoints. Thread-safe: reads run
/// concurrently, mutations of one project are serialized, retraining runs in
/// the background against a snapshot of the log.
class AnnotationService {
public:
    explicit AnnotationService(std::filesystem::path data_dir);
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    std::string create_project(const CreateProjectRequest& request);
    BatchTicket next_batch(const std::string& project, std::size_t size, const std::string& annotator);
    std::size_t submit_labels(const std::string& project, const std::string& ticket_id,
                              const std::vector<std::pair<std::string, std::string>>& labels,
                              const std::string& annotator);
    /// Starts a background training job; returns the generation it will
    /// publish.
    std::uint64_t retrain(const std::string& project);
    /// Blocks until no training job is running for the project.
    void wait_idle(const std::string& project);

    nlohmann::json status(const std::string& project) const;
    nlohmann::json export_project(const std::string& project) const;

    std::vector<LabelEntry> label_log(const std::string& project) const;
    SelectionState selection_state(const std::string& project) const;
    std::vector<std::string> project_ids() const;

    const std::filesystem::path& data_dir() const { return data_dir_; }

private:
    struct Project;
    Project& find(const std::string& id) const;
    void load_existing();

    std::filesystem::path data_dir_;
    mutable std::shared_mutex projects_mutex_;
    std::map<std::string, std::unique_ptr<Project>> projects_;
};

nlohmann::json to_json(const BatchTicket& ticket);
nlohmann::json to_json(const LabelEntry& entry);
LabelEntry label_entry_from_json(const nlohmann::json& j);

/// Installs the HTTP routes on `server`.
void register_routes(httplib::Server& server, AnnotationService& service);

} // namespace dialcart
