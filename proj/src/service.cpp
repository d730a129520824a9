#include "dialcart/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "dialcart/cartography.hpp"
#include "dialcart/error.hpp"
#include "dialcart/experiment.hpp"
#include "dialcart/reporting.hpp"
#include "dialcart/rng.hpp"

namespace dialcart {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

void append_lines(const fs::path& path, const std::vector<json>& records) {
    std::string block;
    for (const auto& r : records) block += r.dump() + "\n";
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string(), path.string());
    out.write(block.data(), static_cast<std::streamsize>(block.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write to " + path.string() + " failed", path.string());
}

// Reads a JSON-lines log. A torn final line (crash mid-append) is ignored.
std::vector<json> read_lines(const fs::path& path) {
    std::vector<json> out;
    if (!fs::exists(path)) return out;
    const auto text = read_text_file(path);
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        if (end == std::string::npos) break;
        const auto line = std::string_view(text).substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

// Write-then-rename so readers never observe a partial file.
void write_atomic(const fs::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    write_text_file(tmp, bytes);
    fs::rename(tmp, path);
}

json options_to_json(const ProjectOptions& o) {
    return {
        {"strategy", to_string(o.strategy.kind)},
        {"batch_size", o.strategy.batch_size},
        {"candidate_cap", o.strategy.candidate_cap},
        {"ensemble_size", o.strategy.ensemble_size},
        {"seed", o.seed},
        {"hasher",
         {{"min_n", o.hasher.min_n},
          {"max_n", o.hasher.max_n},
          {"dimension", o.hasher.dimension},
          {"salt", o.hasher.salt},
          {"max_tokens", o.hasher.max_tokens}}},
        {"train",
         {{"epochs", o.train.epochs},
          {"batch_size", o.train.batch_size},
          {"learning_rate", o.train.learning_rate},
          {"weight_decay", o.train.weight_decay}}},
    };
}

ProjectOptions options_from_json(const json& j) {
    ProjectOptions o;
    o.strategy.kind = parse_strategy(j.at("strategy").get<std::string>());
    o.strategy.batch_size = j.value("batch_size", o.strategy.batch_size);
    o.strategy.candidate_cap = j.value("candidate_cap", o.strategy.candidate_cap);
    o.strategy.ensemble_size = j.value("ensemble_size", o.strategy.ensemble_size);
    o.seed = j.value("seed", o.seed);
    if (j.contains("hasher")) {
        const auto& h = j["hasher"];
        o.hasher.min_n = h.value("min_n", o.hasher.min_n);
        o.hasher.max_n = h.value("max_n", o.hasher.max_n);
        o.hasher.dimension = h.value("dimension", o.hasher.dimension);
        o.hasher.salt = h.value("salt", o.hasher.salt);
        o.hasher.max_tokens = h.value("max_tokens", o.hasher.max_tokens);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        o.train.epochs = t.value("epochs", o.train.epochs);
        o.train.batch_size = t.value("batch_size", o.train.batch_size);
        o.train.learning_rate = t.value("learning_rate", o.train.learning_rate);
        o.train.weight_decay = t.value("weight_decay", o.train.weight_decay);
    }
    return o;
}

// Most recent tag per sentence.
std::map<std::string, std::string> resolve_labels(const std::vector<LabelEntry>& log) {
    std::map<std::string, std::string> out;
    for (const auto& e : log) out[e.sentence_id] = e.tag;
    return out;
}

struct TicketRecord {
    BatchTicket ticket;
    std::set<std::string> ids;
};

json ticket_record_json(const BatchTicket& t) {
    json ids = json::array();
    for (const auto& item : t.items) ids.push_back(item.sentence_id);
    return {{"ticket_id", t.ticket_id}, {"annotator", t.annotator}, {"sentence_ids", ids},
            {"issued_at", t.issued_at}, {"strategy", t.strategy},   {"model_generation", t.model_generation},
            {"final", t.final}};
}

} // namespace

json to_json(const LabelEntry& e) {
    return {{"sentence_id", e.sentence_id}, {"tag", e.tag}, {"annotator", e.annotator},
            {"timestamp", e.timestamp},     {"ticket_id", e.ticket_id}};
}

LabelEntry label_entry_from_json(const json& j) {
    return {j.at("sentence_id").get<std::string>(), j.at("tag").get<std::string>(),
            j.at("annotator").get<std::string>(), j.value("timestamp", std::string{}),
            j.value("ticket_id", std::string{})};
}

json to_json(const BatchTicket& t) {
    json items = json::array();
    for (const auto& it : t.items) {
        json ctx = json::array();
        for (const auto& [role, text] : it.context) ctx.push_back({{"role", to_string(role)}, {"text", text}});
        items.push_back({{"sentence_id", it.sentence_id}, {"text", it.text}, {"role", to_string(it.role)},
                         {"context", ctx}});
    }
    return {{"ticket_id", t.ticket_id},       {"annotator", t.annotator},
            {"items", items},                 {"issued_at", t.issued_at},
            {"strategy", t.strategy},         {"model_generation", t.model_generation},
            {"final", t.final},               {"size", t.items.size()}};
}

std::uint64_t batch_seed(std::uint64_t project_seed, std::size_t tickets_issued) {
    return derive_seed(project_seed, 0xba7c, tickets_issued);
}

std::vector<Candidate> build_candidates(const SelectionState& state, const StrategyConfig& strategy) {
    std::set<std::string> labeled;
    for (const auto& e : state.log) labeled.insert(e.sentence_id);
    std::optional<FeatureHasher> hasher;
    if (state.model) hasher.emplace(state.model->hasher);

    std::vector<Candidate> out;
    const auto& sentences = state.corpus.sentences();
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto& s = sentences[i];
        if (s.gold || labeled.count(s.id.str())) continue;
        Candidate c;
        c.id = i;
        if (state.model) {
            const auto& params = state.model->params;
            c.features = (*hasher)(s.text);
            c.predictive = predict_proba(params.back(), c.features);
            if (strategy.kind == Strategy::CoreMSE) {
                const std::size_t k = std::min(params.size(), static_cast<std::size_t>(std::max(1, strategy.ensemble_size)));
                for (std::size_t m = params.size() - k; m < params.size(); ++m) {
                    c.ensemble.push_back(predict_proba(params[m], c.features));
                }
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct AnnotationService::Project {
    std::string id;
    fs::path dir;
    ProjectOptions options;
    LabelScheme scheme;
    Corpus corpus;
    std::map<std::string, std::size_t> sentence_index;

    std::vector<LabelEntry> log;
    std::map<std::string, TicketRecord> tickets;
    std::size_t tickets_issued = 0;

    std::optional<Checkpoint> model;
    std::uint64_t generation = 0;
    std::vector<DataMapRow> data_map;
    std::optional<json> metrics;
    bool training = false;
    std::string last_error;

    mutable std::shared_mutex mutex;
    std::jthread job;

    std::size_t pool_size() const {
        std::size_t n = 0;
        for (const auto& s : corpus.sentences()) n += s.gold ? 0 : 1;
        return n;
    }

    void index_sentences() {
        sentence_index.clear();
        const auto& ss = corpus.sentences();
        for (std::size_t i = 0; i < ss.size(); ++i) sentence_index[ss[i].id.str()] = i;
    }

    BatchItem item_for(std::size_t index) const {
        const auto& s = corpus.sentences()[index];
        BatchItem item;
        item.sentence_id = s.id.str();
        item.index = index;
        item.text = s.text;
        item.role = s.role;
        const auto& utts = corpus.sessions()[s.session_pos].utterances;
        const std::size_t first = s.utterance_pos >= 2 ? s.utterance_pos - 2 : 0;
        for (std::size_t u = first; u < s.utterance_pos; ++u) item.context.emplace_back(utts[u].role, utts[u].text);
        return item;
    }
};

AnnotationService::AnnotationService(fs::path data_dir) : data_dir_(std::move(data_dir)) {
    fs::create_directories(data_dir_ / "projects");
    load_existing();
}

AnnotationService::~AnnotationService() {
    std::unique_lock lock(projects_mutex_);
    for (auto& [id, p] : projects_) {
        if (p->job.joinable()) p->job.join();
    }
}

AnnotationService::Project& AnnotationService::find(const std::string& id) const {
    std::shared_lock lock(projects_mutex_);
    const auto it = projects_.find(id);
    if (it == projects_.end()) throw Error(ErrorCode::NotFound, "unknown project '" + id + "'", id);
    return *it->second;
}

std::vector<std::string> AnnotationService::project_ids() const {
    std::shared_lock lock(projects_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, p] : projects_) ids.push_back(id);
    return ids;
}

void AnnotationService::load_existing() {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(data_dir_ / "projects")) {
        if (e.is_directory() && fs::exists(e.path() / "project.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        auto p = std::make_unique<Project>();
        p->dir = dir;
        const auto meta = json::parse(read_text_file(dir / "project.json"));
        p->id = meta.at("id").get<std::string>();
        p->options = options_from_json(meta.at("options"));
        p->scheme = LabelScheme::load(dir / "scheme.json");
        p->corpus = ingest_corpus(dir / "corpus.jsonl", p->scheme);
        p->index_sentences();
        for (const auto& rec : read_lines(dir / "labels.jsonl")) p->log.push_back(label_entry_from_json(rec));
        for (const auto& rec : read_lines(dir / "tickets.jsonl")) {
            TicketRecord tr;
            tr.ticket.ticket_id = rec.at("ticket_id").get<std::string>();
            tr.ticket.annotator = rec.value("annotator", std::string{});
            tr.ticket.issued_at = rec.value("issued_at", std::string{});
            tr.ticket.strategy = rec.value("strategy", std::string{});
            tr.ticket.model_generation = rec.value("model_generation", std::uint64_t{0});
            tr.ticket.final = rec.value("final", false);
            for (const auto& sid : rec.at("sentence_ids")) {
                const auto id = sid.get<std::string>();
                tr.ids.insert(id);
                tr.ticket.items.push_back(p->item_for(p->sentence_index.at(id)));
            }
            p->tickets[tr.ticket.ticket_id] = std::move(tr);
            ++p->tickets_issued;
        }
        std::uint64_t latest = 0;
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (name.starts_with("model-") && name.ends_with(".ckpt")) {
                latest = std::max<std::uint64_t>(latest, std::stoull(name.substr(6, name.size() - 11)));
            }
        }
        if (latest > 0) {
            const auto g = std::to_string(latest);
            p->model = load_checkpoint(dir / ("model-" + g + ".ckpt"));
            p->generation = latest;
            if (fs::exists(dir / ("datamap-" + g + ".csv"))) {
                p->data_map = data_map_from_table(load_table(dir / ("datamap-" + g + ".csv")));
            }
            if (fs::exists(dir / ("metrics-" + g + ".json"))) {
                p->metrics = json::parse(read_text_file(dir / ("metrics-" + g + ".json")));
            }
        }
        projects_[p->id] = std::move(p);
    }
}

std::string AnnotationService::create_project(const CreateProjectRequest& request) {
    const auto scheme = LabelScheme::from_json_text(request.scheme_text);
    const auto corpus = parse_corpus(request.corpus_text, scheme);
    if (request.options.strategy.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");

    std::unique_lock lock(projects_mutex_);
    std::string id;
    for (std::size_t n = projects_.size() + 1;; ++n) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "p%06zu", n);
        id = buf;
        if (!projects_.count(id) && !fs::exists(data_dir_ / "projects" / id)) break;
    }
    auto p = std::make_unique<Project>();
    p->id = id;
    p->dir = data_dir_ / "projects" / id;
    p->options = request.options;
    p->scheme = scheme;
    p->corpus = corpus;
    p->index_sentences();

    fs::create_directories(p->dir);
    scheme.save(p->dir / "scheme.json");
    export_corpus(corpus, p->dir / "corpus.jsonl");
    write_text_file(p->dir / "labels.jsonl", "");
    write_text_file(p->dir / "tickets.jsonl", "");
    const json meta = {{"id", id}, {"created_at", now_iso()}, {"options", options_to_json(request.options)}};
    write_atomic(p->dir / "project.json", meta.dump(2) + "\n");
    projects_[id] = std::move(p);
    return id;
}

BatchTicket AnnotationService::next_batch(const std::string& project, std::size_t size, const std::string& annotator) {
    auto& p = find(project);
    if (size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    if (annotator.empty()) throw Error(ErrorCode::InvalidArgument, "annotator id is required");
    std::unique_lock lock(p.mutex);
    if (p.training) throw Error(ErrorCode::Busy, "project " + project + " is training", project);

    SelectionState state{p.scheme, p.corpus, p.log, p.model};
    StrategyConfig sc = p.options.strategy;
    if (!p.model) sc.kind = Strategy::Random;
    const auto candidates = build_candidates(state, sc);
    if (candidates.empty()) throw Error(ErrorCode::Insufficient, "annotation pool is empty", project);
    sc.batch_size = std::min(size, candidates.size());
    sc.seed = batch_seed(p.options.seed, p.tickets_issued);
    const auto picked = select_batch(candidates, sc);

    BatchTicket t;
    t.ticket_id = "t" + std::to_string(p.tickets_issued + 1);
    t.annotator = annotator;
    t.issued_at = now_iso();
    t.strategy = std::string(to_string(sc.kind));
    t.model_generation = p.generation;
    t.final = size >= candidates.size();
    TicketRecord tr;
    for (auto idx : picked) {
        t.items.push_back(p.item_for(idx));
        tr.ids.insert(t.items.back().sentence_id);
    }
    append_lines(p.dir / "tickets.jsonl", {ticket_record_json(t)});
    tr.ticket = t;
    p.tickets[t.ticket_id] = std::move(tr);
    ++p.tickets_issued;
    return t;
}

std::size_t AnnotationService::submit_labels(const std::string& project, const std::string& ticket_id,
                                             const std::vector<std::pair<std::string, std::string>>& labels,
                                             const std::string& annotator) {
    auto& p = find(project);
    if (annotator.empty()) throw Error(ErrorCode::InvalidArgument, "annotator id is required");
    std::unique_lock lock(p.mutex);
    const auto tit = p.tickets.find(ticket_id);
    if (tit == p.tickets.end()) throw Error(ErrorCode::NotFound, "unknown ticket '" + ticket_id + "'", ticket_id);
    const auto& ticket_ids = tit->second.ids;

    std::map<std::string, std::string> existing;
    for (const auto& e : p.log) {
        if (e.annotator == annotator) existing[e.sentence_id] = e.tag;
    }
    // Validate the whole request before touching the log.
    std::set<std::string> seen;
    std::vector<LabelEntry> fresh;
    const auto stamp = now_iso();
    for (const auto& [sid, tag] : labels) {
        if (!ticket_ids.count(sid)) {
            throw Error(ErrorCode::InvalidArgument, "sentence " + sid + " is not part of ticket " + ticket_id, sid);
        }
        if (!seen.insert(sid).second) {
            throw Error(ErrorCode::InvalidArgument, "sentence " + sid + " appears twice in the request", sid);
        }
        const auto c = p.scheme.require_index(tag);
        const auto& sentence = p.corpus.sentences()[p.sentence_index.at(sid)];
        if (!p.scheme.allows(c, sentence.role)) {
            throw Error(ErrorCode::UnknownTag,
                        "tag '" + tag + "' is not applicable to a " + std::string(to_string(sentence.role)) +
                            " sentence",
                        sid);
        }
        if (auto it = existing.find(sid); it != existing.end()) {
            if (it->second != tag) {
                throw Error(ErrorCode::Conflict,
                            "annotator " + annotator + " already labeled " + sid + " as '" + it->second + "'", sid);
            }
            continue;
        }
        fresh.push_back({sid, tag, annotator, stamp, ticket_id});
    }
    if (!fresh.empty()) {
        std::vector<json> records;
        for (const auto& e : fresh) records.push_back(to_json(e));
        append_lines(p.dir / "labels.jsonl", records);
        p.log.insert(p.log.end(), fresh.begin(), fresh.end());
    }
    return labels.size();
}

std::uint64_t AnnotationService::retrain(const std::string& project) {
    auto& p = find(project);
    std::unique_lock lock(p.mutex);
    if (p.training) throw Error(ErrorCode::Busy, "project " + project + " is already training", project);

    const auto resolved = resolve_labels(p.log);
    std::set<std::string> tags;
    for (const auto& [sid, tag] : resolved) tags.insert(tag);
    if (tags.size() < 2) {
        throw Error(ErrorCode::Insufficient, "retraining needs labels for at least 2 distinct tags", project);
    }
    if (p.job.joinable()) p.job.join();

    // Snapshot inputs; the job runs without holding the lock.
    struct Inputs {
        std::vector<std::string> ids;
        std::vector<std::string> tags;
        std::vector<Role> roles;
        std::vector<FeatureVector> features;
        std::vector<std::size_t> labels;
        std::vector<FeatureVector> heldout_features;
        std::vector<std::size_t> heldout_labels;
    };
    auto in = std::make_shared<Inputs>();
    const FeatureHasher hasher(p.options.hasher);
    for (const auto& s : p.corpus.sentences()) {
        const auto sid = s.id.str();
        if (s.gold) {
            in->heldout_features.push_back(hasher(s.text));
            in->heldout_labels.push_back(p.scheme.require_index(*s.gold));
        } else if (auto it = resolved.find(sid); it != resolved.end()) {
            in->ids.push_back(sid);
            in->tags.push_back(it->second);
            in->roles.push_back(s.role);
            in->features.push_back(hasher(s.text));
            in->labels.push_back(p.scheme.require_index(it->second));
        }
    }
    const std::uint64_t target = p.generation + 1;
    p.training = true;
    p.last_error.clear();

    p.job = std::jthread([&p, in, target] {
        try {
            TrainConfig tc = p.options.train;
            tc.seed = derive_seed(p.options.seed, 0x7e7, target);
            tc.keep_snapshots = p.options.strategy.kind == Strategy::CoreMSE
                                    ? std::clamp(p.options.strategy.ensemble_size, 1, tc.epochs)
                                    : 1;
            const auto run = train(Dataset{in->features, in->labels, p.scheme.size()}, tc, p.scheme.version());

            Checkpoint ck{p.options.hasher, p.scheme.version(), run.snapshots};
            std::vector<DataMapRow> rows;
            const auto points = build_data_map(run.dynamics, in->ids);
            for (std::size_t i = 0; i < points.size(); ++i) {
                rows.push_back({points[i], in->tags[i], std::string(to_string(in->roles[i]))});
            }
            std::optional<json> metrics;
            if (!in->heldout_features.empty()) {
                std::vector<std::size_t> preds;
                for (const auto& f : in->heldout_features) preds.push_back(argmax(predict_proba(run.params, f)));
                const std::span<const std::size_t> pp(preds), gg(in->heldout_labels);
                metrics = json{{"accuracy", accuracy(pp, gg)},
                               {"macro_f1", macro_f1(pp, gg)},
                               {"heldout", preds.size()},
                               {"generation", target}};
            }
            const auto g = std::to_string(target);
            save_table(data_map_table(rows), p.dir / ("datamap-" + g + ".csv"));
            if (metrics) write_atomic(p.dir / ("metrics-" + g + ".json"), metrics->dump(2) + "\n");
            write_atomic(p.dir / ("model-" + g + ".ckpt"), encode_checkpoint(ck));

            std::unique_lock publish(p.mutex);
            p.model = std::move(ck);
            p.generation = target;
            p.data_map = std::move(rows);
            p.metrics = std::move(metrics);
            p.training = false;
        } catch (const std::exception& e) {
            std::unique_lock publish(p.mutex);
            p.last_error = e.what();
            p.training = false;
        }
    });
    return target;
}

void AnnotationService::wait_idle(const std::string& project) {
    auto& p = find(project);
    for (;;) {
        {
            std::shared_lock lock(p.mutex);
            if (!p.training) return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
}

std::vector<LabelEntry> AnnotationService::label_log(const std::string& project) const {
    auto& p = find(project);
    std::shared_lock lock(p.mutex);
    return p.log;
}

SelectionState AnnotationService::selection_state(const std::string& project) const {
    auto& p = find(project);
    std::shared_lock lock(p.mutex);
    return {p.scheme, p.corpus, p.log, p.model};
}

json AnnotationService::status(const std::string& project) const {
    auto& p = find(project);
    std::shared_lock lock(p.mutex);
    const auto resolved = resolve_labels(p.log);
    std::size_t labeled = 0;
    for (const auto& [sid, tag] : resolved) {
        if (!p.corpus.sentences()[p.sentence_index.at(sid)].gold) ++labeled;
    }
    const std::size_t total = p.pool_size();

    json out;
    out["project"] = p.id;
    out["state"] = p.training ? "training" : "idle";
    out["labeled"] = labeled;
    out["pool"] = total - labeled;
    out["total"] = total;
    out["generation"] = p.generation;
    out["strategy"] = to_string(p.options.strategy.kind);
    out["annotations"] = p.log.size();
    out["tickets"] = p.tickets_issued;
    if (!p.last_error.empty()) out["last_error"] = p.last_error;
    if (p.metrics) out["metrics"] = *p.metrics;

    json counts = json::object();
    for (const auto& t : p.scheme.tags()) counts[t.name] = 0;
    for (const auto& [sid, tag] : resolved) counts[tag] = counts[tag].get<std::size_t>() + 1;
    out["per_tag_counts"] = counts;

    json dm = json::array();
    for (const auto& r : p.data_map) {
        dm.push_back({{"id", r.point.id},
                      {"tag", r.tag},
                      {"role", r.role},
                      {"confidence", r.point.confidence},
                      {"variability", r.point.variability},
                      {"correctness", r.point.correctness},
                      {"bucket", to_string(r.point.bucket)}});
    }
    out["data_map"] = dm;

    // Pairwise agreement over doubly annotated sentences.
    std::map<std::string, std::map<std::string, std::string>> by_annotator;
    for (const auto& e : p.log) by_annotator[e.annotator][e.sentence_id] = e.tag;
    json agreement = json::array();
    for (auto a = by_annotator.begin(); a != by_annotator.end(); ++a) {
        for (auto b = std::next(a); b != by_annotator.end(); ++b) {
            std::vector<std::string> la, lb;
            for (const auto& [sid, tag] : a->second) {
                if (auto it = b->second.find(sid); it != b->second.end()) {
                    la.push_back(tag);
                    lb.push_back(it->second);
                }
            }
            if (la.empty()) continue;
            agreement.push_back(
                {{"annotators", {a->first, b->first}}, {"overlap", la.size()}, {"kappa", cohens_kappa(la, lb)}});
        }
    }
    if (!agreement.empty()) out["agreement"] = agreement;
    return out;
}

json AnnotationService::export_project(const std::string& project) const {
    auto& p = find(project);
    std::shared_lock lock(p.mutex);
    json out;
    out["project"] = p.id;
    out["options"] = options_to_json(p.options);
    out["scheme"] = json::parse(p.scheme.to_json_text());
    out["generation"] = p.generation;
    json log = json::array();
    for (const auto& e : p.log) log.push_back(to_json(e));
    out["log"] = log;
    json tickets = json::array();
    for (const auto& [id, tr] : p.tickets) tickets.push_back(ticket_record_json(tr.ticket));
    out["tickets"] = tickets;
    out["data_map_csv"] = write_csv(data_map_table(p.data_map));

    std::map<std::string, std::set<std::string>> tags_by_sentence;
    for (const auto& e : p.log) tags_by_sentence[e.sentence_id].insert(e.tag);
    json conflicts = json::array();
    for (const auto& [sid, tags] : tags_by_sentence) {
        if (tags.size() < 2) continue;
        json entries = json::array();
        for (const auto& e : p.log) {
            if (e.sentence_id == sid) entries.push_back(to_json(e));
        }
        conflicts.push_back({{"sentence_id", sid}, {"entries", entries}});
    }
    out["conflicts"] = conflicts;
    return out;
}

// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Parse:
    case ErrorCode::UnknownTag:
        return 422;
    case ErrorCode::NotFound:
        return 404;
    case ErrorCode::Busy:
    case ErrorCode::Conflict:
    case ErrorCode::Duplicate:
    case ErrorCode::Insufficient:
        return 409;
    case ErrorCode::Numeric:
    case ErrorCode::Io:
        return 500;
    }
    return 500;
}

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                 const std::string& detail) {
    reply(res, status, {{"code", code}, {"message", message}, {"detail", detail}});
}

// Runs a handler and maps failures onto structured JSON errors.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const Error& e) {
        reply_error(res, http_status(e.code()), to_string(e.code()), e.what(), e.detail());
    } catch (const json::exception& e) {
        reply_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what(), "");
    } catch (const std::exception& e) {
        reply_error(res, 500, "internal", e.what(), "");
    }
}

struct BadRequest : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ProjectOptions options_from_request(const json& body) {
    ProjectOptions o;
    o.strategy.kind = parse_strategy(body.value("strategy", std::string("coremse")));
    o.strategy.batch_size = body.value("batch_size", o.strategy.batch_size);
    o.strategy.candidate_cap = body.value("candidate_cap", o.strategy.candidate_cap);
    o.strategy.ensemble_size = body.value("ensemble_size", o.strategy.ensemble_size);
    o.seed = body.value("seed", o.seed);
    o.hasher.dimension = body.value("dimension", o.hasher.dimension);
    o.train.epochs = body.value("epochs", o.train.epochs);
    o.train.learning_rate = body.value("learning_rate", o.train.learning_rate);
    return o;
}

std::string body_text(const json& body, const char* inline_key, const char* path_key) {
    if (body.contains(inline_key)) {
        const auto& v = body[inline_key];
        return v.is_string() ? v.get<std::string>() : v.dump();
    }
    if (body.contains(path_key)) return read_text_file(body[path_key].get<std::string>());
    throw BadRequest(std::string("missing '") + inline_key + "' or '" + path_key + "'");
}

} // namespace

void register_routes(httplib::Server& server, AnnotationService& service) {
    server.Post("/projects", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body;
            try {
                body = json::parse(req.body);
                CreateProjectRequest r;
                r.corpus_text = body_text(body, "corpus", "corpus_path");
                r.scheme_text = body_text(body, "scheme", "scheme_path");
                r.options = options_from_request(body);
                reply(res, 200, {{"id", service.create_project(r)}});
            } catch (const BadRequest& e) {
                reply_error(res, 400, "bad_request", e.what(), "");
            }
        });
    });

    server.Get(R"(/projects/([^/]+)/batch)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.has_param("size") || !req.has_param("annotator")) {
                reply_error(res, 400, "bad_request", "query parameters 'size' and 'annotator' are required", "");
                return;
            }
            std::size_t size = 0;
            try {
                size = std::stoul(req.get_param_value("size"));
            } catch (const std::exception&) {
                reply_error(res, 400, "bad_request", "size must be a non-negative integer",
                            req.get_param_value("size"));
                return;
            }
            const auto ticket = service.next_batch(req.matches[1], size, req.get_param_value("annotator"));
            reply(res, 200, to_json(ticket));
        });
    });

    server.Post(R"(/projects/([^/]+)/labels)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = json::parse(req.body);
            if (!body.contains("ticket_id") || !body.contains("annotator") || !body.contains("labels")) {
                reply_error(res, 400, "bad_request", "body needs ticket_id, annotator and labels", "");
                return;
            }
            std::vector<std::pair<std::string, std::string>> labels;
            for (const auto& l : body.at("labels")) {
                labels.emplace_back(l.at("sentence_id").get<std::string>(), l.at("tag").get<std::string>());
            }
            const auto accepted = service.submit_labels(req.matches[1], body.at("ticket_id").get<std::string>(),
                                                        labels, body.at("annotator").get<std::string>());
            reply(res, 200, {{"accepted", accepted}});
        });
    });

    server.Post(R"(/projects/([^/]+)/retrain)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 202, {{"generation", service.retrain(req.matches[1])}}); });
    });

    server.Get(R"(/projects/([^/]+)/status)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, service.status(req.matches[1])); });
    });

    server.Get(R"(/projects/([^/]+)/export)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, service.export_project(req.matches[1])); });
    });
}

} // namespace dialcart
