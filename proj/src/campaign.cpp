#include "tfm/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "tfm/categories.hpp"
#include "tfm/errors.hpp"
#include "tfm/remote_target.hpp"
#include "tfm/tbp.hpp"

#ifndef TFM_DEFAULT_DATA_DIR
#define TFM_DEFAULT_DATA_DIR "data"
#endif

namespace tfm {

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("TFM_DATA_DIR"); env && *env) return env;
    return TFM_DEFAULT_DATA_DIR;
}

// ---------------------------------------------------------------------------
// Dataset

std::vector<DatasetRecord> parse_dataset(std::string_view text) {
    std::vector<DatasetRecord> out;
    std::set<std::string> ids;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw MalformedLine(where + ": " + e.what());
        }
        if (!doc.is_object()) throw MalformedLine(where + ": expected an object");
        for (const char* field : {"id", "category", "prompt"}) {
            if (!doc.contains(field) || !doc[field].is_string()) {
                throw MalformedLine(where + ": missing string field '" + field + "'");
            }
        }
        DatasetRecord r{doc["id"].get<std::string>(), doc["category"].get<std::string>(),
                        doc["prompt"].get<std::string>(), line_no};
        if (r.id.empty()) throw MalformedLine(where + ": empty id");
        if (trim(r.prompt).empty()) throw MalformedLine(where + ": empty prompt");
        if (!is_known_category(r.category) && r.category != kFixtureCategory) {
            throw UnknownCategory(where + ": '" + r.category + "'");
        }
        if (!ids.insert(r.id).second) throw DuplicateId(where + ": '" + r.id + "'");
        out.push_back(std::move(r));
    }
    if (out.empty()) throw EmptySet("dataset has no records");
    return out;
}

std::vector<DatasetRecord> ingest_dataset(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw DatasetUnreadable(e.what());
    }
    return parse_dataset(text);
}

// ---------------------------------------------------------------------------
// Variants

TransformResult run_variant(std::string_view raw, Variant variant, const VariantContext& ctx,
                            std::string_view prompt_id, std::string_view category) {
    TransformResult out;
    if (variant == Variant::Direct) {
        out.text = std::string(raw);
        out.risk_before = out.risk_after = text_risk(raw, ctx.lexicon);
        return out;
    }
    const TemporalPrompt structured =
        structure_prompt(raw, ctx.backend, ctx.frames, std::string(prompt_id), std::string(category));
    switch (variant) {
        case Variant::Tfm:
        case Variant::WithMiddle: {
            const BoundaryPrompt bp =
                variant == Variant::Tfm ? boundary_extract(structured) : insert_middle(structured);
            out.risk_before = text_risk(render_boundary(bp, ctx.render_template), ctx.lexicon);
            RewrittenPrompt rw = apply_csm(bp, ctx.lexicon, ctx.backend, ctx.budget);
            out.text = render_boundary(rw.boundary, ctx.render_template);
            out.substitutions = std::move(rw.records);
            break;
        }
        case Variant::WoTbp: {
            out.risk_before = text_risk(render_temporal(structured), ctx.lexicon);
            RewrittenTemporal rw = apply_csm_full(structured, ctx.lexicon, ctx.backend, ctx.budget);
            out.text = render_temporal(rw.prompt);
            out.substitutions = std::move(rw.records);
            break;
        }
        case Variant::WoCsm:
            out.text = render_boundary(boundary_extract(structured), ctx.render_template);
            out.risk_before = text_risk(out.text, ctx.lexicon);
            break;
        case Variant::RevsSeq: {
            out.risk_before = text_risk(render_boundary(boundary_extract(structured), ctx.render_template), ctx.lexicon);
            RewrittenTemporal rw = apply_csm_full(structured, ctx.lexicon, ctx.backend, ctx.budget);
            out.text = render_boundary(boundary_extract(rw.prompt), ctx.render_template);
            out.substitutions = std::move(rw.records);
            break;
        }
        case Variant::Direct:
            break;
    }
    out.risk_after = text_risk(out.text, ctx.lexicon);
    return out;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::filesystem::path resolve(const nlohmann::json& doc, const char* key, const std::filesystem::path& base_dir,
                              const char* fallback) {
    if (!doc.contains(key) || doc[key].is_null()) return fallback ? data_dir() / fallback : std::filesystem::path{};
    std::filesystem::path p = doc[key].get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p.lexically_normal();
}

Budget parse_budget(const nlohmann::json& v) {
    if (v.is_null() || (v.is_string() && v.get<std::string>() == "unlimited")) return kUnlimitedBudget;
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("budget must be a count or null");
    return static_cast<std::size_t>(v.get<long long>());
}

}  // namespace

CampaignConfig CampaignConfig::from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("campaign config must be an object");
    CampaignConfig c;
    try {
        c.dataset = resolve(doc, "dataset", base_dir, "reference_dataset.jsonl");
        c.lexicon = resolve(doc, "lexicon", base_dir, "lexicon.json");
        c.scenario = resolve(doc, "scenario", base_dir, "scenario.json");
        c.profiles_file = resolve(doc, "profiles_file", base_dir, "profiles.json");
        c.templates = resolve(doc, "templates", base_dir, "templates.json");
        c.log = resolve(doc, "log", base_dir, nullptr);
        if (c.log.empty()) c.log = (base_dir.empty() ? std::filesystem::path{"."} : base_dir) / "results.jsonl";
        c.profiles = doc.value("profiles", std::vector<std::string>{});
        for (const auto& v : doc.value("variants", std::vector<std::string>{})) c.variants.push_back(parse_variant(v));
        c.frames = doc.value("frames", c.frames);
        if (doc.contains("budget")) c.budget = parse_budget(doc["budget"]);
        c.base_seed = doc.value("base_seed", std::uint64_t{0});
        if (doc.contains("backend")) {
            c.backend = doc["backend"];
            if (c.backend.contains("mode")) c.backend_mode = parse_backend_mode(c.backend["mode"].get<std::string>());
            if (c.backend.contains("cassette")) {
                c.backend["cassette"] = resolve(c.backend, "cassette", base_dir, nullptr).string();
            }
        }
        if (doc.contains("target")) {
            const auto& t = doc["target"];
            c.target.kind = t.value("kind", c.target.kind);
            c.target.endpoint = t.value("endpoint", "");
            c.target.headers = t.value("headers", std::map<std::string, std::string>{});
        }
        if (doc.contains("judge")) c.judge = JudgeConfig::from_json(doc["judge"]);
        c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
        c.attempts = doc.value("attempts", c.attempts);
        c.repetitions = doc.value("repetitions", c.repetitions);
        c.sample_interval = doc.value("sample_interval", c.sample_interval);
        c.generation.duration = doc.value("duration", c.generation.duration);
        c.generation.states_per_second = doc.value("states_per_second", c.generation.states_per_second);
        c.generation.frames_per_state = doc.value("frames_per_state", c.generation.frames_per_state);
        c.render_template = doc.value("render_template", c.render_template);
        const std::string detail = doc.value("record_detail", "full");
        if (detail != "full" && detail != "compact") throw ConfigError("record_detail must be 'full' or 'compact'");
        c.compact_records = detail == "compact";
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

CampaignConfig CampaignConfig::load(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return from_json(doc, path.parent_path());
}

void CampaignConfig::validate() const {
    if (variants.empty()) throw ConfigError("config lists no variants");
    if (profiles.empty()) throw ConfigError("config lists no profiles");
    if (frames < 2) throw ConfigError("frames must be >= 2");
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (attempts < 1) throw ConfigError("attempts must be >= 1");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (!(sample_interval > 0.0)) throw ConfigError("sample_interval must be > 0");
    if (target.kind != "simulator" && target.kind != "remote") {
        throw ConfigError("unknown target kind '" + target.kind + "'");
    }
    if (target.kind == "remote" && target.endpoint.empty()) throw ConfigError("remote target needs an endpoint");
    if (render_template != kDefaultTemplate && render_template != kMarkerTemplate) {
        throw ConfigError("unknown render template '" + render_template + "'");
    }
}

nlohmann::json CampaignConfig::to_json() const {
    std::vector<std::string> variant_ids;
    for (Variant v : variants) variant_ids.push_back(variant_id(v));
    nlohmann::json out{{"dataset", dataset.string()},
                       {"lexicon", lexicon.string()},
                       {"scenario", scenario.string()},
                       {"profiles_file", profiles_file.string()},
                       {"templates", templates.string()},
                       {"profiles", profiles},
                       {"variants", variant_ids},
                       {"frames", frames},
                       {"budget", budget ? nlohmann::json(*budget) : nlohmann::json()},
                       {"base_seed", base_seed},
                       {"backend_mode", to_string(backend_mode)},
                       {"target", {{"kind", target.kind}, {"endpoint", target.endpoint}}},
                       {"judge", judge.to_json()},
                       {"attempts", attempts},
                       {"repetitions", repetitions},
                       {"sample_interval", sample_interval},
                       {"duration", generation.duration},
                       {"states_per_second", generation.states_per_second},
                       {"frames_per_state", generation.frames_per_state},
                       {"render_template", render_template},
                       {"record_detail", compact_records ? "compact" : "full"}};
    return out;
}

std::string CampaignConfig::hash() const { return sha256_hex(to_json().dump()); }

std::uint64_t record_seed(std::uint64_t base_seed, std::string_view prompt_id, std::string_view variant,
                          std::string_view profile, int repetition) {
    std::string key = std::to_string(base_seed) + ":" + std::string(prompt_id) + ":" + std::string(variant) + ":" +
                      std::string(profile);
    if (repetition > 0) key += ":" + std::to_string(repetition);
    return mix64(fnv1a64(key));
}

// ---------------------------------------------------------------------------
// Log

namespace {

struct ScannedLog {
    LoadedLog log;
    std::uintmax_t good_bytes = 0;  // length of the intact prefix
};

ScannedLog scan_log(const std::string& text) {
    ScannedLog out;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out.log.truncated = true;
            break;
        }
        const std::string line = text.substr(pos, nl - pos);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            out.log.truncated = true;
            break;
        }
        if (first) {
            if (doc.value("kind", "") != "provenance") throw IncompleteLog("log does not start with provenance");
            out.log.provenance = doc;
            first = false;
        } else {
            try {
                out.log.records.push_back(AttackRecord::from_json(doc));
            } catch (const std::exception&) {
                out.log.truncated = true;
                break;
            }
        }
        pos = nl + 1;
        out.good_bytes = pos;
    }
    return out;
}

}  // namespace

LoadedLog read_log(const std::filesystem::path& path, bool strict) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw IncompleteLog(e.what());
    }
    ScannedLog scanned = scan_log(text);
    if (scanned.log.provenance.is_null()) throw IncompleteLog(path.string() + " has no provenance line");
    if (strict && scanned.log.truncated) throw IncompleteLog(path.string() + " ends with a partial record");
    return std::move(scanned.log);
}

ResultLog::ResultLog(const std::filesystem::path& path, const nlohmann::json& provenance) : path_(path) {
    namespace fs = std::filesystem;
    bool fresh = true;
    if (fs::exists(path) && fs::file_size(path) > 0) {
        ScannedLog scanned = scan_log(read_file(path));
        if (!scanned.log.provenance.is_null()) {
            if (scanned.log.provenance.value("config_hash", "") != provenance.value("config_hash", "")) {
                throw ConfigError(path.string() + " was written by a different configuration");
            }
            if (scanned.log.truncated) fs::resize_file(path, scanned.good_bytes);
            records_ = std::move(scanned.log.records);
            for (const auto& r : records_) keys_.insert(r.key());
            fresh = false;
        }
    }
    if (fresh) write_file(path, provenance.dump() + "\n");
}

bool ResultLog::contains(const std::string& key) const {
    std::lock_guard lock(mutex_);
    return keys_.count(key) > 0;
}

void ResultLog::append(const AttackRecord& record) {
    std::lock_guard lock(mutex_);
    if (!keys_.insert(record.key()).second) return;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << record.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error("cannot append to " + path_.string());
    records_.push_back(record);
}

nlohmann::json CampaignSummary::to_json() const {
    return {{"planned", planned},   {"written", written},     {"skipped", skipped},
            {"total", total},       {"successes", successes}, {"failures", failures},
            {"failure_rate", failure_rate()}, {"interrupted", interrupted}};
}

nlohmann::json provenance_for(const CampaignConfig& config, const Lexicon& lexicon,
                              const std::optional<ScenarioWorld>& world) {
    nlohmann::json out{{"kind", "provenance"},
                       {"config_hash", config.hash()},
                       {"lexicon", {{"name", lexicon.name()}, {"version", lexicon.version()}}},
                       {"scenario", nullptr}};
    if (world) out["scenario"] = {{"name", world->name()}, {"version", world->version()}};
    return out;
}

// ---------------------------------------------------------------------------
// Running

namespace {

struct Job {
    const DatasetRecord* prompt;
    Variant variant;
};

struct JobResult {
    std::vector<AttackRecord> records;
};

class Runner {
public:
    Runner(const CampaignConfig& config, const Lexicon& lexicon, RewriterBackend& backend,
           std::vector<std::unique_ptr<TargetSystem>>& targets, const ResultLog& log)
        : config_(config), lexicon_(lexicon), backend_(backend), targets_(targets), log_(log) {}

    JobResult run(const Job& job) const {
        JobResult result;
        const std::string vid = variant_id(job.variant);
        struct Pending {
            std::size_t target;
            int rep;
            std::uint64_t seed;
        };
        std::vector<Pending> pending;
        for (std::size_t t = 0; t < targets_.size(); ++t) {
            for (int rep = 0; rep < config_.repetitions; ++rep) {
                const std::uint64_t seed =
                    record_seed(config_.base_seed, job.prompt->id, vid, config_.profiles[t], rep);
                AttackRecord probe;
                probe.prompt_id = job.prompt->id;
                probe.variant = vid;
                probe.profile = config_.profiles[t];
                probe.seed = seed;
                if (!log_.contains(probe.key())) pending.push_back({t, rep, seed});
            }
        }
        if (pending.empty()) return result;

        std::optional<TransformResult> transformed;
        std::string transform_error;
        try {
            const VariantContext ctx{lexicon_, backend_, config_.frames, config_.budget, config_.render_template};
            transformed = run_variant(job.prompt->prompt, job.variant, ctx, job.prompt->id, job.prompt->category);
        } catch (const Error& e) {
            transform_error = e.what();
        }
        nlohmann::json substitutions = nlohmann::json::array();
        if (transformed && !config_.compact_records) {
            for (const auto& s : transformed->substitutions) substitutions.push_back(to_json(s));
        }

        for (const auto& p : pending) {
            AttackRecord r;
            r.prompt_id = job.prompt->id;
            r.category = job.prompt->category;
            r.variant = vid;
            r.profile = config_.profiles[p.target];
            r.seed = p.seed;
            if (!transformed) {
                r.pre_outcome = PreOutcome::NotSubmitted;
                r.error = transform_error;
                r.attempts = 0;
            } else {
                r.submitted = transformed->text;
                r.risk = transformed->risk_after;
                r.substitutions = substitutions;
                attack(r, *targets_[p.target]);
                if (config_.compact_records && r.verdict) r.verdict->sampled.clear();
            }
            result.records.push_back(std::move(r));
        }
        return result;
    }

private:
    void attack(AttackRecord& r, TargetSystem& target) const {
        for (int attempt = 0; attempt < config_.attempts; ++attempt) {
            const std::uint64_t seed = attempt == 0 ? r.seed : mix64(r.seed + static_cast<std::uint64_t>(attempt));
            const GenerationOutcome out = target.submit(r.submitted, seed);
            r.attempts = attempt + 1;
            r.verdict.reset();
            r.error = out.error;
            r.success = false;
            switch (out.kind) {
                case GenerationOutcome::Kind::BlockedPre:
                    r.pre_outcome = PreOutcome::Block;
                    r.gen_outcome.reset();
                    break;
                case GenerationOutcome::Kind::BlockedPost:
                    r.pre_outcome = PreOutcome::Pass;
                    r.gen_outcome = GenOutcome::BlockedPost;
                    break;
                case GenerationOutcome::Kind::Failed:
                    r.pre_outcome = PreOutcome::Pass;
                    r.gen_outcome = GenOutcome::Failed;
                    break;
                case GenerationOutcome::Kind::Video: {
                    r.pre_outcome = PreOutcome::Pass;
                    r.gen_outcome = GenOutcome::Video;
                    auto judge = make_judge(config_.judge, mix64(seed ^ 0x6a09e667f3bcc909ULL));
                    try {
                        const auto samples = sample_frames(*out.video, config_.sample_interval);
                        r.verdict = video_verdict(samples, *judge);
                        r.success = r.verdict->unsafe;
                    } catch (const JudgeUnavailable& e) {
                        r.error = e.what();
                    }
                    break;
                }
            }
            if (r.success) break;
        }
    }

    const CampaignConfig& config_;
    const Lexicon& lexicon_;
    RewriterBackend& backend_;
    std::vector<std::unique_ptr<TargetSystem>>& targets_;
    const ResultLog& log_;
};

}  // namespace

CampaignSummary run_campaign(const CampaignConfig& config, const RunOptions& options, CampaignEnvironment env) {
    config.validate();
    const auto dataset = ingest_dataset(config.dataset);
    const Lexicon lexicon = Lexicon::load(config.lexicon);

    std::optional<ScenarioWorld> world;
    std::vector<std::unique_ptr<TargetSystem>> targets;
    if (config.target.kind == "simulator") {
        world = ScenarioWorld::load(config.scenario);
        const ProfileSet profiles = ProfileSet::load(config.profiles_file);
        for (const auto& name : config.profiles) {
            targets.push_back(std::make_unique<SimulatedTarget>(*world, profiles.find(name), lexicon, config.generation));
        }
    } else {
        if (!env.target_transport) env.target_transport = std::make_shared<HttplibTransport>();
        for (const auto& name : config.profiles) {
            targets.push_back(
                std::make_unique<RemoteTarget>(name, config.target.endpoint, env.target_transport, config.target.headers));
        }
    }

    const BackendMode mode = backend_mode_from_env().value_or(config.backend_mode);
    std::unique_ptr<RewriterBackend> backend;
    std::shared_ptr<Cassette> cassette;
    RemoteConfig remote;
    if (mode == BackendMode::Lexicon) {
        backend = std::make_unique<LexiconBackend>(lexicon, StructureTemplates::load(config.templates));
    } else {
        remote = RemoteConfig::from_json(config.backend);
        remote.mode = mode;
        if (mode == BackendMode::Replay && !std::filesystem::exists(remote.cassette_path)) {
            throw ConfigError("replay mode needs an existing cassette");
        }
        cassette = Cassette::load(remote.cassette_path);
        if (!env.backend_transport) env.backend_transport = std::make_shared<HttplibTransport>();
        backend = std::make_unique<RemoteBackend>(remote, lexicon, StructureTemplates::load(config.templates).instructions,
                                                  env.backend_transport, cassette, env.sleeper);
    }

    ResultLog log(config.log, provenance_for(config, lexicon, world));

    std::vector<Job> jobs;
    for (const auto& p : dataset) {
        for (Variant v : config.variants) jobs.push_back({&p, v});
    }

    CampaignSummary summary;
    summary.planned = dataset.size() * config.variants.size() * config.profiles.size() *
                      static_cast<std::size_t>(config.repetitions);
    const std::size_t before = log.records().size();

    const Runner runner(config, lexicon, *backend, targets, log);
    std::vector<std::optional<JobResult>> slots(jobs.size());
    std::mutex mutex;
    std::condition_variable ready;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr fatal;

    auto worker = [&] {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) break;
            JobResult result;
            try {
                result = runner.run(jobs[i]);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!fatal) fatal = std::current_exception();
                stop = true;
            }
            {
                std::lock_guard lock(mutex);
                slots[i] = std::move(result);
            }
            ready.notify_all();
        }
    };

    {
        std::vector<std::jthread> pool;
        const std::size_t workers = std::min(config.max_in_flight, std::max<std::size_t>(jobs.size(), 1));
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);

        // Commit strictly in job order so the log is identical for any pool size.
        for (std::size_t i = 0; i < jobs.size() && !summary.interrupted; ++i) {
            JobResult result;
            {
                std::unique_lock lock(mutex);
                ready.wait(lock, [&] { return slots[i].has_value() || fatal; });
                if (fatal) break;
                result = std::move(*slots[i]);
                slots[i].reset();
            }
            for (const auto& r : result.records) {
                if (options.stop_after && summary.written >= *options.stop_after) {
                    summary.interrupted = true;
                    break;
                }
                log.append(r);
                ++summary.written;
            }
        }
        stop = true;
    }
    if (fatal) std::rethrow_exception(fatal);

    if (cassette && mode == BackendMode::Record) cassette->save(remote.cassette_path);

    summary.total = log.records().size();
    summary.skipped = std::min(before, summary.planned);
    for (const auto& r : log.records()) {
        if (r.success) ++summary.successes;
        if (r.failed()) ++summary.failures;
    }
    return summary;
}

}  // namespace tfm
