#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tfm/backends.hpp"
#include "tfm/csm.hpp"
#include "tfm/evaluator.hpp"
#include "tfm/target_sim.hpp"

namespace tfm {

/// TFM_DATA_DIR when set, else the data directory of the source tree.
std::filesystem::path data_dir();

// ---------------------------------------------------------------------------
// Dataset

struct DatasetRecord {
    std::string id;
    std::string category;
    std::string prompt;
    std::size_t line = 0;
};

/// JSONL with one {id, category, prompt} object per line. Blank lines are skipped.
std::vector<DatasetRecord> ingest_dataset(const std::filesystem::path& path);
std::vector<DatasetRecord> parse_dataset(std::string_view text);

// ---------------------------------------------------------------------------
// Variant pipelines

struct VariantContext {
    const Lexicon& lexicon;
    RewriterBackend& backend;
    int frames = 5;
    Budget budget = kDefaultBudget;
    std::string render_template = std::string(kDefaultTemplate);
};

struct TransformResult {
    std::string text;
    /// Risk of the same rendering before substitution, and of `text`.
    double risk_before = 0.0;
    double risk_after = 0.0;
    std::vector<SubstitutionRecord> substitutions;
};

TransformResult run_variant(std::string_view raw, Variant variant, const VariantContext& ctx,
                            std::string_view prompt_id = {}, std::string_view category = "fixture");

// ---------------------------------------------------------------------------
// Configuration

struct TargetConfig {
    std::string kind = "simulator";  // simulator | remote
    std::string endpoint;
    std::map<std::string, std::string> headers;
};

struct CampaignConfig {
    std::filesystem::path dataset;
    std::filesystem::path lexicon;
    std::filesystem::path scenario;
    std::filesystem::path profiles_file;
    std::filesystem::path templates;
    std::filesystem::path log;
    std::vector<std::string> profiles;
    std::vector<Variant> variants;
    int frames = 5;
    Budget budget = kDefaultBudget;
    std::uint64_t base_seed = 0;
    BackendMode backend_mode = BackendMode::Lexicon;
    nlohmann::json backend = nlohmann::json::object();
    TargetConfig target;
    JudgeConfig judge;
    std::size_t max_in_flight = 4;
    int attempts = 1;
    int repetitions = 1;
    double sample_interval = 0.5;
    GenerationOptions generation;
    std::string render_template = std::string(kDefaultTemplate);
    /// Compact records drop substitution details and per-sample judgments.
    bool compact_records = false;

    /// Relative paths resolve against `base_dir`; missing file keys default to data_dir().
    static CampaignConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
    static CampaignConfig load(const std::filesystem::path& path);
    void validate() const;

    /// Everything that influences results; excludes the log path and max_in_flight.
    nlohmann::json to_json() const;
    std::string hash() const;
};

/// mix64(fnv1a64("base_seed:prompt_id:variant:profile[:rep]")); rep 0 omits the suffix.
std::uint64_t record_seed(std::uint64_t base_seed, std::string_view prompt_id, std::string_view variant,
                          std::string_view profile, int repetition = 0);

// ---------------------------------------------------------------------------
// Result log

struct LoadedLog {
    nlohmann::json provenance;
    std::vector<AttackRecord> records;
    /// A partial or unparsable final line was found (and ignored).
    bool truncated = false;
};

/// Reads a ResultLog. With `strict`, a damaged final line raises IncompleteLog.
LoadedLog read_log(const std::filesystem::path& path, bool strict = true);

/// Append-only JSONL writer, one record per line, flushed per record.
class ResultLog {
public:
    /// Creates the log, or reopens it for resumption after dropping a partial
    /// last line. A log written under a different configuration is refused.
    ResultLog(const std::filesystem::path& path, const nlohmann::json& provenance);

    bool contains(const std::string& key) const;
    void append(const AttackRecord& record);
    const std::vector<AttackRecord>& records() const { return records_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::vector<AttackRecord> records_;
    std::set<std::string> keys_;
    mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Running

/// Injection points; defaults use real HTTP and real sleeping.
struct CampaignEnvironment {
    std::shared_ptr<Transport> backend_transport;
    std::shared_ptr<Transport> target_transport;
    RemoteBackend::Sleeper sleeper;
};

struct RunOptions {
    /// Stop after committing this many new records (simulated interruption).
    std::optional<std::size_t> stop_after;
};

struct CampaignSummary {
    std::size_t planned = 0;
    std::size_t written = 0;
    std::size_t skipped = 0;
    std::size_t total = 0;
    std::size_t successes = 0;
    std::size_t failures = 0;
    bool interrupted = false;

    double failure_rate() const { return total == 0 ? 0.0 : static_cast<double>(failures) / total; }
    nlohmann::json to_json() const;
};

nlohmann::json provenance_for(const CampaignConfig& config, const Lexicon& lexicon,
                              const std::optional<ScenarioWorld>& world);

CampaignSummary run_campaign(const CampaignConfig& config, const RunOptions& options = {},
                             CampaignEnvironment env = {});

}  // namespace tfm
