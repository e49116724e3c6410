#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tfm/target_sim.hpp"
#include "tfm/util.hpp"

namespace tfm {

// ---------------------------------------------------------------------------
// Frames and judges

struct SampledFrame {
    double timestamp = 0.0;
    SimFrame frame;
};

/// Frames shown at t = interval, 2*interval, ... up to the duration
/// (inclusive). Each sample takes the latest emitted frame at or before t.
std::vector<SampledFrame> sample_frames(const SimVideo& video, double interval);

class Judge {
public:
    virtual ~Judge() = default;
    /// true = unsafe
    virtual bool judge(const SimFrame& frame) = 0;
    virtual std::string id() const = 0;
};

/// Reads the simulator's ground-truth flag.
class GroundTruthJudge final : public Judge {
public:
    bool judge(const SimFrame& frame) override { return frame.unsafe; }
    std::string id() const override { return "ground_truth"; }
};

/// Ground truth flipped with probability epsilon per frame.
class NoisyJudge final : public Judge {
public:
    NoisyJudge(double epsilon, std::uint64_t seed);
    bool judge(const SimFrame& frame) override;
    std::string id() const override;

private:
    double epsilon_;
    Rng rng_;
};

/// Placeholder for a hosted multimodal judge. No client is bundled, so every
/// call reports JudgeUnavailable.
class RemoteJudge final : public Judge {
public:
    explicit RemoteJudge(std::string endpoint) : endpoint_(std::move(endpoint)) {}
    bool judge(const SimFrame& frame) override;
    std::string id() const override { return "remote:" + endpoint_; }

private:
    std::string endpoint_;
};

struct JudgeConfig {
    std::string kind = "ground_truth";  // ground_truth | noisy | remote
    double epsilon = 0.0;
    std::string endpoint;

    static JudgeConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

std::unique_ptr<Judge> make_judge(const JudgeConfig& config, std::uint64_t seed);

struct VideoVerdict {
    std::vector<std::pair<double, bool>> sampled;
    bool unsafe = false;
    std::string judge_id;

    nlohmann::json to_json() const;
    static VideoVerdict from_json(const nlohmann::json& doc);
};

VideoVerdict video_verdict(std::span<const SampledFrame> samples, Judge& judge);

// ---------------------------------------------------------------------------
// Methods

enum class Variant { Direct, WoTbp, WoCsm, WithMiddle, RevsSeq, Tfm };

inline constexpr Variant kAllVariants[] = {Variant::Direct,     Variant::WoTbp,   Variant::WoCsm,
                                           Variant::WithMiddle, Variant::RevsSeq, Variant::Tfm};

/// Stable identifier used in configs and logs ("tfm", "wo_tbp", ...).
std::string variant_id(Variant variant);
/// Accepts identifiers and display labels ("w/o TBP", "TFM", ...).
Variant parse_variant(std::string_view text);

/// Display label of a method id, including the external baselines that only
/// appear in imported logs (rab, daca, veil). Unknown ids are returned as-is.
std::string method_label(std::string_view method);
/// Column order: direct, baselines, ablations, TFM, then unknown methods.
int method_rank(std::string_view method);
/// Profile order of the published tables, then unknown profiles.
int profile_rank(std::string_view profile);

// ---------------------------------------------------------------------------
// Records

enum class PreOutcome { Pass, Block, NotSubmitted };
enum class GenOutcome { Video, BlockedPost, Failed };

std::string to_string(PreOutcome outcome);
std::string to_string(GenOutcome outcome);
PreOutcome parse_pre_outcome(std::string_view text);
GenOutcome parse_gen_outcome(std::string_view text);

struct AttackRecord {
    std::string prompt_id;
    std::string category;
    std::string variant;
    std::string profile;
    std::uint64_t seed = 0;
    PreOutcome pre_outcome = PreOutcome::NotSubmitted;
    std::optional<GenOutcome> gen_outcome;
    std::optional<VideoVerdict> verdict;
    bool success = false;
    std::string submitted;
    double risk = 0.0;
    int attempts = 1;
    std::string error;
    nlohmann::json substitutions = nlohmann::json::array();

    /// (prompt_id, variant, profile, seed)
    std::string key() const;
    /// Transform, generation or judging failure rather than a filter decision.
    bool failed() const;
    /// success holds iff pre passed, a video came back and the verdict is unsafe.
    bool consistent() const;

    nlohmann::json to_json() const;
    static AttackRecord from_json(const nlohmann::json& doc);
};

/// 100 * successes / N.
double compute_asr(std::span<const AttackRecord> records);
double asr_from_counts(std::size_t successes, std::size_t total);

// ---------------------------------------------------------------------------
// Tables

struct AsrColumn {
    std::string profile;
    std::string method;

    std::string label() const { return profile + "|" + method_label(method); }
    friend bool operator==(const AsrColumn&, const AsrColumn&) = default;
};

/// Per-(category, column) ASR in full precision. Categories follow the
/// benchmark listing order; columns are grouped by profile.
struct AsrTable {
    std::vector<std::string> categories;
    std::vector<AsrColumn> columns;
    std::vector<std::vector<std::optional<double>>> cells;  // [category][column]
    std::vector<std::vector<std::size_t>> counts;           // records per cell
    std::vector<double> average;                            // per column

    std::optional<std::size_t> column_index(std::string_view profile, std::string_view method) const;
    std::optional<double> cell(std::string_view category, std::string_view profile, std::string_view method) const;
    double avg(std::string_view profile, std::string_view method) const;
};

AsrTable aggregate(std::span<const AttackRecord> records);

struct TableLayout {
    bool avg_only = false;
};

std::string to_csv(const AsrTable& table, TableLayout layout = {});
std::string to_markdown(const AsrTable& table, TableLayout layout = {});
/// profile,category,variant,value rows for radar-style plots.
std::string to_radar_csv(const AsrTable& table);

}  // namespace tfm
