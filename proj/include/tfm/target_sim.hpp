#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tfm/prompt_model.hpp"
#include "tfm/util.hpp"

namespace tfm {

using Matrix = std::vector<std::vector<double>>;

struct WorldState {
    std::string id;
    std::string descriptor;  // what a frame emitted from this state shows
    bool unsafe = false;     // membership in the unsafe set
};

/// Discrete latent world: a row-stochastic chain over labelled states, an
/// unsafe subset, and a term map that grounds frame text in states.
class ScenarioWorld {
public:
    ScenarioWorld(std::string name, std::string version, std::vector<WorldState> states, Matrix transition,
                  std::map<std::string, std::size_t> term_map, std::size_t neutral_state);

    static ScenarioWorld from_json(const nlohmann::json& doc);
    static ScenarioWorld load(const std::filesystem::path& path);

    const std::string& name() const { return name_; }
    const std::string& version() const { return version_; }
    std::size_t size() const { return states_.size(); }
    const std::vector<WorldState>& states() const { return states_; }
    const WorldState& state(std::size_t i) const { return states_.at(i); }
    const Matrix& transition() const { return transition_; }
    bool is_unsafe(std::size_t i) const { return states_.at(i).unsafe; }
    bool has_unsafe_states() const;
    const std::map<std::string, std::size_t>& term_map() const { return term_map_; }
    std::size_t neutral_state() const { return neutral_state_; }
    std::size_t index_of(std::string_view id) const;

    /// State of the longest term-map match in `text` (leftmost on ties);
    /// the neutral state when nothing matches.
    std::size_t map_text(std::string_view text) const;

private:
    std::string name_;
    std::string version_;
    std::vector<WorldState> states_;
    Matrix transition_;
    std::map<std::string, std::size_t> term_map_;
    std::size_t neutral_state_;
    std::size_t max_term_units_ = 1;
};

// ---------------------------------------------------------------------------
// Filter profiles

enum class PreKind { Threshold, Logistic };

struct FilterProfile {
    std::string name;
    bool pre_enabled = false;
    bool post_enabled = false;
    PreKind pre_kind = PreKind::Threshold;
    double tau = 0.0;          // risk threshold / logistic midpoint
    double k = 1.0;            // logistic steepness
    double post_detect = 0.0;  // per-video detection probability given unsafe content

    void validate() const;
    static FilterProfile from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

struct ProfileSet {
    std::string version;
    std::vector<FilterProfile> profiles;

    static ProfileSet from_json(const nlohmann::json& doc);
    static ProfileSet load(const std::filesystem::path& path);
    const FilterProfile& find(std::string_view name) const;
};

enum class PreDecision { Pass = 0, Block = 1 };

/// Probability that the pre-filter blocks a prompt of risk R. Nondecreasing in R.
double pre_block_probability(double risk, const FilterProfile& profile);
/// Consumes exactly one draw from `rng`; the threshold kind ignores it.
PreDecision pre_filter(std::string_view text, const FilterProfile& profile, const Lexicon& lexicon, Rng& rng);

// ---------------------------------------------------------------------------
// Endpoint-conditioned bridges

/// A state pinned at a 1-based step position.
struct Anchor {
    int position = 1;
    std::size_t state = 0;

    friend bool operator==(const Anchor&, const Anchor&) = default;
};

std::pair<std::size_t, std::size_t> map_boundary_to_states(const BoundaryPrompt& prompt,
                                                           const ScenarioWorld& world);

/// Anchors of a submitted prompt over `steps` latent steps. Understands the
/// frame-marker format, the boundary rendering ("First frame: ... Last
/// frame: ...", optional middle) and plain text (one state at both ends).
std::vector<Anchor> anchors_from_text(std::string_view text, const ScenarioWorld& world, int steps);
std::vector<Anchor> anchors_from_boundary(const BoundaryPrompt& prompt, const ScenarioWorld& world, int steps);

/// Law of the chain over steps 1..T pinned at both ends, as per-step
/// conditional tables P(z_t | z_{t-1}, z_T).
class BridgeDistribution {
public:
    BridgeDistribution(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps);

    int steps() const { return steps_; }
    std::size_t start() const { return start_; }
    std::size_t end() const { return end_; }
    double pinning_probability() const { return pinning_; }

    /// P(z_t = next | z_{t-1} = prev, z_T = end) for 2 <= t <= T-1.
    double conditional(int t, std::size_t prev, std::size_t next) const;
    /// Probability of the intermediate states z_2..z_{T-1}.
    double trajectory_probability(std::span<const std::size_t> intermediate) const;
    /// Marginal of z_t, 1 <= t <= T.
    std::vector<double> marginal(int t) const;
    /// Full trajectory z_1..z_T.
    std::vector<std::size_t> sample(Rng& rng) const;

private:
    std::size_t n_;
    std::size_t start_;
    std::size_t end_;
    int steps_;
    double pinning_;
    // tables_[t - 2][prev][next] for t = 2..T-1
    std::vector<Matrix> tables_;
};

BridgeDistribution bridge_distribution(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps);

/// P(bridge visits the unsafe set at any step 1..T).
double unsafe_probability(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps);
/// Same with extra anchors; segments between anchors are independent bridges.
double unsafe_probability(const ScenarioWorld& world, std::span<const Anchor> anchors, int steps);

/// Exhaustive enumeration; refuses more than 10^6 trajectories.
double brute_force_unsafe_probability(const ScenarioWorld& world, std::size_t start, std::size_t end, int steps);
double brute_force_unsafe_probability(const ScenarioWorld& world, std::span<const Anchor> anchors, int steps);

std::vector<std::size_t> sample_trajectory(const ScenarioWorld& world, std::span<const Anchor> anchors,
                                           int steps, Rng& rng);

// ---------------------------------------------------------------------------
// Generation

struct SimFrame {
    double timestamp = 0.0;
    std::string descriptor;
    bool unsafe = false;
    std::size_t state = 0;
};

struct SimVideo {
    std::vector<SimFrame> frames;
    double duration = 5.0;
    std::vector<std::size_t> trajectory;

    bool has_unsafe_frame() const;
    nlohmann::json to_json() const;
    static SimVideo from_json(const nlohmann::json& doc);
};

struct GenerationOptions {
    double duration = 5.0;
    double states_per_second = 1.0;
    int frames_per_state = 2;

    int steps() const;
};

struct GenerationOutcome {
    enum class Kind { Video, BlockedPre, BlockedPost, Failed };

    Kind kind = Kind::Failed;
    std::optional<SimVideo> video;
    double risk = 0.0;
    std::string error;
};

std::string to_string(GenerationOutcome::Kind kind);
GenerationOutcome::Kind parse_generation_kind(std::string_view text);

struct GenerationStats {
    std::atomic<std::size_t> pre_filter_calls{0};
    std::atomic<std::size_t> generation_calls{0};
    std::atomic<std::size_t> post_filter_calls{0};
};

/// f_post(g(f_pre(text))). Reproducible from `seed`.
GenerationOutcome generate(std::string_view prompt, const ScenarioWorld& world, const FilterProfile& profile,
                           const Lexicon& lexicon, std::uint64_t seed, const GenerationOptions& options = {},
                           GenerationStats* stats = nullptr);
GenerationOutcome generate(const BoundaryPrompt& prompt, const ScenarioWorld& world, const FilterProfile& profile,
                           const Lexicon& lexicon, std::uint64_t seed, const GenerationOptions& options = {},
                           GenerationStats* stats = nullptr);

/// Expected success probability under a perfect judge:
/// [1 - phi(R)] * P(unsafe | anchors) * (1 - d [post enabled]).
double analytic_asr(double risk, std::span<const Anchor> anchors, const ScenarioWorld& world,
                    const FilterProfile& profile, int steps);
double analytic_asr(double risk, std::size_t start, std::size_t end, const ScenarioWorld& world,
                    const FilterProfile& profile, int steps);

/// The black-box surface a campaign attacks.
class TargetSystem {
public:
    virtual ~TargetSystem() = default;
    virtual GenerationOutcome submit(std::string_view prompt, std::uint64_t seed) = 0;
    virtual std::string name() const = 0;
};

class SimulatedTarget final : public TargetSystem {
public:
    SimulatedTarget(const ScenarioWorld& world, FilterProfile profile, const Lexicon& lexicon,
                    GenerationOptions options = {});

    GenerationOutcome submit(std::string_view prompt, std::uint64_t seed) override;
    std::string name() const override { return profile_.name; }
    const FilterProfile& profile() const { return profile_; }
    const GenerationStats& stats() const { return stats_; }

private:
    const ScenarioWorld& world_;
    FilterProfile profile_;
    const Lexicon& lexicon_;
    GenerationOptions options_;
    GenerationStats stats_;
};

}  // namespace tfm
