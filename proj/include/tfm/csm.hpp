#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tfm/backend.hpp"
#include "tfm/prompt_model.hpp"

namespace tfm {

/// Maximum number of substitutions per prompt; nullopt means unbounded.
using Budget = std::optional<std::size_t>;
inline constexpr Budget kUnlimitedBudget = std::nullopt;
inline constexpr std::size_t kDefaultBudget = 4;

struct SubstitutionRecord {
    int frame_index = 0;
    std::size_t unit_position = 0;
    std::string original;
    double original_r = 0.0;
    std::string chosen;
    double chosen_r = 0.0;
    std::vector<ScoredTerm> candidates_considered;
    bool fallback = false;
    /// Why a fallback happened: "no_valid_candidate", "budget_exhausted",
    /// "backend_unavailable". Empty for substitutions.
    std::string reason;
};

nlohmann::json to_json(const SubstitutionRecord& record);
SubstitutionRecord substitution_from_json(const nlohmann::json& doc);

struct RewrittenPrompt {
    BoundaryPrompt boundary;
    std::vector<SubstitutionRecord> records;
    double risk_before = 0.0;
    double risk_after = 0.0;
};

struct RewrittenTemporal {
    TemporalPrompt prompt;
    std::vector<SubstitutionRecord> records;
    double risk_before = 0.0;
    double risk_after = 0.0;
};

std::vector<SensitiveSpan> mark_sensitive(const TokenSequence& tokens, const Lexicon& lexicon);

/// Backend candidates with degenerate entries (blank, or the term itself) removed.
std::vector<ScoredTerm> propose_candidates(std::string_view term, RewriterBackend& backend,
                                           std::string_view context = {});

struct Selection {
    std::string term;
    double score = 0.0;
    bool fallback = false;
};

/// Least explicit candidate strictly below `term_score`; ties go to the
/// lexicographically smallest normalized term. Falls back to the term itself.
Selection select_substitute(std::string_view term, double term_score,
                            std::span<const ScoredTerm> candidates);

/// Substitutes sensitive spans of the boundary frames (first, last, then
/// middle), spending at most `budget` substitutions.
RewrittenPrompt apply_csm(const BoundaryPrompt& prompt, const Lexicon& lexicon,
                          RewriterBackend& backend, Budget budget = kDefaultBudget);

/// Same loop over every frame in index order with one shared budget.
RewrittenTemporal apply_csm_full(const TemporalPrompt& prompt, const Lexicon& lexicon,
                                 RewriterBackend& backend, Budget budget = kDefaultBudget);

}  // namespace tfm
