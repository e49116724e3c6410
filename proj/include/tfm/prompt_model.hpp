#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tfm {

/// One textual frame description. Index is 1-based.
class FrameSpec {
public:
    FrameSpec(int index, std::string text);

    int index() const { return index_; }
    const std::string& text() const { return text_; }

    friend bool operator==(const FrameSpec&, const FrameSpec&) = default;

private:
    int index_;
    std::string text_;
};

/// A prompt broken into T ordered frame descriptions, indices exactly 1..T.
class TemporalPrompt {
public:
    TemporalPrompt(std::string scene_id, std::string category, std::vector<FrameSpec> frames);

    const std::string& scene_id() const { return scene_id_; }
    const std::string& category() const { return category_; }
    const std::vector<FrameSpec>& frames() const { return frames_; }
    int total_frames() const { return static_cast<int>(frames_.size()); }
    /// 1-based access.
    const FrameSpec& frame(int index) const;

    /// Same metadata, new frame texts (one per frame, in order).
    TemporalPrompt with_texts(const std::vector<std::string>& texts) const;

    friend bool operator==(const TemporalPrompt&, const TemporalPrompt&) = default;

private:
    std::string scene_id_;
    std::string category_;
    std::vector<FrameSpec> frames_;
};

/// Start and end frame of a temporal prompt, plus an optional middle anchor.
class BoundaryPrompt {
public:
    BoundaryPrompt(FrameSpec first, FrameSpec last, int origin_frames,
                   std::optional<FrameSpec> middle = std::nullopt);

    const FrameSpec& first() const { return first_; }
    const FrameSpec& last() const { return last_; }
    const std::optional<FrameSpec>& middle() const { return middle_; }
    int origin_frames() const { return origin_frames_; }

    /// Frames in rewrite order: first, last, then middle when present.
    std::vector<FrameSpec> processing_order() const;
    /// Frames in temporal order: first, middle (if any), last.
    std::vector<FrameSpec> temporal_order() const;

    /// Replace texts, given in processing order.
    BoundaryPrompt with_texts(const std::vector<std::string>& texts) const;

    friend bool operator==(const BoundaryPrompt&, const BoundaryPrompt&) = default;

private:
    FrameSpec first_;
    FrameSpec last_;
    int origin_frames_;
    std::optional<FrameSpec> middle_;
};

struct Unit {
    std::string text;        // surface form
    std::string normalized;  // lowercase, ASCII-folded
    std::size_t begin = 0;   // byte offsets into the source text
    std::size_t end = 0;
    int frame = 1;
};

struct TokenSequence {
    std::vector<Unit> units;

    std::size_t size() const { return units.size(); }
    bool empty() const { return units.empty(); }
    std::vector<std::string> surfaces() const;
};

/// Lowercase plus Latin-1 ASCII folding of a single unit.
std::string normalize_unit(std::string_view unit);
/// Units are maximal runs of letters, digits and apostrophes.
TokenSequence tokenize(std::string_view text, int frame = 1);
std::string detokenize(const std::vector<std::string>& units);
/// Canonical lexicon key: normalized units joined by single spaces.
std::string normalize_term(std::string_view text);

struct ScoredTerm {
    std::string term;
    double score = 0.0;

    friend bool operator==(const ScoredTerm&, const ScoredTerm&) = default;
};

struct LexiconEntry {
    double score = 0.0;
    std::vector<ScoredTerm> candidates;
    /// Added from another entry's candidate list rather than listed itself.
    bool implicit = false;
};

/// Sensitive-term lexicon: explicitness scores in [0, 1] and covert
/// alternatives per term. Candidate terms are scored too, so a rewritten
/// prompt is measured with the same yardstick as the original.
class Lexicon {
public:
    Lexicon(std::string name, std::string version, std::map<std::string, LexiconEntry> entries);

    static Lexicon from_json(const nlohmann::json& doc);
    static Lexicon load(const std::filesystem::path& path);
    /// Every problem found, empty when the document is a valid lexicon.
    static std::vector<std::string> check(const nlohmann::json& doc);

    nlohmann::json to_json() const;

    const std::string& name() const { return name_; }
    const std::string& version() const { return version_; }
    const std::map<std::string, LexiconEntry>& entries() const { return entries_; }
    std::size_t max_phrase_units() const { return max_phrase_units_; }

    /// Lookup by normalized key.
    const LexiconEntry* find(std::string_view normalized_term) const;
    /// Score of an arbitrary surface term, if it is scored.
    std::optional<double> score(std::string_view term) const;
    /// True when any unit of `term` is a component of a multi-unit scored term
    /// other than `term` itself.
    bool overlaps_phrase(std::string_view term) const;

private:
    std::string name_;
    std::string version_;
    std::map<std::string, LexiconEntry> entries_;
    std::size_t max_phrase_units_ = 1;
};

/// A run of units matched against the lexicon (longest-first, left-to-right,
/// non-overlapping). [unit_begin, unit_end) indexes TokenSequence::units.
struct SensitiveSpan {
    std::size_t unit_begin = 0;
    std::size_t unit_end = 0;
    std::string term;
    double score = 0.0;

    friend bool operator==(const SensitiveSpan&, const SensitiveSpan&) = default;
};

std::vector<SensitiveSpan> match_spans(const TokenSequence& tokens, const Lexicon& lexicon);

/// Risk per segment. A matched phrase is one segment, so `per_unit` holds one
/// item per non-sensitive unit and one per sensitive span.
struct RiskReport {
    struct Item {
        std::string unit;
        bool marked = false;
        double score = 0.0;
    };
    std::vector<Item> per_unit;
    double total = 0.0;
};

RiskReport risk_score(const TokenSequence& tokens, const Lexicon& lexicon);
double text_risk(std::string_view text, const Lexicon& lexicon);

/// Parses "Frame <k>: <description>" lines; other lines are ignored and
/// indices are renumbered 1..T in order of appearance.
TemporalPrompt parse_temporal(std::string_view text, std::string scene_id = {},
                              std::string category = "fixture");

std::string render_temporal(const TemporalPrompt& prompt);

inline constexpr std::string_view kDefaultTemplate = "default";
inline constexpr std::string_view kMarkerTemplate = "frame-markers";

std::string render_boundary(const BoundaryPrompt& prompt,
                            std::string_view template_id = kDefaultTemplate);

}  // namespace tfm
