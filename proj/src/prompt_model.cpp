#include "tfm/prompt_model.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "tfm/categories.hpp"
#include "tfm/errors.hpp"
#include "tfm/util.hpp"

namespace tfm {

bool is_known_category(std::string_view id) {
    return std::any_of(kSafetyCategories.begin(), kSafetyCategories.end(),
                       [&](const CategoryInfo& c) { return c.id == id; });
}

std::string category_label(std::string_view id) {
    for (const auto& c : kSafetyCategories) {
        if (c.id == id) return std::string(c.label);
    }
    return std::string(id);
}

std::size_t category_rank(std::string_view id) {
    for (std::size_t i = 0; i < kSafetyCategories.size(); ++i) {
        if (kSafetyCategories[i].id == id) return i;
    }
    return kSafetyCategories.size();
}

// ---------------------------------------------------------------------------
// Frames and prompts

FrameSpec::FrameSpec(int index, std::string text) : index_(index), text_(std::move(text)) {
    if (index_ < 1) throw PreconditionError("frame index must be >= 1, got " + std::to_string(index_));
    if (trim(text_).empty()) {
        throw PreconditionError("frame " + std::to_string(index_) + " has an empty description");
    }
}

TemporalPrompt::TemporalPrompt(std::string scene_id, std::string category,
                               std::vector<FrameSpec> frames)
    : scene_id_(std::move(scene_id)), category_(std::move(category)), frames_(std::move(frames)) {
    if (frames_.empty()) throw PreconditionError("temporal prompt needs at least one frame");
    for (std::size_t i = 0; i < frames_.size(); ++i) {
        if (frames_[i].index() != static_cast<int>(i) + 1) {
            throw PreconditionError("frame indices must be contiguous 1..T");
        }
    }
}

const FrameSpec& TemporalPrompt::frame(int index) const {
    if (index < 1 || index > total_frames()) {
        throw PreconditionError("frame " + std::to_string(index) + " out of range");
    }
    return frames_[static_cast<std::size_t>(index - 1)];
}

TemporalPrompt TemporalPrompt::with_texts(const std::vector<std::string>& texts) const {
    if (texts.size() != frames_.size()) throw PreconditionError("text count does not match frame count");
    std::vector<FrameSpec> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) out.emplace_back(frames_[i].index(), texts[i]);
    return TemporalPrompt(scene_id_, category_, std::move(out));
}

BoundaryPrompt::BoundaryPrompt(FrameSpec first, FrameSpec last, int origin_frames,
                               std::optional<FrameSpec> middle)
    : first_(std::move(first)),
      last_(std::move(last)),
      origin_frames_(origin_frames),
      middle_(std::move(middle)) {
    if (origin_frames_ < 2) throw PreconditionError("boundary prompt needs origin T >= 2");
    if (first_.index() != 1) throw PreconditionError("first boundary frame must have index 1");
    if (last_.index() != origin_frames_) throw PreconditionError("last boundary frame must have index T");
    if (middle_ && !(middle_->index() > 1 && middle_->index() < origin_frames_)) {
        throw PreconditionError("middle frame index must lie strictly inside 1..T");
    }
}

std::vector<FrameSpec> BoundaryPrompt::processing_order() const {
    std::vector<FrameSpec> out{first_, last_};
    if (middle_) out.push_back(*middle_);
    return out;
}

std::vector<FrameSpec> BoundaryPrompt::temporal_order() const {
    std::vector<FrameSpec> out{first_};
    if (middle_) out.push_back(*middle_);
    out.push_back(last_);
    return out;
}

BoundaryPrompt BoundaryPrompt::with_texts(const std::vector<std::string>& texts) const {
    const std::size_t expected = middle_ ? 3 : 2;
    if (texts.size() != expected) throw PreconditionError("text count does not match boundary frames");
    std::optional<FrameSpec> middle;
    if (middle_) middle = FrameSpec(middle_->index(), texts[2]);
    return BoundaryPrompt(FrameSpec(first_.index(), texts[0]), FrameSpec(last_.index(), texts[1]),
                          origin_frames_, std::move(middle));
}

// ---------------------------------------------------------------------------
// Tokenization

namespace {

bool is_unit_byte(unsigned char c) {
    // Bytes >= 0x80 belong to UTF-8 sequences and are treated as letters.
    return std::isalnum(c) || c == '\'' || c >= 0x80;
}

// Latin-1 supplement letters U+00C0..U+00FF folded to ASCII.
constexpr std::string_view kLatin1Fold =
    "aaaaaaaceeeeiiiidnooooo*ouuuuyts"
    "aaaaaaaceeeeiiiidnooooo/ouuuuyty";

}  // namespace

std::string normalize_unit(std::string_view unit) {
    std::string out;
    out.reserve(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) {
        const auto c = static_cast<unsigned char>(unit[i]);
        if (c == 0xC3 && i + 1 < unit.size()) {
            const auto next = static_cast<unsigned char>(unit[i + 1]);
            if (next >= 0x80 && next <= 0xBF) {
                const char folded = kLatin1Fold[next - 0x80];
                if (std::isalpha(static_cast<unsigned char>(folded))) {
                    out.push_back(folded);
                    ++i;
                    continue;
                }
            }
        }
        out.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
    return out;
}

std::vector<std::string> TokenSequence::surfaces() const {
    std::vector<std::string> out;
    out.reserve(units.size());
    for (const auto& u : units) out.push_back(u.text);
    return out;
}

TokenSequence tokenize(std::string_view text, int frame) {
    TokenSequence seq;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_unit_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        const std::size_t begin = i;
        while (i < text.size() && is_unit_byte(static_cast<unsigned char>(text[i]))) ++i;
        Unit u;
        u.text = std::string(text.substr(begin, i - begin));
        u.normalized = normalize_unit(u.text);
        u.begin = begin;
        u.end = i;
        u.frame = frame;
        seq.units.push_back(std::move(u));
    }
    return seq;
}

std::string detokenize(const std::vector<std::string>& units) {
    std::string out;
    for (const auto& u : units) {
        if (!out.empty()) out.push_back(' ');
        out += u;
    }
    return out;
}

std::string normalize_term(std::string_view text) {
    std::string out;
    for (const auto& u : tokenize(text).units) {
        if (!out.empty()) out.push_back(' ');
        out += u.normalized;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lexicon

namespace {

std::size_t unit_count(std::string_view normalized) {
    return static_cast<std::size_t>(std::count(normalized.begin(), normalized.end(), ' ')) + 1;
}

std::vector<std::string> split_units(std::string_view normalized) {
    std::vector<std::string> out;
    std::istringstream in{std::string(normalized)};
    std::string u;
    while (in >> u) out.push_back(u);
    return out;
}

bool score_in_range(double s) { return s >= 0.0 && s <= 1.0; }

// Adds implicit entries for candidate terms and reports inconsistencies.
std::vector<std::string> complete_entries(std::map<std::string, LexiconEntry>& entries) {
    std::vector<std::string> problems;
    std::map<std::string, double> candidate_scores;
    for (const auto& [term, entry] : entries) {
        if (!score_in_range(entry.score)) {
            problems.push_back("score of '" + term + "' outside [0,1]");
        }
        for (const auto& cand : entry.candidates) {
            if (trim(cand.term).empty()) {
                problems.push_back("empty candidate for '" + term + "'");
                continue;
            }
            if (!score_in_range(cand.score)) {
                problems.push_back("candidate '" + cand.term + "' of '" + term + "' scored outside [0,1]");
            }
            const std::string key = normalize_term(cand.term);
            if (key.empty()) {
                problems.push_back("candidate '" + cand.term + "' of '" + term + "' has no units");
                continue;
            }
            auto [it, inserted] = candidate_scores.emplace(key, cand.score);
            if (!inserted && it->second != cand.score) {
                problems.push_back("candidate '" + key + "' listed with conflicting scores");
            }
        }
    }
    for (const auto& [key, score] : candidate_scores) {
        auto it = entries.find(key);
        if (it == entries.end()) {
            LexiconEntry implicit;
            implicit.score = score;
            implicit.implicit = true;
            entries.emplace(key, std::move(implicit));
        } else if (it->second.score != score) {
            problems.push_back("candidate '" + key + "' scored differently from its own entry");
        }
    }

    // A candidate unit inside another multi-unit term could form a new phrase
    // with neighbouring text after substitution and raise the risk.
    std::map<std::string, std::set<std::string>> phrases_by_unit;
    for (const auto& [term, entry] : entries) {
        if (unit_count(term) < 2) continue;
        for (const auto& u : split_units(term)) phrases_by_unit[u].insert(term);
    }
    for (const auto& [key, score] : candidate_scores) {
        for (const auto& u : split_units(key)) {
            auto it = phrases_by_unit.find(u);
            if (it == phrases_by_unit.end()) continue;
            for (const auto& phrase : it->second) {
                if (phrase != key) {
                    problems.push_back("candidate '" + key + "' shares unit '" + u + "' with phrase '" +
                                       phrase + "'");
                }
            }
        }
    }
    return problems;
}

struct ParsedLexicon {
    std::string name;
    std::string version;
    std::map<std::string, LexiconEntry> entries;
    std::vector<std::string> problems;
};

ParsedLexicon parse_lexicon(const nlohmann::json& doc) {
    ParsedLexicon out;
    if (!doc.is_object()) {
        out.problems.push_back("lexicon must be a JSON object");
        return out;
    }
    if (doc.contains("name") && doc["name"].is_string()) {
        out.name = doc["name"].get<std::string>();
    } else {
        out.problems.push_back("missing string field 'name'");
    }
    if (doc.contains("version") && doc["version"].is_string()) {
        out.version = doc["version"].get<std::string>();
    } else {
        out.problems.push_back("missing string field 'version'");
    }
    if (!doc.contains("entries") || !doc["entries"].is_object()) {
        out.problems.push_back("missing object field 'entries'");
        return out;
    }
    for (const auto& [raw_term, body] : doc["entries"].items()) {
        const std::string key = normalize_term(raw_term);
        if (key.empty()) {
            out.problems.push_back("entry '" + raw_term + "' has no units");
            continue;
        }
        if (!body.is_object() || !body.contains("score") || !body["score"].is_number()) {
            out.problems.push_back("entry '" + raw_term + "' needs a numeric 'score'");
            continue;
        }
        LexiconEntry entry;
        entry.score = body["score"].get<double>();
        if (body.contains("candidates")) {
            if (!body["candidates"].is_array()) {
                out.problems.push_back("candidates of '" + raw_term + "' must be an array");
            } else {
                for (const auto& c : body["candidates"]) {
                    if (!c.is_object() || !c.contains("term") || !c["term"].is_string() ||
                        !c.contains("score") || !c["score"].is_number()) {
                        out.problems.push_back("malformed candidate for '" + raw_term + "'");
                        continue;
                    }
                    entry.candidates.push_back({c["term"].get<std::string>(), c["score"].get<double>()});
                }
            }
        }
        if (!out.entries.emplace(key, std::move(entry)).second) {
            out.problems.push_back("duplicate entry for normalized term '" + key + "'");
        }
    }
    return out;
}

}  // namespace

Lexicon::Lexicon(std::string name, std::string version, std::map<std::string, LexiconEntry> entries)
    : name_(std::move(name)), version_(std::move(version)) {
    for (auto& [term, entry] : entries) {
        const std::string key = normalize_term(term);
        if (key.empty()) throw InvalidLexicon("entry '" + term + "' has no units");
        if (entry.implicit) continue;
        if (!entries_.emplace(key, std::move(entry)).second) {
            throw InvalidLexicon("duplicate entry for normalized term '" + key + "'");
        }
    }
    const auto problems = complete_entries(entries_);
    if (!problems.empty()) throw InvalidLexicon(problems.front());
    for (const auto& [term, entry] : entries_) {
        max_phrase_units_ = std::max(max_phrase_units_, unit_count(term));
    }
}

Lexicon Lexicon::from_json(const nlohmann::json& doc) {
    auto parsed = parse_lexicon(doc);
    if (!parsed.problems.empty()) throw InvalidLexicon(parsed.problems.front());
    return Lexicon(std::move(parsed.name), std::move(parsed.version), std::move(parsed.entries));
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidLexicon(path.string() + ": " + e.what());
    }
    return from_json(doc);
}

std::vector<std::string> Lexicon::check(const nlohmann::json& doc) {
    auto parsed = parse_lexicon(doc);
    auto more = complete_entries(parsed.entries);
    parsed.problems.insert(parsed.problems.end(), more.begin(), more.end());
    return parsed.problems;
}

nlohmann::json Lexicon::to_json() const {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [term, entry] : entries_) {
        if (entry.implicit) continue;
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : entry.candidates) cands.push_back({{"term", c.term}, {"score", c.score}});
        entries[term] = {{"score", entry.score}, {"candidates", cands}};
    }
    return {{"name", name_}, {"version", version_}, {"entries", entries}};
}

const LexiconEntry* Lexicon::find(std::string_view normalized_term) const {
    auto it = entries_.find(std::string(normalized_term));
    return it == entries_.end() ? nullptr : &it->second;
}

std::optional<double> Lexicon::score(std::string_view term) const {
    const auto* entry = find(normalize_term(term));
    if (!entry) return std::nullopt;
    return entry->score;
}

bool Lexicon::overlaps_phrase(std::string_view term) const {
    const std::string key = normalize_term(term);
    const auto units = split_units(key);
    for (const auto& [other, entry] : entries_) {
        if (other == key || unit_count(other) < 2) continue;
        for (const auto& u : split_units(other)) {
            if (std::find(units.begin(), units.end(), u) != units.end()) return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Matching and risk

std::vector<SensitiveSpan> match_spans(const TokenSequence& tokens, const Lexicon& lexicon) {
    std::vector<SensitiveSpan> spans;
    const auto& units = tokens.units;
    std::size_t i = 0;
    while (i < units.size()) {
        const std::size_t longest = std::min(lexicon.max_phrase_units(), units.size() - i);
        bool matched = false;
        for (std::size_t len = longest; len >= 1; --len) {
            std::string key = units[i].normalized;
            for (std::size_t k = 1; k < len; ++k) key += " " + units[i + k].normalized;
            if (const auto* entry = lexicon.find(key)) {
                spans.push_back({i, i + len, key, entry->score});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return spans;
}

RiskReport risk_score(const TokenSequence& tokens, const Lexicon& lexicon) {
    RiskReport report;
    const auto spans = match_spans(tokens, lexicon);
    std::size_t next_span = 0;
    std::size_t i = 0;
    while (i < tokens.units.size()) {
        if (next_span < spans.size() && spans[next_span].unit_begin == i) {
            const auto& span = spans[next_span++];
            std::vector<std::string> surface;
            for (std::size_t k = span.unit_begin; k < span.unit_end; ++k) {
                surface.push_back(tokens.units[k].text);
            }
            report.per_unit.push_back({detokenize(surface), true, span.score});
            report.total += span.score;
            i = span.unit_end;
        } else {
            report.per_unit.push_back({tokens.units[i].text, false, 0.0});
            ++i;
        }
    }
    return report;
}

double text_risk(std::string_view text, const Lexicon& lexicon) {
    return risk_score(tokenize(text), lexicon).total;
}

// ---------------------------------------------------------------------------
// Frame-marker format

TemporalPrompt parse_temporal(std::string_view text, std::string scene_id, std::string category) {
    static const std::regex marker(R"(^\s*[Ff]rame\s+(\d+)\s*:(.*)$)");
    std::vector<FrameSpec> frames;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::smatch m;
        if (!std::regex_match(line, m, marker)) continue;
        std::string description = trim(m[2].str());
        if (description.empty()) {
            throw MalformedFrameMarker("line " + std::to_string(line_no) + " has no description");
        }
        frames.emplace_back(static_cast<int>(frames.size()) + 1, std::move(description));
    }
    if (frames.empty()) throw EmptyPrompt("no 'Frame <k>:' lines found");
    return TemporalPrompt(std::move(scene_id), std::move(category), std::move(frames));
}

std::string render_temporal(const TemporalPrompt& prompt) {
    std::string out;
    for (const auto& f : prompt.frames()) {
        if (!out.empty()) out.push_back('\n');
        out += "Frame " + std::to_string(f.index()) + ": " + trim(f.text());
    }
    return out;
}

namespace {

std::string clause(std::string_view text) {
    std::string t = trim(text);
    while (!t.empty() && (t.back() == '.' || std::isspace(static_cast<unsigned char>(t.back())))) {
        t.pop_back();
    }
    return t;
}

}  // namespace

std::string render_boundary(const BoundaryPrompt& prompt, std::string_view template_id) {
    if (template_id == kDefaultTemplate) {
        std::string out = "First frame: " + clause(prompt.first().text()) + ".";
        if (prompt.middle()) out += " Middle frame: " + clause(prompt.middle()->text()) + ".";
        out += " Last frame: " + clause(prompt.last().text()) + ".";
        return out;
    }
    if (template_id == kMarkerTemplate) {
        std::string out;
        for (const auto& f : prompt.temporal_order()) {
            if (!out.empty()) out.push_back('\n');
            out += "Frame " + std::to_string(f.index()) + ": " + trim(f.text());
        }
        return out;
    }
    throw UnknownTemplate(std::string(template_id));
}

}  // namespace tfm
