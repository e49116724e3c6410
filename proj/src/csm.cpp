#include "tfm/csm.hpp"

#include <algorithm>
#include <set>

#include "tfm/errors.hpp"
#include "tfm/util.hpp"

namespace tfm {

nlohmann::json to_json(const SubstitutionRecord& r) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : r.candidates_considered) cands.push_back({{"term", c.term}, {"score", c.score}});
    return {{"frame_index", r.frame_index},
            {"unit_position", r.unit_position},
            {"original", r.original},
            {"original_r", r.original_r},
            {"chosen", r.chosen},
            {"chosen_r", r.chosen_r},
            {"candidates", cands},
            {"fallback", r.fallback},
            {"reason", r.reason}};
}

SubstitutionRecord substitution_from_json(const nlohmann::json& doc) {
    SubstitutionRecord r;
    r.frame_index = doc.at("frame_index").get<int>();
    r.unit_position = doc.at("unit_position").get<std::size_t>();
    r.original = doc.at("original").get<std::string>();
    r.original_r = doc.at("original_r").get<double>();
    r.chosen = doc.at("chosen").get<std::string>();
    r.chosen_r = doc.at("chosen_r").get<double>();
    for (const auto& c : doc.at("candidates")) {
        r.candidates_considered.push_back({c.at("term").get<std::string>(), c.at("score").get<double>()});
    }
    r.fallback = doc.at("fallback").get<bool>();
    r.reason = doc.value("reason", "");
    return r;
}

std::vector<SensitiveSpan> mark_sensitive(const TokenSequence& tokens, const Lexicon& lexicon) {
    return match_spans(tokens, lexicon);
}

std::vector<ScoredTerm> propose_candidates(std::string_view term, RewriterBackend& backend,
                                           std::string_view context) {
    const std::string key = normalize_term(term);
    std::vector<ScoredTerm> out;
    std::set<std::string> seen;
    for (auto& c : backend.candidates(term, context)) {
        c.term = trim(c.term);
        const std::string ckey = normalize_term(c.term);
        if (trim(c.term).empty() || ckey.empty() || ckey == key) continue;
        if (!seen.insert(ckey).second) continue;
        out.push_back(std::move(c));
    }
    return out;
}

Selection select_substitute(std::string_view term, double term_score,
                            std::span<const ScoredTerm> candidates) {
    const ScoredTerm* best = nullptr;
    std::string best_key;
    for (const auto& c : candidates) {
        if (!(c.score < term_score)) continue;
        std::string key = normalize_term(c.term);
        if (!best || c.score < best->score || (c.score == best->score && key < best_key)) {
            best = &c;
            best_key = std::move(key);
        }
    }
    if (!best) return {std::string(term), term_score, true};
    return {best->term, best->score, false};
}

namespace {

struct FrameRewrite {
    std::string text;
    std::vector<SubstitutionRecord> records;
};

class Rewriter {
public:
    Rewriter(const Lexicon& lexicon, RewriterBackend& backend, Budget budget)
        : lexicon_(lexicon), backend_(backend), remaining_(budget) {}

    FrameRewrite rewrite(const FrameSpec& frame) {
        const std::string& text = frame.text();
        const TokenSequence tokens = tokenize(text, frame.index());
        FrameRewrite out;
        std::size_t cursor = 0;
        for (const auto& span : mark_sensitive(tokens, lexicon_)) {
            const std::size_t begin = tokens.units[span.unit_begin].begin;
            const std::size_t end = tokens.units[span.unit_end - 1].end;
            const std::string surface = text.substr(begin, end - begin);
            out.text += text.substr(cursor, begin - cursor);
            cursor = end;

            SubstitutionRecord rec;
            rec.frame_index = frame.index();
            rec.unit_position = span.unit_begin;
            rec.original = surface;
            rec.original_r = span.score;
            rec.chosen = surface;
            rec.chosen_r = span.score;
            rec.fallback = true;

            if (remaining_ && *remaining_ == 0) {
                rec.reason = "budget_exhausted";
            } else {
                try {
                    ++attempted_;
                    rec.candidates_considered = propose_candidates(surface, backend_, text);
                    ++answered_;
                    const Selection pick = select_substitute(surface, span.score, rec.candidates_considered);
                    if (pick.fallback) {
                        rec.reason = "no_valid_candidate";
                    } else {
                        rec.chosen = pick.term;
                        rec.chosen_r = pick.score;
                        rec.fallback = false;
                        if (remaining_) --*remaining_;
                    }
                } catch (const BackendUnavailable& e) {
                    rec.reason = "backend_unavailable";
                    last_backend_error_ = e.what();
                }
            }
            out.text += rec.chosen;
            out.records.push_back(std::move(rec));
        }
        out.text += text.substr(cursor);
        return out;
    }

    /// BackendUnavailable surfaces only when no candidate query got through.
    void check_backend() const {
        if (attempted_ > 0 && answered_ == 0) throw BackendUnavailable(last_backend_error_);
    }

private:
    const Lexicon& lexicon_;
    RewriterBackend& backend_;
    Budget remaining_;
    std::size_t attempted_ = 0;
    std::size_t answered_ = 0;
    std::string last_backend_error_;
};

double frames_risk(const std::vector<FrameSpec>& frames, const Lexicon& lexicon) {
    double total = 0.0;
    for (const auto& f : frames) total += text_risk(f.text(), lexicon);
    return total;
}

}  // namespace

RewrittenPrompt apply_csm(const BoundaryPrompt& prompt, const Lexicon& lexicon,
                          RewriterBackend& backend, Budget budget) {
    Rewriter rewriter(lexicon, backend, budget);
    std::vector<std::string> texts;
    std::vector<SubstitutionRecord> records;
    for (const auto& frame : prompt.processing_order()) {
        auto fr = rewriter.rewrite(frame);
        texts.push_back(std::move(fr.text));
        records.insert(records.end(), fr.records.begin(), fr.records.end());
    }
    rewriter.check_backend();
    BoundaryPrompt rewritten = prompt.with_texts(texts);
    const double before = frames_risk(prompt.processing_order(), lexicon);
    const double after = frames_risk(rewritten.processing_order(), lexicon);
    return {std::move(rewritten), std::move(records), before, after};
}

RewrittenTemporal apply_csm_full(const TemporalPrompt& prompt, const Lexicon& lexicon,
                                 RewriterBackend& backend, Budget budget) {
    Rewriter rewriter(lexicon, backend, budget);
    std::vector<std::string> texts;
    std::vector<SubstitutionRecord> records;
    for (const auto& frame : prompt.frames()) {
        auto fr = rewriter.rewrite(frame);
        texts.push_back(std::move(fr.text));
        records.insert(records.end(), fr.records.begin(), fr.records.end());
    }
    rewriter.check_backend();
    TemporalPrompt rewritten = prompt.with_texts(texts);
    const double before = frames_risk(prompt.frames(), lexicon);
    const double after = frames_risk(rewritten.frames(), lexicon);
    return {std::move(rewritten), std::move(records), before, after};
}

}  // namespace tfm
