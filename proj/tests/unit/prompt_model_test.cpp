#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tfm/errors.hpp"
#include "tfm/prompt_model.hpp"

namespace tfm {
namespace {

Lexicon small_lexicon() {
    return Lexicon::from_json(nlohmann::json::parse(R"({
        "name": "small", "version": "1",
        "entries": {
            "detonate": {"score": 0.9},
            "smoke": {"score": 0.3},
            "widget overload": {"score": 0.8}
        }
    })"));
}

TEST(Tokenize, SplitsOnPunctuation) {
    auto tokens = tokenize("A calm, empty street.");
    EXPECT_EQ(tokens.surfaces(), (std::vector<std::string>{"A", "calm", "empty", "street"}));
}

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, KeepsByteOffsetsAndFrame) {
    auto tokens = tokenize("red  widget", 3);
    ASSERT_EQ(tokens.size(), 2u);
    EXPECT_EQ(tokens.units[1].begin, 5u);
    EXPECT_EQ(tokens.units[1].end, 11u);
    EXPECT_EQ(tokens.units[1].frame, 3);
}

TEST(Tokenize, NormalizesCaseAndAccents) {
    EXPECT_EQ(normalize_unit("D\xC3\xA9tonate"), "detonate");
    EXPECT_EQ(normalize_term("  Widget   OVERLOAD "), "widget overload");
}

TEST(Tokenize, PhraseIsThreeUnitsThenOneSpan) {
    auto lex = small_lexicon();
    auto tokens = tokenize("red widget overload");
    EXPECT_EQ(tokens.surfaces(), (std::vector<std::string>{"red", "widget", "overload"}));
    auto spans = match_spans(tokens, lex);
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(spans[0].unit_begin, 1u);
    EXPECT_EQ(spans[0].unit_end, 3u);
    EXPECT_EQ(spans[0].term, "widget overload");
}

TEST(Tokenize, RoundTripIsIdempotent) {
    Rng rng(7);
    auto lex = testing::random_lexicon(rng);
    for (int i = 0; i < 200; ++i) {
        auto text = testing::random_text(rng, lex, 0, 12);
        auto once = tokenize(text).surfaces();
        auto twice = tokenize(detokenize(once)).surfaces();
        EXPECT_EQ(once, twice);
    }
}

TEST(RiskScore, ZeroWithoutSensitiveTerms) {
    auto report = risk_score(tokenize("calm street"), small_lexicon());
    EXPECT_EQ(report.total, 0.0);
    for (const auto& item : report.per_unit) EXPECT_FALSE(item.marked);
}

TEST(RiskScore, SumsScores) {
    EXPECT_NEAR(text_risk("detonate near smoke", small_lexicon()), 1.2, 1e-12);
}

TEST(RiskScore, CountsEachOccurrence) {
    EXPECT_NEAR(text_risk("detonate detonate", small_lexicon()), 1.8, 1e-12);
}

TEST(RiskScore, PhraseCountsOnce) {
    auto report = risk_score(tokenize("red widget overload"), small_lexicon());
    EXPECT_NEAR(report.total, 0.8, 1e-12);
    ASSERT_EQ(report.per_unit.size(), 2u);
    EXPECT_TRUE(report.per_unit[1].marked);
}

TEST(RiskScore, AdditiveAndMarkerConsistent) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        auto lex = testing::random_lexicon(rng);
        auto base = testing::random_text(rng, lex, 1, 8);
        double expected = text_risk(base, lex.lexicon);
        std::string text = base;
        for (int k = 0; k < 3; ++k) {
            const auto& term = lex.sensitive_terms[rng.next_u64() % lex.sensitive_terms.size()];
            text += " " + lex.filler[0] + " " + term;
            expected += *lex.lexicon.score(term);
        }
        EXPECT_NEAR(text_risk(text, lex.lexicon), expected, 1e-9) << text;

        auto report = risk_score(tokenize(base), lex.lexicon);
        bool any = std::any_of(report.per_unit.begin(), report.per_unit.end(),
                               [](const auto& item) { return item.marked; });
        EXPECT_EQ(report.total == 0.0, !any);
    }
}

TEST(RiskScore, FramePermutationKeepsTotal) {
    Rng rng(5);
    auto lex = testing::random_lexicon(rng);
    for (int trial = 0; trial < 50; ++trial) {
        auto prompt = testing::random_temporal(rng, lex, 4);
        double forward = 0.0;
        double backward = 0.0;
        for (const auto& f : prompt.frames()) forward += text_risk(f.text(), lex.lexicon);
        for (auto it = prompt.frames().rbegin(); it != prompt.frames().rend(); ++it)
            backward += text_risk(it->text(), lex.lexicon);
        EXPECT_NEAR(forward, backward, 1e-12);
    }
}

TEST(ParseTemporal, TwoFrames) {
    auto p = parse_temporal("Frame 1: a park.\nFrame 2: the same park at night.");
    ASSERT_EQ(p.total_frames(), 2);
    EXPECT_EQ(p.frame(1).text(), "a park.");
    EXPECT_EQ(p.frame(2).text(), "the same park at night.");
}

TEST(ParseTemporal, Renumbers) {
    auto p = parse_temporal("Frame 3: a\nFrame 9: b");
    ASSERT_EQ(p.total_frames(), 2);
    EXPECT_EQ(p.frame(1).index(), 1);
    EXPECT_EQ(p.frame(2).index(), 2);
    EXPECT_EQ(p.frame(2).text(), "b");
}

TEST(ParseTemporal, NoMarkers) { EXPECT_THROW(parse_temporal("no markers here"), EmptyPrompt); }

TEST(ParseTemporal, RenderParsesBack) {
    auto p = parse_temporal("Frame 1: x\nFrame 2: y\nFrame 3: z");
    EXPECT_EQ(parse_temporal(render_temporal(p)), p);
}

TEST(RenderBoundary, TwoClauses) {
    BoundaryPrompt bp(FrameSpec(1, "a sealed box"), FrameSpec(2, "an open box"), 2);
    EXPECT_EQ(render_boundary(bp), "First frame: a sealed box. Last frame: an open box.");
}

TEST(RenderBoundary, ThreeClauses) {
    BoundaryPrompt bp(FrameSpec(1, "a sealed box"), FrameSpec(5, "an open box"), 5,
                      FrameSpec(3, "a hand on the lid"));
    EXPECT_EQ(render_boundary(bp),
              "First frame: a sealed box. Middle frame: a hand on the lid. Last frame: an open box.");
}

TEST(RenderBoundary, UnknownTemplate) {
    BoundaryPrompt bp(FrameSpec(1, "a"), FrameSpec(2, "b"), 2);
    EXPECT_THROW(render_boundary(bp, "nope"), UnknownTemplate);
}

TEST(RenderBoundary, InjectiveOverFixtureCorpus) {
    auto records = ingest_dataset(testing::fixture("benign_700.jsonl"));
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < 60; ++i) texts.push_back(records[i].prompt);
    std::set<std::string> seen;
    std::size_t pairs = 0;
    for (const auto& a : texts) {
        for (const auto& b : texts) {
            BoundaryPrompt bp(FrameSpec(1, a), FrameSpec(2, b), 2);
            seen.insert(render_boundary(bp));
            ++pairs;
        }
    }
    EXPECT_EQ(seen.size(), pairs);
}

TEST(Lexicon, RejectsOutOfRangeScore) {
    auto doc = nlohmann::json::parse(R"({"name":"x","version":"1","entries":{"a":{"score":1.5}}})");
    EXPECT_THROW(Lexicon::from_json(doc), InvalidLexicon);
    EXPECT_FALSE(Lexicon::check(doc).empty());
}

TEST(Lexicon, ShippedLexiconIsValid) {
    auto doc = nlohmann::json::parse(read_file(testing::reference_data("lexicon.json")));
    EXPECT_TRUE(Lexicon::check(doc).empty());
    auto lex = Lexicon::from_json(doc);
    EXPECT_EQ(lex.name(), "reference-lexicon");
    EXPECT_EQ(lex.max_phrase_units(), 2u);
    // Candidate terms are scored from the candidate lists.
    EXPECT_NEAR(*lex.score("unfold"), 0.1, 1e-12);
}

TEST(Lexicon, JsonRoundTrip) {
    auto lex = Lexicon::load(testing::reference_data("lexicon.json"));
    auto again = Lexicon::from_json(lex.to_json());
    EXPECT_EQ(again.to_json(), lex.to_json());
}

}  // namespace
}  // namespace tfm
