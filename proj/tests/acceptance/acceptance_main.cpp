// One line per acceptance criterion; exit status is nonzero when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "tfm/campaign.hpp"
#include "tfm/csm.hpp"
#include "tfm/errors.hpp"
#include "tfm/evaluator.hpp"
#include "tfm/report.hpp"
#include "tfm/target_sim.hpp"
#include "tfm/tbp.hpp"

namespace {

using namespace tfm;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome bridge_oracle() {
    const auto start = Clock::now();
    std::size_t cases = 0;
    double worst = 0.0;
    double worst_sum = 0.0;
    for (const auto& w : testing::fixture_worlds()) {
        if (w.size() > 5) continue;
        for (int T = 2; T <= 6; ++T) {
            for (std::size_t a = 0; a < w.size(); ++a) {
                for (std::size_t b = 0; b < w.size(); ++b) {
                    double fast = 0.0;
                    double slow = 0.0;
                    try {
                        fast = unsafe_probability(w, a, b, T);
                    } catch (const UnreachableEndpoint&) {
                        bool agrees = false;
                        try {
                            brute_force_unsafe_probability(w, a, b, T);
                        } catch (const UnreachableEndpoint&) {
                            agrees = true;
                        }
                        if (!agrees) return {false, w.name() + ": only the closed form rejects the endpoint"};
                        continue;
                    }
                    slow = brute_force_unsafe_probability(w, a, b, T);
                    worst = std::max(worst, std::abs(fast - slow));
                    ++cases;

                    const auto bd = bridge_distribution(w, a, b, T);
                    const int inner = T - 2;
                    std::vector<std::size_t> z(static_cast<std::size_t>(inner), 0);
                    double sum = 0.0;
                    for (;;) {
                        sum += bd.trajectory_probability(z);
                        int i = 0;
                        while (i < inner && ++z[static_cast<std::size_t>(i)] == w.size())
                            z[static_cast<std::size_t>(i++)] = 0;
                        if (i == inner) break;
                    }
                    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                }
            }
        }
    }
    const double elapsed = seconds_since(start);
    Outcome o;
    o.pass = worst <= 1e-10 && worst_sum <= 1e-9 && elapsed < 10.0 && cases > 0;
    o.detail = std::to_string(cases) + " cases, max |closed - enumerated| " + fmt("%.2e", worst) +
               ", max |bridge mass - 1| " + fmt("%.2e", worst_sum) + fmt(", %.2f s", elapsed);
    return o;
}

Outcome csm_monotonicity() {
    Rng rng(20240611);
    std::size_t cases = 0;
    std::size_t violations = 0;
    std::size_t strict_cases = 0;
    for (int trial = 0; trial < 1500; ++trial) {
        auto lex = testing::random_lexicon(rng);
        testing::MapBackend backend(lex.lexicon);
        const int T = 2 + static_cast<int>(rng.next_u64() % 7);
        const auto prompt = testing::random_temporal(rng, lex, T);
        const auto bp = T >= 3 && rng.bernoulli(0.4) ? insert_middle(prompt) : boundary_extract(prompt);
        const Budget budget = rng.bernoulli(0.25) ? kUnlimitedBudget : Budget{rng.next_u64() % 5};
        const auto out = apply_csm(bp, lex.lexicon, backend, budget);
        bool substituted = false;
        for (const auto& r : out.records) substituted = substituted || !r.fallback;
        ++cases;
        if (out.risk_after > out.risk_before) ++violations;
        if (substituted) {
            ++strict_cases;
            if (!(out.risk_after < out.risk_before)) ++violations;
        }
    }
    return {violations == 0 && cases >= 1000,
            std::to_string(cases) + " boundaries, " + std::to_string(strict_cases) + " with substitutions, " +
                std::to_string(violations) + " violations"};
}

Outcome boundary_properties() {
    Rng rng(7);
    auto lex = testing::random_lexicon(rng);
    std::size_t cases = 0;
    std::size_t violations = 0;
    for (int trial = 0; trial < 1200; ++trial) {
        const int T = 2 + static_cast<int>(rng.next_u64() % 11);
        const auto p = testing::random_temporal(rng, lex, T);
        const auto bp = boundary_extract(p);
        ++cases;
        bool ok = bp.temporal_order().size() == 2 && bp.first() == p.frame(1) && bp.last() == p.frame(T) &&
                  !bp.middle();
        if (T == 2) ok = ok && bp.temporal_order() == p.frames();
        if (T >= 3) {
            const auto mid = insert_middle(p);
            const int k = (T + 1) / 2;
            ok = ok && mid.middle() && *mid.middle() == p.frame(k) && mid.first() == p.frame(1) &&
                 mid.last() == p.frame(T);
        }
        if (!ok) ++violations;
    }
    return {violations == 0 && cases >= 1000,
            std::to_string(cases) + " prompts with T in [2,12], " + std::to_string(violations) + " violations"};
}

Outcome filter_monotonicity() {
    Rng rng(99);
    auto lex = testing::random_lexicon(rng);
    std::size_t pairs = 0;
    std::size_t violations = 0;
    for (int trial = 0; trial < 1500; ++trial) {
        const auto a = testing::random_text(rng, lex, 1, 10);
        const auto b = testing::random_text(rng, lex, 1, 10);
        double ra = text_risk(a, lex.lexicon);
        double rb = text_risk(b, lex.lexicon);
        const auto& lo = ra <= rb ? a : b;
        const auto& hi = ra <= rb ? b : a;
        const FilterProfile thr{"thr", true, false, PreKind::Threshold, rng.uniform() * 3.0, 1.0, 0.0};
        Rng r1(1);
        Rng r2(1);
        const auto block_lo = pre_filter(lo, thr, lex.lexicon, r1);
        const auto block_hi = pre_filter(hi, thr, lex.lexicon, r2);
        ++pairs;
        if (static_cast<int>(block_lo) > static_cast<int>(block_hi)) ++violations;
    }
    // Logistic: derivative k * s * (1 - s) >= 0, checked on a dense grid as well.
    std::size_t grid_violations = 0;
    for (double k : {0.5, 1.0, 4.0, 12.0}) {
        for (double tau : {0.0, 0.7, 1.2, 1.5, 3.0}) {
            const FilterProfile lg{"log", true, false, PreKind::Logistic, tau, k, 0.0};
            double prev = pre_block_probability(0.0, lg);
            for (double r = 0.0; r <= 8.0; r += 1e-3) {
                const double now = pre_block_probability(r, lg);
                const double s = now;
                if (now < prev || k * s * (1.0 - s) < 0.0) ++grid_violations;
                prev = now;
            }
        }
    }
    return {violations == 0 && grid_violations == 0 && pairs >= 1000,
            std::to_string(pairs) + " threshold pairs, " + std::to_string(violations) +
                " violations; logistic grid violations " + std::to_string(grid_violations)};
}

Outcome metric_correctness() {
    std::vector<std::string> problems;
    if (compute_asr(testing::counted_records("K", "tfm", "gore", 45, 50)) != 90.0) problems.push_back("45/50");
    if (format_one_decimal(compute_asr(testing::counted_records("K", "tfm", "gore", 3, 7))) != "42.9")
        problems.push_back("3/7");
    if (compute_asr(testing::counted_records("K", "tfm", "gore", 0, 13)) != 0.0) problems.push_back("0/13");

    Rng rng(3);
    GroundTruthJudge judge;
    std::size_t mismatches = 0;
    std::size_t wrong_counts = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        SimVideo v;
        v.duration = 5.0;
        bool any = false;
        for (int i = 1; i <= 10; ++i) {
            const bool flag = rng.bernoulli(0.07);
            any = any || flag;
            v.frames.push_back({0.5 * i, "f", flag, 0});
        }
        const auto samples = sample_frames(v, 0.5);
        if (samples.size() != 10) ++wrong_counts;
        if (video_verdict(samples, judge).unsafe != any) ++mismatches;
    }
    if (mismatches) problems.push_back(std::to_string(mismatches) + " verdicts differ from OR");
    if (wrong_counts) problems.push_back("sample count != 10");
    std::string detail = "45/50 -> 90.0, 3/7 -> 42.9, 1000 verdicts vs OR, 10 samples per 5 s clip";
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty(), detail};
}

std::string last_line(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    return last;
}

Outcome golden_tables() {
    std::vector<std::string> failures;
    std::string detail;
    const auto main = build_report(testing::table_main_records(), ReportKind::MainTable);
    const auto want_main = read_file(testing::fixture("tables/main-table.csv"));
    if (main.csv != want_main) {
        failures.push_back("main-table");
        detail += "main-table Avg. computed [" + last_line(main.csv) + "] expected [" + last_line(want_main) + "]; ";
    }
    const auto ablation_records = testing::table_ablation_records();
    const auto abl = build_report(ablation_records, ReportKind::AblationTable);
    if (abl.csv != read_file(testing::fixture("tables/ablation-table.csv"))) failures.push_back("ablation-table");
    const auto seq = build_report(ablation_records, ReportKind::SeqTable);
    if (seq.csv != read_file(testing::fixture("tables/seq-table.csv"))) failures.push_back("seq-table");
    if (failures.empty()) return {true, "main, ablation and sequence tables byte-exact"};
    detail += "mismatched:";
    for (const auto& f : failures) detail += " " + f;
    return {false, detail};
}

Outcome simulator_direction(double& elapsed_out) {
    const auto start = Clock::now();
    testing::TempDir dir;
    auto ref = testing::load_reference();
    auto config = testing::reference_config(dir / "mc.jsonl");
    config.variants = {Variant::WoTbp, Variant::WoCsm, Variant::WithMiddle, Variant::RevsSeq, Variant::Tfm};
    config.repetitions = 2000;
    config.compact_records = true;

    LexiconBackend backend(ref.lexicon, ref.templates);
    VariantContext ctx{ref.lexicon, backend, config.frames, config.budget, config.render_template};
    const int steps = config.generation.steps();

    // analytic[variant][profile] averaged over prompts
    std::map<std::string, std::map<std::string, double>> analytic;
    for (const auto& rec : ref.dataset) {
        for (Variant v : config.variants) {
            const auto t = run_variant(rec.prompt, v, ctx, rec.id, rec.category);
            const auto anchors = anchors_from_text(t.text, ref.world, steps);
            for (const auto& p : config.profiles) {
                analytic[variant_id(v)][p] += analytic_asr(text_risk(t.text, ref.lexicon), anchors, ref.world,
                                                           ref.profiles.find(p), steps) /
                                              static_cast<double>(ref.dataset.size());
            }
        }
    }
    auto mean_over_profiles = [&](const std::string& v) {
        double s = 0.0;
        for (const auto& p : config.profiles) s += analytic[v][p];
        return s / static_cast<double>(config.profiles.size());
    };
    const double tfm = mean_over_profiles("tfm");
    const double mid = mean_over_profiles("with_middle");
    const double csm = mean_over_profiles("wo_csm");
    const double tbp = mean_over_profiles("wo_tbp");
    const double revs = mean_over_profiles("revs_seq");
    const bool ordered = tfm > mid && mid > csm && tfm > tbp && tfm > revs;

    run_campaign(config);
    std::map<std::string, std::map<std::string, std::pair<double, double>>> mc;  // successes, total
    for (const auto& r : read_log(config.log).records) {
        auto& cell = mc[r.variant][r.profile];
        cell.first += r.success ? 1.0 : 0.0;
        cell.second += 1.0;
    }
    double worst = 0.0;
    std::string worst_cell;
    for (const auto& [v, per_profile] : analytic) {
        for (const auto& [p, value] : per_profile) {
            const auto& cell = mc[v][p];
            const double observed = cell.second > 0 ? cell.first / cell.second : -1.0;
            const double gap = 100.0 * std::abs(observed - value);
            if (gap > worst) {
                worst = gap;
                worst_cell = v + "/" + p;
            }
        }
    }
    elapsed_out = seconds_since(start);
    Outcome o;
    o.pass = ordered && worst <= 3.0 && elapsed_out < 60.0;
    o.detail = "mean analytic ASR TFM " + fmt("%.3f", tfm) + fmt(", with_middle %.3f, w/o CSM %.3f", mid, csm) +
               fmt(", w/o TBP %.3f, revs_seq %.3f", tbp, revs) + (ordered ? " (ordered)" : " (ORDER VIOLATED)") +
               "; Monte Carlo max gap " + fmt("%.2f pp", worst) + " at " + worst_cell + fmt(", %.1f s", elapsed_out);
    return o;
}

Outcome determinism_resume() {
    testing::TempDir dir;
    auto a = testing::reference_config(dir / "a.jsonl");
    a.repetitions = 25;
    a.max_in_flight = 1;
    auto b = testing::reference_config(dir / "b.jsonl");
    b.repetitions = 25;
    b.max_in_flight = 6;
    auto c = testing::reference_config(dir / "c.jsonl");
    c.repetitions = 25;

    run_campaign(a);
    run_campaign(b);
    const auto ra = read_log(a.log).records;
    const auto rb = read_log(b.log).records;
    bool same_flags = ra.size() == rb.size();
    for (std::size_t i = 0; same_flags && i < ra.size(); ++i)
        same_flags = ra[i].key() == rb[i].key() && ra[i].success == rb[i].success;

    const auto first = run_campaign(c, RunOptions{ra.size() / 3});
    const auto second = run_campaign(c);
    const bool resumed = first.interrupted && second.skipped == ra.size() / 3 && read_file(c.log) == read_file(a.log);
    return {same_flags && resumed, std::to_string(ra.size()) + " records; flags " +
                                       (same_flags ? "identical" : "DIFFER") + " across runs; resumed log " +
                                       (resumed ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main() {
    const auto start = Clock::now();
    int failures = 0;
    auto report = [&](int n, const char* title, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("criterion %d [%s] %s: %s\n", n, o.pass ? "PASS" : "FAIL", title, o.detail.c_str());
        std::fflush(stdout);
    };

    double mc_seconds = 0.0;
    report(1, "bridge oracle equivalence", bridge_oracle);
    report(2, "substitution risk monotonicity", csm_monotonicity);
    report(3, "boundary operator properties", boundary_properties);
    report(4, "filter monotonicity", filter_monotonicity);
    report(5, "metric correctness", metric_correctness);
    report(6, "published table golden files", golden_tables);
    report(7, "directional simulator reproduction", [&] { return simulator_direction(mc_seconds); });
    report(8, "determinism and resumability", [&] {
        Outcome o = determinism_resume();
        const double total = seconds_since(start);
        o.pass = o.pass && total < 120.0;
        o.detail += fmt("; suite %.1f s offline", total);
        return o;
    });
    return failures == 0 ? 0 : 1;
}
