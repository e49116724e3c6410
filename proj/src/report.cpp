#include "tfm/report.hpp"

#include <algorithm>
#include <set>

#include "tfm/errors.hpp"
#include "tfm/util.hpp"

namespace tfm {

ReportKind parse_report_kind(std::string_view text) {
    if (text == "main-table") return ReportKind::MainTable;
    if (text == "ablation-table") return ReportKind::AblationTable;
    if (text == "seq-table") return ReportKind::SeqTable;
    if (text == "radar-csv") return ReportKind::RadarCsv;
    throw ConfigError("unknown report kind '" + std::string(text) + "'");
}

std::string to_string(ReportKind kind) {
    switch (kind) {
        case ReportKind::MainTable: return "main-table";
        case ReportKind::AblationTable: return "ablation-table";
        case ReportKind::SeqTable: return "seq-table";
        case ReportKind::RadarCsv: return "radar-csv";
    }
    return "main-table";
}

std::vector<std::string> required_methods(ReportKind kind) {
    switch (kind) {
        case ReportKind::MainTable: return {"direct", "tfm"};
        case ReportKind::AblationTable: return {"wo_tbp", "wo_csm", "with_middle", "tfm"};
        case ReportKind::SeqTable: return {"revs_seq", "tfm"};
        case ReportKind::RadarCsv: return {"tfm"};
    }
    return {};
}

namespace {

/// Baselines imported from other tools join the main table whenever present.
const std::set<std::string> kMainOptional{"rab", "daca", "veil"};

}  // namespace

Report build_report(std::span<const AttackRecord> records, ReportKind kind, const std::vector<std::string>* methods,
                    const std::vector<std::string>& profiles) {
    if (methods && methods->empty()) throw MissingVariant("no variant requested for " + to_string(kind));
    if (records.empty()) throw MissingVariant("log holds no attack records");

    std::vector<std::string> wanted_profiles = profiles;
    if (wanted_profiles.empty()) {
        for (const auto& r : records) {
            if (std::find(wanted_profiles.begin(), wanted_profiles.end(), r.profile) == wanted_profiles.end()) {
                wanted_profiles.push_back(r.profile);
            }
        }
    }

    std::set<std::string> present;  // "profile|method"
    for (const auto& r : records) present.insert(r.profile + "|" + r.variant);

    std::vector<std::string> selected = methods ? *methods : required_methods(kind);
    if (!methods && kind == ReportKind::MainTable) {
        for (const auto& m : kMainOptional) {
            const bool everywhere = std::all_of(wanted_profiles.begin(), wanted_profiles.end(),
                                                [&](const std::string& p) { return present.count(p + "|" + m) > 0; });
            if (everywhere) selected.push_back(m);
        }
    }
    if (!methods && kind == ReportKind::RadarCsv) {
        for (const auto& r : records) {
            if (std::find(selected.begin(), selected.end(), r.variant) == selected.end()) selected.push_back(r.variant);
        }
    }
    for (const auto& p : wanted_profiles) {
        for (const auto& m : selected) {
            if (!present.count(p + "|" + m)) {
                throw MissingVariant(to_string(kind) + " needs " + method_label(m) + " for profile " + p);
            }
        }
    }

    std::vector<AttackRecord> chosen;
    for (const auto& r : records) {
        const bool profile_ok =
            std::find(wanted_profiles.begin(), wanted_profiles.end(), r.profile) != wanted_profiles.end();
        const bool method_ok = std::find(selected.begin(), selected.end(), r.variant) != selected.end();
        if (profile_ok && method_ok) chosen.push_back(r);
    }

    Report report;
    report.kind = kind;
    report.table = aggregate(chosen);
    const TableLayout layout{kind == ReportKind::AblationTable || kind == ReportKind::SeqTable};
    if (kind == ReportKind::RadarCsv) {
        report.csv = to_radar_csv(report.table);
        report.markdown = to_markdown(report.table);
    } else {
        report.csv = to_csv(report.table, layout);
        report.markdown = to_markdown(report.table, layout);
    }
    return report;
}

std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir) {
    const std::string stem = to_string(report.kind);
    const auto csv = dir / (stem + ".csv");
    const auto md = dir / (stem + ".md");
    write_file(csv, report.csv);
    write_file(md, report.markdown);
    return {csv, md};
}

}  // namespace tfm
