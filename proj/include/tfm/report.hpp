#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfm/evaluator.hpp"

namespace tfm {

enum class ReportKind { MainTable, AblationTable, SeqTable, RadarCsv };

ReportKind parse_report_kind(std::string_view text);
std::string to_string(ReportKind kind);

/// Methods a report kind needs in every profile column group.
std::vector<std::string> required_methods(ReportKind kind);

struct Report {
    ReportKind kind = ReportKind::MainTable;
    AsrTable table;
    std::string csv;
    std::string markdown;
};

/// Builds a report from a record set. `methods` overrides the kind's default
/// method selection; an empty override, or a method absent for some profile,
/// raises MissingVariant. `profiles` restricts the column groups when given.
Report build_report(std::span<const AttackRecord> records, ReportKind kind,
                    const std::vector<std::string>* methods = nullptr,
                    const std::vector<std::string>& profiles = {});

/// Writes <dir>/<kind>.csv and <dir>/<kind>.md; returns the written paths.
std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace tfm
