// Command-line front end: run campaigns, emit reports, inspect single
// transforms and validate lexicons.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfm/backends.hpp"
#include "tfm/campaign.hpp"
#include "tfm/errors.hpp"
#include "tfm/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDatasetError = 3;
constexpr int kIncompleteLog = 4;

int fail(int code, const std::exception& e) {
    std::cerr << "tfm: " << e.what() << '\n';
    return code;
}

int cmd_run(const std::string& config_path, std::optional<std::size_t> stop_after) {
    try {
        const auto config = tfm::CampaignConfig::load(config_path);
        tfm::RunOptions options;
        options.stop_after = stop_after;
        const auto summary = tfm::run_campaign(config, options);
        std::cout << summary.to_json().dump() << '\n';
        return kOk;
    } catch (const tfm::DatasetUnreadable& e) {
        return fail(kDatasetError, e);
    } catch (const tfm::MalformedLine& e) {
        return fail(kDatasetError, e);
    } catch (const tfm::DuplicateId& e) {
        return fail(kDatasetError, e);
    } catch (const tfm::UnknownCategory& e) {
        return fail(kDatasetError, e);
    } catch (const tfm::EmptySet& e) {
        return fail(kDatasetError, e);
    } catch (const tfm::Error& e) {
        return fail(kConfigError, e);
    }
}

int cmd_report(const std::string& log_path, const std::string& kind_text, const std::string& out_dir,
               const std::vector<std::string>& variants, const std::vector<std::string>& profiles, bool markdown) {
    try {
        const auto kind = tfm::parse_report_kind(kind_text);
        const auto log = tfm::read_log(log_path);
        const tfm::Report report =
            tfm::build_report(log.records, kind, variants.empty() ? nullptr : &variants, profiles);
        if (!out_dir.empty()) {
            for (const auto& p : tfm::write_report(report, out_dir)) std::cerr << "wrote " << p.string() << '\n';
        }
        std::cout << (markdown ? report.markdown : report.csv);
        return kOk;
    } catch (const tfm::IncompleteLog& e) {
        return fail(kIncompleteLog, e);
    } catch (const tfm::MissingVariant& e) {
        return fail(kIncompleteLog, e);
    } catch (const tfm::Error& e) {
        return fail(kConfigError, e);
    }
}

struct TransformArgs {
    std::string variant = "tfm";
    std::string prompt;
    std::string lexicon;
    std::string templates;
    std::string budget = "4";
    std::string render_template = std::string(tfm::kDefaultTemplate);
    int frames = 5;
    bool json = false;
};

int cmd_transform(const TransformArgs& args) {
    try {
        const auto dir = tfm::data_dir();
        const tfm::Lexicon lexicon = tfm::Lexicon::load(args.lexicon.empty() ? dir / "lexicon.json" : std::filesystem::path(args.lexicon));
        tfm::LexiconBackend backend(
            lexicon, tfm::StructureTemplates::load(args.templates.empty() ? dir / "templates.json" : std::filesystem::path(args.templates)));
        tfm::Budget budget = tfm::kUnlimitedBudget;
        if (args.budget != "unlimited") {
            try {
                budget = static_cast<std::size_t>(std::stoul(args.budget));
            } catch (const std::exception&) {
                throw tfm::ConfigError("budget must be a count or 'unlimited'");
            }
        }
        const tfm::VariantContext ctx{lexicon, backend, args.frames, budget, args.render_template};
        const auto result = tfm::run_variant(args.prompt, tfm::parse_variant(args.variant), ctx);
        if (args.json) {
            nlohmann::json subs = nlohmann::json::array();
            for (const auto& s : result.substitutions) subs.push_back(tfm::to_json(s));
            std::cout << nlohmann::json{{"text", result.text},
                                        {"risk_before", result.risk_before},
                                        {"risk_after", result.risk_after},
                                        {"substitutions", subs}}
                             .dump(2)
                      << '\n';
        } else {
            std::cout << result.text << '\n';
            std::printf("risk_before: %.4g\nrisk_after: %.4g\n", result.risk_before, result.risk_after);
        }
        return kOk;
    } catch (const tfm::Error& e) {
        return fail(kConfigError, e);
    }
}

int cmd_lexicon_check(const std::string& path) {
    try {
        const auto doc = nlohmann::json::parse(tfm::read_file(path));
        const auto problems = tfm::Lexicon::check(doc);
        for (const auto& p : problems) std::cout << p << '\n';
        if (!problems.empty()) return kConfigError;
        std::cout << "ok\n";
        return kOk;
    } catch (const nlohmann::json::exception& e) {
        return fail(kConfigError, e);
    } catch (const tfm::Error& e) {
        return fail(kConfigError, e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal boundary prompting and covert substitution toolkit"};
    app.require_subcommand(1);
    int code = kOk;

    std::string config_path;
    std::optional<std::size_t> stop_after;
    auto* run = app.add_subcommand("run", "Run a campaign described by a JSON config");
    run->add_option("--config", config_path, "Campaign config file")->required();
    run->add_option("--stop-after", stop_after, "Stop after committing N new records");
    run->callback([&] { code = cmd_run(config_path, stop_after); });

    std::string log_path, kind, out_dir;
    std::vector<std::string> variants, profiles;
    bool markdown = false;
    auto* report = app.add_subcommand("report", "Emit ASR tables from a result log");
    report->add_option("--log", log_path, "Result log (JSONL)")->required();
    report->add_option("--kind", kind, "main-table | ablation-table | seq-table | radar-csv")->required();
    report->add_option("--out", out_dir, "Directory for <kind>.csv and <kind>.md");
    report->add_option("--variants", variants, "Override the method selection")->delimiter(',');
    report->add_option("--profiles", profiles, "Restrict to these profiles")->delimiter(',');
    report->add_flag("--markdown", markdown, "Print Markdown instead of CSV");
    report->callback([&] { code = cmd_report(log_path, kind, out_dir, variants, profiles, markdown); });

    TransformArgs targs;
    auto* transform = app.add_subcommand("transform", "Rewrite one prompt with a variant pipeline");
    transform->add_option("--variant", targs.variant, "direct | wo_tbp | wo_csm | with_middle | revs_seq | tfm");
    transform->add_option("--prompt", targs.prompt, "Raw prompt")->required();
    transform->add_option("--lexicon", targs.lexicon, "Lexicon file");
    transform->add_option("--templates", targs.templates, "Structuring templates file");
    transform->add_option("--frames", targs.frames, "Frames to structure into");
    transform->add_option("--budget", targs.budget, "Substitution budget or 'unlimited'");
    transform->add_option("--template", targs.render_template, "default | frame-markers");
    transform->add_flag("--json", targs.json, "Print JSON with substitution records");
    transform->callback([&] { code = cmd_transform(targs); });

    std::string lexicon_path;
    auto* lexicon = app.add_subcommand("lexicon", "Lexicon utilities");
    lexicon->require_subcommand(1);
    auto* check = lexicon->add_subcommand("check", "Validate a lexicon file");
    check->add_option("file", lexicon_path, "Lexicon file")->required();
    check->callback([&] { code = cmd_lexicon_check(lexicon_path); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }
    return code;
}
