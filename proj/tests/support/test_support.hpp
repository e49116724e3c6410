#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tfm/backends.hpp"
#include "tfm/campaign.hpp"
#include "tfm/evaluator.hpp"
#include "tfm/prompt_model.hpp"
#include "tfm/target_sim.hpp"

namespace httplib {
class Server;
}

namespace tfm::testing {

std::filesystem::path fixture_dir();
std::filesystem::path fixture(const std::string& relative);
std::filesystem::path reference_data(const std::string& name);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Worlds

/// Every world under fixtures/worlds.
std::vector<ScenarioWorld> fixture_worlds();

/// Random row-stochastic world. About `zero_fraction` of the entries are
/// zeroed (each row keeps at least one positive entry).
ScenarioWorld random_world(Rng& rng, std::size_t states, double zero_fraction, std::size_t unsafe);

// ---------------------------------------------------------------------------
// Lexicons and prompts

struct RandomLexicon {
    Lexicon lexicon;
    std::vector<std::string> sensitive_terms;  // listed entries, surface form
    std::vector<std::string> filler;           // words never scored
};

/// Valid random lexicon over synthetic words; single and multi-unit terms,
/// some without candidates, some with candidates scored at or above the term.
RandomLexicon random_lexicon(Rng& rng);

/// Random sentence mixing filler words and sensitive terms.
std::string random_text(Rng& rng, const RandomLexicon& lex, std::size_t min_words, std::size_t max_words);

/// T frames of random text.
TemporalPrompt random_temporal(Rng& rng, const RandomLexicon& lex, int frames);

/// Candidate source reading straight from a lexicon, with a call counter.
class MapBackend final : public RewriterBackend {
public:
    explicit MapBackend(const Lexicon& lexicon) : lexicon_(lexicon) {}
    std::string structure(std::string_view raw, int frames, int attempt) override;
    std::vector<ScoredTerm> candidates(std::string_view term, std::string_view context) override;
    std::string id() const override { return "map"; }

    std::size_t candidate_calls = 0;
    bool unavailable = false;

private:
    const Lexicon& lexicon_;
};

// ---------------------------------------------------------------------------
// Published-table fixture logs

/// Records reproducing the published per-category counts (main comparison).
std::vector<AttackRecord> table_main_records();
/// Records whose per-profile averages equal the published ablation values;
/// per-category splits are spread evenly.
std::vector<AttackRecord> table_ablation_records();
/// Synthetic record set: `successes` successes out of `total`.
std::vector<AttackRecord> counted_records(const std::string& profile, const std::string& method,
                                          const std::string& category, std::size_t successes, std::size_t total,
                                          const std::string& id_prefix = "p");
void write_log(const std::filesystem::path& path, const std::vector<AttackRecord>& records);

// ---------------------------------------------------------------------------
// Transports and servers

/// In-process transport driven by a handler, counting calls.
class FakeTransport final : public Transport {
public:
    using Handler = std::function<HttpResponse(const std::string& url, const std::string& body)>;
    explicit FakeTransport(Handler handler) : handler_(std::move(handler)) {}
    HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                      const std::string& body) override;

    std::atomic<std::size_t> calls{0};
    std::map<std::string, std::string> last_headers;

private:
    Handler handler_;
    std::mutex mutex_;
};

/// Transport that fails the test if used.
std::shared_ptr<FakeTransport> forbidden_transport();

/// Chat-completions stand-in answering structure and candidate requests with
/// the offline lexicon backend.
std::string mock_chat_reply(const std::string& request_body, LexiconBackend& backend);

/// Loopback HTTP server on an ephemeral port running a handler per POST body.
class MockServer {
public:
    using Handler = std::function<std::pair<int, std::string>(const std::string& path, const std::string& body)>;
    explicit MockServer(Handler handler);
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    std::string url(const std::string& path) const;
    std::size_t requests() const { return requests_.load(); }

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<std::size_t> requests_{0};
};

/// Handler serving the remote text-to-video protocol from simulated targets.
MockServer::Handler simulated_t2v_handler(const ScenarioWorld& world, const ProfileSet& profiles,
                                          const Lexicon& lexicon);

// ---------------------------------------------------------------------------
// Reference setup

struct ReferenceSetup {
    Lexicon lexicon;
    ScenarioWorld world;
    ProfileSet profiles;
    StructureTemplates templates;
    std::vector<DatasetRecord> dataset;
};

ReferenceSetup load_reference();

/// Campaign config over the shipped reference data writing to `log`.
CampaignConfig reference_config(const std::filesystem::path& log);

}  // namespace tfm::testing
