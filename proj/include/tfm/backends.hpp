#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tfm/backend.hpp"
#include "tfm/errors.hpp"
#include "tfm/prompt_model.hpp"

namespace tfm {

enum class BackendMode { Record, Replay, Passthrough, Lexicon };

BackendMode parse_backend_mode(std::string_view text);
std::string to_string(BackendMode mode);
/// TFM_BACKEND_MODE, when set.
std::optional<BackendMode> backend_mode_from_env();

// ---------------------------------------------------------------------------
// Templates

/// Editable instruction texts sent to a remote rewriter. Placeholders:
/// {frames}, {prompt}, {term}, {context}.
struct InstructionTemplates {
    std::string structure;
    std::string structure_amended;
    std::string candidates;
};

/// Deterministic structuring script for one known raw prompt.
struct ScenarioScript {
    std::string prompt;
    std::string initial;
    std::vector<std::string> progression;
    std::string final_state;
};

struct StructureTemplates {
    std::vector<ScenarioScript> scenarios;
    /// Used for prompts with no script; "{prompt}" is substituted.
    std::string neutral_initial;
    std::string neutral_progression;
    std::string neutral_final;
    InstructionTemplates instructions;

    static StructureTemplates from_json(const nlohmann::json& doc);
    static StructureTemplates load(const std::filesystem::path& path);
    const ScenarioScript* find(std::string_view raw) const;
};

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Offline backend: structuring by template expansion, candidates straight
/// from the lexicon.
class LexiconBackend final : public RewriterBackend {
public:
    LexiconBackend(const Lexicon& lexicon, StructureTemplates templates);

    std::string structure(std::string_view raw, int frames, int attempt) override;
    std::vector<ScoredTerm> candidates(std::string_view term, std::string_view context) override;
    std::string id() const override { return "lexicon"; }

private:
    const Lexicon& lexicon_;
    StructureTemplates templates_;
};

// ---------------------------------------------------------------------------
// Remote backend

enum class RequestKind { Structure, Candidates };

struct BackendRequest {
    RequestKind kind = RequestKind::Structure;
    std::string prompt;   // raw prompt, or the sensitive term
    std::string context;  // frame text around the term
    int frames = 0;
    int attempt = 0;
    std::uint64_t request_id = 0;
};

class TransportError : public Error {
public:
    explicit TransportError(const std::string& what) : Error("TransportError: " + what) {}
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class Transport {
public:
    virtual ~Transport() = default;
    /// Throws TransportError when no response could be obtained.
    virtual HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                              const std::string& body) = 0;
};

/// HTTP(S) POST via cpp-httplib.
class HttplibTransport final : public Transport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(60));
    HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                      const std::string& body) override;

private:
    std::chrono::seconds timeout_;
};

/// Recorded (fingerprint, reply) pairs. Writes are serialized.
class Cassette {
public:
    Cassette() = default;
    static std::shared_ptr<Cassette> load(const std::filesystem::path& path);

    std::optional<std::string> find(const std::string& fingerprint) const;
    /// Keeps the first reply for a fingerprint.
    void record(const std::string& fingerprint, const std::string& reply);
    void save(const std::filesystem::path& path) const;
    std::size_t size() const;
    nlohmann::json to_json() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::pair<std::string, std::string>> entries_;
    std::map<std::string, std::size_t> index_;
};

struct RemoteConfig {
    std::string endpoint;
    std::string model = "gpt-4o";
    /// Header templates; "${VAR}" expands from the environment.
    std::map<std::string, std::string> headers;
    BackendMode mode = BackendMode::Replay;
    std::filesystem::path cassette_path;
    int max_attempts = 3;
    double backoff_base_seconds = 0.5;
    double backoff_factor = 2.0;
    int max_in_flight = 4;
    /// Candidate lines with more units than this are dropped.
    std::size_t max_candidate_units = 6;

    static RemoteConfig from_json(const nlohmann::json& doc);
};

std::string expand_env(std::string_view text);

/// Chat-style body {model, messages, temperature: 0}.
nlohmann::json chat_body(const BackendRequest& request, const RemoteConfig& config,
                         const InstructionTemplates& instructions);
/// Content hash of the canonicalized request (request_id excluded).
std::string fingerprint(const BackendRequest& request, const RemoteConfig& config,
                        const InstructionTemplates& instructions);
/// Reply text from a chat-style response body.
std::string extract_reply(const std::string& body);

class RemoteBackend final : public RewriterBackend {
public:
    using Sleeper = std::function<void(std::chrono::duration<double>)>;

    RemoteBackend(RemoteConfig config, const Lexicon& lexicon, InstructionTemplates instructions,
                  std::shared_ptr<Transport> transport, std::shared_ptr<Cassette> cassette,
                  Sleeper sleeper = {});

    std::string structure(std::string_view raw, int frames, int attempt) override;
    std::vector<ScoredTerm> candidates(std::string_view term, std::string_view context) override;
    std::string id() const override { return "remote:" + to_string(config_.mode); }

    /// One request per the wire envelope, with retries and cassette handling.
    std::string call(const BackendRequest& request);
    /// Candidate lines -> scored terms.
    std::vector<ScoredTerm> parse_candidates(const std::string& reply) const;

    std::uint64_t next_request_id() { return ++request_counter_; }
    std::size_t transport_calls() const { return transport_calls_.load(); }

private:
    RemoteConfig config_;
    const Lexicon& lexicon_;
    InstructionTemplates instructions_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Cassette> cassette_;
    Sleeper sleeper_;
    std::counting_semaphore<1024> in_flight_;
    std::atomic<std::uint64_t> request_counter_{0};
    std::atomic<std::size_t> transport_calls_{0};
};

}  // namespace tfm
