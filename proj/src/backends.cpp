#include <httplib.h>

#include "tfm/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <sstream>
#include <thread>

#include "tfm/util.hpp"

namespace tfm {

BackendMode parse_backend_mode(std::string_view text) {
    if (text == "record") return BackendMode::Record;
    if (text == "replay") return BackendMode::Replay;
    if (text == "passthrough") return BackendMode::Passthrough;
    if (text == "lexicon") return BackendMode::Lexicon;
    throw ConfigError("unknown backend mode '" + std::string(text) + "'");
}

std::string to_string(BackendMode mode) {
    switch (mode) {
        case BackendMode::Record: return "record";
        case BackendMode::Replay: return "replay";
        case BackendMode::Passthrough: return "passthrough";
        case BackendMode::Lexicon: return "lexicon";
    }
    return "unknown";
}

std::optional<BackendMode> backend_mode_from_env() {
    const char* value = std::getenv("TFM_BACKEND_MODE");
    if (!value || !*value) return std::nullopt;
    return parse_backend_mode(value);
}

// ---------------------------------------------------------------------------
// Templates

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

namespace {

std::string prompt_key(std::string_view raw) { return to_lower_ascii(collapse_whitespace(raw)); }

}  // namespace

StructureTemplates StructureTemplates::from_json(const nlohmann::json& doc) {
    try {
        StructureTemplates t;
        const auto& neutral = doc.at("neutral");
        t.neutral_initial = neutral.at("initial").get<std::string>();
        t.neutral_progression = neutral.at("progression").get<std::string>();
        t.neutral_final = neutral.at("final").get<std::string>();
        for (const auto& s : doc.value("scenarios", nlohmann::json::array())) {
            ScenarioScript script;
            script.prompt = s.at("prompt").get<std::string>();
            script.initial = s.at("initial").get<std::string>();
            script.progression = s.value("progression", std::vector<std::string>{});
            script.final_state = s.at("final").get<std::string>();
            t.scenarios.push_back(std::move(script));
        }
        const auto& ins = doc.at("instructions");
        t.instructions.structure = ins.at("structure").get<std::string>();
        t.instructions.structure_amended = ins.at("structure_amended").get<std::string>();
        t.instructions.candidates = ins.at("candidates").get<std::string>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("structure templates: ") + e.what());
    }
}

StructureTemplates StructureTemplates::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

const ScenarioScript* StructureTemplates::find(std::string_view raw) const {
    const std::string key = prompt_key(raw);
    for (const auto& s : scenarios) {
        if (prompt_key(s.prompt) == key) return &s;
    }
    return nullptr;
}

LexiconBackend::LexiconBackend(const Lexicon& lexicon, StructureTemplates templates)
    : lexicon_(lexicon), templates_(std::move(templates)) {}

std::string LexiconBackend::structure(std::string_view raw, int frames, int /*attempt*/) {
    if (frames < 2) throw PreconditionError("structuring needs T >= 2");
    const std::map<std::string, std::string> values{{"prompt", trim(raw)}};
    std::vector<std::string> texts;
    if (const auto* script = templates_.find(raw)) {
        texts.push_back(script->initial);
        const std::size_t inner = static_cast<std::size_t>(frames - 2);
        const std::size_t available = script->progression.size();
        for (std::size_t i = 0; i < inner; ++i) {
            if (available == 0) {
                texts.push_back(fill_template(templates_.neutral_progression, values));
            } else {
                texts.push_back(script->progression[i * available / inner]);
            }
        }
        texts.push_back(script->final_state);
    } else {
        texts.push_back(fill_template(templates_.neutral_initial, values));
        for (int i = 0; i < frames - 2; ++i) texts.push_back(fill_template(templates_.neutral_progression, values));
        texts.push_back(fill_template(templates_.neutral_final, values));
    }
    std::string out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        out += "Frame " + std::to_string(i + 1) + ": " + texts[i] + "\n";
    }
    return out;
}

std::vector<ScoredTerm> LexiconBackend::candidates(std::string_view term, std::string_view /*context*/) {
    const auto* entry = lexicon_.find(normalize_term(term));
    if (!entry) return {};
    return entry->candidates;
}

// ---------------------------------------------------------------------------
// Transport

HttplibTransport::HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

HttpResponse HttplibTransport::post(const std::string& url,
                                    const std::map<std::string, std::string>& headers,
                                    const std::string& body) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, url_re)) throw TransportError("unsupported endpoint '" + url + "'");
    const std::string base = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/";

    httplib::Client client(base);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) throw TransportError(httplib::to_string(res.error()));
    return {res->status, res->body};
}

// ---------------------------------------------------------------------------
// Cassette

std::shared_ptr<Cassette> Cassette::load(const std::filesystem::path& path) {
    auto cassette = std::make_shared<Cassette>();
    if (!std::filesystem::exists(path)) return cassette;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cassette " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw ConfigError("cassette " + path.string() + " must be a JSON list");
    for (const auto& item : doc) {
        cassette->record(item.at("fingerprint").get<std::string>(), item.at("reply").get<std::string>());
    }
    return cassette;
}

std::optional<std::string> Cassette::find(const std::string& fingerprint) const {
    std::lock_guard lock(mutex_);
    auto it = index_.find(fingerprint);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].second;
}

void Cassette::record(const std::string& fingerprint, const std::string& reply) {
    std::lock_guard lock(mutex_);
    if (index_.contains(fingerprint)) return;
    index_.emplace(fingerprint, entries_.size());
    entries_.emplace_back(fingerprint, reply);
}

std::size_t Cassette::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

nlohmann::json Cassette::to_json() const {
    std::lock_guard lock(mutex_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [fp, reply] : entries_) out.push_back({{"fingerprint", fp}, {"reply", reply}});
    return out;
}

void Cassette::save(const std::filesystem::path& path) const {
    write_file(path, to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Remote backend

RemoteConfig RemoteConfig::from_json(const nlohmann::json& doc) {
    RemoteConfig c;
    c.endpoint = doc.value("endpoint", "");
    c.model = doc.value("model", c.model);
    if (doc.contains("headers")) c.headers = doc["headers"].get<std::map<std::string, std::string>>();
    if (doc.contains("mode")) c.mode = parse_backend_mode(doc["mode"].get<std::string>());
    if (doc.contains("cassette")) c.cassette_path = doc["cassette"].get<std::string>();
    c.max_attempts = doc.value("max_attempts", c.max_attempts);
    c.backoff_base_seconds = doc.value("backoff_base_seconds", c.backoff_base_seconds);
    c.backoff_factor = doc.value("backoff_factor", c.backoff_factor);
    c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
    c.max_candidate_units = doc.value("max_candidate_units", c.max_candidate_units);
    return c;
}

std::string expand_env(std::string_view text) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.substr(i, 2) == "${") {
            const auto close = text.find('}', i + 2);
            if (close != std::string_view::npos) {
                const std::string var(text.substr(i + 2, close - i - 2));
                if (const char* v = std::getenv(var.c_str())) out += v;
                i = close + 1;
                continue;
            }
        }
        out.push_back(text[i++]);
    }
    return out;
}

namespace {

std::pair<std::string, std::string> request_messages(const BackendRequest& req,
                                                     const InstructionTemplates& ins) {
    if (req.kind == RequestKind::Structure) {
        const auto& tmpl = req.attempt > 0 ? ins.structure_amended : ins.structure;
        return {fill_template(tmpl, {{"frames", std::to_string(req.frames)}, {"prompt", req.prompt}}),
                req.prompt};
    }
    return {fill_template(ins.candidates, {{"term", req.prompt}, {"context", req.context}}), req.prompt};
}

const char* kind_name(RequestKind k) { return k == RequestKind::Structure ? "structure" : "candidates"; }

}  // namespace

nlohmann::json chat_body(const BackendRequest& request, const RemoteConfig& config,
                         const InstructionTemplates& instructions) {
    const auto [system, user] = request_messages(request, instructions);
    return {{"model", config.model},
            {"messages", nlohmann::json::array({{{"role", "system"}, {"content", system}},
                                                {{"role", "user"}, {"content", user}}})},
            {"temperature", 0}};
}

std::string fingerprint(const BackendRequest& request, const RemoteConfig& config,
                        const InstructionTemplates& instructions) {
    nlohmann::json body = chat_body(request, config, instructions);
    for (auto& msg : body["messages"]) {
        msg["content"] = collapse_whitespace(msg["content"].get<std::string>());
    }
    body["kind"] = kind_name(request.kind);
    // nlohmann::json objects are key-sorted, so dump() is canonical.
    return sha256_hex(body.dump());
}

std::string extract_reply(const std::string& body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw BackendUnavailable("reply is not JSON");
    }
    auto content_of = [](const nlohmann::json& msg) -> std::optional<std::string> {
        if (msg.is_object() && msg.contains("content") && msg["content"].is_string()) {
            return msg["content"].get<std::string>();
        }
        return std::nullopt;
    };
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
        if (auto c = content_of(doc["choices"][0].value("message", nlohmann::json::object()))) return *c;
    }
    if (doc.contains("messages") && doc["messages"].is_array() && !doc["messages"].empty()) {
        if (auto c = content_of(doc["messages"][0])) return *c;
    }
    if (doc.contains("message")) {
        if (auto c = content_of(doc["message"])) return *c;
    }
    if (auto c = content_of(doc)) return *c;
    throw BackendUnavailable("reply has no message content");
}

RemoteBackend::RemoteBackend(RemoteConfig config, const Lexicon& lexicon, InstructionTemplates instructions,
                             std::shared_ptr<Transport> transport, std::shared_ptr<Cassette> cassette,
                             Sleeper sleeper)
    : config_(std::move(config)),
      lexicon_(lexicon),
      instructions_(std::move(instructions)),
      transport_(std::move(transport)),
      cassette_(cassette ? std::move(cassette) : std::make_shared<Cassette>()),
      sleeper_(sleeper ? std::move(sleeper)
                       : Sleeper([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); })),
      in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
    if (config_.mode == BackendMode::Lexicon) {
        throw ConfigError("remote backend cannot run in lexicon mode");
    }
    if (config_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

std::string RemoteBackend::call(const BackendRequest& request) {
    const std::string fp = fingerprint(request, config_, instructions_);
    if (config_.mode == BackendMode::Replay) {
        if (auto reply = cassette_->find(fp)) return *reply;
        throw CassetteMiss(fp);
    }
    if (!transport_) throw BackendUnavailable("no transport configured");
    if (config_.endpoint.empty()) throw ConfigError("remote backend has no endpoint");

    std::map<std::string, std::string> headers;
    for (const auto& [k, v] : config_.headers) headers[k] = expand_env(v);
    const std::string body = chat_body(request, config_, instructions_).dump();

    std::optional<std::string> reply;
    std::string last_error;
    {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{in_flight_};

        for (int attempt = 1; attempt <= config_.max_attempts && !reply; ++attempt) {
            if (attempt > 1) {
                sleeper_(std::chrono::duration<double>(config_.backoff_base_seconds *
                                                       std::pow(config_.backoff_factor, attempt - 2)));
            }
            try {
                ++transport_calls_;
                const HttpResponse res = transport_->post(config_.endpoint, headers, body);
                if (res.status < 200 || res.status >= 300) {
                    last_error = "HTTP " + std::to_string(res.status);
                    continue;
                }
                reply = extract_reply(res.body);
            } catch (const TransportError& e) {
                last_error = e.what();
            } catch (const BackendUnavailable& e) {
                last_error = e.what();
            }
        }
    }
    if (!reply) {
        throw BackendUnavailable("after " + std::to_string(config_.max_attempts) + " attempts: " + last_error);
    }
    if (config_.mode == BackendMode::Record) {
        cassette_->record(fp, *reply);
        if (!config_.cassette_path.empty()) cassette_->save(config_.cassette_path);
    }
    return *reply;
}

std::string RemoteBackend::structure(std::string_view raw, int frames, int attempt) {
    BackendRequest req;
    req.kind = RequestKind::Structure;
    req.prompt = std::string(raw);
    req.frames = frames;
    req.attempt = attempt;
    req.request_id = next_request_id();
    return call(req);
}

std::vector<ScoredTerm> RemoteBackend::parse_candidates(const std::string& reply) const {
    static const std::regex list_marker(R"(^\s*(?:[-*]|\d+[.)])\s+)");
    std::vector<ScoredTerm> out;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(std::regex_replace(line, list_marker, ""));
        if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = line.substr(1, line.size() - 2);
        if (line.empty()) continue;
        const auto units = tokenize(line).size();
        if (units == 0 || units > config_.max_candidate_units) continue;
        if (lexicon_.overlaps_phrase(line)) continue;
        out.push_back({line, lexicon_.score(line).value_or(0.0)});
    }
    return out;
}

std::vector<ScoredTerm> RemoteBackend::candidates(std::string_view term, std::string_view context) {
    BackendRequest req;
    req.kind = RequestKind::Candidates;
    req.prompt = std::string(term);
    req.context = std::string(context);
    req.request_id = next_request_id();
    std::string reply;
    try {
        reply = call(req);
    } catch (const CassetteMiss& e) {
        throw BackendUnavailable(e.what());
    }
    return parse_candidates(reply);
}

}  // namespace tfm
