#include "tfm/remote_target.hpp"

#include "tfm/errors.hpp"

namespace tfm {

RemoteTarget::RemoteTarget(std::string name, std::string endpoint, std::shared_ptr<Transport> transport,
                           std::map<std::string, std::string> headers)
    : name_(std::move(name)),
      endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      headers_(std::move(headers)) {
    if (!transport_) throw PreconditionError("remote target needs a transport");
}

GenerationOutcome RemoteTarget::submit(std::string_view prompt, std::uint64_t seed) {
    ++calls_;
    const nlohmann::json body{{"prompt", prompt}, {"seed", seed}, {"profile", name_}};
    std::map<std::string, std::string> headers;
    for (const auto& [k, v] : headers_) headers[k] = expand_env(v);
    headers.emplace("Content-Type", "application/json");
    GenerationOutcome failed;
    failed.kind = GenerationOutcome::Kind::Failed;
    try {
        const HttpResponse resp = transport_->post(endpoint_, headers, body.dump());
        if (resp.status < 200 || resp.status >= 300) {
            failed.error = "HTTP " + std::to_string(resp.status);
            return failed;
        }
        return decode(nlohmann::json::parse(resp.body));
    } catch (const TransportError& e) {
        failed.error = e.what();
    } catch (const nlohmann::json::exception& e) {
        failed.error = std::string("bad reply: ") + e.what();
    } catch (const Error& e) {
        failed.error = e.what();
    }
    return failed;
}

nlohmann::json RemoteTarget::encode(const GenerationOutcome& outcome) {
    nlohmann::json out{{"status", to_string(outcome.kind)}, {"error", outcome.error}, {"risk", outcome.risk}};
    out["video"] = outcome.video ? outcome.video->to_json() : nlohmann::json();
    return out;
}

GenerationOutcome RemoteTarget::decode(const nlohmann::json& body) {
    GenerationOutcome out;
    out.kind = parse_generation_kind(body.at("status").get<std::string>());
    out.error = body.value("error", "");
    out.risk = body.value("risk", 0.0);
    if (out.kind == GenerationOutcome::Kind::Video) {
        if (!body.contains("video") || body["video"].is_null()) throw Error("video status without a video");
        out.video = SimVideo::from_json(body["video"]);
    }
    return out;
}

}  // namespace tfm
