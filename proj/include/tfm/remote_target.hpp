#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tfm/backends.hpp"
#include "tfm/target_sim.hpp"

namespace tfm {

/// HTTP adapter for a hosted text-to-video service speaking a small JSON
/// protocol:
///
///   POST <endpoint>  {"prompt": ..., "seed": ..., "profile": ...}
///   200              {"status": "video" | "blocked_pre" | "blocked_post" | "failed",
///                     "error": ..., "video": {duration, trajectory, frames}}
///
/// Transport errors and non-2xx replies become Failed outcomes.
class RemoteTarget final : public TargetSystem {
public:
    RemoteTarget(std::string name, std::string endpoint, std::shared_ptr<Transport> transport,
                 std::map<std::string, std::string> headers = {});

    GenerationOutcome submit(std::string_view prompt, std::uint64_t seed) override;
    std::string name() const override { return name_; }
    std::size_t calls() const { return calls_.load(); }

    static nlohmann::json encode(const GenerationOutcome& outcome);
    static GenerationOutcome decode(const nlohmann::json& body);

private:
    std::string name_;
    std::string endpoint_;
    std::shared_ptr<Transport> transport_;
    std::map<std::string, std::string> headers_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace tfm
