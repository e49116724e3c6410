#include "tfm/tbp.hpp"

#include "tfm/errors.hpp"

namespace tfm {

TemporalPrompt structure_prompt(std::string_view raw, RewriterBackend& backend, int frames,
                                std::string scene_id, std::string category) {
    if (frames < 2) throw PreconditionError("structuring needs T >= 2, got " + std::to_string(frames));
    if (raw.empty()) throw PreconditionError("cannot structure an empty prompt");

    std::string last_problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string reply = backend.structure(raw, frames, attempt);
        try {
            TemporalPrompt parsed = parse_temporal(reply, scene_id, category);
            if (parsed.total_frames() == frames) return parsed;
            last_problem = "expected " + std::to_string(frames) + " frames, reply had " +
                           std::to_string(parsed.total_frames());
        } catch (const MalformedFrameMarker& e) {
            last_problem = e.what();
        } catch (const EmptyPrompt& e) {
            last_problem = e.what();
        }
    }
    throw StructureParseFailure(last_problem);
}

BoundaryPrompt boundary_extract(const TemporalPrompt& prompt) {
    const int T = prompt.total_frames();
    if (T < 2) throw TooFewFrames("boundary extraction needs T >= 2, got " + std::to_string(T));
    return BoundaryPrompt(prompt.frame(1), prompt.frame(T), T);
}

int middle_index(int frames) { return (frames + 1) / 2; }

BoundaryPrompt insert_middle(const TemporalPrompt& prompt) {
    const int T = prompt.total_frames();
    if (T < 3) throw TooFewFrames("a middle anchor needs T >= 3, got " + std::to_string(T));
    return BoundaryPrompt(prompt.frame(1), prompt.frame(T), T, prompt.frame(middle_index(T)));
}

}  // namespace tfm
