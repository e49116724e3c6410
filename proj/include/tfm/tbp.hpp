#pragma once

#include <string>
#include <string_view>

#include "tfm/backend.hpp"
#include "tfm/prompt_model.hpp"

namespace tfm {

/// One frame per second of a five second clip.
inline constexpr int kDefaultFrames = 5;

/// Asks the backend for a T-frame description of `raw`. A reply that does not
/// parse into exactly `frames` frames is retried once with the amended
/// instruction, then reported as StructureParseFailure.
TemporalPrompt structure_prompt(std::string_view raw, RewriterBackend& backend,
                                int frames = kDefaultFrames, std::string scene_id = {},
                                std::string category = "fixture");

/// Keeps frames 1 and T, drops everything in between.
BoundaryPrompt boundary_extract(const TemporalPrompt& prompt);

/// ceil(T / 2)
int middle_index(int frames);

/// Boundary frames plus frame ceil(T/2) as an explicit middle anchor.
BoundaryPrompt insert_middle(const TemporalPrompt& prompt);

}  // namespace tfm
