#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tfm/prompt_model.hpp"

namespace tfm {

/// A rewriter used by the structuring and substitution stages. Implementations
/// are shared handles and must tolerate concurrent callers.
class RewriterBackend {
public:
    virtual ~RewriterBackend() = default;

    /// Frame-marker text ("Frame k: ...") describing `raw` as `frames` frames.
    /// `attempt` is 0 first, 1 for the amended retry after a parse failure.
    virtual std::string structure(std::string_view raw, int frames, int attempt) = 0;

    /// Covert alternatives for a sensitive term, scored for explicitness.
    /// `context` is the frame text the term occurs in.
    virtual std::vector<ScoredTerm> candidates(std::string_view term, std::string_view context) = 0;

    virtual std::string id() const = 0;
};

}  // namespace tfm
