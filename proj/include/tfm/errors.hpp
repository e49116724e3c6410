#pragma once

#include <stdexcept>
#include <string>

namespace tfm {

/// Base of every error the harness raises. Callers that only care about
/// "something in tfm failed" catch this; tests match the concrete type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define TFM_DECLARE_ERROR(Name)                          \
    class Name : public Error {                          \
    public:                                              \
        explicit Name(const std::string& what)           \
            : Error(std::string(#Name ": ") + what) {}   \
    }

// prompt model
TFM_DECLARE_ERROR(MalformedFrameMarker);
TFM_DECLARE_ERROR(EmptyPrompt);
TFM_DECLARE_ERROR(UnknownTemplate);
TFM_DECLARE_ERROR(InvalidLexicon);
TFM_DECLARE_ERROR(PreconditionError);

// transforms and backends
TFM_DECLARE_ERROR(TooFewFrames);
TFM_DECLARE_ERROR(BackendUnavailable);
TFM_DECLARE_ERROR(StructureParseFailure);
TFM_DECLARE_ERROR(CassetteMiss);

// simulator
TFM_DECLARE_ERROR(InvalidWorld);
TFM_DECLARE_ERROR(UnreachableEndpoint);
TFM_DECLARE_ERROR(TooLarge);

// evaluation and campaign
TFM_DECLARE_ERROR(EmptySet);
TFM_DECLARE_ERROR(JudgeUnavailable);
TFM_DECLARE_ERROR(DatasetUnreadable);
TFM_DECLARE_ERROR(MalformedLine);
TFM_DECLARE_ERROR(DuplicateId);
TFM_DECLARE_ERROR(UnknownCategory);
TFM_DECLARE_ERROR(MissingVariant);
TFM_DECLARE_ERROR(ConfigError);
TFM_DECLARE_ERROR(IncompleteLog);

#undef TFM_DECLARE_ERROR

}  // namespace tfm
