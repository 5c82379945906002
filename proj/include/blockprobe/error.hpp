#pragma once

#include <stdexcept>
#include <string>

namespace blockprobe {

/**
 * Base class for all pipeline errors.
 *
 * Every error carries a stable class name (`kind()`) so the CLI can report
 * which module failed without parsing messages.
 */
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define BLOCKPROBE_DEFINE_ERROR(Name)                                        \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    };

// Feature store.
BLOCKPROBE_DEFINE_ERROR(IoError)
BLOCKPROBE_DEFINE_ERROR(FormatError)
BLOCKPROBE_DEFINE_ERROR(VersionError)
BLOCKPROBE_DEFINE_ERROR(TruncationError)
BLOCKPROBE_DEFINE_ERROR(DuplicateIdError)
BLOCKPROBE_DEFINE_ERROR(InvalidValueError)

// Shapes and configuration.
BLOCKPROBE_DEFINE_ERROR(DimensionError)
BLOCKPROBE_DEFINE_ERROR(ConfigError)

// Feature extraction.
BLOCKPROBE_DEFINE_ERROR(DecodeError)
BLOCKPROBE_DEFINE_ERROR(InferenceError)
BLOCKPROBE_DEFINE_ERROR(ManifestError)

// Numerics.
BLOCKPROBE_DEFINE_ERROR(FitError)
BLOCKPROBE_DEFINE_ERROR(NumericError)

// Retrieval.
BLOCKPROBE_DEFINE_ERROR(LookupError)
BLOCKPROBE_DEFINE_ERROR(MismatchError)

#undef BLOCKPROBE_DEFINE_ERROR

}  // namespace blockprobe
