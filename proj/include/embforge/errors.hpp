#pragma once
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace embforge {

enum class ErrorCode {
    EmptyField,
    UnknownLabel,
    MissingThreshold,
    MultiTurn,
    InsufficientLabels,
    ConstraintKindMismatch,
    PolicyViolation,
    ApiError,
    DegenerateOutput,
    CorpusTooSmall,
    EmptyBatch,
    MissingLabels,
    EmptyList,
    MissingSide,
    CorruptState,
    EmptyText,
    ParseError,
    IoError,
    InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Non-fatal events (missing instruction, dropped synthesis variant, ...).
// Ops that can only warn take one of these instead of throwing.
struct Warnings {
    std::vector<std::string> messages;

    void add(std::string msg) { messages.push_back(std::move(msg)); }
    size_t count() const { return messages.size(); }
    bool empty() const { return messages.empty(); }
};

} // namespace embforge
