#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mpb {

enum class ErrorCode {
    invalid_argument,
    arm_out_of_range,
    non_finite_outcome,
    experiment_stopped,
    invalid_config,
    pending_assignment,
    no_pending_assignment,
    session_stopped,
    not_found,
    duplicate_id,
    no_solution,
    missing_constant,
    io_error,
    too_many_failures,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::arm_out_of_range: return "arm_out_of_range";
        case ErrorCode::non_finite_outcome: return "non_finite_outcome";
        case ErrorCode::experiment_stopped: return "experiment_stopped";
        case ErrorCode::invalid_config: return "invalid_config";
        case ErrorCode::pending_assignment: return "pending_assignment";
        case ErrorCode::no_pending_assignment: return "no_pending_assignment";
        case ErrorCode::session_stopped: return "session_stopped";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::duplicate_id: return "duplicate_id";
        case ErrorCode::no_solution: return "no_solution";
        case ErrorCode::missing_constant: return "missing_constant";
        case ErrorCode::io_error: return "io_error";
        case ErrorCode::too_many_failures: return "too_many_failures";
    }
    return "unknown";
}

/// One field-level diagnostic, e.g. {"policy.epsilon", "must be <= 1/(M+1)"}.
struct FieldIssue {
    std::string field;
    std::string message;
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::vector<FieldIssue> fields = {})
        : std::runtime_error(message), code_(code), fields_(std::move(fields)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::vector<FieldIssue>& fields() const noexcept { return fields_; }

private:
    ErrorCode code_;
    std::vector<FieldIssue> fields_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace mpb
