#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ecgdig {

/// Failure categories. Per-image failures are reported by code and never abort a batch.
enum class ErrorCode {
    kInvalidArgument,
    kIo,
    kDecode,
    kFormat,
    kIngestion,
    kDegenerateInput,
    kPerspectiveFailure,
    kSpacingFailure,
    kLayoutFailure,
    kTraceFailure,
    kAlignment,
    kUndefinedSnr,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "invalid_argument";
        case ErrorCode::kIo: return "io_error";
        case ErrorCode::kDecode: return "decode_error";
        case ErrorCode::kFormat: return "format_error";
        case ErrorCode::kIngestion: return "ingestion_error";
        case ErrorCode::kDegenerateInput: return "degenerate_input";
        case ErrorCode::kPerspectiveFailure: return "perspective_failure";
        case ErrorCode::kSpacingFailure: return "spacing_failure";
        case ErrorCode::kLayoutFailure: return "layout_failure";
        case ErrorCode::kTraceFailure: return "trace_failure";
        case ErrorCode::kAlignment: return "alignment_error";
        case ErrorCode::kUndefinedSnr: return "undefined_snr";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, const std::string& what) {
    if (!condition) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace ecgdig
