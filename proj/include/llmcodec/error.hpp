#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace llmcodec {

enum class ErrorCode {
    InvalidArgument,
    NotFound,
    UnsupportedFormat,
    CorruptHeader,
    IoError,
    InvalidBandCount,
    InvalidStride,
    InvalidLength,
    LengthMismatch,
    ZeroReference,
    BadMagic,
    TruncatedFile,
    DimensionMismatch,
    UnknownWord,
    EmptyResult,
    IndexOutOfRange,
    ConfigMismatch,
    DigestMismatch,
    UnknownLabel,
    LayerCountMismatch,
    StructureMismatch,
    ShapeMismatch,
    MissingPart,
    EmptyInput,
    NonFiniteValue,
    EmptyDemonstrations,
    LabelNotInSet,
    Timeout,
    HttpStatus,
    MalformedResponse,
    EmptyCompletion,
    ParseError,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this exception type; `code()`
// identifies the failure class, `detail()` carries the offending value where
// one exists (an unknown label, a missing path, an HTTP status).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string detail = {})
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

// Thrown for HttpStatus failures so callers can recover the status code.
class HttpError : public Error {
public:
    HttpError(int status, const std::string& body)
        : Error(ErrorCode::HttpStatus, "HTTP " + std::to_string(status), body), status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

}  // namespace llmcodec
