#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace willmore {

enum class ErrorCode {
    OutOfChart,
    NoConvergence,
    RadiusExceedsInjectivity,
    DegenerateTriangle,
    NonFiniteInput,
    RankDeficientFit,
    StepFailure,
    ConnectivityChanged,
    InsufficientData,
    NonNegativityViolated,
    InvalidMesh,
    BadParams,
    ParseError,
    ValidationError,
    IoError,
    SchemaMismatch,
    NotFound,
};

inline std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::OutOfChart: return "OutOfChart";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::RadiusExceedsInjectivity: return "RadiusExceedsInjectivity";
    case ErrorCode::DegenerateTriangle: return "DegenerateTriangle";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::RankDeficientFit: return "RankDeficientFit";
    case ErrorCode::StepFailure: return "StepFailure";
    case ErrorCode::ConnectivityChanged: return "ConnectivityChanged";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NonNegativityViolated: return "NonNegativityViolated";
    case ErrorCode::InvalidMesh: return "InvalidMesh";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::NotFound: return "NotFound";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message)
        , code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace willmore
