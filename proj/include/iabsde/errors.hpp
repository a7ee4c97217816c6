#ifndef IABSDE_ERRORS_HPP
#define IABSDE_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace iabsde {

/// Machine-readable failure kinds.  Every throw site in the library picks one
/// of these so callers (and the command-line driver) can react without string
/// matching.
enum class ErrorCode {
    NonPositiveHorizon,
    TailBeforeHorizon,
    ZeroSteps,
    NodeOutOfRange,
    RangeMismatch,
    DegenerateDimensions,
    DiscontinuousTerminal,
    KernelEvaluationFailure,
    KernelBoundExceeded,
    SegmentTooShort,
    ProjectionFailure,
    UnboundedFamily,
    UnsupportedFreezeMode,
    MaxIterExceeded,
    NonFiniteValue,
    RankDeficiency,
    InsufficientPaths,
    GridMismatch,
    BundleMismatch,
    StochasticDataRejected,
    ControlOutOfSet,
    EmptyControlGrid,
    MissingModulus,
    ZeroRhsWithNonzeroLhs,
    TooFewIterations,
    ReplayMismatch,
    ConfigParseError,
    ValidationError,
};

constexpr std::string_view to_string(ErrorCode c) noexcept {
    switch (c) {
        case ErrorCode::NonPositiveHorizon:     return "NonPositiveHorizon";
        case ErrorCode::TailBeforeHorizon:      return "TailBeforeHorizon";
        case ErrorCode::ZeroSteps:              return "ZeroSteps";
        case ErrorCode::NodeOutOfRange:         return "NodeOutOfRange";
        case ErrorCode::RangeMismatch:          return "RangeMismatch";
        case ErrorCode::DegenerateDimensions:   return "DegenerateDimensions";
        case ErrorCode::DiscontinuousTerminal:  return "DiscontinuousTerminal";
        case ErrorCode::KernelEvaluationFailure:return "KernelEvaluationFailure";
        case ErrorCode::KernelBoundExceeded:    return "KernelBoundExceeded";
        case ErrorCode::SegmentTooShort:        return "SegmentTooShort";
        case ErrorCode::ProjectionFailure:      return "ProjectionFailure";
        case ErrorCode::UnboundedFamily:        return "UnboundedFamily";
        case ErrorCode::UnsupportedFreezeMode:  return "UnsupportedFreezeMode";
        case ErrorCode::MaxIterExceeded:        return "MaxIterExceeded";
        case ErrorCode::NonFiniteValue:         return "NonFiniteValue";
        case ErrorCode::RankDeficiency:         return "RankDeficiency";
        case ErrorCode::InsufficientPaths:      return "InsufficientPaths";
        case ErrorCode::GridMismatch:           return "GridMismatch";
        case ErrorCode::BundleMismatch:         return "BundleMismatch";
        case ErrorCode::StochasticDataRejected: return "StochasticDataRejected";
        case ErrorCode::ControlOutOfSet:        return "ControlOutOfSet";
        case ErrorCode::EmptyControlGrid:       return "EmptyControlGrid";
        case ErrorCode::MissingModulus:         return "MissingModulus";
        case ErrorCode::ZeroRhsWithNonzeroLhs:  return "ZeroRhsWithNonzeroLhs";
        case ErrorCode::TooFewIterations:       return "TooFewIterations";
        case ErrorCode::ReplayMismatch:         return "ReplayMismatch";
        case ErrorCode::ConfigParseError:       return "ConfigParseError";
        case ErrorCode::ValidationError:        return "ValidationError";
    }
    return "UnknownError";
}

/**
 * Exception carrying an ErrorCode plus a human-readable message.
 *
 * The message always starts with the code name so that log lines and CLI
 * stderr output are grep-able, e.g. "TailBeforeHorizon: T_tail (1) must
 * exceed T (1)".
 */
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace iabsde

#endif  // IABSDE_ERRORS_HPP
