#include "metastable/errors.hpp"

namespace metastable {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::NonStochasticRow: return "NonStochasticRow";
    case ErrorCode::EmptyPartitionSide: return "EmptyPartitionSide";
    case ErrorCode::NoAccess: return "NoAccess";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::NullMass: return "NullMass";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::Extinct: return "Extinct";
    case ErrorCode::DegenerateKilling: return "DegenerateKilling";
    case ErrorCode::ComplexDominant: return "ComplexDominant";
    case ErrorCode::ZeroMeasure: return "ZeroMeasure";
    case ErrorCode::NoCertificate: return "NoCertificate";
    case ErrorCode::NonPositiveIterate: return "NonPositiveIterate";
    case ErrorCode::BlowUp: return "BlowUp";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::TooFewEvents: return "TooFewEvents";
    case ErrorCode::NoSuccess: return "NoSuccess";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::OutOfScope: return "OutOfScope";
    }
    return "Unknown";
}

} // namespace metastable
