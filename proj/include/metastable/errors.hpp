#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metastable {

enum class ErrorCode {
    NonStochasticRow,
    EmptyPartitionSide,
    NoAccess,
    InvalidInput,
    Reducible,
    NullMass,
    SingularSystem,
    Extinct,
    DegenerateKilling,
    ComplexDominant,
    ZeroMeasure,
    NoCertificate,
    NonPositiveIterate,
    BlowUp,
    Timeout,
    TooFewEvents,
    NoSuccess,
    ParseError,
    ConfigError,
    OutOfScope,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (CLI, Python) can branch on the kind rather than on message text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace metastable
