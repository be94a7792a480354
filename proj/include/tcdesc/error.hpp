#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tcdesc {

enum class ErrorCode {
    ZeroRow,
    NotUnitNorm,
    ShapeMismatch,
    KTooLarge,
    KNotLessThanD,
    NonPositiveT,
    SingularGram,
    IndexOutOfBatch,
    LengthMismatch,
    TieDetected,
    HingeBoundary,
    ToleranceExceeded,
    EmptyClass,
    Divergence,
    InvalidArgument,
    Io,
    Config,
};

std::string_view to_string(ErrorCode code);

// Process exit code for a failure category: 2 for configuration/input
// problems, 3 for numerical failures.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what, std::optional<std::size_t> index = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), index_(index) {}

    ErrorCode code() const noexcept { return code_; }
    // Row, coordinate, or pair index the failure refers to, when there is one.
    std::optional<std::size_t> index() const noexcept { return index_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> index_;
};

}  // namespace tcdesc
