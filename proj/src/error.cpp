#include "tcdesc/error.hpp"

namespace tcdesc {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ZeroRow: return "ZeroRow";
        case ErrorCode::NotUnitNorm: return "NotUnitNorm";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::KTooLarge: return "KTooLarge";
        case ErrorCode::KNotLessThanD: return "KNotLessThanD";
        case ErrorCode::NonPositiveT: return "NonPositiveT";
        case ErrorCode::SingularGram: return "SingularGram";
        case ErrorCode::IndexOutOfBatch: return "IndexOutOfBatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TieDetected: return "TieDetected";
        case ErrorCode::HingeBoundary: return "HingeBoundary";
        case ErrorCode::ToleranceExceeded: return "ToleranceExceeded";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::SingularGram:
        case ErrorCode::TieDetected:
        case ErrorCode::HingeBoundary:
        case ErrorCode::ToleranceExceeded:
        case ErrorCode::Divergence:
            return 3;
        default:
            return 2;
    }
}

}  // namespace tcdesc
