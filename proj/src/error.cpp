#include "hitsens/error.hpp"

namespace hitsens {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kSyntax: return "SyntaxError";
    case ErrorCode::kUnknownSymbol: return "UnknownSymbol";
    case ErrorCode::kDimensionExceeded: return "DimensionExceeded";
    case ErrorCode::kDomain: return "DomainError";
    case ErrorCode::kNonAutonomousField: return "NonAutonomousField";
    case ErrorCode::kUnknownBuiltin: return "UnknownBuiltin";
    case ErrorCode::kBlowUp: return "BlowUp";
    case ErrorCode::kStepUnderflow: return "StepUnderflow";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kEquilibriumPoint: return "EquilibriumPoint";
    case ErrorCode::kNotEquilibrium: return "NotEquilibrium";
    case ErrorCode::kStartsOnSet: return "StartsOnSet";
    case ErrorCode::kNonTransversal: return "NonTransversal";
    case ErrorCode::kNoSwitchBeforeHorizon: return "NoSwitchBeforeHorizon";
    case ErrorCode::kNonTransversalSwitch: return "NonTransversalSwitch";
    case ErrorCode::kGridTooCoarse: return "GridTooCoarse";
    case ErrorCode::kEvaluationFailed: return "EvaluationFailed";
    case ErrorCode::kHitLostUnderPerturbation: return "HitLostUnderPerturbation";
    case ErrorCode::kInvarianceViolated: return "InvarianceViolated";
  }
  return "Unknown";
}

}  // namespace hitsens
