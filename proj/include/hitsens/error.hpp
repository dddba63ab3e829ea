#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hitsens {

enum class ErrorCode {
  kInvalidArgument,
  kSyntax,
  kUnknownSymbol,
  kDimensionExceeded,
  kDomain,
  kNonAutonomousField,
  kUnknownBuiltin,
  kBlowUp,
  kStepUnderflow,
  kOutOfRange,
  kEquilibriumPoint,
  kNotEquilibrium,
  kStartsOnSet,
  kNonTransversal,
  kNoSwitchBeforeHorizon,
  kNonTransversalSwitch,
  kGridTooCoarse,
  kEvaluationFailed,
  kHitLostUnderPerturbation,
  kInvarianceViolated,
};

const char* to_string(ErrorCode code) noexcept;

/// Base exception of the library. Every failure carries a machine-readable
/// code so the C layer can map it onto a status value without string parsing.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure; position is a byte offset into the source text.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& message)
      : Error(ErrorCode::kSyntax,
              message + " at offset " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace hitsens
