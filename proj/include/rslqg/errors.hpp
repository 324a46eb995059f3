#pragma once

#include <stdexcept>
#include <string>

namespace rslqg {

enum class ErrorCode {
  kInvalidArgument,
  kUnstableMatrix,
  kIllConditioned,
  kNumericalFailure,
  kRiskInfeasible,
  kGammaTooSmall,
  kNoConvergence,
  kNotAdmissible,
  kInsufficientExcitation,
  kLmiInfeasible,
  kUnstableExploration,
  kNotStabilizable,
  kIo,
};

/// All library failures throw this; code() lets callers branch on the cause.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// LMI feasibility failure; carries the best margin reached (negative means
/// the problem was actually feasible at that margin).
class LmiInfeasibleError : public Error {
 public:
  LmiInfeasibleError(double best_margin, const std::string& what)
      : Error(ErrorCode::kLmiInfeasible, what), best_margin_(best_margin) {}
  double best_margin() const { return best_margin_; }

 private:
  double best_margin_;
};

}  // namespace rslqg
