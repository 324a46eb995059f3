#pragma once

#include <vector>

#include "rslqg/matrix_kit.hpp"

namespace rslqg {

/// min over theta of lambda_max(F0 + sum_k theta_k Fk), all matrices
/// symmetric and of equal size.
struct MaxEigProblem {
  Matrix F0;
  std::vector<Matrix> Fk;
};

struct MaxEigSolution {
  Vector theta;
  double value = 0.0;  // lambda_max at the returned point
};

/// Log-det barrier Newton on the epigraph form (min t s.t. F(theta) <= t I).
/// Returns early once the objective drops below `stop_below`.
MaxEigSolution minimize_max_eigenvalue(const MaxEigProblem& problem,
                                       const Vector& theta0,
                                       double stop_below = -1e300);

}  // namespace rslqg
