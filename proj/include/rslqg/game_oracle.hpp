#pragma once

#include "rslqg/plant.hpp"

namespace rslqg {

/// Saddle point of the zero-sum game: value matrix P*, minimizer gain K*,
/// adversary gain L*.
struct GameSolution {
  CostMatrix P_star;
  GainK K_star;
  GainL L_star;
  int iterations = 0;
  double residual = 0.0;  // Frobenius norm of the Riccati residual

  Matrix U_star(const PlantModel& model) const;
};

/// U = P + P D (gamma^2 I - D^T P D)^{-1} D^T P; the disturbance-adjusted
/// value kernel. Requires gamma^2 I - D^T P D > 0.
Matrix u_of_p(const PlantModel& model, const CostMatrix& P);

/// Brute-force reference solution of the generalized Riccati equation by
/// value iteration from P_0 = Q. Divergence or loss of definiteness signals
/// gamma below the attenuation limit.
GameSolution solve_gare_value_iteration(const PlantModel& model, double tol = 1e-12,
                                        int max_iter = 200000);

/// Value matrix P_K of the game under u = -Kx and the worst-case adversary,
/// i.e. the stabilizing solution of
///   (A-BK)^T U(P_K) (A-BK) - P_K + Q + K^T R K = 0,
/// by a damped fixed-point iteration started from the Lyapunov solution.
CostMatrix evaluate_policy(const PlantModel& model, const GainK& K,
                           double tol = 1e-11, int max_iter = 50000);

/// L = (gamma^2 I - D^T P_K D)^{-1} D^T P_K (A - BK), the maximizing
/// adversary feedback for fixed K.
GainL worst_case_gain(const PlantModel& model, const GainK& K, const CostMatrix& P_K);

/// Smallest gamma (within relative tol) for which the value iteration admits
/// a stabilizing solution; returns the upper edge of the final bracket.
double estimate_gamma_inf(const PlantModel& model, double tol = 1e-3);

/// Closed-form risk-sensitive cost -gamma^2 log det(I - gamma^-2 P_K D D^T);
/// requires the argument of the determinant to be positive definite.
double leqg_cost(const PlantModel& model, const CostMatrix& P_K);

}  // namespace rslqg
