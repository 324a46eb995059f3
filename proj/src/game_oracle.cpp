#include "rslqg/game_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace rslqg {
namespace {

constexpr double kDivergenceNorm = 1e12;
constexpr double kDefinitenessMargin = 1e-9;

// gamma^2 I - D^T P D, throwing when the risk constraint fails.
Matrix risk_slack(const PlantModel& model, const Matrix& P, const char* where) {
  const Matrix S = model.gamma() * model.gamma() *
                       Matrix::Identity(model.q(), model.q()) -
                   model.D().transpose() * P * model.D();
  if (lambda_min(S) <= kDefinitenessMargin * model.gamma() * model.gamma()) {
    throw Error(ErrorCode::kRiskInfeasible,
                std::string(where) + ": gamma^2 I - D^T P D is not positive definite");
  }
  return S;
}

double gare_residual(const PlantModel& model, const Matrix& P, const Matrix& K) {
  const Matrix A_K = model.A() - model.B() * K;
  const Matrix U = u_of_p(model, P);
  return (A_K.transpose() * U * A_K - P + model.Q() +
          K.transpose() * model.R() * K)
      .norm();
}

}  // namespace

Matrix GameSolution::U_star(const PlantModel& model) const {
  return u_of_p(model, P_star);
}

Matrix u_of_p(const PlantModel& model, const CostMatrix& P) {
  const Matrix Ps = symmetrize(P, "u_of_p P");
  if (model.D().norm() == 0.0) return Ps;
  const Matrix S = risk_slack(model, Ps, "u_of_p");
  const Matrix DtP = model.D().transpose() * Ps;
  return Ps + DtP.transpose() * S.ldlt().solve(DtP);
}

GameSolution solve_gare_value_iteration(const PlantModel& model, double tol,
                                        int max_iter) {
  const AssumptionReport rep = check_assumptions(model);
  if (!rep.all()) {
    throw Error(ErrorCode::kInvalidArgument,
                "solve_gare_value_iteration: model violates the standing assumptions");
  }
  Matrix P = model.Q();
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Matrix U;
    try {
      U = u_of_p(model, P);
    } catch (const Error&) {
      throw Error(ErrorCode::kGammaTooSmall,
                  "solve_gare_value_iteration: risk constraint lost (gamma too small)");
    }
    const Matrix BtU = model.B().transpose() * U;
    const Matrix G = model.R() + BtU * model.B();
    const Matrix K = G.ldlt().solve(BtU * model.A());
    const Matrix P_next = symmetrize(
        model.Q() + model.A().transpose() * U * model.A() -
            model.A().transpose() * U * model.B() * K,
        "value iteration step");
    if (!P_next.allFinite() || P_next.norm() > kDivergenceNorm) {
      throw Error(ErrorCode::kGammaTooSmall,
                  "solve_gare_value_iteration: iterates diverged (gamma too small)");
    }
    const double step = (P_next - P).norm();
    P = P_next;
    if (step <= tol * std::max(1.0, P.norm())) break;
  }
  if (iter >= max_iter) {
    throw Error(ErrorCode::kNoConvergence,
                "solve_gare_value_iteration: max_iter reached");
  }

  const Matrix U = u_of_p(model, P);
  const Matrix BtU = model.B().transpose() * U;
  const Matrix Kmat = (model.R() + BtU * model.B()).ldlt().solve(BtU * model.A());
  const Matrix A_K = model.A() - model.B() * Kmat;
  const Matrix S = risk_slack(model, P, "solve_gare_value_iteration");
  const Matrix Lmat = S.ldlt().solve(model.D().transpose() * P * A_K);

  GameSolution sol;
  sol.P_star = P;
  sol.K_star = GainK(Kmat);
  sol.L_star = GainL(Lmat);
  sol.iterations = iter + 1;
  sol.residual = gare_residual(model, P, Kmat);
  if (!is_pd(P, kDefinitenessMargin)) {
    throw Error(ErrorCode::kGammaTooSmall,
                "solve_gare_value_iteration: P* is not positive definite");
  }
  if (spectral_radius(A_K) >= 1.0 - kDefinitenessMargin ||
      spectral_radius(A_K + model.D() * Lmat) >= 1.0 - kDefinitenessMargin) {
    throw Error(ErrorCode::kGammaTooSmall,
                "solve_gare_value_iteration: saddle-point closed loop not stable");
  }
  if (sol.residual > 1e-8 * std::max(1.0, P.norm())) {
    throw Error(ErrorCode::kNoConvergence,
                "solve_gare_value_iteration: residual " + std::to_string(sol.residual));
  }
  return sol;
}

CostMatrix evaluate_policy(const PlantModel& model, const GainK& K, double tol,
                           int max_iter) {
  const Matrix A_K = model.closed_loop(K);
  if (spectral_radius(A_K) >= 1.0) {
    throw Error(ErrorCode::kUnstableMatrix, "evaluate_policy: A - BK is not stable");
  }
  const Matrix Q_K = model.stage_weight(K);
  Matrix P = solve_dlyap(A_K, Q_K);
  auto residual_of = [&](const Matrix& X) -> double {
    const Matrix U = u_of_p(model, X);
    return (A_K.transpose() * U * A_K - X + Q_K).norm();
  };

  double residual = 0.0;
  try {
    residual = residual_of(P);
    for (int iter = 0; iter < max_iter; ++iter) {
      if (residual <= tol * std::max(1.0, P.norm())) return P;
      const Matrix target = symmetrize(
          Q_K + A_K.transpose() * u_of_p(model, P) * A_K, "policy evaluation step");
      // Full fixed-point step, halved while the residual would increase.
      double step = 1.0;
      Matrix candidate;
      double cand_res = 0.0;
      for (int halving = 0; halving <= 30; ++halving) {
        candidate = P + step * (target - P);
        cand_res = residual_of(candidate);
        if (cand_res < residual || halving == 30) break;
        step *= 0.5;
      }
      P = candidate;
      residual = cand_res;
      if (!P.allFinite() || P.norm() > kDivergenceNorm) {
        throw Error(ErrorCode::kNotAdmissible,
                    "evaluate_policy: iterates diverged (||T(K)|| >= gamma)");
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kRiskInfeasible) {
      throw Error(ErrorCode::kNotAdmissible,
                  "evaluate_policy: risk constraint lost (||T(K)|| >= gamma)");
    }
    throw;
  }
  throw Error(ErrorCode::kNoConvergence, "evaluate_policy: max_iter reached");
}

GainL worst_case_gain(const PlantModel& model, const GainK& K, const CostMatrix& P_K) {
  const Matrix Ps = symmetrize(P_K, "worst_case_gain P");
  const Matrix S = risk_slack(model, Ps, "worst_case_gain");
  return GainL(S.ldlt().solve(model.D().transpose() * Ps * model.closed_loop(K)));
}

double estimate_gamma_inf(const PlantModel& model, double tol) {
  auto solvable = [&](double g) {
    const PlantModel trial(model.A(), model.B(), model.C(), model.D(), model.E(), g,
                           model.sigma());
    try {
      solve_gare_value_iteration(trial, 1e-9, 20000);
      return true;
    } catch (const Error&) {
      return false;
    }
  };
  double hi = 1e6;
  if (!solvable(hi)) {
    throw Error(ErrorCode::kNotStabilizable,
                "estimate_gamma_inf: no stabilizing solution even at gamma = 1e6");
  }
  double lo = 1e-6;
  if (solvable(lo)) return lo;  // effectively zero (e.g. D = 0)
  while (hi - lo > tol * hi) {
    const double mid = std::sqrt(lo * hi);  // log-scale bisection over decades
    if (solvable(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double leqg_cost(const PlantModel& model, const CostMatrix& P_K) {
  const Matrix Ps = symmetrize(P_K, "leqg_cost P");
  const double g2 = model.gamma() * model.gamma();
  const int q = model.q();
  const Matrix S = Matrix::Identity(q, q) - model.D().transpose() * Ps * model.D() / g2;
  if (lambda_min(S) <= 0.0) {
    throw Error(ErrorCode::kRiskInfeasible,
                "leqg_cost: I - gamma^-2 P_K D D^T is not positive definite");
  }
  // det(I_n - g^-2 P D D^T) = det(I_q - g^-2 D^T P D) by Sylvester's identity.
  return -g2 * std::log(S.determinant());
}

}  // namespace rslqg
