#include "rslqg/sysid_init.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "max_eig_sdp.hpp"

namespace rslqg {
namespace {

nlohmann::json matrix_rows(const Matrix& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

// -[[I, *, *], [mu W, I, *], [mu V, 0, I]]; negative definiteness encodes the
// norm coupling mu^2 (W^2 + V^T V) < I.
Matrix norm_coupling_block(const Matrix& W, const Matrix& V, double mu) {
  const int n = static_cast<int>(W.rows());
  const int m = static_cast<int>(V.rows());
  Matrix M = Matrix::Zero(2 * n + m, 2 * n + m);
  M.block(0, 0, n, n) = Matrix::Identity(n, n);
  M.block(n, n, n, n) = Matrix::Identity(n, n);
  M.block(2 * n, 2 * n, m, m) = Matrix::Identity(m, m);
  M.block(n, 0, n, n) = mu * W;
  M.block(0, n, n, n) = mu * W.transpose();
  M.block(2 * n, 0, m, n) = mu * V;
  M.block(0, 2 * n, n, m) = mu * V.transpose();
  return -M;
}

// blockdiag(bounded-real LMI + eps I, norm-coupling block), affine in (W, V).
Matrix lmi_stack(const IdentifiedModel& idm, const Matrix& C, const Matrix& E,
                 double gamma, double epsilon, double mu, const Matrix& W,
                 const Matrix& V) {
  const Matrix top =
      bounded_real_lmi_matrix(idm.A_hat, idm.B_hat, C, idm.D_hat, E, gamma, W, V) +
      epsilon * Matrix::Identity(
                    2 * idm.A_hat.rows() + idm.D_hat.cols() + C.rows(),
                    2 * idm.A_hat.rows() + idm.D_hat.cols() + C.rows());
  const Matrix bottom = norm_coupling_block(W, V, mu);
  const int N1 = static_cast<int>(top.rows());
  const int N2 = static_cast<int>(bottom.rows());
  Matrix F = Matrix::Zero(N1 + N2, N1 + N2);
  F.topLeftCorner(N1, N1) = top;
  F.bottomRightCorner(N2, N2) = bottom;
  return F;
}

}  // namespace

nlohmann::json IdentifiedModel::to_json() const {
  nlohmann::json j{{"A_hat", matrix_rows(A_hat)},
                   {"B_hat", matrix_rows(B_hat)},
                   {"D_hat", matrix_rows(D_hat)}};
  if (residual_norm) j["residual_norm"] = *residual_norm;
  return j;
}

IdentifiedModel identify(const DataBuffer& buffer, const PlantModel* truth) {
  const int n = buffer.n(), m = buffer.m(), q = buffer.q();
  const int N = n + m + q;
  if (buffer.size() < N) {
    throw Error(ErrorCode::kInsufficientExcitation,
                "identify: need at least n+m+q samples");
  }
  const double tau = buffer.size();
  Matrix phi = Matrix::Zero(N, N);
  Matrix xi = Matrix::Zero(N, n);
  for (int t = 0; t < buffer.size(); ++t) {
    phi.noalias() += buffer.z(t) * buffer.z(t).transpose() / tau;
    xi.noalias() += buffer.z(t) * buffer.x_next(t).transpose() / tau;
  }
  // Same normalized rank decision as build_operators.
  Vector scale = phi.diagonal().cwiseMax(1e-300).cwiseSqrt();
  const Matrix phi_scaled =
      scale.cwiseInverse().asDiagonal() * phi * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Matrix> svd(phi_scaled);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-10 * std::max(1e-300, sv(0))) {
    throw Error(ErrorCode::kInsufficientExcitation,
                "identify: sample second-moment matrix is singular");
  }
  const Matrix abd =
      (scale.cwiseInverse().asDiagonal() * pinv_svd(phi_scaled) *
       scale.cwiseInverse().asDiagonal() * xi)
          .transpose();  // n x (n+m+q)

  IdentifiedModel idm;
  idm.A_hat = abd.leftCols(n);
  idm.B_hat = abd.middleCols(n, m);
  idm.D_hat = abd.rightCols(q);
  if (truth) {
    Matrix true_abd(n, N);
    true_abd << truth->A(), truth->B(), truth->D();
    idm.residual_norm = (abd - true_abd).norm();
  }
  return idm;
}

LmiSolution find_initial_gain(const IdentifiedModel& idm, const Matrix& C,
                              const Matrix& E, double gamma, double epsilon,
                              double mu) {
  if (!(epsilon > 0.0) || !(mu > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "find_initial_gain: epsilon and mu must be positive");
  }
  const int n = static_cast<int>(idm.A_hat.rows());
  const int m = static_cast<int>(idm.B_hat.cols());

  MaxEigProblem problem;
  const Matrix W0 = Matrix::Zero(n, n);
  const Matrix V0 = Matrix::Zero(m, n);
  problem.F0 = lmi_stack(idm, C, E, gamma, epsilon, mu, W0, V0);
  // One affine basis matrix per vecs(W) entry, then per V entry.
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Matrix S = Matrix::Zero(n, n);
      S(i, j) = S(j, i) = 1.0;
      problem.Fk.push_back(lmi_stack(idm, C, E, gamma, epsilon, mu, S, V0) -
                           problem.F0);
    }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      Matrix S = Matrix::Zero(m, n);
      S(i, j) = 1.0;
      problem.Fk.push_back(lmi_stack(idm, C, E, gamma, epsilon, mu, W0, S) -
                           problem.F0);
    }

  // Start from W = I, V = 0.
  Vector theta0 = Vector::Zero(static_cast<int>(problem.Fk.size()));
  {
    int k = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j, ++k) theta0(k) = (i == j) ? 1.0 : 0.0;
  }
  const MaxEigSolution sol = minimize_max_eigenvalue(problem, theta0);
  if (!(sol.value < 0.0)) {
    throw LmiInfeasibleError(sol.value,
                             "find_initial_gain: LMIs infeasible (best margin " +
                                 std::to_string(sol.value) + ")");
  }

  LmiSolution out;
  out.W = Matrix::Zero(n, n);
  {
    int k = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j, ++k) out.W(i, j) = out.W(j, i) = sol.theta(k);
  }
  out.V = Matrix::Zero(m, n);
  {
    int k = sym_size(n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j, ++k) out.V(i, j) = sol.theta(k);
  }
  out.epsilon = epsilon;
  out.mu = mu;
  if (lambda_min(out.W) <= 0.0) {
    throw LmiInfeasibleError(sol.value, "find_initial_gain: W is not positive definite");
  }
  out.K = GainK(out.V * out.W.inverse());
  return out;
}

namespace {

LmiSolution find_gain_with_retries(const IdentifiedModel& idm, const Matrix& C,
                                   const Matrix& E, double gamma, double epsilon,
                                   double mu) {
  Matrix abd(idm.A_hat.rows(), idm.A_hat.cols() + idm.B_hat.cols() + idm.D_hat.cols());
  abd << idm.A_hat, idm.B_hat, idm.D_hat;
  double eps = epsilon > 0.0 ? epsilon : 1e-3 * abd.norm();
  double m = mu > 0.0 ? mu : 1e-2;
  double best_margin = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= 10; ++attempt) {
    try {
      return find_initial_gain(idm, C, E, gamma, eps, m);
    } catch (const LmiInfeasibleError& e) {
      best_margin = std::min(best_margin, e.best_margin());
      // eps - best_margin estimates the margin attainable without the eps
      // shift; aiming below it converges in one or two retries even when the
      // feasible region is orders of magnitude thinner than the default eps.
      const double attainable = eps - e.best_margin();
      if (attainable > 1e-11) {
        eps = std::min(0.5 * eps, 0.45 * attainable);
      } else {
        eps *= 0.5;
        m *= 0.5;
      }
    }
  }
  throw LmiInfeasibleError(best_margin,
                           "find_initial_gain: infeasible after margin retries");
}

}  // namespace

GainK learn_initial_controller(const PlantModel& model,
                               const ExplorationPolicy& policy, int tau,
                               double epsilon, double mu, Rng& rng) {
  auto relabel = [](const Error& e, const char* stage) -> Error {
    return Error(e.code(), std::string("learn_initial_controller[") + stage +
                               "]: " + e.what());
  };

  DataBuffer buffer(model.n(), model.m(), model.q());
  try {
    buffer = simulate(model, policy, tau, rng);
  } catch (const Error& e) {
    throw relabel(e, "simulate");
  }
  IdentifiedModel idm;
  try {
    idm = identify(buffer, &model);
  } catch (const Error& e) {
    throw relabel(e, "identify");
  }
  LmiSolution sol;
  try {
    sol = find_gain_with_retries(idm, model.C(), model.E(), model.gamma(), epsilon, mu);
  } catch (const Error& e) {
    throw relabel(e, "lmi");
  }
  const Admissibility adm = is_admissible(model, sol.K);
  if (!adm.admissible) {
    throw Error(ErrorCode::kNotAdmissible,
                "learn_initial_controller[verify]: learned gain rejected (" +
                    adm.reason + ")");
  }
  return sol.K;
}

GainK initial_gain_from_model(const PlantModel& model) {
  IdentifiedModel idm;
  idm.A_hat = model.A();
  idm.B_hat = model.B();
  idm.D_hat = model.D();
  idm.residual_norm = 0.0;
  const LmiSolution sol =
      find_gain_with_retries(idm, model.C(), model.E(), model.gamma(), -1.0, -1.0);
  return sol.K;
}

}  // namespace rslqg
