#include "rslqg/plant.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>

namespace rslqg {
namespace {

constexpr double kStabilityMargin = 1e-9;   // "stable" means rho < 1 - margin
constexpr double kPdMargin = 1e-9;          // "> 0" means lambda_min > margin*scale

nlohmann::json matrix_to_json(const Matrix& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const char* key) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("model JSON: '") + key + "' must be a nested array");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("model JSON: '") + key + "' has ragged rows");
    }
    for (int c = 0; c < cols; ++c) M(i, c) = j[i][c].get<double>();
  }
  return M;
}

void require_finite(const Matrix& M, const char* what) {
  if (!M.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " contains non-finite entries");
  }
}

}  // namespace

GainK::GainK(Matrix m) : mat_(std::move(m)) { require_finite(mat_, "GainK"); }

GainL::GainL(Matrix m) : mat_(std::move(m)) { require_finite(mat_, "GainL"); }

PlantModel::PlantModel(Matrix A, Matrix B, Matrix C, Matrix D, Matrix E,
                       double gamma, Matrix sigma)
    : A_(std::move(A)),
      B_(std::move(B)),
      C_(std::move(C)),
      D_(std::move(D)),
      E_(std::move(E)),
      sigma_(std::move(sigma)),
      gamma_(gamma) {
  const int n = static_cast<int>(A_.rows());
  if (A_.cols() != n) throw Error(ErrorCode::kInvalidArgument, "A must be square");
  if (B_.rows() != n) throw Error(ErrorCode::kInvalidArgument, "B row count != n");
  if (D_.rows() != n) throw Error(ErrorCode::kInvalidArgument, "D row count != n");
  if (C_.cols() != n) throw Error(ErrorCode::kInvalidArgument, "C column count != n");
  if (E_.rows() != C_.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "C and E must have the same row count");
  }
  if (E_.cols() != B_.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "E column count != m");
  }
  if (!(gamma_ > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma must be positive");
  }
  if (sigma_.size() == 0) sigma_ = Matrix::Zero(n, n);
  if (sigma_.rows() != n || sigma_.cols() != n) {
    throw Error(ErrorCode::kInvalidArgument, "sigma must be n x n");
  }
  require_finite(A_, "A");
  require_finite(B_, "B");
  require_finite(C_, "C");
  require_finite(D_, "D");
  require_finite(E_, "E");
  sigma_ = symmetrize(sigma_, "sigma");
  if (!is_psd(sigma_, 1e-9 * std::max(1.0, sigma_.norm()))) {
    throw Error(ErrorCode::kInvalidArgument, "sigma must be positive semidefinite");
  }
  Q_ = C_.transpose() * C_;
  R_ = E_.transpose() * E_;
}

nlohmann::json PlantModel::to_json() const {
  return nlohmann::json{{"A", matrix_to_json(A_)},     {"B", matrix_to_json(B_)},
                        {"C", matrix_to_json(C_)},     {"D", matrix_to_json(D_)},
                        {"E", matrix_to_json(E_)},     {"gamma", gamma_},
                        {"sigma", matrix_to_json(sigma_)}};
}

PlantModel PlantModel::from_json(const nlohmann::json& j) {
  for (const char* key : {"A", "B", "C", "D", "E", "gamma"}) {
    if (!j.contains(key)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("model JSON: missing key '") + key + "'");
    }
  }
  Matrix sigma;
  if (j.contains("sigma")) sigma = matrix_from_json(j["sigma"], "sigma");
  return PlantModel(matrix_from_json(j["A"], "A"), matrix_from_json(j["B"], "B"),
                    matrix_from_json(j["C"], "C"), matrix_from_json(j["D"], "D"),
                    matrix_from_json(j["E"], "E"), j["gamma"].get<double>(), sigma);
}

AssumptionReport check_assumptions(const PlantModel& model) {
  AssumptionReport rep;
  rep.q_pd = is_pd(model.Q(), kPdMargin);
  rep.r_pd = is_pd(model.R(), kPdMargin);
  rep.cross_term_zero = (model.C().transpose() * model.E()).norm() <=
                        1e-10 * std::max(1.0, model.C().norm() * model.E().norm());

  // PBH: rank [lambda I - A, B] = n for every eigenvalue with |lambda| >= 1.
  rep.stabilizable = true;
  Eigen::EigenSolver<Matrix> es(model.A());
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kNumericalFailure, "check_assumptions: eigensolver failed");
  }
  const int n = model.n();
  const int m = model.m();
  for (int k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()(k);
    if (std::abs(lambda) < 1.0 - kStabilityMargin) continue;
    Eigen::MatrixXcd pbh(n, n + m);
    pbh.leftCols(n) =
        lambda * Eigen::MatrixXcd::Identity(n, n) - model.A().cast<std::complex<double>>();
    pbh.rightCols(m) = model.B().cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pbh);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-10 * std::max(1.0, sv(0))) {
      rep.stabilizable = false;
      break;
    }
  }
  return rep;
}

std::optional<Matrix> bounded_real_riccati(const Matrix& A_cl, const Matrix& Q_cl,
                                           const Matrix& D, double g) {
  const int n = static_cast<int>(A_cl.rows());
  const int q = static_cast<int>(D.cols());
  if (spectral_radius(A_cl) >= 1.0 - kStabilityMargin) return std::nullopt;
  const Matrix g2I = g * g * Matrix::Identity(q, q);

  // Policy iteration on the adversary gain: monotonically increasing P,
  // quadratic convergence near the solution. Divergence, loss of
  // gamma^2 I - D^T P D > 0, or an unstable implied worst-case loop all
  // certify infeasibility.
  Matrix L = Matrix::Zero(q, n);
  Matrix P_prev = Matrix::Zero(n, n);
  for (int iter = 0; iter < 300; ++iter) {
    const Matrix A_loop = A_cl + D * L;
    if (spectral_radius(A_loop) >= 1.0 - 1e-12) return std::nullopt;
    Matrix P;
    try {
      P = solve_dlyap(A_loop, Q_cl - g * g * L.transpose() * L);
    } catch (const Error&) {
      return std::nullopt;  // near-boundary conditioning failure
    }
    const Matrix S = g2I - D.transpose() * P * D;
    if (lambda_min(S) <= kPdMargin * g * g) return std::nullopt;
    if (P.norm() > 1e14) return std::nullopt;
    if (iter > 0 && (P - P_prev).norm() <= 1e-11 * std::max(1.0, P.norm())) {
      return P;
    }
    P_prev = P;
    L = S.ldlt().solve(D.transpose() * P * A_cl);
  }
  return std::nullopt;  // no convergence: treated as boundary/infeasible
}

namespace {

// Largest singular value of (C - EK)(e^{jw} I - A_K)^{-1} D at frequency w.
double transfer_gain(const Matrix& C_K, const Matrix& A_K, const Matrix& D,
                     double omega) {
  const int n = static_cast<int>(A_K.rows());
  const std::complex<double> z(std::cos(omega), std::sin(omega));
  Eigen::MatrixXcd M = z * Eigen::MatrixXcd::Identity(n, n) -
                       A_K.cast<std::complex<double>>();
  Eigen::MatrixXcd X = M.partialPivLu().solve(D.cast<std::complex<double>>());
  Eigen::MatrixXcd T = C_K.cast<std::complex<double>>() * X;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(T);
  return svd.singularValues()(0);
}

// Grid scan plus golden-section refinement around the best point.
double grid_peak(const Matrix& C_K, const Matrix& A_K, const Matrix& D, int points) {
  const double two_pi = 2.0 * M_PI;
  double best = 0.0;
  int best_k = 0;
  for (int k = 0; k < points; ++k) {
    const double val = transfer_gain(C_K, A_K, D, two_pi * k / points);
    if (val > best) {
      best = val;
      best_k = k;
    }
  }
  double lo = two_pi * (best_k - 1) / points;
  double hi = two_pi * (best_k + 1) / points;
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - golden * (hi - lo);
  double x2 = lo + golden * (hi - lo);
  double f1 = transfer_gain(C_K, A_K, D, x1);
  double f2 = transfer_gain(C_K, A_K, D, x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + golden * (hi - lo);
      f2 = transfer_gain(C_K, A_K, D, x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - golden * (hi - lo);
      f1 = transfer_gain(C_K, A_K, D, x1);
    }
  }
  return std::max(best, std::max(f1, f2));
}

}  // namespace

double hinf_norm_grid(const PlantModel& model, const GainK& K, int points) {
  const Matrix A_K = model.closed_loop(K);
  if (spectral_radius(A_K) >= 1.0 - kStabilityMargin) {
    throw Error(ErrorCode::kUnstableMatrix, "hinf_norm: closed loop is not stable");
  }
  if (model.D().norm() == 0.0) return 0.0;
  const Matrix C_K = model.C() - model.E() * K.mat();
  if (C_K.norm() == 0.0) return 0.0;
  return grid_peak(C_K, A_K, model.D(), points);
}

double hinf_norm(const PlantModel& model, const GainK& K) {
  const Matrix A_K = model.closed_loop(K);
  if (spectral_radius(A_K) >= 1.0 - kStabilityMargin) {
    throw Error(ErrorCode::kUnstableMatrix, "hinf_norm: closed loop is not stable");
  }
  if (model.D().norm() == 0.0) return 0.0;
  const Matrix C_K = model.C() - model.E() * K.mat();
  if (C_K.norm() == 0.0) return 0.0;
  const Matrix Q_cl = C_K.transpose() * C_K;

  const double coarse = grid_peak(C_K, A_K, model.D(), 64);
  const double fine = grid_peak(C_K, A_K, model.D(), 4096);
  double lo = coarse;          // grid values never exceed the true norm
  double hi = 2.0 * fine;
  auto feasible = [&](double g) {
    return bounded_real_riccati(A_K, Q_cl, model.D(), g).has_value();
  };
  int expansions = 0;
  while (!feasible(hi)) {
    hi *= 2.0;
    if (++expansions > 60) {
      throw Error(ErrorCode::kNoConvergence,
                  "hinf_norm: no feasible upper bound found");
    }
  }
  while (hi - lo > 1e-6 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Admissibility is_admissible(const PlantModel& model, const GainK& K) {
  Admissibility out;
  const Matrix A_K = model.closed_loop(K);
  if (spectral_radius(A_K) >= 1.0 - kStabilityMargin) {
    out.reason = "unstable";
    return out;
  }
  const Matrix C_K = model.C() - model.E() * K.mat();
  auto P = bounded_real_riccati(A_K, C_K.transpose() * C_K, model.D(), model.gamma());
  if (!P) {
    out.reason = "hinf";
    return out;
  }
  out.admissible = true;
  out.certificate = std::move(*P);
  return out;
}

Matrix bounded_real_lmi_matrix(const Matrix& A, const Matrix& B, const Matrix& C,
                               const Matrix& D, const Matrix& E, double gamma,
                               const Matrix& W, const Matrix& V) {
  const int n = static_cast<int>(A.rows());
  const int q = static_cast<int>(D.cols());
  const int p = static_cast<int>(C.rows());
  const int N = n + q + n + p;
  Matrix M = Matrix::Zero(N, N);
  M.block(0, 0, n, n) = -W;
  M.block(n, n, q, q) = -gamma * gamma * Matrix::Identity(q, q);
  M.block(n + q, 0, n, n) = A * W - B * V;
  M.block(n + q, n, n, q) = D;
  M.block(n + q, n + q, n, n) = -W;
  M.block(n + q + n, 0, p, n) = C * W - E * V;
  M.block(n + q + n, n + q + n, p, p) = -Matrix::Identity(p, p);
  // Symmetric completion of the lower triangle.
  Matrix full = M;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j) full(i, j) = M(j, i);
  return full;
}

bool lmi_admissibility_check(const PlantModel& model, const Matrix& W,
                             const Matrix& V) {
  if (W.rows() != model.n() || W.cols() != model.n() || V.rows() != model.m() ||
      V.cols() != model.n()) {
    throw Error(ErrorCode::kInvalidArgument, "lmi_admissibility_check: bad shapes");
  }
  const Matrix Ws = 0.5 * (W + W.transpose());
  if (!is_pd(Ws, kPdMargin)) return false;
  const Matrix M = bounded_real_lmi_matrix(model.A(), model.B(), model.C(),
                                           model.D(), model.E(), model.gamma(), Ws, V);
  return lambda_max(M) < -1e-9;
}

}  // namespace rslqg
