#include "rslqg/data_driven.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

namespace rslqg {
namespace {

constexpr int kBurnInSamples = 200;
constexpr double kExcitationFloor = 1e-10;
constexpr double kTrajectoryBound = 1e9;

void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

Matrix psd_sqrt(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  Vector lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// Diagonal of T_n^T T_n: 1 for diagonal entries of the matrix, 2 otherwise.
Vector duplication_gram_diagonal(int n) {
  Vector d(sym_size(n));
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) d(k++) = (i == j) ? 1.0 : 2.0;
  return d;
}

void require_excited(const EstimatedOperators& ops, const char* where) {
  if (!ops.ideal && ops.excitation <= kExcitationFloor) {
    throw Error(ErrorCode::kInsufficientExcitation,
                std::string(where) + ": sample second-moment matrix is singular");
  }
}

}  // namespace

void DataBuffer::add(const Vector& z, const Vector& x_next, double r) {
  if (z.size() != n_ + m_ + q_ || x_next.size() != n_) {
    throw Error(ErrorCode::kInvalidArgument, "DataBuffer::add: bad record shape");
  }
  z_.push_back(z);
  x_next_.push_back(x_next);
  r_.push_back(r);
}

std::uint64_t DataBuffer::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (std::size_t t = 0; t < z_.size(); ++t) {
    for (int i = 0; i < z_[t].size(); ++i) mix(z_[t](i));
    for (int i = 0; i < x_next_[t].size(); ++i) mix(x_next_[t](i));
    mix(r_[t]);
  }
  return h;
}

void DataBuffer::to_csv(std::ostream& os) const {
  os << "t";
  for (int i = 0; i < n_; ++i) os << ",x" << i;
  for (int i = 0; i < m_; ++i) os << ",u" << i;
  for (int i = 0; i < q_; ++i) os << ",w" << i;
  for (int i = 0; i < n_; ++i) os << ",xn" << i;
  os << ",r\n";
  for (int t = 0; t < size(); ++t) {
    os << t;
    for (int i = 0; i < z_[t].size(); ++i) {
      os << ',';
      write_double(os, z_[t](i));
    }
    for (int i = 0; i < n_; ++i) {
      os << ',';
      write_double(os, x_next_[t](i));
    }
    os << ',';
    write_double(os, r_[t]);
    os << '\n';
  }
}

DataBuffer DataBuffer::from_csv(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) {
    throw Error(ErrorCode::kInvalidArgument, "DataBuffer::from_csv: empty input");
  }
  int n = 0, m = 0, q = 0;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("xn", 0) == 0) continue;  // counted via n
      if (col.rfind('x', 0) == 0) ++n;
      if (col.rfind('u', 0) == 0) ++m;
      if (col.rfind('w', 0) == 0) ++q;
    }
  }
  if (n <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "DataBuffer::from_csv: bad header");
  }
  DataBuffer buf(n, m, q);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // t (implicit by order)
    Vector z(n + m + q), xn(n);
    for (int i = 0; i < n + m + q; ++i) {
      std::getline(ss, field, ',');
      z(i) = std::stod(field);
    }
    for (int i = 0; i < n; ++i) {
      std::getline(ss, field, ',');
      xn(i) = std::stod(field);
    }
    std::getline(ss, field, ',');
    buf.add(z, xn, std::stod(field));
  }
  return buf;
}

DataBuffer simulate(const PlantModel& model, const ExplorationPolicy& policy, int tau,
                    Rng& rng, const std::optional<Vector>& x0) {
  if (tau < 1) throw Error(ErrorCode::kInvalidArgument, "simulate: tau must be >= 1");
  const int n = model.n(), m = model.m(), q = model.q();
  const Matrix noise_sqrt = psd_sqrt(model.sigma());
  const bool has_noise = model.sigma().norm() > 0.0;

  DataBuffer buf(n, m, q);
  Vector x = x0 ? *x0 : rng.gaussian_vector(n);
  for (int t = 0; t < kBurnInSamples + tau; ++t) {
    // Draw order per step: control noise, adversary noise, process noise.
    const Vector u = -policy.k_exp.mat() * x + policy.sigma1 * rng.gaussian_vector(m);
    const Vector w = policy.l_exp.mat() * x + policy.sigma2 * rng.gaussian_vector(q);
    Vector x_next = model.A() * x + model.B() * u + model.D() * w;
    if (has_noise) x_next += noise_sqrt * rng.gaussian_vector(n);
    if (x_next.norm() > kTrajectoryBound) {
      throw Error(ErrorCode::kUnstableExploration,
                  "simulate: trajectory blow-up at step " + std::to_string(t));
    }
    if (t >= kBurnInSamples) {
      Vector z(n + m + q);
      z << x, u, w;
      const double r = x.dot(model.Q() * x) + u.dot(model.R() * u) -
                       model.gamma() * model.gamma() * w.squaredNorm();
      buf.add(z, x_next, r);
    }
    x = x_next;
  }
  return buf;
}

EstimatedOperators build_operators(const DataBuffer& buffer) {
  if (buffer.size() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "build_operators: empty buffer");
  }
  const int n = buffer.n(), m = buffer.m(), q = buffer.q();
  EstimatedOperators ops;
  ops.n = n;
  ops.m = m;
  ops.q = q;
  const int n2 = ops.n2();
  const int sn = sym_size(n);
  const double tau = buffer.size();

  ops.phi_hat = Matrix::Zero(n2 + 1, n2 + 1);
  ops.xi_hat = Matrix::Zero(n2 + 1, sn);
  ops.psi_hat = Vector::Zero(n2 + 1);
  Vector zbar(n2 + 1);
  for (int t = 0; t < buffer.size(); ++t) {
    zbar << vecv(buffer.z(t)), 1.0;
    ops.phi_hat.noalias() += zbar * zbar.transpose() / tau;
    ops.xi_hat.noalias() += zbar * vecv(buffer.x_next(t)).transpose() / tau;
    ops.psi_hat.noalias() += zbar * (buffer.r(t) / tau);
  }

  // The entries of vecv(z) span many orders of magnitude (state vs squared
  // input scales), so the rank decision is made on the diagonally normalized
  // matrix; the pseudo-inverse is mapped back through the same scaling.
  Vector scale = ops.phi_hat.diagonal().cwiseMax(1e-300).cwiseSqrt();
  const Matrix phi_scaled =
      scale.cwiseInverse().asDiagonal() * ops.phi_hat * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Matrix> svd(phi_scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  ops.excitation = sv(sv.size() - 1) / std::max(1e-300, sv(0));
  const double cutoff = kExcitationFloor * sv(0);
  Vector inv = sv;
  for (int i = 0; i < sv.size(); ++i) inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  const Matrix phi_pinv = scale.cwiseInverse().asDiagonal() * svd.matrixV() *
                          inv.asDiagonal() * svd.matrixU().transpose() *
                          scale.cwiseInverse().asDiagonal();

  ops.gamma_lin = phi_pinv.topRows(n2) * ops.xi_hat;
  ops.gamma_aff = phi_pinv.topRows(n2) * ops.psi_hat;
  const int ww_rows = sym_size(q);
  const Matrix phi_pinv_ww = phi_pinv.middleRows(ops.n1() - 1, ww_rows);
  ops.gamma_ww_lin = phi_pinv_ww * ops.xi_hat;
  ops.gamma_ww_aff = phi_pinv_ww * ops.psi_hat;

  const Vector gram_n_inv = duplication_gram_diagonal(n).cwiseInverse();
  const Vector gram_q = duplication_gram_diagonal(q);
  ops.omega_lin = gram_n_inv.asDiagonal() * ops.xi_hat.transpose() *
                  phi_pinv_ww.transpose() * gram_q.asDiagonal();
  return ops;
}

EstimatedOperators ideal_operators(const PlantModel& model) {
  const int n = model.n(), m = model.m(), q = model.q();
  const int N = n + m + q;
  EstimatedOperators ops;
  ops.n = n;
  ops.m = m;
  ops.q = q;
  ops.ideal = true;
  ops.excitation = 1.0;

  Matrix Z(n, N);
  Z << model.A(), model.B(), model.D();
  const DuplicationMatrix Tn = duplication(n);
  const DuplicationMatrix TN = duplication(N);
  const DuplicationMatrix Tq = duplication(q);

  ops.gamma_lin = TN.pinv * kron(Z.transpose(), Z.transpose()) * Tn.T;
  Matrix blk = Matrix::Zero(N, N);
  blk.block(0, 0, n, n) = model.Q();
  blk.block(n, n, m, m) = model.R();
  blk.block(n + m, n + m, q, q) =
      -model.gamma() * model.gamma() * Matrix::Identity(q, q);
  ops.gamma_aff = vecs(blk).entries;
  ops.gamma_ww_lin = ops.gamma_lin.bottomRows(sym_size(q));
  ops.gamma_ww_aff = ops.gamma_aff.tail(sym_size(q));
  ops.omega_lin = Tn.pinv * kron(model.D(), model.D()) * Tq.T;
  return ops;
}

Matrix gamma_hat(const EstimatedOperators& ops, const Matrix& X) {
  require_excited(ops, "gamma_hat");
  const Vector v = ops.gamma_lin * vecs(X).entries + ops.gamma_aff;
  return unvecs(v, ops.n + ops.m + ops.q);
}

Matrix gamma_ww_hat(const EstimatedOperators& ops, const Matrix& X) {
  require_excited(ops, "gamma_ww_hat");
  const Vector v = ops.gamma_ww_lin * vecs(X).entries + ops.gamma_ww_aff;
  return unvecs(v, ops.q);
}

Matrix omega_hat(const EstimatedOperators& ops, const Matrix& Y) {
  require_excited(ops, "omega_hat");
  if (Y.rows() != ops.q || Y.cols() != ops.q) {
    throw Error(ErrorCode::kInvalidArgument, "omega_hat: Y must be q x q");
  }
  return unvecs(Vector(ops.omega_lin * vecs(Y).entries), ops.n);
}

PolicyValueSolve solve_p_data(const EstimatedOperators& ops, const GainK& K,
                              const GainL& L) {
  require_excited(ops, "solve_p_data");
  const int n = ops.n, m = ops.m, q = ops.q;
  const int N = n + m + q;
  Matrix M(n, N);
  M << Matrix::Identity(n, n), -K.mat().transpose(), L.mat().transpose();

  const DuplicationMatrix Tn = duplication(n);
  const DuplicationMatrix TN = duplication(N);
  const Matrix MM_TN = kron(M, M) * TN.T;  // n^2 x n2
  const Matrix lhs = MM_TN * ops.gamma_lin - Tn.T;
  const Vector rhs = -(MM_TN * ops.gamma_aff);

  Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
  if (qr.rank() < sym_size(n)) {
    throw Error(ErrorCode::kInsufficientExcitation,
                "solve_p_data: value equation is rank deficient");
  }
  const Vector x = qr.solve(rhs);
  PolicyValueSolve out;
  out.P = unvecs(x, n);
  out.residual = (lhs * x - rhs).norm() / std::max(1e-300, rhs.norm());
  return out;
}

GainL update_l_data(const EstimatedOperators& ops, const CostMatrix& P,
                    const GainK& K) {
  const Matrix G = gamma_hat(ops, P);
  const int n = ops.n, m = ops.m, q = ops.q;
  const Matrix ww = G.block(n + m, n + m, q, q);
  if (lambda_max(ww) >= 0.0) {
    throw Error(ErrorCode::kRiskInfeasible,
                "update_l_data: estimated Gamma_ww is not negative definite");
  }
  const Matrix wx = G.block(n + m, 0, q, n);
  const Matrix wu = G.block(n + m, n, q, m);
  return GainL(Matrix((-ww).ldlt().solve(wx - wu * K.mat())));
}

GainK update_k_data(const EstimatedOperators& ops, const CostMatrix& P) {
  const Matrix G = gamma_hat(ops, P);
  const int n = ops.n, m = ops.m, q = ops.q;
  const Matrix ww = G.block(n + m, n + m, q, q);
  if (lambda_max(ww) >= 0.0) {
    throw Error(ErrorCode::kRiskInfeasible,
                "update_k_data: estimated Gamma_ww is not negative definite");
  }
  const Matrix ww_inv = ww.ldlt().solve(Matrix::Identity(q, q));
  const Matrix U =
      symmetrize(P - P * omega_hat(ops, 0.5 * (ww_inv + ww_inv.transpose())) * P,
                 "update_k_data U");
  const Matrix GU = gamma_hat(ops, U);
  const Matrix uu = GU.block(n, n, m, m);
  if (lambda_min(uu) <= 0.0) {
    throw Error(ErrorCode::kIllConditioned,
                "update_k_data: estimated Gamma_uu is not positive definite");
  }
  const Matrix ux = GU.block(n, 0, m, n);
  return GainK(Matrix(uu.ldlt().solve(ux)));
}

namespace {

LearningResult learning_loop(const PlantModel& model, const EstimatedOperators& ops,
                             const LearnConfig& config,
                             std::uint64_t buffer_fingerprint,
                             const DataBuffer* buffer) {
  if (config.outer_iters < 1 || config.inner_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "run_learning: iteration counts must be >= 1");
  }
  const Admissibility init = is_admissible(model, config.k_init);
  if (!init.admissible) {
    throw Error(ErrorCode::kInvalidArgument,
                "run_learning: initial gain is not admissible (" + init.reason + ")");
  }

  LearningResult result;
  result.oracle = solve_gare_value_iteration(model, 1e-12, 200000);
  result.buffer_fingerprint = buffer_fingerprint;
  const Matrix& P_star = result.oracle.P_star;
  const Matrix& K_star = result.oracle.K_star.mat();
  const double inf = std::numeric_limits<double>::infinity();

  GainK K = config.k_init;
  for (int i = 0; i < config.outer_iters; ++i) {
    OuterStep step;
    step.K = K;
    step.rel_err_K = (K.mat() - K_star).norm() / std::max(1e-300, K_star.norm());
    const Admissibility adm = is_admissible(model, K);
    step.admissible = adm.admissible;
    if (config.compute_hinf) {
      const bool stable = adm.admissible || adm.reason != "unstable";
      step.hinf = stable ? hinf_norm(model, K) : inf;
    } else {
      step.hinf = std::numeric_limits<double>::quiet_NaN();
    }

    GainL L(Matrix::Zero(model.q(), model.n()));
    CostMatrix P;
    for (int j = 0; j < config.inner_iters; ++j) {
      PolicyValueSolve sol = solve_p_data(ops, K, L);
      P = sol.P;
      result.max_ls_residual = std::max(result.max_ls_residual, sol.residual);
      if (config.record_inner) step.inner.push_back({P, L});
      step.inner_steps = j + 1;
      L = update_l_data(ops, P, K);
    }
    step.P_end = P;
    step.rel_err_P = (P - P_star).norm() / std::max(1e-300, P_star.norm());
    result.trace.outer.push_back(std::move(step));

    K = update_k_data(ops, P);
    // Off-policy: the data pass is never revisited, so the fingerprint must
    // not move.
    if (buffer && buffer->fingerprint() != buffer_fingerprint) {
      throw Error(ErrorCode::kNumericalFailure,
                  "run_learning: data buffer changed during learning");
    }
  }
  result.final_gain = K;
  return result;
}

}  // namespace

LearningResult run_learning(const PlantModel& model, const ExplorationPolicy& policy,
                            const LearnConfig& config) {
  Rng rng(config.rng_seed);
  const DataBuffer buffer = simulate(model, policy, config.tau, rng);
  const EstimatedOperators ops = build_operators(buffer);
  return learning_loop(model, ops, config, buffer.fingerprint(), &buffer);
}

LearningResult run_learning_with_ops(const PlantModel& model,
                                     const EstimatedOperators& ops,
                                     const LearnConfig& config) {
  return learning_loop(model, ops, config, 0, nullptr);
}

}  // namespace rslqg
