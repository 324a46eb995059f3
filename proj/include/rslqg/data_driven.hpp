#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "rslqg/dual_loop.hpp"
#include "rslqg/game_oracle.hpp"
#include "rslqg/plant.hpp"
#include "rslqg/rng.hpp"

namespace rslqg {

/// Fixed exploratory policy generating the training data:
///   u_t = -K_exp x_t + sigma1 xi1,  w_t = L_exp x_t + sigma2 xi2.
struct ExplorationPolicy {
  GainK k_exp;
  GainL l_exp;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

/// Time-indexed records (z_t, x_{t+1}, r_t) with z = [x; u; w] and stage cost
/// r = x^T Q x + u^T R u - gamma^2 w^T w. Immutable after collection.
class DataBuffer {
 public:
  DataBuffer(int n, int m, int q) : n_(n), m_(m), q_(q) {}

  void add(const Vector& z, const Vector& x_next, double r);

  int size() const { return static_cast<int>(z_.size()); }
  int n() const { return n_; }
  int m() const { return m_; }
  int q() const { return q_; }
  const Vector& z(int t) const { return z_[t]; }
  const Vector& x_next(int t) const { return x_next_[t]; }
  double r(int t) const { return r_[t]; }

  /// FNV-1a over the raw samples; used to assert the single-pass (off-policy)
  /// property.
  std::uint64_t fingerprint() const;

  void to_csv(std::ostream& os) const;
  static DataBuffer from_csv(std::istream& is);

 private:
  int n_, m_, q_;
  std::vector<Vector> z_, x_next_;
  std::vector<double> r_;
};

/// Sample-average data operators (or their exact idealizations). Both forms
/// reduce to the affine maps actually consumed by the updates:
///   vecs(Gamma(X)) = gamma_lin vecs(X) + gamma_aff,
///   vecs(Omega(Y)) = omega_lin vecs(Y).
struct EstimatedOperators {
  int n = 0, m = 0, q = 0;
  bool ideal = false;

  Matrix phi_hat;  // (n2+1) x (n2+1), empty when ideal
  Matrix xi_hat;   // (n2+1) x n(n+1)/2
  Vector psi_hat;  // n2+1

  Matrix gamma_lin;
  Vector gamma_aff;
  Matrix gamma_ww_lin;  // independent row-slice reconstruction of the ww block
  Vector gamma_ww_aff;
  Matrix omega_lin;

  double excitation = 0.0;  // sigma_min/sigma_max of phi_hat (1 when ideal)

  int n2() const { return sym_size(n + m + q); }
  int n1() const { return n2() + 1 - sym_size(q); }
};

/// Simulate the noisy game system under the exploratory policy. The first 200
/// samples are discarded as stationarity burn-in; the returned buffer holds
/// exactly `tau` records. `x0` overrides the N(0, I) initial state.
DataBuffer simulate(const PlantModel& model, const ExplorationPolicy& policy, int tau,
                    Rng& rng, const std::optional<Vector>& x0 = std::nullopt);

EstimatedOperators build_operators(const DataBuffer& buffer);

/// Exact operators assembled from the true model; the oracle the sampled
/// estimators converge to.
EstimatedOperators ideal_operators(const PlantModel& model);

/// Estimated quadratic-form kernel Gamma(X) over [x; u; w].
Matrix gamma_hat(const EstimatedOperators& ops, const Matrix& X);

/// The ww block reconstructed through the dedicated row range; consistent
/// with the corresponding block of gamma_hat.
Matrix gamma_ww_hat(const EstimatedOperators& ops, const Matrix& X);

/// Estimated Omega(Y) = D Y D^T, available without knowing D.
Matrix omega_hat(const EstimatedOperators& ops, const Matrix& Y);

struct PolicyValueSolve {
  CostMatrix P;
  double residual = 0.0;  // least-squares residual relative to the rhs norm
};

/// Value matrix of the pair (K, L) from data: the overdetermined linear
/// system in vecs(P) solved in the least-squares sense.
PolicyValueSolve solve_p_data(const EstimatedOperators& ops, const GainK& K,
                              const GainL& L);

GainL update_l_data(const EstimatedOperators& ops, const CostMatrix& P,
                    const GainK& K);

GainK update_k_data(const EstimatedOperators& ops, const CostMatrix& P);

struct LearnConfig {
  int outer_iters = 10;
  int inner_iters = 20;
  int tau = 5000;
  GainK k_init;
  std::uint64_t rng_seed = 0;
  bool record_inner = false;
  bool compute_hinf = true;
};

struct LearningResult {
  IterationTrace trace;
  GainK final_gain;
  GameSolution oracle;
  double max_ls_residual = 0.0;
  std::uint64_t buffer_fingerprint = 0;
};

/// One data-collection pass followed by the dual loop driven purely by the
/// estimated operators. Relative errors and Hinf values in the trace are
/// evaluations against the true model; the learner itself never touches it.
LearningResult run_learning(const PlantModel& model, const ExplorationPolicy& policy,
                            const LearnConfig& config);

/// Same loop on externally supplied operators (e.g. the ideal ones); no
/// simulation happens.
LearningResult run_learning_with_ops(const PlantModel& model,
                                     const EstimatedOperators& ops,
                                     const LearnConfig& config);

}  // namespace rslqg
