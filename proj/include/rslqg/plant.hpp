#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "rslqg/matrix_kit.hpp"

namespace rslqg {

/// Minimizer feedback gain, u_t = -K x_t (m x n).
class GainK {
 public:
  GainK() = default;
  explicit GainK(Matrix m);
  const Matrix& mat() const { return mat_; }

 private:
  Matrix mat_;
};

/// Maximizer/adversary feedback gain, w_t = L x_t (q x n).
class GainL {
 public:
  GainL() = default;
  explicit GainL(Matrix m);
  const Matrix& mat() const { return mat_; }

 private:
  Matrix mat_;
};

using CostMatrix = Matrix;  // symmetric PSD value matrix P (n x n)

/// The plant/cost tuple (A, B, C, D, E, gamma, Sigma):
///   x_{t+1} = A x_t + B u_t + D w_t (+ v_t, v ~ N(0, Sigma)),
///   y_t     = C x_t + E u_t,
/// with stage weights Q = C^T C and R = E^T E and disturbance-attenuation
/// level gamma. Construction checks dimensions only; the standing
/// assumptions (Q > 0, R > 0, C^T E = 0, stabilizability) are evaluated by
/// check_assumptions so that violating models remain constructible.
class PlantModel {
 public:
  PlantModel(Matrix A, Matrix B, Matrix C, Matrix D, Matrix E, double gamma,
             Matrix sigma = Matrix());

  int n() const { return static_cast<int>(A_.rows()); }
  int m() const { return static_cast<int>(B_.cols()); }
  int q() const { return static_cast<int>(D_.cols()); }
  int p() const { return static_cast<int>(C_.rows()); }

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& C() const { return C_; }
  const Matrix& D() const { return D_; }
  const Matrix& E() const { return E_; }
  const Matrix& Q() const { return Q_; }
  const Matrix& R() const { return R_; }
  const Matrix& sigma() const { return sigma_; }
  double gamma() const { return gamma_; }

  Matrix closed_loop(const GainK& K) const { return A_ - B_ * K.mat(); }
  Matrix stage_weight(const GainK& K) const {
    return Q_ + K.mat().transpose() * R_ * K.mat();
  }

  nlohmann::json to_json() const;
  static PlantModel from_json(const nlohmann::json& j);

 private:
  Matrix A_, B_, C_, D_, E_, sigma_, Q_, R_;
  double gamma_;
};

struct AssumptionReport {
  bool q_pd = false;            // C^T C > 0
  bool r_pd = false;            // E^T E > 0
  bool cross_term_zero = false; // C^T E = 0
  bool stabilizable = false;    // PBH rank test on |lambda| >= 1 modes
  bool all() const { return q_pd && r_pd && cross_term_zero && stabilizable; }
};

AssumptionReport check_assumptions(const PlantModel& model);

/// Stabilizing solution of the bounded-real Riccati equation
///   A_cl^T U(P) A_cl - P + Q_cl = 0,
///   U(P) = P + P D (g^2 I - D^T P D)^{-1} D^T P,
/// obtained by the monotone policy iteration on the adversary gain.
/// nullopt means the closed loop (A_cl, D) has H-infinity norm >= g.
std::optional<Matrix> bounded_real_riccati(const Matrix& A_cl, const Matrix& Q_cl,
                                           const Matrix& D, double g);

/// ||T(K)||_Hinf for T(K) = (C - EK) [zI - (A - BK)]^{-1} D, by bisection on
/// the bounded-real Riccati test, bracketed by a frequency-grid estimate.
double hinf_norm(const PlantModel& model, const GainK& K);

/// Frequency-grid estimate of the same norm (4096 points plus local
/// refinement); used to bracket and cross-validate the bisection.
double hinf_norm_grid(const PlantModel& model, const GainK& K, int points = 4096);

struct Admissibility {
  bool admissible = false;
  std::string reason;                 // "", "unstable" or "hinf"
  std::optional<Matrix> certificate;  // Riccati solution P_K when admissible
};

/// Membership in the admissible set: rho(A - BK) < 1 and ||T(K)||_Hinf < gamma
/// (boundary values are inadmissible).
Admissibility is_admissible(const PlantModel& model, const GainK& K);

/// Bounded-real-lemma LMI test: W > 0 and the 4-block matrix
///   [ -W        *       *    *  ]
///   [  0     -g^2 I     *    *  ]
///   [ AW-BV     D      -W    *  ]
///   [ CW-EV     0       0  -I_p ]
/// negative definite (lambda_max < -1e-9).
bool lmi_admissibility_check(const PlantModel& model, const Matrix& W,
                             const Matrix& V);

/// The same block matrix for arbitrary system matrices; shared with the
/// initial-gain LMI solve which uses identified dynamics.
Matrix bounded_real_lmi_matrix(const Matrix& A, const Matrix& B, const Matrix& C,
                               const Matrix& D, const Matrix& E, double gamma,
                               const Matrix& W, const Matrix& V);

}  // namespace rslqg
