#include "rslqg/dual_loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rslqg {
namespace {

constexpr double kInnerEarlyStopTol = 1e-12;
constexpr double kRateDenominatorFloor = 1e-12;

double rel_err(const Matrix& X, const Matrix& ref) {
  return (X - ref).norm() / std::max(1e-300, ref.norm());
}

}  // namespace

Matrix scaled_gaussian(Rng& rng, int rows, int cols, double magnitude) {
  Matrix G = rng.gaussian_matrix(rows, cols);
  const double norm = G.norm();
  if (magnitude == 0.0 || norm == 0.0) return Matrix::Zero(rows, cols);
  return (magnitude / norm) * G;
}

InnerLoopResult inner_loop(const PlantModel& model, const GainK& K, int inner_iters,
                           const std::optional<DisturbanceSpec>& disturbance_l,
                           Rng& rng, bool record, bool allow_early_stop) {
  InnerLoopResult out;
  const Matrix A_K = model.closed_loop(K);
  const Matrix Q_K = model.stage_weight(K);
  const double g2 = model.gamma() * model.gamma();
  const int q = model.q();
  const int n = model.n();
  const bool exact = !disturbance_l.has_value();

  Matrix L = Matrix::Zero(q, n);
  Matrix P_prev;
  for (int j = 0; j < inner_iters; ++j) {
    const Matrix A_cl = A_K + model.D() * L;
    if (spectral_radius(A_cl) >= 1.0) {
      out.diverged = true;
      return out;
    }
    Matrix P;
    try {
      P = solve_dlyap(A_cl, Q_K - g2 * L.transpose() * L);
    } catch (const Error&) {
      out.diverged = true;
      return out;
    }
    const Matrix S = g2 * Matrix::Identity(q, q) - model.D().transpose() * P * model.D();
    if (lambda_min(S) <= 0.0 || P.norm() > 1e12) {
      out.diverged = true;
      out.P = P;
      out.steps_run = j + 1;
      return out;
    }
    Matrix L_next = S.ldlt().solve(model.D().transpose() * P * A_K);
    if (disturbance_l) {
      L_next += scaled_gaussian(rng, q, n, disturbance_l->magnitude);
    }
    if (record) out.steps.push_back({P, GainL(L)});
    out.P = P;
    out.L_next = GainL(L_next);
    out.steps_run = j + 1;
    if (exact && allow_early_stop && j > 0 &&
        (P - P_prev).norm() <= kInnerEarlyStopTol * std::max(1.0, P.norm())) {
      break;
    }
    P_prev = P;
    L = L_next;
  }
  return out;
}

GainK outer_step(const PlantModel& model, const CostMatrix& P,
                 const std::optional<DisturbanceSpec>& disturbance_k, Rng& rng) {
  const Matrix U = u_of_p(model, P);
  const Matrix BtU = model.B().transpose() * U;
  Matrix K = (model.R() + BtU * model.B()).ldlt().solve(BtU * model.A());
  if (disturbance_k) {
    K += scaled_gaussian(rng, model.m(), model.n(), disturbance_k->magnitude);
  }
  return GainK(K);
}

DualLoopResult run(const PlantModel& model, const DualLoopConfig& config) {
  if (config.outer_iters < 1 || config.inner_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "run: iteration counts must be >= 1");
  }
  const Admissibility init = is_admissible(model, config.k_init);
  if (!init.admissible) {
    throw Error(ErrorCode::kInvalidArgument,
                "run: initial gain is not admissible (" + init.reason + ")");
  }

  DualLoopResult result{{}, config.k_init,
                        solve_gare_value_iteration(model, 1e-12, 200000)};
  const Matrix& P_star = result.oracle.P_star;
  const Matrix& K_star = result.oracle.K_star.mat();
  Rng rng(config.rng_seed);
  const bool exact = config.exact_mode();
  const double inf = std::numeric_limits<double>::infinity();

  GainK K = config.k_init;
  for (int i = 0; i < config.outer_iters; ++i) {
    OuterStep step;
    step.K = K;
    step.rel_err_K = rel_err(K.mat(), K_star);

    const Admissibility adm = is_admissible(model, K);
    step.admissible = adm.admissible;
    if (config.compute_hinf) {
      const bool stable = adm.admissible || adm.reason != "unstable";
      step.hinf = stable ? hinf_norm(model, K) : inf;
    } else {
      step.hinf = std::numeric_limits<double>::quiet_NaN();
    }
    if (exact && !adm.admissible) {
      throw Error(ErrorCode::kNumericalFailure,
                  "run: exact-mode iterate left the admissible set");
    }

    InnerLoopResult inner =
        inner_loop(model, K, config.inner_iters, config.disturbance_l, rng,
                   config.record_inner, /*allow_early_stop=*/exact);
    step.inner_steps = inner.steps_run;
    step.inner = std::move(inner.steps);
    if (inner.P.size() > 0) {
      step.P_end = inner.P;
      step.rel_err_P = rel_err(inner.P, P_star);
    } else {
      step.rel_err_P = inf;
    }
    if (inner.diverged) {
      result.trace.outer.push_back(std::move(step));
      result.trace.diverged = true;
      break;
    }
    result.trace.outer.push_back(std::move(step));

    try {
      K = outer_step(model, result.trace.outer.back().P_end, config.disturbance_k, rng);
    } catch (const Error&) {
      if (exact) throw;
      result.trace.diverged = true;  // risk constraint lost under disturbance
      break;
    }
  }
  result.final_gain = K;
  return result;
}

RateEstimates measure_rates(const IterationTrace& trace, const CostMatrix& P_star) {
  RateEstimates rates;
  const auto& outer = trace.outer;

  double outer_max = 0.0;
  bool outer_any = false;
  for (std::size_t i = 0; i + 1 < outer.size(); ++i) {
    const double den = (outer[i].P_end - P_star).trace();
    const double num = (outer[i + 1].P_end - P_star).trace();
    if (den > kRateDenominatorFloor) {
      outer_max = std::max(outer_max, num / den);
      outer_any = true;
    }
  }
  rates.outer_rate = outer_any ? outer_max : 0.0;

  for (const OuterStep& step : outer) {
    double inner_max = 0.0;
    bool inner_any = false;
    if (!step.inner.empty()) {
      const Matrix& P_ref = step.inner.back().P;
      for (std::size_t j = 0; j + 1 < step.inner.size(); ++j) {
        const double den = (P_ref - step.inner[j].P).trace();
        const double num = (P_ref - step.inner[j + 1].P).trace();
        if (den > kRateDenominatorFloor) {
          inner_max = std::max(inner_max, num / den);
          inner_any = true;
        }
      }
    }
    rates.inner_rates.push_back(inner_any ? inner_max : 0.0);
  }
  return rates;
}

}  // namespace rslqg
