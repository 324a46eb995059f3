#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rslqg/game_oracle.hpp"
#include "rslqg/plant.hpp"
#include "rslqg/rng.hpp"

namespace rslqg {

/// Update disturbance: entrywise standard Gaussian, rescaled so the Frobenius
/// norm equals `magnitude` exactly.
struct DisturbanceSpec {
  double magnitude = 0.0;
};

struct DualLoopConfig {
  int outer_iters = 10;
  int inner_iters = 20;
  GainK k_init;
  std::optional<DisturbanceSpec> disturbance_k;  // added to each outer update
  std::optional<DisturbanceSpec> disturbance_l;  // added to each inner update
  std::uint64_t rng_seed = 0;
  bool record_inner = false;  // keep per-j cost matrices and adversary gains
  bool compute_hinf = true;   // record the closed-loop Hinf norm per outer step

  bool exact_mode() const { return !disturbance_k && !disturbance_l; }
};

struct InnerStep {
  CostMatrix P;
  GainL L;
};

struct OuterStep {
  GainK K;            // gain in force during this outer step
  CostMatrix P_end;   // value matrix after the final inner iteration
  double rel_err_K = 0.0;
  double rel_err_P = 0.0;
  double hinf = 0.0;  // +inf when the closed loop is unstable, NaN if skipped
  bool admissible = false;
  int inner_steps = 0;
  std::vector<InnerStep> inner;  // populated when record_inner
};

struct IterationTrace {
  std::vector<OuterStep> outer;
  bool diverged = false;  // a disturbed run left the admissible set and blew up
};

struct DualLoopResult {
  IterationTrace trace;
  GainK final_gain;      // gain produced by the last outer update
  GameSolution oracle;   // ground truth behind the relative-error columns
};

struct InnerLoopResult {
  CostMatrix P;       // value after the last completed iteration
  GainL L_next;       // adversary gain the next iteration would use
  std::vector<InnerStep> steps;
  int steps_run = 0;
  bool diverged = false;
};

/// Inner loop: from L_1 = 0, alternate the Lyapunov evaluation of the
/// adversary and its gain update, optionally injecting a disturbance into
/// each gain update. Instability mid-loop truncates the result instead of
/// throwing (it can only happen with oversized disturbances).
InnerLoopResult inner_loop(const PlantModel& model, const GainK& K, int inner_iters,
                           const std::optional<DisturbanceSpec>& disturbance_l,
                           Rng& rng, bool record = false,
                           bool allow_early_stop = true);

/// Outer update K' = (R + B^T U B)^{-1} B^T U A (+ disturbance), with
/// U = u_of_p(P).
GainK outer_step(const PlantModel& model, const CostMatrix& P,
                 const std::optional<DisturbanceSpec>& disturbance_k, Rng& rng);

/// Full dual-loop run. In exact mode every iterate is asserted admissible;
/// in disturbed mode escapes are flagged in the trace and the run continues
/// until the iteration budget or a blow-up.
DualLoopResult run(const PlantModel& model, const DualLoopConfig& config);

/// Empirical contraction factors measured from an exact-mode trace recorded
/// with inner steps: the outer factor max_i Tr(P_{i+1}-P*)/Tr(P_i-P*) and one
/// inner factor per outer step. Ratios with degenerate denominators are
/// skipped; an all-skipped sequence reports 0.
struct RateEstimates {
  double outer_rate = 0.0;                // Theorem-1 style factor
  std::vector<double> inner_rates;        // Theorem-2 style factor per outer step
};

RateEstimates measure_rates(const IterationTrace& trace, const CostMatrix& P_star);

/// Entrywise standard Gaussian matrix rescaled to the given Frobenius norm.
Matrix scaled_gaussian(Rng& rng, int rows, int cols, double magnitude);

}  // namespace rslqg
