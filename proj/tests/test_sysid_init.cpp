#include <algorithm>
#include <vector>

#include <doctest.h>

#include "rslqg/experiments.hpp"
#include "rslqg/game_oracle.hpp"
#include "rslqg/sysid_init.hpp"
#include "test_support.hpp"

using namespace rslqg;

namespace {

GainK lqr_gain(const PlantModel& m) {
  const PlantModel lqr(m.A(), m.B(), m.C(), Matrix::Zero(m.n(), m.q()), m.E(), 1.0,
                       m.sigma());
  return solve_gare_value_iteration(lqr).K_star;
}

ExplorationPolicy policy_of(const PlantModel& m, const GainK& k, double sigma) {
  return {k, GainL(Matrix::Zero(m.q(), m.n())), sigma, sigma};
}

}  // namespace

TEST_CASE("identification is exact on noise-free data") {
  const PlantModel m = illustrative_model();
  const PlantModel quiet(m.A(), m.B(), m.C(), m.D(), m.E(), m.gamma(),
                         Matrix::Zero(3, 3));
  Rng rng(1);
  const DataBuffer buf = simulate(quiet, policy_of(quiet, lqr_gain(m), 1.0), 2000, rng);
  const IdentifiedModel idm = identify(buf, &quiet);
  REQUIRE(idm.residual_norm.has_value());
  CHECK(*idm.residual_norm <= 1e-10);
  CHECK((idm.A_hat - m.A()).norm() <= 1e-10);
  CHECK((idm.B_hat - m.B()).norm() <= 1e-10);
  CHECK((idm.D_hat - m.D()).norm() <= 1e-10);

  const nlohmann::json j = idm.to_json();
  CHECK(j.contains("A_hat"));
  CHECK(j.contains("residual_norm"));
}

TEST_CASE("minimal-length noisy data still identifies, with larger residual") {
  const PlantModel m = illustrative_model();
  const GainK k = lqr_gain(m);
  Rng rng_small(2), rng_large(2);
  const DataBuffer small = simulate(m, policy_of(m, k, 1.0), 9, rng_small);
  const DataBuffer large = simulate(m, policy_of(m, k, 1.0), 5000, rng_large);
  const IdentifiedModel idm_small = identify(small, &m);
  const IdentifiedModel idm_large = identify(large, &m);
  CHECK(*idm_small.residual_norm > *idm_large.residual_norm);

  DataBuffer too_short(3, 3, 3);
  Vector z(9), xn(3);
  z.setOnes();
  xn.setOnes();
  too_short.add(z, xn, 1.0);
  CHECK_THROWS_AS(identify(too_short), Error);
}

TEST_CASE("identification error shrinks with the sample count") {
  const PlantModel m = illustrative_model();
  const GainK k = lqr_gain(m);
  std::vector<double> medians;
  for (int tau : {1000, 5000, 20000}) {
    std::vector<double> errs;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(300 + trial);
      errs.push_back(*identify(simulate(m, policy_of(m, k, 1.0), tau, rng), &m)
                          .residual_norm);
    }
    std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
    medians.push_back(errs[10]);
  }
  CHECK(medians[1] <= medians[0]);
  CHECK(medians[2] <= medians[1]);
}

TEST_CASE("initial-gain LMI on the true illustrative matrices") {
  const PlantModel m = illustrative_model();
  IdentifiedModel idm{m.A(), m.B(), m.D(), 0.0};
  const LmiSolution sol = find_initial_gain(idm, m.C(), m.E(), m.gamma(), 1e-3, 1e-2);
  CHECK(sol.epsilon == 1e-3);

  // Independent verification: the raw-block LMI check and the Riccati test.
  CHECK(lmi_admissibility_check(m, sol.W, sol.V));
  CHECK(is_admissible(m, sol.K).admissible);
  CHECK((sol.K.mat() - sol.V * sol.W.inverse()).norm() <= 1e-12);

  // The norm-coupling block holds with margin mu.
  const Matrix WV2 = sol.W * sol.W + sol.V.transpose() * sol.V;
  CHECK(lambda_max(sol.mu * sol.mu * WV2) < 1.0);
}

TEST_CASE("LMI is infeasible below the attenuation limit") {
  const PlantModel m = illustrative_model();
  IdentifiedModel idm{m.A(), m.B(), m.D(), 0.0};
  // gamma_inf of this model is about 0.65.
  CHECK_THROWS_AS(find_initial_gain(idm, m.C(), m.E(), 0.3, 1e-3, 1e-2),
                  LmiInfeasibleError);
  try {
    find_initial_gain(idm, m.C(), m.E(), 0.3, 1e-3, 1e-2);
  } catch (const LmiInfeasibleError& e) {
    CHECK(e.best_margin() > 0.0);
  }
  CHECK_THROWS_AS(find_initial_gain(idm, m.C(), m.E(), 5.0, -1.0, 1e-2), Error);
}

TEST_CASE("no disturbance channel: LMI feasible at small gamma") {
  const PlantModel m = illustrative_model();
  IdentifiedModel idm{m.A(), m.B(), Matrix::Zero(3, 3), 0.0};
  const LmiSolution sol = find_initial_gain(idm, m.C(), m.E(), 0.05, 1e-4, 1e-2);
  const PlantModel no_dist(m.A(), m.B(), m.C(), Matrix::Zero(3, 3), m.E(), 0.05);
  CHECK(is_admissible(no_dist, sol.K).admissible);
}

TEST_CASE("full pipeline learns an admissible gain on the illustrative model") {
  const PlantModel m = illustrative_model();
  Rng rng(5);
  const GainK K =
      learn_initial_controller(m, policy_of(m, lqr_gain(m), 1.0), 10000, -1, -1, rng);
  CHECK(hinf_norm(m, K) < 5.0);

  // With the identified matrices themselves the gain is admissible too.
  Rng rng2(5);
  const DataBuffer buf = simulate(m, policy_of(m, lqr_gain(m), 1.0), 10000, rng2);
  const IdentifiedModel idm = identify(buf, &m);
  const PlantModel identified(idm.A_hat, idm.B_hat, m.C(), idm.D_hat, m.E(), m.gamma());
  const LmiSolution sol =
      find_initial_gain(idm, m.C(), m.E(), m.gamma(), 1e-3, 1e-2);
  CHECK(is_admissible(identified, sol.K).admissible);
}

TEST_CASE("noise-free pipeline reduces to the true-matrix solve") {
  const PlantModel m = illustrative_model();
  const PlantModel quiet(m.A(), m.B(), m.C(), m.D(), m.E(), m.gamma(),
                         Matrix::Zero(3, 3));
  Rng rng(6);
  const GainK learned =
      learn_initial_controller(quiet, policy_of(quiet, lqr_gain(m), 1.0), 5000, -1, -1, rng);
  const GainK direct = initial_gain_from_model(quiet);
  CHECK((learned.mat() - direct.mat()).norm() <=
        1e-6 * std::max(1.0, direct.mat().norm()));
}

TEST_CASE("a starved pipeline fails with a stage label") {
  const PlantModel m = illustrative_model();
  Rng rng(7);
  try {
    learn_initial_controller(m, policy_of(m, lqr_gain(m), 1.0), 10, -1, -1, rng);
    CHECK(false);  // 10 noisy samples cannot support an admissible design
  } catch (const Error& e) {
    CHECK(doctest::String(e.what()).find("learn_initial_controller") !=
          doctest::String::npos);
  }
}
