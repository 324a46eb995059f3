#include <doctest.h>

#include "rslqg/experiments.hpp"
#include "rslqg/game_oracle.hpp"
#include "rslqg/plant.hpp"
#include "rslqg/sysid_init.hpp"
#include "test_support.hpp"

using namespace rslqg;
using test_support::random_admissible_model;

namespace {

// Scalar plant x+ = a x + d w, y = x (the control channel is inert).
PlantModel scalar_plant(double a, double d, double gamma) {
  Matrix A(1, 1), B(1, 1), C(1, 1), D(1, 1), E(1, 1);
  A << a;
  B << 0;
  C << 1;
  D << d;
  E << 0;
  return PlantModel(A, B, C, D, E, gamma);
}

}  // namespace

TEST_CASE("PlantModel validates shapes and exposes Q, R") {
  const PlantModel m = illustrative_model();
  CHECK(m.n() == 3);
  CHECK(m.m() == 3);
  CHECK(m.q() == 3);
  CHECK(m.p() == 6);
  CHECK((m.Q() - Matrix::Identity(3, 3)).norm() == 0.0);
  CHECK((m.R() - Matrix::Identity(3, 3)).norm() == 0.0);

  CHECK_THROWS_AS(PlantModel(Matrix::Zero(2, 3), Matrix::Zero(2, 1),
                             Matrix::Zero(1, 2), Matrix::Zero(2, 1),
                             Matrix::Zero(1, 1), 1.0),
                  Error);
  CHECK_THROWS_AS(PlantModel(Matrix::Zero(2, 2), Matrix::Zero(3, 1),
                             Matrix::Zero(1, 2), Matrix::Zero(2, 1),
                             Matrix::Zero(1, 1), 1.0),
                  Error);
  CHECK_THROWS_AS(PlantModel(Matrix::Zero(2, 2), Matrix::Zero(2, 1),
                             Matrix::Zero(1, 2), Matrix::Zero(2, 1),
                             Matrix::Zero(1, 1), -1.0),
                  Error);
}

TEST_CASE("PlantModel JSON round trip") {
  const PlantModel m = cartpole_model();
  const PlantModel back = PlantModel::from_json(m.to_json());
  CHECK((m.A() - back.A()).norm() == 0.0);
  CHECK((m.B() - back.B()).norm() == 0.0);
  CHECK((m.C() - back.C()).norm() == 0.0);
  CHECK((m.D() - back.D()).norm() == 0.0);
  CHECK((m.E() - back.E()).norm() == 0.0);
  CHECK((m.sigma() - back.sigma()).norm() == 0.0);
  CHECK(m.gamma() == back.gamma());
  CHECK_THROWS_AS(PlantModel::from_json(nlohmann::json{{"A", 1}}), Error);
}

TEST_CASE("check_assumptions on the paper model and on broken models") {
  CHECK(check_assumptions(illustrative_model()).all());
  CHECK(check_assumptions(cartpole_model()).all());

  const PlantModel m = illustrative_model();
  const PlantModel no_output(m.A(), m.B(), Matrix::Zero(6, 3), m.D(), m.E(),
                             m.gamma());
  CHECK(!check_assumptions(no_output).q_pd);
  CHECK(check_assumptions(no_output).r_pd);

  // Unstable A with no control authority is not stabilizable.
  const PlantModel hopeless(m.A(), Matrix::Zero(3, 3), m.C(), m.D(), m.E(),
                            m.gamma());
  CHECK(!check_assumptions(hopeless).stabilizable);
}

TEST_CASE("hinf_norm: zero channel, scalar peak, paper model") {
  const PlantModel m = illustrative_model();
  const PlantModel no_dist(m.A(), m.B(), m.C(), Matrix::Zero(3, 3), m.E(),
                           m.gamma());
  const GainK stabilizing = initial_gain_from_model(m);
  CHECK(hinf_norm(no_dist, stabilizing) == 0.0);

  // x+ = 0.5 x + w, y = x peaks at z = 1 with gain 1/(1-0.5) = 2.
  const PlantModel sc = scalar_plant(0.5, 1.0, 5.0);
  const GainK k0{Matrix::Zero(1, 1)};
  CHECK(hinf_norm(sc, k0) == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(hinf_norm_grid(sc, k0) == doctest::Approx(2.0).epsilon(1e-6));

  const GameSolution sol = solve_gare_value_iteration(m);
  CHECK(hinf_norm(m, sol.K_star) < 5.0);

  CHECK_THROWS_AS(hinf_norm(m, GainK(Matrix::Zero(3, 3))), Error);  // rho(A) = 1
}

TEST_CASE("hinf bisection agrees with the frequency grid") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rm = random_admissible_model(rng, 2 + trial % 3, 1 + trial % 2,
                                            1 + trial % 3);
    const double bisect = hinf_norm(rm.model, rm.k0);
    const double grid = hinf_norm_grid(rm.model, rm.k0);
    CHECK(std::abs(bisect - grid) <= 1e-4 * (1.0 + grid));
  }
}

TEST_CASE("is_admissible covers both rejection reasons and certifies") {
  const PlantModel m = illustrative_model();
  const GameSolution sol = solve_gare_value_iteration(m);

  const Admissibility good = is_admissible(m, sol.K_star);
  CHECK(good.admissible);
  REQUIRE(good.certificate.has_value());
  // The certificate is the policy value matrix of K*.
  CHECK((*good.certificate - sol.P_star).norm() <= 1e-6 * sol.P_star.norm());

  const Admissibility unstable = is_admissible(m, GainK(Matrix::Zero(3, 3)));
  CHECK(!unstable.admissible);
  CHECK(unstable.reason == "unstable");

  // Same gain, tighter attenuation level: stable but the norm bound fails.
  const PlantModel tight(m.A(), m.B(), m.C(), m.D(), m.E(), 0.01);
  const Admissibility hinf_fail = is_admissible(tight, sol.K_star);
  CHECK(!hinf_fail.admissible);
  CHECK(hinf_fail.reason == "hinf");
}

TEST_CASE("admissibility is monotone in gamma") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rm = random_admissible_model(rng, 2 + trial % 3, 1, 2);
    REQUIRE(is_admissible(rm.model, rm.k0).admissible);
    const PlantModel wider(rm.model.A(), rm.model.B(), rm.model.C(), rm.model.D(),
                           rm.model.E(), 1.7 * rm.model.gamma());
    CHECK(is_admissible(wider, rm.k0).admissible);
  }
}

TEST_CASE("bounded-real LMI check accepts Riccati-built certificates") {
  const PlantModel m = illustrative_model();
  CHECK(!lmi_admissibility_check(m, -Matrix::Identity(3, 3), Matrix::Zero(3, 3)));

  const GainK K = initial_gain_from_model(m);
  // A strict-inequality solution: solve the bounded-real equation with an
  // inflated stage weight, giving slack for the original one.
  const Matrix A_K = m.closed_loop(K);
  const Matrix C_K = m.C() - m.E() * K.mat();
  const auto P = bounded_real_riccati(
      A_K, C_K.transpose() * C_K + 0.05 * Matrix::Identity(3, 3), m.D(), m.gamma());
  REQUIRE(P.has_value());
  const Matrix W = P->inverse();
  CHECK(lmi_admissibility_check(m, W, K.mat() * W));
}

TEST_CASE("bounded-real lemma: Riccati, strict-inequality and LMI tests agree") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rm = random_admissible_model(rng, 2 + trial % 3, 1 + trial % 2, 2);
    const PlantModel& m = rm.model;
    const GainK& K = rm.k0;

    const Admissibility riccati = is_admissible(m, K);
    REQUIRE(riccati.admissible);

    // Statement 3 with P_K + eps I.
    const Matrix P_K = *riccati.certificate;
    const double eps = 1e-6 * (1.0 + P_K.norm());
    const Matrix P_eps = P_K + eps * Matrix::Identity(m.n(), m.n());
    const Matrix S = m.gamma() * m.gamma() * Matrix::Identity(m.q(), m.q()) -
                     m.D().transpose() * P_eps * m.D();
    REQUIRE(lambda_min(S) > 0.0);
    const Matrix A_K = m.closed_loop(K);
    const Matrix U = u_of_p(m, P_eps);
    const Matrix ineq =
        A_K.transpose() * U * A_K - P_eps + m.stage_weight(K);
    CHECK(lambda_max(ineq) < 0.0);

    // Statement 4 via the LMI with W built from a strict solution.
    const Matrix C_K = m.C() - m.E() * K.mat();
    const auto P_strict = bounded_real_riccati(
        A_K,
        C_K.transpose() * C_K + 1e-3 * (1.0 + P_K.norm()) * Matrix::Identity(m.n(), m.n()),
        m.D(), m.gamma());
    REQUIRE(P_strict.has_value());
    const Matrix W = P_strict->inverse();
    CHECK(lmi_admissibility_check(m, W, K.mat() * W));
  }
}
