#include <algorithm>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "rslqg/data_driven.hpp"
#include "rslqg/experiments.hpp"
#include "rslqg/sysid_init.hpp"
#include "test_support.hpp"

using namespace rslqg;

namespace {

// The quadratic-form kernel assembled directly from the model; the oracle the
// estimators are tested against.
Matrix gamma_direct(const PlantModel& m, const Matrix& X) {
  const int n = m.n(), mm = m.m(), q = m.q();
  Matrix G(n + mm + q, n + mm + q);
  G.block(0, 0, n, n) = m.A().transpose() * X * m.A() + m.Q();
  G.block(0, n, n, mm) = m.A().transpose() * X * m.B();
  G.block(0, n + mm, n, q) = m.A().transpose() * X * m.D();
  G.block(n, 0, mm, n) = m.B().transpose() * X * m.A();
  G.block(n, n, mm, mm) = m.B().transpose() * X * m.B() + m.R();
  G.block(n, n + mm, mm, q) = m.B().transpose() * X * m.D();
  G.block(n + mm, 0, q, n) = m.D().transpose() * X * m.A();
  G.block(n + mm, n, q, mm) = m.D().transpose() * X * m.B();
  G.block(n + mm, n + mm, q, q) =
      m.D().transpose() * X * m.D() -
      m.gamma() * m.gamma() * Matrix::Identity(q, q);
  return G;
}

ExplorationPolicy default_policy(const PlantModel& m, const GainK& k, double sigma) {
  return {k, GainL(Matrix::Zero(m.q(), m.n())), sigma, sigma};
}

}  // namespace

TEST_CASE("simulate: unforced stable system from the origin stays at zero") {
  const PlantModel m = illustrative_model();
  const PlantModel quiet(m.A(), m.B(), m.C(), m.D(), m.E(), m.gamma(),
                         Matrix::Zero(3, 3));
  const GainK k = initial_gain_from_model(m);
  Rng rng(1);
  const DataBuffer buf =
      simulate(quiet, default_policy(quiet, k, 0.0), 50, rng, Vector::Zero(3));
  REQUIRE(buf.size() == 50);
  for (int t = 0; t < buf.size(); ++t) {
    CHECK(buf.z(t).norm() == 0.0);
    CHECK(buf.x_next(t).norm() == 0.0);
    CHECK(buf.r(t) == 0.0);
  }
}

TEST_CASE("simulate flags exploding trajectories") {
  const PlantModel m = illustrative_model();
  Rng rng(2);
  try {
    simulate(m, default_policy(m, GainK(Matrix::Zero(3, 3)), 1.0), 5000, rng);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnstableExploration);
  }
}

TEST_CASE("build_operators on a single hand-made record") {
  DataBuffer buf(1, 1, 1);
  Vector z(3);
  z << 1, 1, 1;
  Vector xn(1);
  xn << 1;
  buf.add(z, xn, 1.0);
  const EstimatedOperators ops = build_operators(buf);
  Vector zbar(7);
  zbar << 1, 2, 2, 1, 2, 1, 1;  // [vecv(z); 1]
  CHECK((ops.phi_hat - zbar * zbar.transpose()).norm() <= 1e-14 * ops.phi_hat.norm());
  CHECK((ops.xi_hat - zbar * Vector::Ones(1).transpose()).norm() <= 1e-14);
  CHECK((ops.psi_hat - zbar).norm() <= 1e-14);
}

TEST_CASE("two long independent buffers agree on the dominant moments") {
  const PlantModel m = illustrative_model();
  const GainK k = initial_gain_from_model(m);
  Rng rng_a(100), rng_b(200);
  const DataBuffer a = simulate(m, default_policy(m, k, 1.0), 50000, rng_a);
  const DataBuffer b = simulate(m, default_policy(m, k, 1.0), 50000, rng_b);
  const Matrix phi_a = build_operators(a).phi_hat;
  const Matrix phi_b = build_operators(b).phi_hat;
  const double dominant = 1e-2 * phi_a.cwiseAbs().maxCoeff();
  for (int i = 0; i < phi_a.rows(); ++i)
    for (int j = 0; j < phi_a.cols(); ++j) {
      if (std::abs(phi_a(i, j)) < dominant) continue;
      CHECK(std::abs(phi_a(i, j) - phi_b(i, j)) <= 0.05 * std::abs(phi_a(i, j)));
    }
}

TEST_CASE("sampled second-moment matrix is positive definite on the paper setup") {
  const PlantModel m = illustrative_model();
  const GainK k = initial_gain_from_model(m);
  Rng rng(7);
  const EstimatedOperators ops =
      build_operators(simulate(m, default_policy(m, k, 1.0), 5000, rng));
  CHECK(ops.excitation > 1e-10);
  CHECK(lambda_min(ops.phi_hat) > 0.0);
}

TEST_CASE("ideal operators reproduce the model kernel exactly") {
  const PlantModel m = illustrative_model();
  const EstimatedOperators ops = ideal_operators(m);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = test_support::random_symmetric(rng, 3);
    const Matrix expect = gamma_direct(m, X);
    CHECK((gamma_hat(ops, X) - expect).norm() <= 1e-8 * std::max(1.0, expect.norm()));
  }
  // X = 0 exposes the pure cost blocks.
  Matrix blk = Matrix::Zero(9, 9);
  blk.block(0, 0, 3, 3) = m.Q();
  blk.block(3, 3, 3, 3) = m.R();
  blk.block(6, 6, 3, 3) = -25.0 * Matrix::Identity(3, 3);
  CHECK((gamma_hat(ops, Matrix::Zero(3, 3)) - blk).norm() <= 1e-12);

  CHECK(omega_hat(ops, Matrix::Zero(3, 3)).norm() == 0.0);
  CHECK((omega_hat(ops, Matrix::Identity(3, 3)) - m.D() * m.D().transpose()).norm() <=
        1e-8);
}

TEST_CASE("sampled kernel approaches the model kernel at tau = 50000") {
  const PlantModel m = illustrative_model();
  const GameSolution sol = solve_gare_value_iteration(m);
  const GainK k = initial_gain_from_model(m);
  Rng rng(11);
  const EstimatedOperators ops =
      build_operators(simulate(m, default_policy(m, k, 1.0), 50000, rng));
  const Matrix expect = gamma_direct(m, sol.P_star);
  CHECK((gamma_hat(ops, sol.P_star) - expect).norm() <= 0.05 * expect.norm());
  CHECK((omega_hat(ops, Matrix::Identity(3, 3)) - m.D() * m.D().transpose()).norm() <=
        0.10 * (m.D() * m.D().transpose()).norm());
}

TEST_CASE("kernel estimates improve with more data") {
  const PlantModel m = illustrative_model();
  const GameSolution sol = solve_gare_value_iteration(m);
  const GainK k = initial_gain_from_model(m);
  const Matrix expect = gamma_direct(m, sol.P_star);
  const std::vector<int> taus = {2000, 5000, 20000, 50000};
  std::vector<double> medians;
  for (int tau : taus) {
    std::vector<double> errs;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(1000 + trial);
      const EstimatedOperators ops =
          build_operators(simulate(m, default_policy(m, k, 1.0), tau, rng));
      errs.push_back((gamma_hat(ops, sol.P_star) - expect).norm());
    }
    std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
    medians.push_back(errs[10]);
  }
  for (std::size_t i = 0; i + 1 < medians.size(); ++i) {
    CHECK(medians[i + 1] <= medians[i]);
  }
}

TEST_CASE("ww block reconstructions agree") {
  const PlantModel m = illustrative_model();
  const GainK k = initial_gain_from_model(m);
  Rng rng(13);
  const EstimatedOperators ops =
      build_operators(simulate(m, default_policy(m, k, 1.0), 5000, rng));
  const GameSolution sol = solve_gare_value_iteration(m);
  const Matrix full = gamma_hat(ops, sol.P_star);
  const Matrix ww = gamma_ww_hat(ops, sol.P_star);
  CHECK((full.block(6, 6, 3, 3) - ww).norm() <= 1e-10 * std::max(1.0, ww.norm()));
}

TEST_CASE("data-driven policy value matches the Lyapunov oracle") {
  const PlantModel m = illustrative_model();
  const EstimatedOperators ops = ideal_operators(m);
  const GainK K = initial_gain_from_model(m);

  // L = 0: the first inner iterate.
  const PolicyValueSolve first = solve_p_data(ops, K, GainL(Matrix::Zero(3, 3)));
  const Matrix expect0 = solve_dlyap(m.closed_loop(K), m.stage_weight(K));
  CHECK((first.P - expect0).norm() <= 1e-8 * expect0.norm());
  CHECK(first.residual <= 1e-10);

  // A nontrivial admissible pair.
  const Matrix P_K = evaluate_policy(m, K);
  const GainL L = worst_case_gain(m, K, P_K);
  const Matrix A_cl = m.closed_loop(K) + m.D() * L.mat();
  const Matrix Q_cl = m.stage_weight(K) -
                      m.gamma() * m.gamma() * L.mat().transpose() * L.mat();
  const Matrix expect = solve_dlyap(A_cl, Q_cl);
  const PolicyValueSolve sol = solve_p_data(ops, K, L);
  CHECK((sol.P - expect).norm() <= 1e-8 * std::max(1.0, expect.norm()));
}

TEST_CASE("sampled policy value has a small relative residual") {
  const PlantModel m = illustrative_model();
  const GainK K = initial_gain_from_model(m);
  Rng rng(17);
  const EstimatedOperators ops =
      build_operators(simulate(m, default_policy(m, K, 1.0), 5000, rng));
  const PolicyValueSolve sol = solve_p_data(ops, K, GainL(Matrix::Zero(3, 3)));
  CHECK(sol.residual <= 0.1);
}

TEST_CASE("data-driven gain updates match their model-based forms") {
  const PlantModel m = illustrative_model();
  const EstimatedOperators ops = ideal_operators(m);
  const GameSolution sol = solve_gare_value_iteration(m);
  const GainK K = initial_gain_from_model(m);
  const Matrix P_K = evaluate_policy(m, K);

  // Adversary update against the explicit formula.
  const Matrix S = m.gamma() * m.gamma() * Matrix::Identity(3, 3) -
                   m.D().transpose() * P_K * m.D();
  const Matrix L_expect = S.ldlt().solve(m.D().transpose() * P_K * m.closed_loop(K));
  const GainL L = update_l_data(ops, P_K, K);
  CHECK((L.mat() - L_expect).norm() <= 1e-8 * std::max(1.0, L_expect.norm()));
  CHECK(update_l_data(ops, Matrix::Zero(3, 3), K).mat().norm() <= 1e-12);

  // Minimizer update recovers the saddle gain from P*.
  const GainK K_next = update_k_data(ops, sol.P_star);
  CHECK((K_next.mat() - sol.K_star.mat()).norm() <= 1e-8 * sol.K_star.mat().norm());

  // D = 0: no adversary influence anywhere.
  const PlantModel no_dist(m.A(), m.B(), m.C(), Matrix::Zero(3, 3), m.E(), m.gamma());
  const EstimatedOperators ops0 = ideal_operators(no_dist);
  Rng rng(19);
  const Matrix P = test_support::random_psd(rng, 3);
  CHECK(update_l_data(ops0, P, K).mat().norm() <= 1e-12);
  const Matrix K_lqr =
      (m.R() + m.B().transpose() * P * m.B()).ldlt().solve(m.B().transpose() * P * m.A());
  CHECK((update_k_data(ops0, P).mat() - K_lqr).norm() <= 1e-10 * K_lqr.norm());
}

TEST_CASE("idealized operators reproduce the exact dual-loop trace") {
  const PlantModel m = illustrative_model();
  const GainK k1 = initial_gain_from_model(m);

  DualLoopConfig exact;
  exact.outer_iters = 10;
  exact.inner_iters = 20;
  exact.k_init = k1;
  exact.compute_hinf = false;
  const DualLoopResult reference = run(m, exact);

  LearnConfig lc;
  lc.outer_iters = 10;
  lc.inner_iters = 20;
  lc.k_init = k1;
  lc.compute_hinf = false;
  const LearningResult learned = run_learning_with_ops(m, ideal_operators(m), lc);

  REQUIRE(learned.trace.outer.size() == reference.trace.outer.size());
  for (std::size_t i = 0; i < reference.trace.outer.size(); ++i) {
    const auto& a = reference.trace.outer[i];
    const auto& b = learned.trace.outer[i];
    CHECK((a.K.mat() - b.K.mat()).norm() <= 1e-6 * std::max(1.0, a.K.mat().norm()));
    CHECK((a.P_end - b.P_end).norm() <= 1e-6 * std::max(1.0, a.P_end.norm()));
  }
  CHECK((learned.final_gain.mat() - reference.final_gain.mat()).norm() <=
        1e-6 * std::max(1.0, reference.final_gain.mat().norm()));
}

TEST_CASE("a sampled learning run approaches the saddle point") {
  const PlantModel m = illustrative_model();
  LearnConfig lc;
  lc.outer_iters = 10;
  lc.inner_iters = 20;
  lc.tau = 5000;
  lc.k_init = initial_gain_from_model(m);
  lc.rng_seed = 21;
  lc.compute_hinf = false;
  const PlantModel lqr(m.A(), m.B(), m.C(), Matrix::Zero(3, 3), m.E(), 1.0, m.sigma());
  const GainK k_exp = solve_gare_value_iteration(lqr).K_star;
  const LearningResult res = run_learning(m, default_policy(m, k_exp, 1.0), lc);
  CHECK(res.trace.outer.back().rel_err_K < 0.25);
  CHECK(res.max_ls_residual <= 0.1);
  CHECK(res.buffer_fingerprint != 0);
}

TEST_CASE("buffer CSV round trip preserves every sample") {
  const PlantModel m = illustrative_model();
  const GainK k = initial_gain_from_model(m);
  Rng rng(23);
  const DataBuffer buf = simulate(m, default_policy(m, k, 1.0), 100, rng);
  std::stringstream ss;
  buf.to_csv(ss);
  const DataBuffer back = DataBuffer::from_csv(ss);
  REQUIRE(back.size() == buf.size());
  CHECK(back.n() == buf.n());
  CHECK(back.m() == buf.m());
  CHECK(back.q() == buf.q());
  CHECK(back.fingerprint() == buf.fingerprint());
}

TEST_CASE("insufficient excitation is reported") {
  DataBuffer degenerate(2, 1, 1);
  Vector z(4), xn(2);
  z << 1, 0, 0, 0;
  xn << 0, 0;
  for (int t = 0; t < 10; ++t) degenerate.add(z, xn, 0.0);
  const EstimatedOperators ops = build_operators(degenerate);
  CHECK_THROWS_AS(gamma_hat(ops, Matrix::Identity(2, 2)), Error);
  CHECK_THROWS_AS(solve_p_data(ops, GainK(Matrix::Zero(1, 2)), GainL(Matrix::Zero(1, 2))),
                  Error);
}
