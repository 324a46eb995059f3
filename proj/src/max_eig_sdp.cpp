#include "max_eig_sdp.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

namespace rslqg {
namespace {

Matrix assemble(const MaxEigProblem& p, const Vector& theta) {
  Matrix F = p.F0;
  for (std::size_t k = 0; k < p.Fk.size(); ++k) F += theta(k) * p.Fk[k];
  return F;
}

// log det of tI - F via Cholesky; NaN when not positive definite.
double barrier_logdet(const Matrix& G) {
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

}  // namespace

MaxEigSolution minimize_max_eigenvalue(const MaxEigProblem& problem,
                                       const Vector& theta0, double stop_below) {
  const int d = static_cast<int>(problem.Fk.size());
  const int N = static_cast<int>(problem.F0.rows());
  Vector theta = theta0;
  double t = lambda_max(assemble(problem, theta));
  const double scale = std::max(1.0, std::abs(t));
  t += 0.1 * scale + 1.0;

  for (double kappa = 1.0; kappa <= 1e9; kappa *= 10.0) {
    for (int newton = 0; newton < 80; ++newton) {
      const Matrix F = assemble(problem, theta);
      const Matrix G = t * Matrix::Identity(N, N) - F;
      Eigen::LLT<Matrix> llt(G);
      if (llt.info() != Eigen::Success) break;  // lost feasibility numerically
      const Matrix Ginv = llt.solve(Matrix::Identity(N, N));

      std::vector<Matrix> W(d);
      for (int k = 0; k < d; ++k) W[k] = Ginv * problem.Fk[k];

      Vector grad(d + 1);
      Matrix hess(d + 1, d + 1);
      for (int k = 0; k < d; ++k) grad(k) = W[k].trace();
      grad(d) = kappa - Ginv.trace();
      for (int k = 0; k < d; ++k) {
        for (int l = k; l < d; ++l) {
          hess(k, l) = hess(l, k) = (W[k].array() * W[l].transpose().array()).sum();
        }
        hess(k, d) = hess(d, k) = -(W[k].array() * Ginv.transpose().array()).sum();
      }
      hess(d, d) = (Ginv.array() * Ginv.transpose().array()).sum();

      Eigen::LDLT<Matrix> ldlt(hess);
      Vector step = -ldlt.solve(grad);
      if (!step.allFinite()) {
        ldlt.compute(hess + 1e-10 * Matrix::Identity(d + 1, d + 1));
        step = -ldlt.solve(grad);
        if (!step.allFinite()) break;
      }
      const double decrement = -0.5 * grad.dot(step);
      if (decrement < 1e-11 * (1.0 + std::abs(t))) break;

      const double phi0 = kappa * t - barrier_logdet(G);
      double alpha = 1.0;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        const Vector theta_new = theta + alpha * step.head(d);
        const double t_new = t + alpha * step(d);
        const Matrix G_new =
            t_new * Matrix::Identity(N, N) - assemble(problem, theta_new);
        const double ld = barrier_logdet(G_new);
        if (std::isfinite(ld) &&
            kappa * t_new - ld <= phi0 - 1e-4 * alpha * (-grad.dot(step))) {
          theta = theta_new;
          t = t_new;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }
    if (lambda_max(assemble(problem, theta)) < stop_below) break;
  }

  MaxEigSolution sol;
  sol.theta = theta;
  sol.value = lambda_max(assemble(problem, theta));
  return sol;
}

}  // namespace rslqg
