#include "rslqg/matrix_kit.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

namespace rslqg {

Matrix symmetrize(const Matrix& X, const char* what) {
  if (X.rows() != X.cols()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " must be square, got " +
                    std::to_string(X.rows()) + "x" + std::to_string(X.cols()));
  }
  const double asym = (X - X.transpose()).norm();
  if (asym > 1e-8 * std::max(1.0, X.norm())) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " is not symmetric (relative asymmetry " +
                    std::to_string(asym / std::max(1.0, X.norm())) + ")");
  }
  return 0.5 * (X + X.transpose());
}

SymVec vecs(const Matrix& X) {
  const Matrix S = symmetrize(X, "vecs input");
  const int n = static_cast<int>(S.rows());
  SymVec out;
  out.dim = n;
  out.entries.resize(sym_size(n));
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out.entries(k++) = S(i, j);
  return out;
}

Matrix unvecs(const Vector& v, int n) {
  if (v.size() != sym_size(n)) {
    throw Error(ErrorCode::kInvalidArgument,
                "unvecs: vector of length " + std::to_string(v.size()) +
                    " does not match dimension " + std::to_string(n));
  }
  Matrix X(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      X(i, j) = v(k);
      X(j, i) = v(k);
      ++k;
    }
  return X;
}

Vector vecv(const Vector& a) {
  const int n = static_cast<int>(a.size());
  Vector out(sym_size(n));
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out(k++) = (i == j) ? a(i) * a(i) : 2.0 * a(i) * a(j);
  return out;
}

DuplicationMatrix duplication(int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "duplication: n must be >= 1");
  DuplicationMatrix d;
  d.dim = n;
  d.T = Matrix::Zero(n * n, sym_size(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int col = sym_index(std::min(i, j), std::max(i, j), n);
      d.T(j * n + i, col) = 1.0;  // vec is column-major
    }
  // T^T T is diagonal (1 on diagonal entries, 2 off-diagonal), so the
  // pseudo-inverse is exact.
  Vector diag = (d.T.transpose() * d.T).diagonal();
  d.pinv = diag.cwiseInverse().asDiagonal() * d.T.transpose();
  return d;
}

Matrix solve_dlyap(const Matrix& A, const Matrix& Q) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
    throw Error(ErrorCode::kInvalidArgument, "solve_dlyap: dimension mismatch");
  }
  const Matrix Qs = symmetrize(Q, "solve_dlyap Q");
  const double rho = spectral_radius(A);
  if (rho >= 1.0) {
    throw Error(ErrorCode::kUnstableMatrix,
                "solve_dlyap: spectral radius " + std::to_string(rho) + " >= 1");
  }
  Matrix At = A.transpose();
  Matrix M = kron(At, At) - Matrix::Identity(n * n, n * n);
  Eigen::Map<const Vector> q(Qs.data(), n * n);
  Eigen::PartialPivLU<Matrix> lu(M);
  Vector p = lu.solve(-q);
  Matrix P = 0.5 * (Eigen::Map<Matrix>(p.data(), n, n) +
                    Eigen::Map<Matrix>(p.data(), n, n).transpose());
  const double residual = (A.transpose() * P * A - P + Qs).norm();
  if (!P.allFinite() || residual > 1e-9 * std::max(1.0, Qs.norm())) {
    throw Error(ErrorCode::kIllConditioned,
                "solve_dlyap: residual " + std::to_string(residual) +
                    " (eigenvalue product near 1)");
  }
  return P;
}

double spectral_radius(const Matrix& A) {
  if (A.rows() != A.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "spectral_radius: matrix must be square");
  }
  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kNumericalFailure, "spectral_radius: eigensolver failed");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_psd(const Matrix& X, double tol) { return lambda_min(X) >= -tol; }

double lambda_min(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (X + X.transpose()),
                                           Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kNumericalFailure, "lambda_min: eigensolver failed");
  }
  return es.eigenvalues().minCoeff();
}

double lambda_max(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (X + X.transpose()),
                                           Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kNumericalFailure, "lambda_max: eigensolver failed");
  }
  return es.eigenvalues().maxCoeff();
}

bool is_pd(const Matrix& X, double rel_margin) {
  const Matrix S = 0.5 * (X + X.transpose());
  const double scale = std::max(1e-300, S.operatorNorm());
  return lambda_min(S) > rel_margin * scale;
}

Matrix pinv_svd(const Matrix& M, double rel_cutoff) {
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return Matrix::Zero(M.cols(), M.rows());
  const double cutoff = rel_cutoff * sv(0);
  Vector inv = sv;
  for (int i = 0; i < sv.size(); ++i) inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Matrix kron(const Matrix& A, const Matrix& B) {
  return Eigen::kroneckerProduct(A, B).eval();
}

}  // namespace rslqg
