#pragma once

#include <Eigen/Dense>

#include "rslqg/errors.hpp"

namespace rslqg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Half-vectorization of a symmetric n x n matrix: the upper triangle stacked
/// row by row, [x11, x12, ..., x1n, x22, x23, ..., xnn].
struct SymVec {
  Vector entries;  // length n(n+1)/2
  int dim = 0;
};

/// T_n maps vecs(X) to vec(X) for symmetric X; entries are 0/1 and the
/// pseudo-inverse (cached here) satisfies pinv * T = I.
struct DuplicationMatrix {
  int dim = 0;
  Matrix T;     // n^2 x n(n+1)/2
  Matrix pinv;  // n(n+1)/2 x n^2
};

// Index of entry (i, j), i <= j, within the vecs ordering (0-based).
inline int sym_index(int i, int j, int n) {
  return i * n - i * (i - 1) / 2 + (j - i);
}

inline int sym_size(int n) { return n * (n + 1) / 2; }

/// (X + X^T)/2. Throws invalid-argument when the relative asymmetry exceeds
/// 1e-8; `what` names the offending matrix in the message.
Matrix symmetrize(const Matrix& X, const char* what = "matrix");

SymVec vecs(const Matrix& X);
Matrix unvecs(const Vector& v, int n);
inline Matrix unvecs(const SymVec& s) { return unvecs(s.entries, s.dim); }

/// [a1^2, 2a1a2, ..., 2a1an, a2^2, ..., an^2]; satisfies
/// vecv(a)^T vecs(X) = a^T X a for every symmetric X.
Vector vecv(const Vector& a);

DuplicationMatrix duplication(int n);

/// Unique P solving A^T P A - P + Q = 0 for stable A (Kronecker vectorized
/// solve; a Schur-form solver is the scaling path for large n).
Matrix solve_dlyap(const Matrix& A, const Matrix& Q);

double spectral_radius(const Matrix& A);

/// True iff lambda_min(sym(X)) >= -tol.
bool is_psd(const Matrix& X, double tol);

// Small shared helpers.
double lambda_min(const Matrix& X);  // of the symmetrized input
double lambda_max(const Matrix& X);
bool is_pd(const Matrix& X, double rel_margin = 1e-9);  // lambda_min > margin*norm
Matrix pinv_svd(const Matrix& M, double rel_cutoff = 1e-10);
Matrix kron(const Matrix& A, const Matrix& B);

}  // namespace rslqg
