#pragma once

// Dense symmetric linear algebra with explicit tolerance contracts.
// Backed by Eigen; every entry point validates its preconditions and the
// callers rely on the posted residual bounds, not on Eigen internals.

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace fhnet::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest absolute entry; 0 for empty matrices.
double max_abs(const Matrix& a);
double max_abs(const Vector& v);

/// true iff every entry is finite (no NaN / Inf).
bool all_finite(const Matrix& a);
bool all_finite(const Vector& v);

/// Throws NumericalError if any entry is non-finite. `what` names the operand.
void require_finite(const Matrix& a, const char* what);
void require_finite(const Vector& v, const char* what);

/// max |A_ij - A_ji| (absolute symmetry defect).
double symmetry_defect(const Matrix& a);

/// max |A_ij - A_ji| / max(1, max_abs(A)).
double relative_symmetry_defect(const Matrix& a);

/// Throws NumericalError unless |A_ij - A_ji| <= 1e-12 * max(1, ||A||_max).
void require_symmetric(const Matrix& a, const char* what);

struct EigenDecomposition {
    Vector eigenvalues;   // ascending
    Matrix eigenvectors;  // columns, orthonormal: A = V diag(l) V^T
};

/// Symmetric eigendecomposition. Pre: A symmetric and finite.
/// Post: ||V V^T - I||_max <= 1e-10, eigenvalues ascending.
EigenDecomposition sym_eig(const Matrix& a);

/// Unique PSD square root S with S*S = A within 1e-8 * max(1, ||A||_max).
/// Eigenvalues in [-1e-10, 0) are clamped to zero; anything below throws.
Matrix sqrt_psd(const Matrix& a);

struct SolveReport {
    double condition_estimate = 0.0;  // |max pivot| / |min pivot|
    bool near_singular = false;       // condition estimate > 1e12
};

/// Solve A x = b for square nonsingular A.
/// Post: ||A x - b||_inf <= 1e-8 * (||A||_max * ||x||_inf + ||b||_inf).
/// Exactly singular A throws; condition estimate > 1e12 sets the report flag
/// (and logs a warning when no report sink is supplied).
Vector solve(const Matrix& a, const Vector& b, SolveReport* report = nullptr);

/// Matrix inverse, same contract as solve applied column by column;
/// ||A A^{-1} - I||_max <= 1e-8.
Matrix inverse(const Matrix& a, SolveReport* report = nullptr);

}  // namespace fhnet::numerics
