#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace mtu {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace linalg {

/// Dense product A*x. Throws DimensionError on shape mismatch.
Vector matvec(const Matrix& a, const Vector& x);

/// Solves A x = b for symmetric positive-definite A via Cholesky.
///
/// Throws NotSpdError naming the first pivot that is not strictly positive
/// (or below 1e-12 relative to the diagonal scale). No pseudo-inverse
/// fallback is attempted.
Vector solve_spd(const Matrix& a, const Vector& b);

/// Smallest eigenvalue of a symmetric matrix. Throws on non-symmetric input.
double min_eigenvalue_bound(const Matrix& a);

/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const Matrix& a);

/// Spectral norm of a symmetric matrix (max |eigenvalue|).
double symmetric_norm(const Matrix& a);

/// |A_ij - A_ji| <= tol * max(1, |A_ij|) for all entries.
bool is_symmetric(const Matrix& a, double tol = 1e-12);

bool all_finite(const Vector& v);

}  // namespace linalg
}  // namespace mtu
