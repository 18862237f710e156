#include "mtu/linalg.hpp"

#include "mtu/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mtu::linalg {

namespace {

void require_square(const Matrix& a, const char* op) {
  if (a.rows() != a.cols()) {
    throw DimensionError(std::string(op) + ": matrix is " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", expected square");
  }
}

Eigen::VectorXd symmetric_eigenvalues(const Matrix& a, const char* op) {
  require_square(a, op);
  if (!is_symmetric(a, 1e-12)) {
    throw DimensionError(std::string(op) + ": matrix is not symmetric");
  }
  if (a.size() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(std::string(op) + ": eigenvalue iteration did not converge");
  }
  return solver.eigenvalues();
}

}  // namespace

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: matrix has " + std::to_string(a.cols()) +
                         " columns but vector has " +
                         std::to_string(x.size()) + " entries");
  }
  return a * x;
}

Vector solve_spd(const Matrix& a, const Vector& b) {
  require_square(a, "solve_spd");
  const Eigen::Index n = a.rows();
  if (b.size() != n) {
    throw DimensionError("solve_spd: right-hand side has " +
                         std::to_string(b.size()) + " entries, expected " +
                         std::to_string(n));
  }

  double scale = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
  const double floor = 1e-12 * std::max(1.0, scale);

  // In-place lower Cholesky factor.
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > floor)) throw NotSpdError(static_cast<std::size_t>(j), diag);
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }

  Vector y = l.triangularView<Eigen::Lower>().solve(b);
  return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

double min_eigenvalue_bound(const Matrix& a) {
  const auto ev = symmetric_eigenvalues(a, "min_eigenvalue_bound");
  return ev.size() == 0 ? 0.0 : ev.minCoeff();
}

double max_eigenvalue(const Matrix& a) {
  const auto ev = symmetric_eigenvalues(a, "max_eigenvalue");
  return ev.size() == 0 ? 0.0 : ev.maxCoeff();
}

double symmetric_norm(const Matrix& a) {
  const auto ev = symmetric_eigenvalues(a, "symmetric_norm");
  return ev.size() == 0 ? 0.0 : ev.cwiseAbs().maxCoeff();
}

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
      const double lim = tol * std::max({1.0, std::abs(a(i, j)), std::abs(a(j, i))});
      if (std::abs(a(i, j) - a(j, i)) > lim) return false;
    }
  }
  return true;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace mtu::linalg
