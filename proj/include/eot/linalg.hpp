#pragma once

#include <Eigen/Dense>

#include <span>

namespace eot {

/// Sample matrices: one sample per row, rows contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<double> row_span(Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

namespace linalg {

/// Eigenvalues below this (in absolute value, after symmetrization) are
/// clamped to zero when taking square roots.
inline constexpr double kEigenClamp = 1e-12;

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a);

/// Throws MatrixError if `a` is not square, not symmetric to `sym_tol`
/// (relative to its largest entry) or has an eigenvalue below `-psd_tol`.
void require_symmetric_psd(const Eigen::MatrixXd& a, const char* name, double sym_tol = 1e-9,
                           double psd_tol = 1e-10);

/// Principal square root of a symmetric PSD matrix via eigendecomposition,
/// negative eigenvalues within tolerance clamped to zero.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a);

/// Inverse square root of a symmetric positive definite matrix.
Eigen::MatrixXd inv_sqrtm_pd(const Eigen::MatrixXd& a);

}  // namespace linalg
}  // namespace eot
