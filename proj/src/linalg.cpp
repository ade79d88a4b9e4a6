#include "eot/linalg.hpp"

#include "eot/errors.hpp"

#include <cmath>
#include <string>

namespace eot::linalg {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
    return 0.5 * (a + a.transpose());
}

void require_symmetric_psd(const Eigen::MatrixXd& a, const char* name, double sym_tol,
                           double psd_tol) {
    if (a.rows() != a.cols() || a.rows() == 0) {
        throw MatrixError(std::string(name) + " must be a non-empty square matrix");
    }
    if (!a.allFinite()) {
        throw MatrixError(std::string(name) + " has non-finite entries");
    }
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) {
        throw MatrixError(std::string(name) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -psd_tol * scale) {
        throw MatrixError(std::string(name) + " is not positive semidefinite (min eigenvalue " +
                          std::to_string(es.eigenvalues().minCoeff()) + ")");
    }
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
    if (es.info() != Eigen::Success) {
        throw MatrixError("eigendecomposition failed");
    }
    Eigen::VectorXd lam = es.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) < -1e-10 * scale) {
            throw MatrixError("matrix square root of a non-PSD matrix (eigenvalue " +
                              std::to_string(lam(i)) + ")");
        }
        lam(i) = lam(i) <= kEigenClamp ? 0.0 : std::sqrt(lam(i));
    }
    const Eigen::MatrixXd& v = es.eigenvectors();
    return symmetrize(v * lam.asDiagonal() * v.transpose());
}

Eigen::MatrixXd inv_sqrtm_pd(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
    if (es.info() != Eigen::Success) {
        throw MatrixError("eigendecomposition failed");
    }
    Eigen::VectorXd lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) <= kEigenClamp) {
            throw MatrixError("inverse square root of a singular matrix");
        }
        lam(i) = 1.0 / std::sqrt(lam(i));
    }
    const Eigen::MatrixXd& v = es.eigenvectors();
    return symmetrize(v * lam.asDiagonal() * v.transpose());
}

}  // namespace eot::linalg
