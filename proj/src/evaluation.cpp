#include "eot/evaluation.hpp"

#include "eot/errors.hpp"

#include <algorithm>
#include <cmath>

namespace eot::evaluation {

MomentSummary estimate_moments(const Matrix& samples) {
    if (samples.rows() < 2) {
        throw ShapeError("at least two samples are needed to estimate moments");
    }
    MomentSummary m;
    m.n = static_cast<std::size_t>(samples.rows());
    m.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - m.mean.transpose();
    m.cov = linalg::symmetrize(centered.transpose() * centered /
                               static_cast<double>(samples.rows() - 1));
    return m;
}

MomentSummary weighted_moments(const Matrix& points, const Vector& weights) {
    require_shape(points.rows() == weights.size() && points.rows() > 0,
                  "one weight per reference point is required");
    require_shape(std::abs(weights.sum() - 1.0) < 1e-8 && (weights.array() >= 0.0).all(),
                  "reference weights must be a probability vector");
    MomentSummary m;
    m.n = static_cast<std::size_t>(points.rows());
    m.mean = (points.transpose() * weights);
    const Eigen::MatrixXd centered = points.rowwise() - m.mean.transpose();
    m.cov = linalg::symmetrize(centered.transpose() * weights.asDiagonal() * centered);
    return m;
}

double bures_wasserstein_sq(const MomentSummary& g1, const MomentSummary& g2) {
    require_shape(g1.mean.size() == g2.mean.size() && g1.cov.rows() == g2.cov.rows() &&
                      g1.cov.rows() == g1.mean.size(),
                  "moment summaries must share a dimension");
    linalg::require_symmetric_psd(g1.cov, "first covariance", 1e-9, 1e-9);
    linalg::require_symmetric_psd(g2.cov, "second covariance", 1e-9, 1e-9);
    if (g1.mean == g2.mean && g1.cov == g2.cov) {
        return 0.0;
    }
    const Eigen::MatrixXd s1_half = linalg::sqrtm_psd(g1.cov);
    const Eigen::MatrixXd cross = linalg::sqrtm_psd(linalg::symmetrize(s1_half * g2.cov * s1_half));
    const double w2 = (g1.mean - g2.mean).squaredNorm() +
                      (g1.cov + g2.cov - 2.0 * cross).trace();
    return std::max(0.0, w2);
}

double bw_uvp(const MomentSummary& learned, const reference::GaussianEOTPlan& reference) {
    const Eigen::MatrixXd joint = reference.joint_covariance();
    require_shape(learned.mean.size() == joint.rows(),
                  "sample dimension does not match the reference plan");
    MomentSummary ref{reference.mean, joint, 0};
    return 100.0 * bures_wasserstein_sq(learned, ref) / (0.5 * joint.trace());
}

double bw_uvp(const Matrix& plan_samples, const reference::GaussianEOTPlan& reference) {
    require_shape(plan_samples.cols() == reference.mean.size(),
                  "sample dimension does not match the reference plan");
    return bw_uvp(estimate_moments(plan_samples), reference);
}

ConditionalGap conditional_compare(const Matrix& learned, const Vector& reference_weights,
                                   const Matrix& reference_points) {
    require_shape(learned.cols() == reference_points.cols(),
                  "learned and reference samples must share a dimension");
    const MomentSummary l = estimate_moments(learned);
    const MomentSummary r = weighted_moments(reference_points, reference_weights);
    return {(l.mean - r.mean).norm(), (l.cov - r.cov).norm()};
}

}  // namespace eot::evaluation
