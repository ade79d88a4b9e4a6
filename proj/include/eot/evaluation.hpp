#pragma once

#include "eot/linalg.hpp"
#include "eot/reference.hpp"

#include <cstddef>

namespace eot::evaluation {

struct MomentSummary {
    Vector mean;
    Eigen::MatrixXd cov;
    std::size_t n = 0;
};

/// Sample mean and unbiased (n - 1) covariance, symmetrised. Needs n >= 2.
MomentSummary estimate_moments(const Matrix& samples);

/// Weighted mean and covariance of a discrete distribution (weights sum to 1).
MomentSummary weighted_moments(const Matrix& points, const Vector& weights);

/// W_2^2 between N(m1, S1) and N(m2, S2):
/// |m1 - m2|^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}), clamped at 0.
double bures_wasserstein_sq(const MomentSummary& g1, const MomentSummary& g2);

/// 100 * W_2^2 / (0.5 * tr Sigma_ref), the plan metric in percent.
double bw_uvp(const MomentSummary& learned, const reference::GaussianEOTPlan& reference);
double bw_uvp(const Matrix& plan_samples, const reference::GaussianEOTPlan& reference);

struct ConditionalGap {
    double mean_gap = 0.0;  // euclidean distance of means
    double cov_gap = 0.0;   // Frobenius distance of covariances
};

/// Learned conditional samples against a weighted discrete reference
/// conditional.
ConditionalGap conditional_compare(const Matrix& learned, const Vector& reference_weights,
                                   const Matrix& reference_points);

}  // namespace eot::evaluation
