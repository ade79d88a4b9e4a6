#pragma once

#include "eot/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <variant>

namespace eot::data {

struct GaussianSpec {
    Vector mean;
    Eigen::MatrixXd cov;
};

/// t ~ U[1.5 pi, 4.5 pi], point = (t cos t, t sin t) / scale + N(0, noise_std^2 I).
struct SwissrollSpec {
    double scale = 7.5;
    double noise_std = 0.05;
};

struct DistributionSpec {
    std::variant<GaussianSpec, SwissrollSpec> kind;

    static DistributionSpec gaussian(Vector mean, Eigen::MatrixXd cov);
    static DistributionSpec standard_gaussian(std::size_t dim);
    static DistributionSpec swissroll(double scale = 7.5, double noise_std = 0.05);

    std::size_t dim() const;
    void validate() const;
};

/// Counter-based sample stream: sample k is a pure function of
/// (seed, tag, k), so drawing n then m equals drawing n + m.
class SampleStream {
public:
    SampleStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t first_index = 0)
        : seed_(seed), tag_(tag), next_(first_index) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t tag() const noexcept { return tag_; }
    std::uint64_t next_index() const noexcept { return next_; }
    std::uint64_t advance(std::uint64_t n) noexcept {
        const auto first = next_;
        next_ += n;
        return first;
    }

private:
    std::uint64_t seed_;
    std::uint64_t tag_;
    std::uint64_t next_;
};

Matrix sample(const DistributionSpec& spec, std::size_t n, SampleStream& stream);

/// Samples with indices [first, first + n) of the (seed, tag) stream.
Matrix sample_range(const DistributionSpec& spec, std::uint64_t seed, std::uint64_t tag,
                    std::uint64_t first, std::size_t n);

/// Batch source for training: iteration i gets indices [i n, (i + 1) n).
std::function<Matrix(std::size_t, std::size_t)> batch_source(DistributionSpec spec,
                                                             std::uint64_t seed,
                                                             std::uint64_t tag);

struct GaussianPairSpec {
    std::size_t dim = 2;
    std::uint64_t seed = 0;
    double eig_lo = 0.5;
    double eig_hi = 2.0;

    void validate() const;
};

/// Sigma = Q diag(lambda) Q^T, Q a random orthogonal matrix, lambda uniform
/// on [lo, hi]. Returns (Sigma_x, Sigma_y).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> make_random_gaussian_pair(const GaussianPairSpec& spec);

}  // namespace eot::data
