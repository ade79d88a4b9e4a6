#include "eot/data_gen.hpp"

#include "eot/errors.hpp"
#include "eot/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace eot::data {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::MatrixXd random_covariance(std::size_t dim, double lo, double hi, SplitMix64& gen) {
    const auto d = static_cast<Eigen::Index>(dim);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            g(i, j) = normal(gen);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign fix: make diag(R) positive so Q is uniquely determined by g.
    for (Eigen::Index j = 0; j < d; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) *= -1.0;
        }
    }
    std::uniform_real_distribution<double> eig(lo, hi);
    Vector lambda(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        lambda(i) = lo == hi ? lo : eig(gen);
    }
    Eigen::MatrixXd s = q * lambda.asDiagonal() * q.transpose();
    // Exact symmetry.
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
            s(j, i) = s(i, j);
        }
    }
    return s;
}

}  // namespace

DistributionSpec DistributionSpec::gaussian(Vector mean, Eigen::MatrixXd cov) {
    DistributionSpec s{GaussianSpec{std::move(mean), std::move(cov)}};
    s.validate();
    return s;
}

DistributionSpec DistributionSpec::standard_gaussian(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return gaussian(Vector::Zero(d), Eigen::MatrixXd::Identity(d, d));
}

DistributionSpec DistributionSpec::swissroll(double scale, double noise_std) {
    DistributionSpec s{SwissrollSpec{scale, noise_std}};
    s.validate();
    return s;
}

std::size_t DistributionSpec::dim() const {
    return std::visit(overloaded{[](const GaussianSpec& g) { return static_cast<std::size_t>(g.mean.size()); },
                                 [](const SwissrollSpec&) { return std::size_t{2}; }},
                      kind);
}

void DistributionSpec::validate() const {
    std::visit(overloaded{[](const GaussianSpec& g) {
                              if (g.mean.size() == 0 || g.cov.rows() != g.mean.size()) {
                                  throw ConfigError("gaussian mean and covariance dimensions differ");
                              }
                              linalg::require_symmetric_psd(g.cov, "gaussian covariance");
                          },
                          [](const SwissrollSpec& s) {
                              if (!(s.scale > 0.0)) {
                                  throw ConfigError("swissroll scale must be positive");
                              }
                              if (!(s.noise_std >= 0.0)) {
                                  throw ConfigError("swissroll noise_std must be non-negative");
                              }
                          }},
               kind);
}

Matrix sample_range(const DistributionSpec& spec, std::uint64_t seed, std::uint64_t tag,
                    std::uint64_t first, std::size_t n) {
    const auto dim = static_cast<Eigen::Index>(spec.dim());
    Matrix out(static_cast<Eigen::Index>(n), dim);
    std::normal_distribution<double> normal;
    std::visit(
        overloaded{
            [&](const GaussianSpec& g) {
                Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
                if (llt.info() != Eigen::Success) {
                    throw MatrixError("Cholesky factorisation of the gaussian covariance failed");
                }
                const Eigen::MatrixXd l = llt.matrixL();
                Vector z(dim);
                for (std::size_t k = 0; k < n; ++k) {
                    auto gen = substream(seed, {tag, first + k});
                    normal.reset();
                    for (Eigen::Index d = 0; d < dim; ++d) {
                        z(d) = normal(gen);
                    }
                    out.row(static_cast<Eigen::Index>(k)) = (g.mean + l * z).transpose();
                }
            },
            [&](const SwissrollSpec& s) {
                std::uniform_real_distribution<double> angle(1.5 * std::numbers::pi,
                                                             4.5 * std::numbers::pi);
                for (std::size_t k = 0; k < n; ++k) {
                    auto gen = substream(seed, {tag, first + k});
                    normal.reset();
                    const double t = angle(gen);
                    const auto r = static_cast<Eigen::Index>(k);
                    out(r, 0) = t * std::cos(t) / s.scale;
                    out(r, 1) = t * std::sin(t) / s.scale;
                    if (s.noise_std > 0.0) {
                        out(r, 0) += s.noise_std * normal(gen);
                        out(r, 1) += s.noise_std * normal(gen);
                    }
                }
            }},
        spec.kind);
    return out;
}

Matrix sample(const DistributionSpec& spec, std::size_t n, SampleStream& stream) {
    if (n == 0) {
        throw ConfigError("sample count must be at least 1");
    }
    const std::uint64_t first = stream.advance(n);
    return sample_range(spec, stream.seed(), stream.tag(), first, n);
}

std::function<Matrix(std::size_t, std::size_t)> batch_source(DistributionSpec spec,
                                                             std::uint64_t seed,
                                                             std::uint64_t tag) {
    spec.validate();
    return [spec = std::move(spec), seed, tag](std::size_t iteration, std::size_t n) {
        return sample_range(spec, seed, tag, static_cast<std::uint64_t>(iteration) * n, n);
    };
}

void GaussianPairSpec::validate() const {
    if (dim == 0) {
        throw ConfigError("dim must be positive");
    }
    if (!(eig_lo > 0.0) || !(eig_hi >= eig_lo)) {
        throw ConfigError("eigenvalue range must satisfy 0 < lo <= hi");
    }
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> make_random_gaussian_pair(const GaussianPairSpec& spec) {
    spec.validate();
    auto gx = substream(spec.seed, {stream_tag::covariance, spec.dim, 0});
    auto gy = substream(spec.seed, {stream_tag::covariance, spec.dim, 1});
    return {random_covariance(spec.dim, spec.eig_lo, spec.eig_hi, gx),
            random_covariance(spec.dim, spec.eig_lo, spec.eig_hi, gy)};
}

}  // namespace eot::data
