#pragma once

#include "eot/linalg.hpp"
#include "eot/nn_potential.hpp"
#include "eot/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace eot::langevin {

/// Transport cost c(x, y) together with its gradient in y.
class CostFunction {
public:
    using ValueFn = std::function<double(std::span<const double>, std::span<const double>)>;
    using GradFn = std::function<void(std::span<const double>, std::span<const double>,
                                      std::span<double>)>;

    enum class Kind { quadratic_halved_l2, custom };

    /// c(x, y) = 0.5 * ||x - y||^2, dc/dy = y - x. Requires D_x == D_y.
    static CostFunction quadratic();
    static CostFunction custom(ValueFn value, GradFn grad_y);

    Kind kind() const noexcept { return kind_; }

    double operator()(std::span<const double> x, std::span<const double> y) const;
    void grad_y(std::span<const double> x, std::span<const double> y, std::span<double> out) const;

    /// Throws ShapeError when the dimensions are not admissible for this cost.
    void check_dims(std::size_t dx, std::size_t dy) const;

private:
    Kind kind_ = Kind::quadratic_halved_l2;
    ValueFn value_;
    GradFn grad_;
};

struct SamplerConfig {
    double epsilon = 1.0;   // entropic coefficient
    double eta = 0.1;       // Langevin step size
    std::size_t n_steps = 100;
    double sigma0 = 1.0;    // std of the Gaussian chain initialisation

    void validate() const;
};

/// |coordinate| above this, or a non-finite value, aborts the chain.
inline constexpr double kDivergenceThreshold = 1e6;

struct ChainBatch {
    Matrix Y;  // chain states, N x D_y
    Matrix X;  // conditioning points, N x D_x
};

/// Identifies the noise substreams of one batch of chains: the noise of
/// chain n at step k is drawn from substream(seed, {tag, salt, n, k}).
struct ChainRng {
    std::uint64_t seed = 0;
    std::uint64_t salt = 0;
};

/// E(y) = (c(x, y) - f(y)) / epsilon.
double conditional_energy(const nn::PotentialNetwork& net, const CostFunction& cost,
                          std::span<const double> x, std::span<const double> y, double epsilon);

/// One ULA move per row:
///   y <- y + (eta / (2 eps)) * d/dy [f(y) - c(x, y)] + sqrt(eta) * z.
/// `noise` holds the standard normals z. `step_index` only labels errors.
ChainBatch ula_step(const ChainBatch& batch, const nn::PotentialNetwork& net,
                    const CostFunction& cost, const SamplerConfig& config, const Matrix& noise,
                    std::size_t step_index = 0);

/// K = config.n_steps ULA moves from `init`, fresh noise per chain and step.
/// Output is identical for any worker-thread count.
Matrix sample_conditional(const nn::PotentialNetwork& net, const CostFunction& cost,
                          const Matrix& X, const SamplerConfig& config, const Matrix& init,
                          const ChainRng& rng);

/// Worker threads used by sample_conditional: EOT_THREADS if set, else the
/// hardware concurrency.
std::size_t worker_threads();

/// Pool of past negative samples (y only) used to initialise chains.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, double init_prob, std::uint64_t seed);

    std::size_t capacity() const noexcept { return capacity_; }
    double init_prob() const noexcept { return init_prob_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<std::vector<double>>& entries() const noexcept { return entries_; }

    /// Appends rows; once full, each new row overwrites a uniformly random
    /// slot.
    void update(const Matrix& y_final);

    friend bool operator==(const ReplayBuffer&, const ReplayBuffer&) = default;

private:
    std::size_t capacity_;
    double init_prob_;
    std::vector<std::vector<double>> entries_;
    SplitMix64 rng_;
};

/// Chain initialisation: each row comes from the buffer with probability p
/// (if the buffer is non-empty), otherwise from N(0, sigma0^2 I).
Matrix buffer_init(const ReplayBuffer& buffer, std::size_t n, std::size_t dim, double sigma0,
                   SplitMix64& rng);

ReplayBuffer buffer_update(ReplayBuffer buffer, const Matrix& y_final);

}  // namespace eot::langevin
