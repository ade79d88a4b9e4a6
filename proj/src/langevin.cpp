#include "eot/langevin.hpp"

#include "eot/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>

namespace eot::langevin {

namespace {

// Scratch for advancing one block of up to nn::kLanes chains.
struct ChainScratch {
    ChainScratch(const nn::PotentialNetwork& net, std::size_t dim)
        : ws(net), values(nn::kLanes), grad_f(dim * nn::kLanes), grad_c(dim),
          noise(dim * nn::kLanes) {}
    nn::Workspace ws;
    std::vector<double> values;
    std::vector<double> grad_f;
    std::vector<double> grad_c;
    std::vector<double> noise;
};

using BlockFailures = std::array<std::optional<DivergedChainError>, nn::kLanes>;

// One ULA move for rows [first, first + rows) of Y, noise z row-major.
// Lanes that already diverged stay frozen; new divergences are recorded.
// Shared by ula_step and sample_conditional so both produce identical bits.
void advance_block(const nn::PotentialNetwork& net, const CostFunction& cost,
                   const SamplerConfig& config, const Matrix& X, Matrix& Y, std::size_t first,
                   std::size_t rows, const double* z, ChainScratch& s, std::size_t step,
                   BlockFailures& failed) {
    const auto dim = static_cast<std::size_t>(Y.cols());
    double* y0 = Y.data() + first * dim;
    nn::value_and_grad_block(net, y0, rows, s.values.data(), s.grad_f.data(), s.ws);
    const double coef = config.eta / (2.0 * config.epsilon);
    const double scale = std::sqrt(config.eta);
    const bool quadratic = cost.kind() == CostFunction::Kind::quadratic_halved_l2;
    for (std::size_t b = 0; b < rows; ++b) {
        if (failed[b]) {
            continue;
        }
        const auto row = static_cast<Eigen::Index>(first + b);
        const auto x = row_span(X, row);
        const auto y = row_span(Y, row);
        if (quadratic) {
            for (std::size_t d = 0; d < dim; ++d) {
                s.grad_c[d] = y[d] - x[d];
            }
        } else {
            cost.grad_y(x, y, s.grad_c);
        }
        const double* gf = s.grad_f.data() + b * dim;
        const double* zb = z + b * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            const double next = y[d] + coef * (gf[d] - s.grad_c[d]) + scale * zb[d];
            if (!std::isfinite(next) || std::abs(next) > kDivergenceThreshold) {
                failed[b].emplace(step, first + b,
                                  "coordinate " + std::to_string(d) + " reached " +
                                      std::to_string(next));
                break;
            }
            y[d] = next;
        }
    }
}

void throw_first(const BlockFailures& failed) {
    for (const auto& f : failed) {
        if (f) {
            throw *f;
        }
    }
}

void check_batch(const nn::PotentialNetwork& net, const CostFunction& cost, const Matrix& X,
                 const Matrix& Y) {
    require_shape(X.rows() == Y.rows(), "X and Y must have the same number of rows");
    require_shape(static_cast<std::size_t>(Y.cols()) == net.input_dim(),
                  "chain dimension does not match the network input");
    cost.check_dims(static_cast<std::size_t>(X.cols()), static_cast<std::size_t>(Y.cols()));
}

}  // namespace

CostFunction CostFunction::quadratic() {
    return CostFunction{};
}

CostFunction CostFunction::custom(ValueFn value, GradFn grad_y) {
    if (!value || !grad_y) {
        throw ConfigError("custom cost requires both a value and a gradient function");
    }
    CostFunction c;
    c.kind_ = Kind::custom;
    c.value_ = std::move(value);
    c.grad_ = std::move(grad_y);
    return c;
}

double CostFunction::operator()(std::span<const double> x, std::span<const double> y) const {
    if (kind_ == Kind::custom) {
        return value_(x, y);
    }
    require_shape(x.size() == y.size(), "quadratic cost needs equal dimensions");
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = x[d] - y[d];
        s += diff * diff;
    }
    return 0.5 * s;
}

void CostFunction::grad_y(std::span<const double> x, std::span<const double> y,
                          std::span<double> out) const {
    if (kind_ == Kind::custom) {
        grad_(x, y, out);
        return;
    }
    require_shape(x.size() == y.size() && out.size() == y.size(),
                  "quadratic cost needs equal dimensions");
    for (std::size_t d = 0; d < y.size(); ++d) {
        out[d] = y[d] - x[d];
    }
}

void CostFunction::check_dims(std::size_t dx, std::size_t dy) const {
    if (kind_ == Kind::quadratic_halved_l2) {
        require_shape(dx == dy, "quadratic cost requires D_x == D_y (got " + std::to_string(dx) +
                                    " and " + std::to_string(dy) + ")");
    }
}

void SamplerConfig::validate() const {
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    if (!(eta > 0.0)) {
        throw ConfigError("eta must be positive");
    }
    if (!(sigma0 > 0.0)) {
        throw ConfigError("sigma0 must be positive");
    }
}

double conditional_energy(const nn::PotentialNetwork& net, const CostFunction& cost,
                          std::span<const double> x, std::span<const double> y, double epsilon) {
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    cost.check_dims(x.size(), y.size());
    return (cost(x, y) - nn::forward(net, y)) / epsilon;
}

ChainBatch ula_step(const ChainBatch& batch, const nn::PotentialNetwork& net,
                    const CostFunction& cost, const SamplerConfig& config, const Matrix& noise,
                    std::size_t step_index) {
    config.validate();
    check_batch(net, cost, batch.X, batch.Y);
    require_shape(noise.rows() == batch.Y.rows() && noise.cols() == batch.Y.cols(),
                  "noise must match the shape of Y");
    ChainBatch next = batch;
    const auto dim = static_cast<std::size_t>(batch.Y.cols());
    const auto rows = static_cast<std::size_t>(batch.Y.rows());
    ChainScratch scratch(net, dim);
    for (std::size_t first = 0; first < rows; first += nn::kLanes) {
        BlockFailures failed;
        advance_block(net, cost, config, next.X, next.Y, first, std::min(nn::kLanes, rows - first),
                      noise.data() + first * dim, scratch, step_index, failed);
        throw_first(failed);
    }
    return next;
}

std::size_t worker_threads() {
    if (const char* env = std::getenv("EOT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) {
            return static_cast<std::size_t>(v);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

Matrix sample_conditional(const nn::PotentialNetwork& net, const CostFunction& cost,
                          const Matrix& X, const SamplerConfig& config, const Matrix& init,
                          const ChainRng& rng) {
    config.validate();
    check_batch(net, cost, X, init);
    require_shape(init.allFinite(), "chain initialisation must be finite");
    Matrix Y = init;
    const auto n_chains = static_cast<std::size_t>(Y.rows());
    const auto dim = static_cast<std::size_t>(Y.cols());
    if (config.n_steps == 0 || n_chains == 0) {
        return Y;
    }

    // A block runs all K steps before the next block starts; a diverged
    // chain is frozen and reported once its block finishes, so the error
    // always names the lowest-indexed failing chain.
    auto run_range = [&](std::size_t begin, std::size_t end) {
        ChainScratch scratch(net, dim);
        std::normal_distribution<double> normal;
        for (std::size_t first = begin; first < end; first += nn::kLanes) {
            const std::size_t rows = std::min(nn::kLanes, end - first);
            BlockFailures failed;
            for (std::size_t k = 0; k < config.n_steps; ++k) {
                for (std::size_t b = 0; b < rows; ++b) {
                    auto gen = substream(rng.seed, {stream_tag::langevin_noise, rng.salt, first + b, k});
                    normal.reset();
                    for (std::size_t d = 0; d < dim; ++d) {
                        scratch.noise[b * dim + d] = normal(gen);
                    }
                }
                advance_block(net, cost, config, X, Y, first, rows, scratch.noise.data(), scratch, k,
                              failed);
            }
            throw_first(failed);
        }
    };

    const std::size_t threads = std::min(worker_threads(), n_chains);
    if (threads <= 1) {
        run_range(0, n_chains);
        return Y;
    }

    // Report the failure of the lowest-indexed chain, as a sequential run would.
    std::mutex mu;
    std::optional<std::pair<std::size_t, std::exception_ptr>> failure;
    {
        std::vector<std::jthread> pool;
        std::size_t chunk = (n_chains + threads - 1) / threads;
        chunk = (chunk + nn::kLanes - 1) / nn::kLanes * nn::kLanes;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(n_chains, begin + chunk);
            if (begin >= end) {
                break;
            }
            pool.emplace_back([&, begin, end] {
                try {
                    run_range(begin, end);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure || begin < failure->first) {
                        failure.emplace(begin, std::current_exception());
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure->second);
    }
    return Y;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, double init_prob, std::uint64_t seed)
    : capacity_(capacity), init_prob_(init_prob), rng_(substream(seed, {stream_tag::buffer})) {
    if (capacity == 0) {
        throw ConfigError("buffer capacity must be positive");
    }
    if (!(init_prob >= 0.0 && init_prob <= 1.0)) {
        throw ConfigError("buffer init probability must lie in [0, 1]");
    }
}

void ReplayBuffer::update(const Matrix& y_final) {
    require_shape(y_final.allFinite(), "buffer entries must be finite");
    if (!entries_.empty() && y_final.rows() > 0) {
        require_shape(static_cast<std::size_t>(y_final.cols()) == entries_.front().size(),
                      "buffer entry dimension mismatch");
    }
    for (Eigen::Index n = 0; n < y_final.rows(); ++n) {
        const auto row = row_span(y_final, n);
        std::vector<double> entry(row.begin(), row.end());
        if (entries_.size() < capacity_) {
            entries_.push_back(std::move(entry));
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, capacity_ - 1);
            entries_[pick(rng_)] = std::move(entry);
        }
    }
}

Matrix buffer_init(const ReplayBuffer& buffer, std::size_t n, std::size_t dim, double sigma0,
                   SplitMix64& rng) {
    if (!buffer.empty()) {
        require_shape(buffer.entries().front().size() == dim, "buffer entry dimension mismatch");
    }
    Matrix init(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, sigma0);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = row_span(init, static_cast<Eigen::Index>(i));
        const bool from_buffer = !buffer.empty() && coin(rng) < buffer.init_prob();
        if (from_buffer) {
            std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
            const auto& entry = buffer.entries()[pick(rng)];
            std::copy(entry.begin(), entry.end(), row.begin());
        } else {
            for (auto& v : row) {
                v = normal(rng);
            }
        }
    }
    return init;
}

ReplayBuffer buffer_update(ReplayBuffer buffer, const Matrix& y_final) {
    buffer.update(y_final);
    return buffer;
}

}  // namespace eot::langevin
