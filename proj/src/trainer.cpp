#include "eot/trainer.hpp"

#include "eot/errors.hpp"
#include "eot/io.hpp"
#include "eot/rng.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace eot::trainer {

namespace {

std::vector<double> uniform_weights(Eigen::Index n) {
    return std::vector<double>(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
}

void check_pair(const nn::PotentialNetwork& net, const Matrix& y_neg, const Matrix& y_pos) {
    require_shape(y_neg.rows() == y_pos.rows() && y_neg.rows() > 0,
                  "negative and positive batches must have the same non-zero size");
    require_shape(y_neg.cols() == y_pos.cols() &&
                      static_cast<std::size_t>(y_pos.cols()) == net.input_dim(),
                  "batch dimension does not match the network input");
}

// Reserved substream salt for inference chains; training iterations use
// their own index as salt.
constexpr std::uint64_t kInferenceSalt = 0xFFFF'FFFF'0000'0001ULL;

}  // namespace

void TrainConfig::validate() const {
    sampler.validate();
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (eval_every == 0) {
        throw ConfigError("eval_every must be positive");
    }
    if (!(lr >= 0.0)) {
        throw ConfigError("lr must be non-negative");
    }
    if (decay && !(decay->lr_final >= 0.0 && decay->lr_final <= lr)) {
        throw ConfigError("lr_final must lie in [0, lr]");
    }
    if (buffer_capacity == 0) {
        throw ConfigError("buffer_capacity must be positive");
    }
    if (!(buffer_prob >= 0.0 && buffer_prob <= 1.0)) {
        throw ConfigError("buffer_prob must lie in [0, 1]");
    }
}

double TrainConfig::lr_at(std::size_t iteration) const {
    if (!decay || iteration < decay->start_iteration) {
        return lr;
    }
    const std::size_t last = n_iterations == 0 ? 0 : n_iterations - 1;
    if (last <= decay->start_iteration) {
        return decay->lr_final;
    }
    const double t = std::min(1.0, static_cast<double>(iteration - decay->start_iteration) /
                                       static_cast<double>(last - decay->start_iteration));
    return (1.0 - t) * lr + t * decay->lr_final;
}

TrainState init_train_state(const nn::NetworkConfig& net_config, const TrainConfig& config) {
    return init_train_state(nn::init_network(net_config), config);
}

TrainState init_train_state(nn::PotentialNetwork net, const TrainConfig& config) {
    config.validate();
    net.validate();
    auto adam = nn::AdamState::for_network(net, config.lr, config.adam_beta1, config.adam_beta2);
    return TrainState{std::move(net), std::move(adam),
                      langevin::ReplayBuffer(config.buffer_capacity, config.buffer_prob, config.seed),
                      0, {}};
}

double surrogate_loss(const nn::PotentialNetwork& net, const Matrix& y_neg, const Matrix& y_pos) {
    check_pair(net, y_neg, y_pos);
    return -nn::forward_batch(net, y_neg).mean() + nn::forward_batch(net, y_pos).mean();
}

nn::ParamGradient loss_gradient(const nn::PotentialNetwork& net, const Matrix& y_neg,
                                const Matrix& y_pos) {
    check_pair(net, y_neg, y_pos);
    const auto w = uniform_weights(y_pos.rows());
    return nn::grad_params_weighted(net, y_pos, w) - nn::grad_params_weighted(net, y_neg, w);
}

Matrix negative_samples(const TrainState& state, const Matrix& X,
                        const langevin::CostFunction& cost, const TrainConfig& config) {
    auto init_rng = substream(config.seed, {stream_tag::chain_init, state.iteration});
    const Matrix init = langevin::buffer_init(state.buffer, static_cast<std::size_t>(X.rows()),
                                              state.net.input_dim(), config.sampler.sigma0,
                                              init_rng);
    return langevin::sample_conditional(state.net, cost, X, config.sampler, init,
                                        {config.seed, state.iteration});
}

TrainState train_step(TrainState state, const BatchSource& sample_p, const BatchSource& sample_q,
                      const langevin::CostFunction& cost, const TrainConfig& config) {
    config.validate();
    const std::size_t it = state.iteration;
    const Matrix X = sample_p(it, config.batch_size);
    const Matrix y_pos = sample_q(it, config.batch_size);
    require_shape(X.rows() == static_cast<Eigen::Index>(config.batch_size) &&
                      y_pos.rows() == X.rows(),
                  "batch sources must return batch_size rows");
    require_shape(X.allFinite() && y_pos.allFinite(), "batch sources returned non-finite samples");

    Matrix y_neg;
    try {
        y_neg = negative_samples(state, X, cost, config);
    } catch (const DivergedChainError& e) {
        throw e.at_iteration(static_cast<std::int64_t>(it));
    }

    const Vector f_neg = nn::forward_batch(state.net, y_neg);
    const Vector f_pos = nn::forward_batch(state.net, y_pos);
    const double loss = -f_neg.mean() + f_pos.mean();
    double energy_sum = 0.0;
    for (Eigen::Index n = 0; n < y_neg.rows(); ++n) {
        energy_sum += (cost(row_span(X, n), row_span(y_neg, n)) - f_neg(n)) /
                      config.sampler.epsilon;
    }

    const nn::ParamGradient grad = loss_gradient(state.net, y_neg, y_pos);
    state.adam.lr = config.lr_at(it);
    auto [net, adam] = nn::adam_step(state.net, grad, state.adam, /*maximize=*/true);
    state.net = std::move(net);
    state.adam = std::move(adam);
    state.buffer.update(y_neg);
    state.iteration = it + 1;
    state.history.push_back({it + 1, loss, std::sqrt(grad.squared_norm()),
                             energy_sum / static_cast<double>(y_neg.rows()), state.buffer.size()});
    return state;
}

TrainResult train(const nn::NetworkConfig& net_config, const TrainConfig& config,
                  const BatchSource& sample_p, const BatchSource& sample_q,
                  const langevin::CostFunction& cost, const Callback& callback) {
    TrainState state = init_train_state(net_config, config);
    for (std::size_t i = 0; i < config.n_iterations; ++i) {
        state = train_step(std::move(state), sample_p, sample_q, cost, config);
        if (callback && state.iteration % config.eval_every == 0) {
            callback(state);
        }
    }
    return {std::move(state.net), std::move(state.history)};
}

Matrix infer_conditional(const nn::PotentialNetwork& net, const langevin::CostFunction& cost,
                         std::span<const double> x, const InferenceConfig& config,
                         std::size_t n_samples, std::uint64_t seed) {
    Matrix X(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(x.size()));
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
        std::copy(x.begin(), x.end(), row_span(X, n).begin());
    }
    const Matrix joint = sample_plan(net, cost, X, config, seed);
    return joint.rightCols(static_cast<Eigen::Index>(net.input_dim()));
}

Matrix sample_plan(const nn::PotentialNetwork& net, const langevin::CostFunction& cost,
                   const Matrix& X, const InferenceConfig& config, std::uint64_t seed) {
    const auto dim = static_cast<Eigen::Index>(net.input_dim());
    if (!(config.sigma0 > 0.0)) {
        throw ConfigError("sigma0 must be positive");
    }
    Matrix init(X.rows(), dim);
    std::normal_distribution<double> normal(0.0, config.sigma0);
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
        auto gen = substream(seed, {stream_tag::chain_init, kInferenceSalt,
                                    static_cast<std::uint64_t>(n)});
        normal.reset();
        for (Eigen::Index d = 0; d < dim; ++d) {
            init(n, d) = normal(gen);
        }
    }
    langevin::SamplerConfig sampler{config.epsilon, config.eta, config.n_steps, config.sigma0};
    const Matrix Y = config.n_steps == 0
                         ? init
                         : langevin::sample_conditional(net, cost, X, sampler, init,
                                                        {seed, kInferenceSalt});
    Matrix joint(X.rows(), X.cols() + dim);
    joint.leftCols(X.cols()) = X;
    joint.rightCols(dim) = Y;
    return joint;
}

std::string metrics_csv(const std::vector<HistoryEntry>& history) {
    std::ostringstream out;
    out << kMetricsHeader << '\n';
    for (const auto& h : history) {
        out << h.iteration << ',' << io::format_double(h.loss) << ','
            << io::format_double(h.grad_norm) << ',' << io::format_double(h.mean_neg_energy) << ','
            << h.buffer_size << '\n';
    }
    return out.str();
}

void write_metrics_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path) {
    io::write_text_atomic(path, metrics_csv(history));
}

}  // namespace eot::trainer
