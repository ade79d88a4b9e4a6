#pragma once

#include "eot/langevin.hpp"
#include "eot/linalg.hpp"
#include "eot/nn_potential.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eot::trainer {

/// Linear decay of the learning rate from `start_iteration` to `lr_final`
/// at the last iteration.
struct LrDecay {
    std::size_t start_iteration = 0;
    double lr_final = 0.0;
};

struct TrainConfig {
    langevin::SamplerConfig sampler;
    std::size_t batch_size = 1024;
    std::size_t n_iterations = 1000;
    double lr = 1e-4;
    std::optional<LrDecay> decay;
    std::size_t buffer_capacity = 10000;
    double buffer_prob = 0.95;
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;

    void validate() const;
    double lr_at(std::size_t iteration) const;
};

struct HistoryEntry {
    std::size_t iteration = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double mean_neg_energy = 0.0;
    std::size_t buffer_size = 0;

    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct TrainState {
    nn::PotentialNetwork net;
    nn::AdamState adam;
    langevin::ReplayBuffer buffer;
    std::size_t iteration = 0;
    std::vector<HistoryEntry> history;

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Batch source: returns `n` samples for the given training iteration. Must
/// be a pure function of its arguments for runs to be reproducible.
using BatchSource = std::function<Matrix(std::size_t iteration, std::size_t n)>;

using Callback = std::function<void(const TrainState&)>;

TrainState init_train_state(const nn::NetworkConfig& net_config, const TrainConfig& config);
TrainState init_train_state(nn::PotentialNetwork net, const TrainConfig& config);

/// L = -mean f(y_neg) + mean f(y_pos).
double surrogate_loss(const nn::PotentialNetwork& net, const Matrix& y_neg, const Matrix& y_pos);

/// dL/dtheta with y_neg held constant:
/// grad_params_weighted(y_pos, 1/N) - grad_params_weighted(y_neg, 1/N).
nn::ParamGradient loss_gradient(const nn::PotentialNetwork& net, const Matrix& y_neg,
                                const Matrix& y_pos);

/// Negative phase of one iteration: chain initialisation from the buffer and
/// K Langevin steps conditioned on `X`.
Matrix negative_samples(const TrainState& state, const Matrix& X,
                        const langevin::CostFunction& cost, const TrainConfig& config);

TrainState train_step(TrainState state, const BatchSource& sample_p, const BatchSource& sample_q,
                      const langevin::CostFunction& cost, const TrainConfig& config);

struct TrainResult {
    nn::PotentialNetwork net;
    std::vector<HistoryEntry> history;
};

/// Runs n_iterations steps; `callback` (if set) sees the state after every
/// eval_every-th step.
TrainResult train(const nn::NetworkConfig& net_config, const TrainConfig& config,
                  const BatchSource& sample_p, const BatchSource& sample_q,
                  const langevin::CostFunction& cost, const Callback& callback = {});

struct InferenceConfig {
    std::size_t n_steps = 700;
    double eta = 0.1;
    double sigma0 = 1.0;
    double epsilon = 1.0;
};

/// n_samples chains started from N(0, sigma0^2 I), all conditioned on x.
Matrix infer_conditional(const nn::PotentialNetwork& net, const langevin::CostFunction& cost,
                         std::span<const double> x, const InferenceConfig& config,
                         std::size_t n_samples, std::uint64_t seed);

/// One chain per row of X; returns the joint samples [X | Y].
Matrix sample_plan(const nn::PotentialNetwork& net, const langevin::CostFunction& cost,
                   const Matrix& X, const InferenceConfig& config, std::uint64_t seed);

inline constexpr const char* kMetricsHeader = "iteration,loss,grad_norm,mean_neg_energy,buffer_size";

std::string metrics_csv(const std::vector<HistoryEntry>& history);
void write_metrics_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path);

}  // namespace eot::trainer
