#pragma once

#include "eot/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace eot::nn {

enum class Activation { relu, leaky_relu };
enum class InitScheme { uniform_he, zeros };

std::string to_string(Activation a);
std::string to_string(InitScheme s);
Activation parse_activation(const std::string& name);
InitScheme parse_init_scheme(const std::string& name);

struct NetworkConfig {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden_sizes{64, 64};
    Activation activation = Activation::relu;
    double slope = 0.2;  // leaky_relu only
    InitScheme init_scheme = InitScheme::uniform_he;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// One affine map `z = W a + b`. `weight` is out x in.
struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;

    friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
        return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
               a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
    }
};

/// Scalar potential y -> f(y): affine layers with the configured activation
/// between them and a linear scalar output.
struct PotentialNetwork {
    NetworkConfig config;
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return config.input_dim; }
    std::size_t parameter_count() const;

    /// Layers chain from input_dim to 1 and every entry is finite.
    void validate() const;

    friend bool operator==(const PotentialNetwork&, const PotentialNetwork&) = default;
};

/// Per-layer gradient, shape-congruent with the network it came from.
struct ParamGradient {
    std::vector<DenseLayer> layers;

    static ParamGradient zeros_like(const PotentialNetwork& net);
    double squared_norm() const;
    bool congruent_with(const PotentialNetwork& net) const;

    ParamGradient& operator+=(const ParamGradient& other);
    ParamGradient& operator-=(const ParamGradient& other);
    ParamGradient& operator*=(double s);

    friend bool operator==(const ParamGradient&, const ParamGradient&) = default;
};

ParamGradient operator-(ParamGradient a, const ParamGradient& b);

struct AdamState {
    std::vector<DenseLayer> first_moment;
    std::vector<DenseLayer> second_moment;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double lr = 1e-3;
    double eps = 1e-8;

    static AdamState for_network(const PotentialNetwork& net, double lr, double beta1 = 0.9,
                                 double beta2 = 0.999, double eps = 1e-8);

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Rows evaluated together by value_and_grad_block.
inline constexpr std::size_t kLanes = 8;

/// Scratch buffers for forward/backward passes of up to kLanes rows. Reuse
/// across calls on the same thread to avoid allocation in the Langevin
/// inner loop. Members are kernel internals.
struct Workspace {
    explicit Workspace(const PotentialNetwork& net);

    std::vector<std::vector<double>> pre_;   // pre-activations per layer
    std::vector<std::vector<double>> post_;  // activations of hidden layers
    std::vector<double> delta_;
    std::vector<double> delta_next_;
    std::vector<double> input_;
    std::vector<double> grad_;
};

PotentialNetwork init_network(const NetworkConfig& config);

/// Builds a network from explicit layers (any depth, including a single
/// affine layer); validates the layer chain.
PotentialNetwork make_network(NetworkConfig config, std::vector<DenseLayer> layers);

double forward(const PotentialNetwork& net, std::span<const double> y);
Vector forward_batch(const PotentialNetwork& net, const Matrix& ys);

Vector grad_input(const PotentialNetwork& net, std::span<const double> y);

/// Allocation-free variant for hot loops: writes df/dy into `out` and
/// returns f(y). No shape checks.
double value_and_grad_input(const PotentialNetwork& net, const double* y, double* out,
                            Workspace& ws);

/// Values and input gradients of `rows` <= kLanes rows of `ys` (row-major,
/// input_dim columns); `grads` is row-major too. Bitwise identical to
/// value_and_grad_input applied row by row.
void value_and_grad_block(const PotentialNetwork& net, const double* ys, std::size_t rows,
                          double* values, double* grads, Workspace& ws);

/// Gradient of sum_n w_n f(y_n) with respect to all parameters.
ParamGradient grad_params_weighted(const PotentialNetwork& net, const Matrix& ys,
                                   std::span<const double> weights);

/// One Adam update with bias correction. `maximize` ascends.
std::pair<PotentialNetwork, AdamState> adam_step(const PotentialNetwork& net,
                                                 const ParamGradient& grad,
                                                 const AdamState& state, bool maximize);

// Checkpoints: {"format_version": 1, "config": {...}, "layers": [{"w", "b"}...]}.
inline constexpr int kCheckpointFormatVersion = 1;

std::string checkpoint_to_string(const PotentialNetwork& net);
PotentialNetwork checkpoint_from_string(const std::string& text);
void save_checkpoint(const PotentialNetwork& net, const std::filesystem::path& path);
PotentialNetwork load_checkpoint(const std::filesystem::path& path);

// Single-row kernels.
double forward_into(const PotentialNetwork& net, const double* y, Workspace& ws);
void backward_input(const PotentialNetwork& net, Workspace& ws, double* grad_out);
void accumulate_params(const PotentialNetwork& net, const double* y, double weight,
                       Workspace& ws, ParamGradient& grad);

}  // namespace eot::nn
