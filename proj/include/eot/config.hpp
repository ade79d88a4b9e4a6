#pragma once

#include "eot/data_gen.hpp"
#include "eot/nn_potential.hpp"
#include "eot/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eot::config {

// Flat key/value text with [sections]:
//
//   experiment = "g2g"     # comment
//   epsilon = 1.0
//   [train]
//   hidden = [64, 64]
//
// Values are numbers, "strings", true/false, or (nested) [arrays].

struct Value {
    enum class Kind { number, string, boolean, array };
    Kind kind = Kind::number;
    std::string text;           // raw token for numbers, contents for strings
    bool flag = false;
    std::vector<Value> items;
    int line = 0;
};

/// Keys are "section.key", or "key" before the first section header.
using Document = std::map<std::string, Value>;

/// Throws ConfigError("line N: ...") on malformed input or duplicate keys.
Document parse_document(const std::string& text);

enum class ExperimentKind { toy2d, g2g, oracle_check };

std::string to_string(ExperimentKind kind);

struct EvalSettings {
    std::size_t samples = 10000;
    std::size_t langevin_steps = 700;  // K_test
    double eta = 0.1;
    std::uint64_t seed = 0;
};

struct ToySettings {
    std::size_t reference_points = 2048;
    std::vector<std::vector<double>> probes{{0.0, 0.0}, {1.0, 0.5}, {-0.8, -0.6}};
    std::size_t samples_per_probe = 2000;
    double sinkhorn_tol = 1e-6;
    std::size_t plot_points = 1000;
};

struct OracleSettings {
    std::size_t grid_points = 400;
    double grid_lo = -6.0;
    double grid_hi = 6.0;
    double source_mean = 0.0;
    double source_var = 1.0;
    double target_mean = 1.0;
    double target_var = 1.0;
    std::vector<double> probes{-1.0, -0.5, 0.0, 0.5, 1.0};
    std::size_t pl_knots = 9;
    double pl_amplitude = 0.5;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::g2g;
    std::string name;  // experiment id in result records
    double epsilon = 1.0;
    std::size_t dim = 2;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "runs";

    nn::NetworkConfig network;
    trainer::TrainConfig train;
    EvalSettings eval;

    std::optional<data::GaussianPairSpec> pair;     // g2g
    std::optional<data::DistributionSpec> source;   // toy2d
    std::optional<data::DistributionSpec> target;   // toy2d
    ToySettings toy;
    OracleSettings oracle;

    // Seeds set explicitly in the file; the others follow `seed`.
    bool eval_seed_pinned = false;
    bool pair_seed_pinned = false;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// G2G learning rate of the reference hyperparameter table, if (dim,
/// epsilon) is one of its cells.
std::optional<double> reference_learning_rate(std::size_t dim, double epsilon);

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Replaces the master seed and every seed derived from it that the config
/// file did not pin explicitly.
void override_seed(ExperimentConfig& config, std::uint64_t seed);

}  // namespace eot::config
