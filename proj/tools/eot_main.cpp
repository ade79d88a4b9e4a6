// eot: train, evaluate and sample entropic OT plans from the command line.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.

#include "eot/config.hpp"
#include "eot/errors.hpp"
#include "eot/experiment.hpp"
#include "eot/io.hpp"
#include "eot/trainer.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace eot;

enum Exit { kOk = 0, kValidation = 1, kNumerical = 2, kIo = 3 };

std::vector<double> parse_vector(const std::string& text) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find(',', start), text.size());
        std::string token = text.substr(start, end - start);
        token.erase(0, token.find_first_not_of(' '));
        token.erase(token.find_last_not_of(' ') + 1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
            throw ConfigError("--x must be a comma-separated list of numbers (got '" + text + "')");
        }
        out.push_back(v);
        start = end + 1;
    }
    return out;
}

void print_progress(const trainer::HistoryEntry& h) {
    std::cerr << "iter " << h.iteration << " loss " << io::format_double(h.loss) << " grad_norm "
              << io::format_double(h.grad_norm) << " neg_energy "
              << io::format_double(h.mean_neg_energy) << '\n';
}

int train(const std::string& config_path, const std::optional<std::string>& output,
          const std::optional<std::uint64_t>& seed) {
    auto c = config::parse_config(config_path);
    if (output) {
        c.output_dir = *output;
    }
    if (seed) {
        config::override_seed(c, *seed);
    }
    const auto records = experiment::run(c, print_progress);
    std::cout << experiment::results_csv(records);
    return kOk;
}

int eval(const std::string& checkpoint, const std::string& config_path) {
    const auto c = config::parse_config(config_path);
    const auto net = experiment::load_checkpoint(checkpoint);
    std::cout << experiment::results_csv(experiment::evaluate(c, net));
    return kOk;
}

struct SampleArgs {
    std::string checkpoint;
    std::string x;
    std::size_t n = 0;
    std::optional<std::string> config;
    std::optional<double> epsilon;
    std::optional<double> eta;
    std::optional<std::size_t> steps;
    std::optional<double> sigma0;
    std::uint64_t seed = 0;
};

int sample(const SampleArgs& a) {
    const auto net = experiment::load_checkpoint(a.checkpoint);
    std::optional<experiment::SamplingInfo> info;
    if (a.config) {
        info = experiment::sampling_info(config::parse_config(*a.config));
    } else {
        info = experiment::load_sampling_info(a.checkpoint);
    }
    if (!info && !a.epsilon) {
        throw ConfigError("checkpoint has no sampling block: pass --epsilon or --config");
    }
    experiment::SamplingInfo s = info.value_or(experiment::SamplingInfo{});
    s.epsilon = a.epsilon.value_or(s.epsilon);
    s.eta = a.eta.value_or(s.eta);
    s.langevin_steps = a.steps.value_or(s.langevin_steps);
    s.sigma0 = a.sigma0.value_or(s.sigma0);
    if (!(s.epsilon > 0.0) || !(s.eta > 0.0)) {
        throw ConfigError("epsilon and eta must be positive");
    }
    if (a.n == 0) {
        throw ConfigError("--n must be positive");
    }
    const std::vector<double> x = parse_vector(a.x);
    if (x.size() != net.input_dim()) {
        throw ConfigError("--x has " + std::to_string(x.size()) + " entries, the network expects " +
                          std::to_string(net.input_dim()));
    }
    const Matrix y = trainer::infer_conditional(
        net, langevin::CostFunction::quadratic(), x,
        trainer::InferenceConfig{s.langevin_steps, s.eta, s.sigma0, s.epsilon}, a.n, a.seed);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        for (Eigen::Index d = 0; d < y.cols(); ++d) {
            std::cout << (d ? "," : "") << io::format_double(y(r, d));
        }
        std::cout << '\n';
    }
    return kOk;
}

int oracle_check(const std::string& config_path) {
    const auto c = config::parse_config(config_path);
    if (c.experiment != config::ExperimentKind::oracle_check) {
        throw ConfigError("oracle-check needs experiment = \"oracle_check\"");
    }
    std::cout << experiment::results_csv(experiment::run_oracle_check(c));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entropic optimal transport via energy-based potentials"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    auto* train_cmd = app.add_subcommand("train", "Train and evaluate an experiment");
    train_cmd->add_option("--config", config_path, "Experiment config file")->required();
    train_cmd->add_option("--output", output, "Output directory (overrides output_dir)");
    train_cmd->add_option("--seed", seed, "Master seed (overrides seed)");

    std::string checkpoint;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    eval_cmd->add_option("--config", config_path, "Experiment config file")->required();

    SampleArgs sa;
    auto* sample_cmd = app.add_subcommand("sample", "Draw y ~ pi(.|x) from a checkpoint");
    sample_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint JSON")->required();
    sample_cmd->add_option("--x", sa.x, "Conditioning point, comma separated")->required();
    sample_cmd->add_option("--n", sa.n, "Number of samples")->required();
    sample_cmd->add_option("--config", sa.config, "Take sampler settings from this config");
    sample_cmd->add_option("--epsilon", sa.epsilon, "Entropic coefficient");
    sample_cmd->add_option("--eta", sa.eta, "Langevin step size");
    sample_cmd->add_option("--steps", sa.steps, "Langevin steps");
    sample_cmd->add_option("--sigma0", sa.sigma0, "Chain initialisation std");
    sample_cmd->add_option("--seed", sa.seed, "Sampling seed");

    auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the quadrature oracle checks");
    oracle_cmd->add_option("--config", config_path, "oracle_check config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (*train_cmd) {
            return train(config_path, output, seed);
        }
        if (*eval_cmd) {
            return eval(checkpoint, config_path);
        }
        if (*sample_cmd) {
            return sample(sa);
        }
        if (*oracle_cmd) {
            return oracle_check(config_path);
        }
    } catch (const IoError& e) {
        std::cerr << "eot: I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
        std::cerr << "eot: invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const std::out_of_range& e) {
        std::cerr << "eot: invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {  // NumericalError, MatrixError, ConvergenceError
        std::cerr << "eot: numerical failure: " << e.what() << '\n';
        return kNumerical;
    }
    return kValidation;
}
