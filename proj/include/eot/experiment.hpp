#pragma once

#include "eot/config.hpp"
#include "eot/nn_potential.hpp"
#include "eot/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eot::experiment {

struct ResultRecord {
    std::string experiment;
    double epsilon = 0.0;
    std::size_t dim = 0;
    std::string metric;
    double value = 0.0;
    double seconds = 0.0;
    std::uint64_t seed = 0;
    std::string build;
};

inline constexpr const char* kResultsHeader =
    "experiment,epsilon,dim,metric,value,seconds,seed,build";

/// Build identifier baked in at configure time (git revision when
/// available).
std::string build_id();

std::string results_csv(const std::vector<ResultRecord>& records);
void save_results(const std::vector<ResultRecord>& records, const std::filesystem::path& path);

/// Sampler settings stored next to the network in run checkpoints, so
/// `eot sample` needs nothing else.
struct SamplingInfo {
    double epsilon = 1.0;
    double eta = 0.1;
    std::size_t langevin_steps = 700;
    double sigma0 = 1.0;
};

void save_checkpoint(const nn::PotentialNetwork& net, const SamplingInfo& info,
                     const std::filesystem::path& path);
nn::PotentialNetwork load_checkpoint(const std::filesystem::path& path);
std::optional<SamplingInfo> load_sampling_info(const std::filesystem::path& path);

SamplingInfo sampling_info(const config::ExperimentConfig& config);

// Runners write into config.output_dir: results.csv, and for trained
// experiments metrics.csv and checkpoint.json (toy2d adds plots/*.svg).
// On a training failure the metrics seen so far are flushed before the
// error propagates.
// `progress` sees every train.log_every-th history entry.
using Progress = std::function<void(const trainer::HistoryEntry&)>;

std::vector<ResultRecord> run_g2g(const config::ExperimentConfig& config,
                                  const Progress& progress = {});
std::vector<ResultRecord> run_toy2d(const config::ExperimentConfig& config,
                                    const Progress& progress = {});
std::vector<ResultRecord> run_oracle_check(const config::ExperimentConfig& config);
std::vector<ResultRecord> run(const config::ExperimentConfig& config,
                              const Progress& progress = {});

/// Metrics of a trained network for a g2g or toy2d config, without
/// training and without writing files. Deterministic in (net, eval seed).
std::vector<ResultRecord> evaluate(const config::ExperimentConfig& config,
                                   const nn::PotentialNetwork& net);

}  // namespace eot::experiment
