#include "eot/experiment.hpp"

#include "eot/data_gen.hpp"
#include "eot/errors.hpp"
#include "eot/evaluation.hpp"
#include "eot/io.hpp"
#include "eot/reference.hpp"
#include "eot/rng.hpp"
#include "eot/svg.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#ifndef EOT_BUILD_ID
#define EOT_BUILD_ID "unknown"
#endif

namespace eot::experiment {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

class Recorder {
public:
    Recorder(const config::ExperimentConfig& c, Clock::time_point start) : c_(c), start_(start) {}

    void add(const std::string& metric, double value) {
        if (!std::isfinite(value)) {
            throw NumericalError("metric " + metric + " is not finite");
        }
        records_.push_back({c_.name, c_.epsilon, c_.dim, metric, value, seconds_since(start_),
                            c_.seed, build_id()});
    }

    std::vector<ResultRecord>& records() { return records_; }

private:
    const config::ExperimentConfig& c_;
    Clock::time_point start_;
    std::vector<ResultRecord> records_;
};

std::filesystem::path out_path(const config::ExperimentConfig& c, const std::string& name) {
    return c.output_dir / name;
}

// Trains step by step so the history reached so far can be written out if a
// step fails.
trainer::TrainResult train_with_flush(const config::ExperimentConfig& c,
                                      const trainer::BatchSource& sample_p,
                                      const trainer::BatchSource& sample_q,
                                      const langevin::CostFunction& cost,
                                      const Progress& progress) {
    trainer::TrainState state = trainer::init_train_state(c.network, c.train);
    try {
        for (std::size_t i = 0; i < c.train.n_iterations; ++i) {
            state = trainer::train_step(std::move(state), sample_p, sample_q, cost, c.train);
            if (progress && state.iteration % c.train.eval_every == 0) {
                progress(state.history.back());
            }
        }
    } catch (...) {
        trainer::write_metrics_csv(state.history, out_path(c, "metrics.csv"));
        throw;
    }
    trainer::write_metrics_csv(state.history, out_path(c, "metrics.csv"));
    return {std::move(state.net), std::move(state.history)};
}

trainer::InferenceConfig inference_config(const config::ExperimentConfig& c) {
    return {c.eval.langevin_steps, c.eval.eta, c.train.sampler.sigma0, c.epsilon};
}

struct GaussianProblem {
    Eigen::MatrixXd sigma_x;
    Eigen::MatrixXd sigma_y;
    data::DistributionSpec p;
    data::DistributionSpec q;
    reference::GaussianEOTPlan plan;
};

GaussianProblem gaussian_problem(const config::ExperimentConfig& c) {
    auto [sx, sy] = data::make_random_gaussian_pair(*c.pair);
    const auto d = static_cast<Eigen::Index>(c.dim);
    auto p = data::DistributionSpec::gaussian(Vector::Zero(d), sx);
    auto q = data::DistributionSpec::gaussian(Vector::Zero(d), sy);
    auto plan = reference::gaussian_eot_plan(sx, sy, c.epsilon);
    return {std::move(sx), std::move(sy), std::move(p), std::move(q), std::move(plan)};
}

void evaluate_g2g(const config::ExperimentConfig& c, const nn::PotentialNetwork& net,
                  Recorder& rec) {
    const GaussianProblem prob = gaussian_problem(c);
    const Matrix X =
        data::sample_range(prob.p, c.eval.seed, stream_tag::evaluation, 0, c.eval.samples);
    const Matrix joint = trainer::sample_plan(net, langevin::CostFunction::quadratic(), X,
                                              inference_config(c), c.eval.seed);
    rec.add("bw_uvp", evaluation::bw_uvp(joint, prob.plan));
}

struct ToyReference {
    Matrix xs;
    Matrix ys;
    reference::DiscreteCoupling coupling;
};

ToyReference toy_reference(const config::ExperimentConfig& c) {
    const std::size_t m = c.toy.reference_points;
    Matrix xs = data::sample_range(*c.source, c.seed, stream_tag::source, 0, m);
    Matrix ys = data::sample_range(*c.target, c.seed, stream_tag::target, 0, m);
    const Vector w = Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
    reference::SinkhornOptions opt;
    opt.tol = c.toy.sinkhorn_tol;
    opt.check_every = 10;
    auto coupling =
        reference::sinkhorn(reference::quadratic_cost_matrix(xs, ys), w, w, c.epsilon, opt);
    return {std::move(xs), std::move(ys), std::move(coupling)};
}

std::uint64_t probe_seed(const config::ExperimentConfig& c, std::size_t p) {
    return substream_key(c.eval.seed, {stream_tag::probe, p});
}

struct ToyEvaluation {
    std::vector<Matrix> conditionals;
    Matrix pushforward;
    Matrix target_sample;
};

ToyEvaluation evaluate_toy(const config::ExperimentConfig& c, const nn::PotentialNetwork& net,
                           Recorder& rec) {
    const auto cost = langevin::CostFunction::quadratic();
    const ToyReference ref = toy_reference(c);
    rec.add("sinkhorn_violation", ref.coupling.violation);
    ToyEvaluation out;
    for (std::size_t p = 0; p < c.toy.probes.size(); ++p) {
        const auto& x = c.toy.probes[p];
        Matrix learned = trainer::infer_conditional(net, cost, x, inference_config(c),
                                                    c.toy.samples_per_probe, probe_seed(c, p));
        const Vector w = reference::conditional_at(ref.coupling, ref.ys, x, cost);
        const auto gap = evaluation::conditional_compare(learned, w, ref.ys);
        rec.add("cond_mean_gap_" + std::to_string(p), gap.mean_gap);
        rec.add("cond_cov_gap_" + std::to_string(p), gap.cov_gap);
        out.conditionals.push_back(std::move(learned));
    }
    const Matrix X =
        data::sample_range(*c.source, c.eval.seed, stream_tag::evaluation, 0, c.eval.samples);
    const Matrix joint = trainer::sample_plan(net, cost, X, inference_config(c), c.eval.seed);
    out.pushforward = joint.rightCols(2);
    out.target_sample =
        data::sample_range(*c.target, c.eval.seed, stream_tag::eval_target, 0, c.eval.samples);
    const auto fitted = evaluation::estimate_moments(out.pushforward);
    const auto truth = evaluation::estimate_moments(out.target_sample);
    rec.add("marginal_mean_gap", (fitted.mean - truth.mean).norm());
    rec.add("marginal_cov_gap", (fitted.cov - truth.cov).norm());
    return out;
}

Matrix head(const Matrix& m, std::size_t n) {
    return m.topRows(std::min<Eigen::Index>(m.rows(), static_cast<Eigen::Index>(n)));
}

void write_toy_plots(const config::ExperimentConfig& c, const ToyEvaluation& ev) {
    const std::size_t n = c.toy.plot_points;
    const Matrix xs = data::sample_range(*c.source, c.eval.seed, stream_tag::evaluation, 0, n);
    const auto dir = c.output_dir / "plots";
    svg::write({"source", {{xs, "#2ca02c", 1.5, "x ~ P"}}}, dir / "source.svg");
    svg::write({"target", {{head(ev.target_sample, n), "#ff7f0e", 1.5, "y ~ Q"}}},
               dir / "target.svg");
    svg::write({"fitted marginal", {{head(ev.pushforward, n), "#1f77b4", 1.5, "y ~ pi(y|x), x ~ P"}}},
               dir / "fitted.svg");
    static const char* kColors[] = {"#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    svg::ScatterPlot cond{"conditional plans", {}};
    cond.series.push_back({head(ev.target_sample, n), "#c7c7c7", 1.0, "Q"});
    for (std::size_t p = 0; p < ev.conditionals.size(); ++p) {
        const char* color = kColors[p % 5];
        const auto& x = c.toy.probes[p];
        Matrix probe(1, 2);
        probe << x[0], x[1];
        std::ostringstream label;
        label << "pi(.|x=(" << x[0] << ", " << x[1] << "))";
        cond.series.push_back({head(ev.conditionals[p], n / 2), color, 1.5, label.str()});
        cond.series.push_back({probe, color, 5.0, ""});
    }
    svg::write(cond, dir / "conditionals.svg");
}

}  // namespace

std::string build_id() {
    return EOT_BUILD_ID;
}

std::string results_csv(const std::vector<ResultRecord>& records) {
    std::ostringstream out;
    out << kResultsHeader << '\n';
    for (const auto& r : records) {
        out << r.experiment << ',' << io::format_double(r.epsilon) << ',' << r.dim << ','
            << r.metric << ',' << io::format_double(r.value) << ',' << io::format_double(r.seconds)
            << ',' << r.seed << ',' << r.build << '\n';
    }
    return out.str();
}

void save_results(const std::vector<ResultRecord>& records, const std::filesystem::path& path) {
    io::write_text_atomic(path, results_csv(records));
}

SamplingInfo sampling_info(const config::ExperimentConfig& c) {
    return {c.epsilon, c.eval.eta, c.eval.langevin_steps, c.train.sampler.sigma0};
}

void save_checkpoint(const nn::PotentialNetwork& net, const SamplingInfo& info,
                     const std::filesystem::path& path) {
    json doc = json::parse(nn::checkpoint_to_string(net));
    doc["sampling"] = {{"epsilon", info.epsilon},
                       {"eta", info.eta},
                       {"langevin_steps", info.langevin_steps},
                       {"sigma0", info.sigma0}};
    io::write_text_atomic(path, doc.dump(1) + "\n");
}

nn::PotentialNetwork load_checkpoint(const std::filesystem::path& path) {
    return nn::load_checkpoint(path);
}

std::optional<SamplingInfo> load_sampling_info(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    if (!doc.contains("sampling")) {
        return std::nullopt;
    }
    try {
        const json& s = doc.at("sampling");
        return SamplingInfo{s.at("epsilon").get<double>(), s.at("eta").get<double>(),
                            s.at("langevin_steps").get<std::size_t>(),
                            s.at("sigma0").get<double>()};
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": malformed sampling block: " + e.what());
    }
}

std::vector<ResultRecord> run_g2g(const config::ExperimentConfig& c, const Progress& progress) {
    const auto start = Clock::now();
    Recorder rec(c, start);
    const GaussianProblem prob = gaussian_problem(c);
    const auto cost = langevin::CostFunction::quadratic();
    const auto result = train_with_flush(c, data::batch_source(prob.p, c.seed, stream_tag::source),
                                         data::batch_source(prob.q, c.seed, stream_tag::target),
                                         cost, progress);
    save_checkpoint(result.net, sampling_info(c), out_path(c, "checkpoint.json"));
    rec.add("loss_final", result.history.back().loss);
    evaluate_g2g(c, result.net, rec);
    save_results(rec.records(), out_path(c, "results.csv"));
    return rec.records();
}

std::vector<ResultRecord> run_toy2d(const config::ExperimentConfig& c, const Progress& progress) {
    const auto start = Clock::now();
    Recorder rec(c, start);
    const auto cost = langevin::CostFunction::quadratic();
    const auto result = train_with_flush(c, data::batch_source(*c.source, c.seed, stream_tag::source),
                                         data::batch_source(*c.target, c.seed, stream_tag::target),
                                         cost, progress);
    save_checkpoint(result.net, sampling_info(c), out_path(c, "checkpoint.json"));
    rec.add("loss_final", result.history.back().loss);
    const ToyEvaluation ev = evaluate_toy(c, result.net, rec);
    write_toy_plots(c, ev);
    save_results(rec.records(), out_path(c, "results.csv"));
    return rec.records();
}

std::vector<ResultRecord> run_oracle_check(const config::ExperimentConfig& c) {
    const auto start = Clock::now();
    Recorder rec(c, start);
    const auto& o = c.oracle;
    const auto cost = langevin::CostFunction::quadratic();
    const auto grid = reference::Grid1D::uniform(o.grid_lo, o.grid_hi, o.grid_points);
    const auto p = reference::gaussian_density(grid, o.source_mean, o.source_var);
    const auto q = reference::gaussian_density(grid, o.target_mean, o.target_var);

    // Random piecewise-linear potential on equispaced knots.
    auto gen = substream(c.seed, {stream_tag::function});
    std::uniform_real_distribution<double> unif(-o.pl_amplitude, o.pl_amplitude);
    std::vector<double> knots(o.pl_knots);
    std::vector<double> values(o.pl_knots);
    for (std::size_t k = 0; k < o.pl_knots; ++k) {
        knots[k] = o.grid_lo + (o.grid_hi - o.grid_lo) * static_cast<double>(k) /
                                   static_cast<double>(o.pl_knots - 1);
        values[k] = unif(gen);
    }
    const reference::PiecewiseLinear pl(knots, values);
    const std::vector<std::pair<std::string, reference::ScalarFunction>> potentials{
        {"zero", [](std::span<const double>) { return 0.0; }},
        {"piecewise_linear", [pl](std::span<const double> y) { return pl(y); }},
    };
    for (const auto& [label, f] : potentials) {
        const auto gap = reference::kl_gap_check(f, p, q, cost, c.epsilon);
        rec.add("kl_lhs_" + label, gap.lhs);
        rec.add("kl_rhs_" + label, gap.rhs);
        rec.add("kl_abs_diff_" + label, std::abs(gap.lhs - gap.rhs));
        rec.add("semidual_spread_" + label,
                reference::semidual_consistency_check(f, q, cost, c.epsilon, o.probes));
    }
    save_results(rec.records(), out_path(c, "results.csv"));
    return rec.records();
}

std::vector<ResultRecord> run(const config::ExperimentConfig& c, const Progress& progress) {
    switch (c.experiment) {
        case config::ExperimentKind::g2g:
            return run_g2g(c, progress);
        case config::ExperimentKind::toy2d:
            return run_toy2d(c, progress);
        case config::ExperimentKind::oracle_check:
            return run_oracle_check(c);
    }
    throw ConfigError("unknown experiment kind");
}

std::vector<ResultRecord> evaluate(const config::ExperimentConfig& c,
                                   const nn::PotentialNetwork& net) {
    require_shape(net.input_dim() == c.dim, "checkpoint dimension does not match the config");
    Recorder rec(c, Clock::now());
    switch (c.experiment) {
        case config::ExperimentKind::g2g:
            evaluate_g2g(c, net, rec);
            break;
        case config::ExperimentKind::toy2d:
            evaluate_toy(c, net, rec);
            break;
        case config::ExperimentKind::oracle_check:
            throw ConfigError("oracle_check has no trained network to evaluate");
    }
    return rec.records();
}

}  // namespace eot::experiment
