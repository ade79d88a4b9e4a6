// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "eot/config.hpp"
#include "eot/evaluation.hpp"
#include "eot/experiment.hpp"
#include "eot/io.hpp"
#include "eot/langevin.hpp"
#include "eot/nn_potential.hpp"
#include "eot/reference.hpp"
#include "eot/trainer.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace eot;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kFdRelTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kKinkMargin = 1e-3;
constexpr double kUlaVarRelTol = 0.02;
constexpr double kSinkhornViolationTol = 1e-9;
constexpr double kAssignmentTol = 1e-3;
constexpr double kGaussianPlanTol = 1e-2;
constexpr double kKlRelTol = 0.02;
constexpr double kKlAbsTol = 1e-3;
constexpr double kSemidualTol = 1e-4;
constexpr double kUvpTolD2 = 1.0;
constexpr double kUvpTolD16 = 3.0;
constexpr double kCondMeanTol = 0.3;
constexpr double kCondCovTol = 0.5;
constexpr double kMarginalMeanTol = 0.2;
constexpr double kMarginalCovTol = 0.3;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [x]");
    }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

fs::path config_path(const std::string& name) {
    return fs::path(EOT_SOURCE_DIR) / "configs" / "desk" / (name + ".toml");
}

fs::path run_root() {
    return fs::current_path() / "acceptance_runs";
}

double metric(const std::vector<experiment::ResultRecord>& records, const std::string& name) {
    for (const auto& r : records) {
        if (r.metric == name) {
            return r.value;
        }
    }
    throw std::runtime_error("missing metric " + name);
}

std::vector<experiment::ResultRecord> run_desk(const std::string& name, const std::string& suffix = "") {
    auto c = config::parse_config(config_path(name));
    c.output_dir = run_root() / (name + suffix);
    return experiment::run(c);
}

// Results CSV without the wall-clock column.
std::string strip_seconds(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k != 5) {
                out << cells[k] << ',';
            }
        }
        out << '\n';
    }
    return out.str();
}

void gradient_fd(Outcome& o) {
    std::mt19937_64 gen(1);
    std::uniform_int_distribution<std::size_t> in_dim(1, 2);
    std::uniform_int_distribution<std::size_t> width(1, 16);
    std::uniform_int_distribution<std::size_t> depth(1, 2);
    std::uniform_real_distribution<double> bias(-0.3, 0.3);
    double worst_input = 0.0;
    double worst_loss = 0.0;
    std::size_t networks = 0;
    for (std::uint64_t seed = 0; networks < 50; ++seed) {
        nn::NetworkConfig c;
        c.input_dim = in_dim(gen);
        c.hidden_sizes.assign(depth(gen), 0);
        for (auto& h : c.hidden_sizes) {
            h = width(gen);
        }
        c.activation = seed % 2 ? nn::Activation::relu : nn::Activation::leaky_relu;
        c.seed = seed;
        auto net = nn::init_network(c);
        for (auto& l : net.layers) {
            for (Eigen::Index k = 0; k < l.bias.size(); ++k) {
                l.bias(k) = bias(gen);
            }
        }
        const auto d = static_cast<Eigen::Index>(c.input_dim);
        const Matrix neg = oracle::random_matrix(4, d, 2 * seed + 1);
        const Matrix pos = oracle::random_matrix(4, d, 2 * seed + 2);
        bool smooth = true;
        for (Eigen::Index n = 0; n < 4; ++n) {
            smooth = smooth && oracle::min_abs_preactivation(net, neg.row(n).transpose()) > kKinkMargin &&
                     oracle::min_abs_preactivation(net, pos.row(n).transpose()) > kKinkMargin;
        }
        if (!smooth) {
            continue;
        }
        const Eigen::VectorXd y = pos.row(0).transpose();
        const auto fd = oracle::fd_gradient(
            [&](const Eigen::VectorXd& v) {
                return nn::forward(net, std::span(v.data(), static_cast<std::size_t>(d)));
            },
            y, kFdStep);
        const Vector g = nn::grad_input(net, std::span(y.data(), static_cast<std::size_t>(d)));
        worst_input = std::max(worst_input, oracle::max_rel_error(std::span(g.data(), g.size()),
                                                                  std::span(fd.data(), fd.size())));
        const auto analytic = oracle::flatten(trainer::loss_gradient(net, neg, pos));
        const auto fd_loss = oracle::fd_param_gradient(
            net, [&](const nn::PotentialNetwork& n) { return trainer::surrogate_loss(n, neg, pos); },
            kFdStep);
        worst_loss = std::max(worst_loss, oracle::max_rel_error(analytic, fd_loss));
        ++networks;
    }
    o.check(worst_input <= kFdRelTol, "grad_input max rel err " + num(worst_input));
    o.check(worst_loss <= kFdRelTol, "loss_gradient max rel err " + num(worst_loss));
}

void ula_variance(Outcome& o) {
    nn::NetworkConfig c;
    c.input_dim = 1;
    c.hidden_sizes = {1};
    c.init_scheme = nn::InitScheme::zeros;
    const auto net = nn::init_network(c);
    const double eta = 0.1;
    const langevin::SamplerConfig sc{1.0, eta, 5000, 1.0};
    const Matrix X = Matrix::Zero(10000, 1);
    const Matrix init = oracle::random_matrix(10000, 1, 5);
    const Matrix Y =
        langevin::sample_conditional(net, langevin::CostFunction::quadratic(), X, sc, init, {2024, 0});
    const double var = evaluation::estimate_moments(Y).cov(0, 0);
    const double expected = 1.0 / (1.0 - eta / 4.0);
    const double rel = std::abs(var - expected) / expected;
    o.check(rel <= kUlaVarRelTol, "variance " + num(var) + " vs " + num(expected) + ", rel err " + num(rel));
}

void sinkhorn_oracle(Outcome& o) {
    double worst = 0.0;
    for (const double eps : {0.01, 0.1, 1.0, 10.0}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Matrix xs = oracle::random_matrix(50, 2, seed);
            const Matrix ys = oracle::random_matrix(50, 2, seed + 100);
            std::mt19937_64 gen(seed + 200);
            std::uniform_real_distribution<double> u(0.1, 1.0);
            Vector a(50);
            Vector b(50);
            for (Eigen::Index i = 0; i < 50; ++i) {
                a(i) = u(gen);
                b(i) = u(gen);
            }
            a /= a.sum();
            b /= b.sum();
            const auto cpl = reference::sinkhorn(reference::quadratic_cost_matrix(xs, ys), a, b, eps);
            const double viol = (cpl.plan.rowwise().sum() - a).cwiseAbs().sum() +
                                (cpl.plan.colwise().sum().transpose() - b).cwiseAbs().sum();
            worst = std::max(worst, viol);
        }
    }
    o.check(worst <= kSinkhornViolationTol, "50x50 max violation " + num(worst));

    Eigen::MatrixXd cost(2, 2);
    cost << 0.0, 1.0, 1.0, 0.0;
    const Vector half = Vector::Constant(2, 0.5);
    const auto cpl = reference::sinkhorn(cost, half, half, 1e-3);
    Eigen::MatrixXd exact(2, 2);
    exact << 0.5, 0.0, 0.0, 0.5;
    const double err = (cpl.plan - exact).cwiseAbs().maxCoeff();
    o.check(err <= kAssignmentTol, "2x2 assignment err " + num(err));
}

void gaussian_plan(Outcome& o) {
    // The [-6, 6] grid truncates N(0, 4) at three standard deviations, so the
    // closed form is evaluated at the variances of the discretised marginals.
    auto cross_1d = [](double vx, double vy, double eps) {
        Eigen::MatrixXd sx(1, 1);
        Eigen::MatrixXd sy(1, 1);
        sx << vx;
        sy << vy;
        return reference::gaussian_eot_plan(sx, sy, eps).cross(0, 0);
    };
    double worst = 0.0;
    double worst_nominal = 0.0;
    for (const auto& [vx, vy] : {std::pair{1.0, 1.0}, std::pair{1.0, 4.0}}) {
        for (const double eps : {0.1, 1.0, 10.0}) {
            const double grid = oracle::grid_cross_covariance_1d(vx, vy, eps);
            worst = std::max(worst, std::abs(cross_1d(oracle::grid_variance(vx),
                                                      oracle::grid_variance(vy), eps) -
                                             grid));
            worst_nominal = std::max(worst_nominal, std::abs(cross_1d(vx, vy, eps) - grid));
        }
    }
    o.check(worst <= kGaussianPlanTol, "1D max err " + num(worst));
    o.detail << " (nominal variances: " << num(worst_nominal) << ")";

    Eigen::MatrixXd sx(2, 2);
    Eigen::MatrixXd sy(2, 2);
    sx << 1.0, 0.5, 0.5, 1.5;
    sy << 2.0, -0.6, -0.6, 1.0;
    double worst_2d = 0.0;
    for (const double eps : {0.1, 1.0, 10.0}) {
        const auto closed = reference::gaussian_eot_plan(sx, sy, eps).cross;
        worst_2d = std::max(worst_2d,
                            (closed - oracle::grid_cross_covariance_2d(sx, sy, eps)).cwiseAbs().maxCoeff());
    }
    o.check(worst_2d <= kGaussianPlanTol, "2D 60x60 max err " + num(worst_2d));
}

std::vector<experiment::ResultRecord>& oracle_records() {
    static std::vector<experiment::ResultRecord> records = run_desk("oracle_check");
    return records;
}

void kl_identity(Outcome& o) {
    for (const std::string f : {"zero", "piecewise_linear"}) {
        const auto& r = oracle_records();
        const double lhs = metric(r, "kl_lhs_" + f);
        const double diff = metric(r, "kl_abs_diff_" + f);
        const double tol = std::max(kKlRelTol * std::abs(lhs), kKlAbsTol);
        o.check(diff <= tol, f + ": lhs " + num(lhs) + " rhs " + num(metric(r, "kl_rhs_" + f)) +
                                 " |diff| " + num(diff));
    }
}

void semidual(Outcome& o) {
    for (const std::string f : {"zero", "piecewise_linear"}) {
        const double spread = metric(oracle_records(), "semidual_spread_" + f);
        o.check(spread <= kSemidualTol, f + " spread " + num(spread));
    }
}

void g2g_table(Outcome& o) {
    for (const auto& [name, tol] : std::vector<std::pair<std::string, double>>{
             {"g2g_d2_eps0.1", kUvpTolD2},
             {"g2g_d2_eps1", kUvpTolD2},
             {"g2g_d2_eps10", kUvpTolD2},
             {"g2g_d16_eps1", kUvpTolD16}}) {
        const auto t0 = std::chrono::steady_clock::now();
        const double uvp = metric(run_desk(name), "bw_uvp");
        const double minutes =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
        o.check(uvp <= tol, name + " UVP " + num(uvp) + "% (" + num(minutes) + " min)");
    }
}

void toy(Outcome& o) {
    const auto r = run_desk("toy2d_eps0.1");
    const auto c = config::parse_config(config_path("toy2d_eps0.1"));
    for (std::size_t p = 0; p < c.toy.probes.size(); ++p) {
        const double mg = metric(r, "cond_mean_gap_" + std::to_string(p));
        const double cg = metric(r, "cond_cov_gap_" + std::to_string(p));
        o.check(mg <= kCondMeanTol && cg <= kCondCovTol,
                "probe " + std::to_string(p) + " mean gap " + num(mg) + " cov gap " + num(cg));
    }
    const double mm = metric(r, "marginal_mean_gap");
    const double mc = metric(r, "marginal_cov_gap");
    o.check(mm <= kMarginalMeanTol, "marginal mean gap " + num(mm));
    o.check(mc <= kMarginalCovTol, "marginal cov gap " + num(mc));
}

void determinism(Outcome& o) {
    const std::string name = "g2g_d2_eps1";
    const fs::path first = run_root() / name;
    if (!fs::exists(first / "metrics.csv")) {
        run_desk(name);
    }
    run_desk(name, "_repeat");
    const fs::path second = run_root() / (name + "_repeat");
    const bool metrics_equal =
        io::read_text(first / "metrics.csv") == io::read_text(second / "metrics.csv");
    const bool results_equal = strip_seconds(io::read_text(first / "results.csv")) ==
                               strip_seconds(io::read_text(second / "results.csv"));
    o.check(metrics_equal, name + " metrics.csv identical");
    o.check(results_equal, "results.csv identical apart from wall-clock seconds");
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {1, {"gradient finite differences", gradient_fd}},
        {2, {"ULA stationary variance", ula_variance}},
        {3, {"Sinkhorn oracle", sinkhorn_oracle}},
        {4, {"Gaussian plan vs grid Sinkhorn", gaussian_plan}},
        {5, {"KL gap identity", kl_identity}},
        {6, {"semi-dual consistency", semidual}},
        {7, {"Gaussian-to-Gaussian BW-UVP", g2g_table}},
        {8, {"toy 2D conditional fidelity", toy}},
        {9, {"determinism", determinism}},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::stoi(argv[i]));
    }
    bool all_pass = true;
    for (const auto& [id, entry] : criteria) {
        if (!selected.empty() && !selected.contains(id)) {
            continue;
        }
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            entry.second(o);
        } catch (const std::exception& e) {
            o.check(false, std::string("error: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        all_pass = all_pass && o.pass;
        std::printf("criterion %d %s: %s | %s | %.1fs\n", id, entry.first.c_str(),
                    o.pass ? "PASS" : "FAIL", o.detail.str().c_str(), secs);
        std::fflush(stdout);
    }
    return all_pass ? 0 : 1;
}
