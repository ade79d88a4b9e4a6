#include "eot/reference.hpp"

#include "eot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace eot::reference {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_probability(const Vector& w, const char* name) {
    if (w.size() == 0 || (w.array() <= 0.0).any() || !w.allFinite()) {
        throw ShapeError(std::string(name) + " must be a non-empty strictly positive vector");
    }
    if (std::abs(w.sum() - 1.0) > 1e-9) {
        throw ShapeError(std::string(name) + " must sum to 1");
    }
}

// Row sums of the plan implied by (u, v) minus a, and column sums minus b.
double marginal_violation(const Eigen::MatrixXd& cost, const Vector& log_a, const Vector& log_b,
                          const Vector& u, const Vector& v, double eps, const Vector& a,
                          const Vector& b, Vector* row_out = nullptr, Vector* col_out = nullptr) {
    const Eigen::Index n = cost.rows();
    const Eigen::Index m = cost.cols();
    Vector rows = Vector::Zero(n);
    Vector cols = Vector::Zero(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = std::exp(log_a(i) + log_b(j) + (u(i) + v(j) - cost(i, j)) / eps);
            rows(i) += p;
            cols(j) += p;
        }
    }
    if (row_out) {
        *row_out = rows - a;
    }
    if (col_out) {
        *col_out = cols - b;
    }
    return (rows - a).cwiseAbs().sum() + (cols - b).cwiseAbs().sum();
}

double log_sum_exp(std::span<const double> terms) {
    double mx = kNegInf;
    for (double t : terms) {
        mx = std::max(mx, t);
    }
    if (mx == kNegInf) {
        return kNegInf;
    }
    double s = 0.0;
    for (double t : terms) {
        s += std::exp(t - mx);
    }
    return mx + std::log(s);
}

}  // namespace

DiscreteCoupling sinkhorn(const Eigen::MatrixXd& cost, const Vector& a, const Vector& b,
                          double epsilon, const SinkhornOptions& options) {
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    require_probability(a, "a");
    require_probability(b, "b");
    require_shape(cost.rows() == a.size() && cost.cols() == b.size(),
                  "cost matrix shape must be |a| x |b|");
    require_shape(cost.allFinite(), "cost matrix must be finite");

    const Eigen::Index n = cost.rows();
    const Eigen::Index m = cost.cols();
    const Vector log_a = a.array().log();
    const Vector log_b = b.array().log();
    // Column-major cost: column j contiguous, used for the u-update.
    const Eigen::MatrixXd& c = cost;
    const Eigen::MatrixXd ct = cost.transpose();
    Vector u = Vector::Zero(n);
    Vector v = Vector::Zero(m);
    std::vector<double> terms(static_cast<std::size_t>(std::max(n, m)));
    const double inv_eps = 1.0 / epsilon;

    double violation = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    const std::size_t check_every = std::max<std::size_t>(1, options.check_every);
    while (it < options.max_iter) {
        // u_i = -eps LSE_j(log b_j + (v_j - C_ij) / eps)
        for (Eigen::Index i = 0; i < n; ++i) {
            const double* ci = ct.data() + i * m;  // row i of C
            for (Eigen::Index j = 0; j < m; ++j) {
                terms[static_cast<std::size_t>(j)] = log_b(j) + (v(j) - ci[j]) * inv_eps;
            }
            u(i) = -epsilon * log_sum_exp({terms.data(), static_cast<std::size_t>(m)});
        }
        // v_j = -eps LSE_i(log a_i + (u_i - C_ij) / eps)
        for (Eigen::Index j = 0; j < m; ++j) {
            const double* cj = c.data() + j * n;  // column j of C
            for (Eigen::Index i = 0; i < n; ++i) {
                terms[static_cast<std::size_t>(i)] = log_a(i) + (u(i) - cj[i]) * inv_eps;
            }
            v(j) = -epsilon * log_sum_exp({terms.data(), static_cast<std::size_t>(n)});
        }
        ++it;
        if (it % check_every == 0 || it == options.max_iter) {
            violation = marginal_violation(cost, log_a, log_b, u, v, epsilon, a, b);
            if (violation <= options.tol) {
                break;
            }
        }
    }
    if (!(violation <= options.tol)) {
        throw ConvergenceError("Sinkhorn did not converge in " + std::to_string(options.max_iter) +
                                   " iterations (violation " + std::to_string(violation) + ")",
                               violation);
    }

    DiscreteCoupling out;
    out.plan.resize(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            out.plan(i, j) = std::exp(log_a(i) + log_b(j) + (u(i) + v(j) - cost(i, j)) * inv_eps);
        }
    }
    out.a = a;
    out.b = b;
    out.epsilon = epsilon;
    out.cost = cost;
    out.u = std::move(u);
    out.v = std::move(v);
    out.violation = violation;
    out.iterations = it;
    return out;
}

double dual_residual(const DiscreteCoupling& coupling) {
    Vector rows;
    Vector cols;
    const Vector log_a = coupling.a.array().log();
    const Vector log_b = coupling.b.array().log();
    marginal_violation(coupling.cost, log_a, log_b, coupling.u, coupling.v, coupling.epsilon,
                       coupling.a, coupling.b, &rows, &cols);
    return std::max(rows.cwiseAbs().maxCoeff(), cols.cwiseAbs().maxCoeff());
}

Vector conditional_row(const DiscreteCoupling& coupling, std::size_t i) {
    if (i >= static_cast<std::size_t>(coupling.plan.rows())) {
        throw std::out_of_range("conditional_row: index " + std::to_string(i) + " out of range");
    }
    const auto r = static_cast<Eigen::Index>(i);
    return coupling.plan.row(r).transpose() / coupling.a(r);
}

Vector conditional_at(const DiscreteCoupling& coupling, const Matrix& ys,
                      std::span<const double> x, const langevin::CostFunction& cost) {
    require_shape(ys.rows() == coupling.b.size(), "target points do not match the coupling");
    cost.check_dims(x.size(), static_cast<std::size_t>(ys.cols()));
    Vector logw(ys.rows());
    for (Eigen::Index j = 0; j < ys.rows(); ++j) {
        logw(j) = std::log(coupling.b(j)) + (coupling.v(j) - cost(x, row_span(ys, j))) / coupling.epsilon;
    }
    const double m = logw.maxCoeff();
    Vector w = (logw.array() - m).exp().matrix();
    return w / w.sum();
}

Eigen::MatrixXd quadratic_cost_matrix(const Matrix& xs, const Matrix& ys) {
    require_shape(xs.cols() == ys.cols(), "point clouds must share a dimension");
    Eigen::MatrixXd c(xs.rows(), ys.rows());
    for (Eigen::Index j = 0; j < ys.rows(); ++j) {
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            c(i, j) = 0.5 * (xs.row(i) - ys.row(j)).squaredNorm();
        }
    }
    return c;
}

Eigen::MatrixXd GaussianEOTPlan::joint_covariance() const {
    const Eigen::Index dx = sigma_x.rows();
    const Eigen::Index dy = sigma_y.rows();
    Eigen::MatrixXd j(dx + dy, dx + dy);
    j.topLeftCorner(dx, dx) = sigma_x;
    j.topRightCorner(dx, dy) = cross;
    j.bottomLeftCorner(dy, dx) = cross.transpose();
    j.bottomRightCorner(dy, dy) = sigma_y;
    return j;
}

Eigen::MatrixXd GaussianEOTPlan::conditional_map() const {
    // E[y | x] = C^T Sigma_x^{-1} x
    return sigma_x.ldlt().solve(cross).transpose();
}

Eigen::MatrixXd GaussianEOTPlan::conditional_covariance() const {
    return linalg::symmetrize(sigma_y - cross.transpose() * sigma_x.ldlt().solve(cross));
}

GaussianEOTPlan gaussian_eot_plan(const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& sigma_y,
                                  double epsilon) {
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    linalg::require_symmetric_psd(sigma_x, "Sigma_x");
    linalg::require_symmetric_psd(sigma_y, "Sigma_y");
    if (sigma_x.rows() != sigma_y.rows()) {
        throw MatrixError("Sigma_x and Sigma_y must have the same dimension");
    }
    const Eigen::Index d = sigma_x.rows();
    // Closed form for cost ||x - y||^2 with regulariser 2 s KL: here the cost
    // is halved, so s = eps.
    //   D = (4 A^{1/2} B A^{1/2} + s^2 I)^{1/2}
    //   C = 1/2 A^{1/2} D A^{-1/2} - s/2 I
    const Eigen::MatrixXd a_half = linalg::sqrtm_psd(sigma_x);
    const Eigen::MatrixXd a_inv_half = linalg::inv_sqrtm_pd(sigma_x);
    const Eigen::MatrixXd inner = linalg::symmetrize(
        4.0 * a_half * sigma_y * a_half + epsilon * epsilon * Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd root = linalg::sqrtm_psd(inner);
    GaussianEOTPlan plan;
    plan.mean = Vector::Zero(2 * d);
    plan.sigma_x = sigma_x;
    plan.sigma_y = sigma_y;
    plan.cross = 0.5 * a_half * root * a_inv_half - 0.5 * epsilon * Eigen::MatrixXd::Identity(d, d);
    plan.epsilon = epsilon;
    return plan;
}

Grid1D Grid1D::uniform(double lo, double hi, std::size_t n) {
    if (n < 2 || !(hi > lo)) {
        throw ConfigError("uniform grid needs n >= 2 and hi > lo");
    }
    Grid1D g;
    g.points.resize(n);
    g.weights.assign(n, (hi - lo) / static_cast<double>(n - 1));
    for (std::size_t i = 0; i < n; ++i) {
        g.points[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    g.weights.front() *= 0.5;
    g.weights.back() *= 0.5;
    return g;
}

void Grid1D::validate() const {
    require_shape(points.size() == weights.size() && !points.empty(),
                  "grid points and weights must have equal non-zero length");
    for (std::size_t i = 0; i < points.size(); ++i) {
        require_shape(weights[i] > 0.0, "grid weights must be positive");
        require_shape(i == 0 || points[i] > points[i - 1], "grid points must increase strictly");
    }
}

GridDensity GridDensity::from_function(Grid1D grid, const std::function<double(double)>& pdf) {
    grid.validate();
    GridDensity g{std::move(grid), {}};
    g.density.reserve(g.grid.size());
    for (double p : g.grid.points) {
        g.density.push_back(pdf(p));
    }
    return g;
}

Vector GridDensity::masses() const {
    require_shape(density.size() == grid.size(), "density length must match the grid");
    Vector m(static_cast<Eigen::Index>(density.size()));
    for (std::size_t i = 0; i < density.size(); ++i) {
        m(static_cast<Eigen::Index>(i)) = density[i] * grid.weights[i];
    }
    return m / m.sum();
}

GridDensity gaussian_density(Grid1D grid, double mean, double variance) {
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * variance);
    return GridDensity::from_function(std::move(grid), [=](double t) {
        return norm * std::exp(-0.5 * (t - mean) * (t - mean) / variance);
    });
}

QuadratureResult log_partition_quadrature(const ScalarFunction& f,
                                          const langevin::CostFunction& cost,
                                          std::span<const double> x,
                                          std::span<const Grid1D> grids, double epsilon) {
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    require_shape(!grids.empty(), "at least one grid axis is required");
    for (const auto& g : grids) {
        g.validate();
    }
    cost.check_dims(x.size(), grids.size());
    const std::size_t dim = grids.size();
    std::size_t total = 1;
    for (const auto& g : grids) {
        total *= g.size();
    }
    std::vector<double> exponent(total);  // (f - c)/eps, without weights
    std::vector<double> log_w(total);
    std::vector<char> on_boundary(total);
    std::vector<std::size_t> idx(dim, 0);
    std::vector<double> y(dim);
    for (std::size_t flat = 0; flat < total; ++flat) {
        double lw = 0.0;
        bool boundary = false;
        for (std::size_t d = 0; d < dim; ++d) {
            y[d] = grids[d].points[idx[d]];
            lw += std::log(grids[d].weights[idx[d]]);
            boundary = boundary || idx[d] == 0 || idx[d] + 1 == grids[d].size();
        }
        exponent[flat] = (f(y) - cost(x, y)) / epsilon;
        log_w[flat] = lw;
        on_boundary[flat] = boundary ? 1 : 0;
        for (std::size_t d = dim; d-- > 0;) {
            if (++idx[d] < grids[d].size()) {
                break;
            }
            idx[d] = 0;
        }
    }
    double mx = kNegInf;
    double boundary_mx = kNegInf;
    for (std::size_t k = 0; k < total; ++k) {
        mx = std::max(mx, exponent[k]);
        if (on_boundary[k]) {
            boundary_mx = std::max(boundary_mx, exponent[k]);
        }
    }
    double s = 0.0;
    for (std::size_t k = 0; k < total; ++k) {
        s += std::exp(log_w[k] + exponent[k] - mx);
    }
    QuadratureResult r;
    r.value = -epsilon * (mx + std::log(s));
    r.boundary_ratio = std::exp(boundary_mx - mx);
    return r;
}

QuadratureResult weak_dual_value(const ScalarFunction& f, const GridDensity& p,
                                 const GridDensity& q, const langevin::CostFunction& cost,
                                 double epsilon) {
    const Vector a = p.masses();
    const Vector b = q.masses();
    const Grid1D grids[1] = {q.grid};
    QuadratureResult out;
    double outer = 0.0;
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
        const double x[1] = {p.grid.points[i]};
        const auto inner = log_partition_quadrature(f, cost, x, grids, epsilon);
        outer += a(static_cast<Eigen::Index>(i)) * inner.value;
        out.boundary_ratio = std::max(out.boundary_ratio, inner.boundary_ratio);
    }
    double expect_f = 0.0;
    for (std::size_t j = 0; j < q.grid.size(); ++j) {
        const double y[1] = {q.grid.points[j]};
        expect_f += b(static_cast<Eigen::Index>(j)) * f(y);
    }
    out.value = outer + expect_f;
    return out;
}

namespace {

Eigen::MatrixXd grid_cost(const GridDensity& p, const GridDensity& q,
                          const langevin::CostFunction& cost) {
    Eigen::MatrixXd c(static_cast<Eigen::Index>(p.grid.size()),
                      static_cast<Eigen::Index>(q.grid.size()));
    for (std::size_t j = 0; j < q.grid.size(); ++j) {
        for (std::size_t i = 0; i < p.grid.size(); ++i) {
            const double x[1] = {p.grid.points[i]};
            const double y[1] = {q.grid.points[j]};
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost(x, y);
        }
    }
    return c;
}

}  // namespace

EotValue eot_value_1d(const GridDensity& p, const GridDensity& q,
                      const langevin::CostFunction& cost, double epsilon,
                      const SinkhornOptions& options) {
    const Vector a = p.masses();
    const Vector b = q.masses();
    EotValue out;
    out.coupling = sinkhorn(grid_cost(p, q, cost), a, b, epsilon, options);
    const auto& plan = out.coupling.plan;
    out.transport = plan.cwiseProduct(out.coupling.cost).sum();
    double cond_entropy = 0.0;
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        const double row_mass = plan.row(i).sum();
        double h = 0.0;
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            const double pj = plan(i, j) / row_mass;
            if (pj > 0.0) {
                // Differential entropy of the cell-uniform density p_j / w_j.
                h -= pj * std::log(pj / q.grid.weights[static_cast<std::size_t>(j)]);
            }
        }
        cond_entropy += row_mass * h;
    }
    out.entropy_term = -epsilon * cond_entropy;
    out.value = out.transport + out.entropy_term;
    return out;
}

KlGap kl_gap_check(const ScalarFunction& f, const GridDensity& p, const GridDensity& q,
                   const langevin::CostFunction& cost, double epsilon,
                   const SinkhornOptions& options) {
    const EotValue opt = eot_value_1d(p, q, cost, epsilon, options);
    const QuadratureResult dual = weak_dual_value(f, p, q, cost, epsilon);

    // KL(pi* || pi^f) with pi^f(y_j | x_i) = w_j exp((f_j - c_ij)/eps) / Z_i.
    const auto& plan = opt.coupling.plan;
    std::vector<double> fy(q.grid.size());
    for (std::size_t j = 0; j < q.grid.size(); ++j) {
        const double y[1] = {q.grid.points[j]};
        fy[j] = f(y);
    }
    std::vector<double> log_q(q.grid.size());
    double kl = 0.0;
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        for (std::size_t j = 0; j < q.grid.size(); ++j) {
            log_q[j] = std::log(q.grid.weights[j]) +
                       (fy[j] - opt.coupling.cost(i, static_cast<Eigen::Index>(j))) / epsilon;
        }
        const double log_z = log_sum_exp(log_q);
        const double row_mass = plan.row(i).sum();
        for (std::size_t j = 0; j < q.grid.size(); ++j) {
            const double pij = plan(i, static_cast<Eigen::Index>(j));
            if (pij > 0.0) {
                const double p_cond = pij / row_mass;
                kl += pij * (std::log(p_cond) - (log_q[j] - log_z));
            }
        }
    }
    KlGap g;
    g.optimal_value = opt.value;
    g.dual_value = dual.value;
    g.lhs = opt.value - dual.value;
    g.rhs = epsilon * kl;
    return g;
}

double semidual_consistency_check(const ScalarFunction& f, const GridDensity& q,
                                  const langevin::CostFunction& cost, double epsilon,
                                  std::span<const double> x_probe) {
    require_shape(!x_probe.empty(), "at least one probe point is required");
    for (double d : q.density) {
        require_shape(d > 0.0, "Q density must be strictly positive on the grid");
    }
    const Vector b = q.masses();
    const Grid1D grids[1] = {q.grid};
    std::vector<double> terms(q.grid.size());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double xp : x_probe) {
        const double x[1] = {xp};
        // v^{c,eps}(x) = -eps log sum_j b_j exp((v_j - c(x, y_j)) / eps)
        for (std::size_t j = 0; j < q.grid.size(); ++j) {
            const double y[1] = {q.grid.points[j]};
            const double energy = -std::log(q.density[j]);
            const double v = f(y) + epsilon * energy;
            terms[j] = std::log(b(static_cast<Eigen::Index>(j))) + (v - cost(x, y)) / epsilon;
        }
        const double v_transform = -epsilon * log_sum_exp(terms);
        const double weak = log_partition_quadrature(f, cost, x, grids, epsilon).value;
        const double diff = v_transform - weak;
        lo = std::min(lo, diff);
        hi = std::max(hi, diff);
    }
    return hi - lo;
}

std::vector<double> weak_potential_from_coupling(const DiscreteCoupling& coupling,
                                                 const GridDensity& q) {
    require_shape(static_cast<std::size_t>(coupling.v.size()) == q.grid.size(),
                  "coupling does not match the target grid");
    std::vector<double> f(q.grid.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        f[j] = coupling.v(jj) + coupling.epsilon * std::log(coupling.b(jj) / q.grid.weights[j]);
    }
    return f;
}

PiecewiseLinear::PiecewiseLinear(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
    require_shape(knots_.size() == values_.size() && !knots_.empty(),
                  "knots and values must have equal non-zero length");
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        require_shape(knots_[i] > knots_[i - 1], "knots must increase strictly");
    }
}

double PiecewiseLinear::operator()(double t) const {
    if (t <= knots_.front()) {
        return values_.front();
    }
    if (t >= knots_.back()) {
        return values_.back();
    }
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - knots_.begin());
    const std::size_t lo = hi - 1;
    const double w = (t - knots_[lo]) / (knots_[hi] - knots_[lo]);
    return values_[lo] + w * (values_[hi] - values_[lo]);
}

}  // namespace eot::reference
