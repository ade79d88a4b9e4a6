#pragma once

#include "eot/langevin.hpp"
#include "eot/linalg.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

// Independent oracles for entropic OT: discrete Sinkhorn, grid quadrature of
// the weak dual, and the closed-form plan between centred Gaussians.
namespace eot::reference {

/// Entropic coupling of two discrete measures, together with the dual
/// potentials: P_ij = a_i b_j exp((u_i + v_j - C_ij) / eps).
struct DiscreteCoupling {
    Eigen::MatrixXd plan;
    Vector a;
    Vector b;
    double epsilon = 0.0;
    Eigen::MatrixXd cost;
    Vector u;
    Vector v;
    double violation = 0.0;  // L1 row + column marginal error
    std::size_t iterations = 0;
};

struct SinkhornOptions {
    std::size_t max_iter = 100000;
    double tol = 1e-9;
    std::size_t check_every = 1;
};

/// Log-domain Sinkhorn. Stops when the L1 marginal violation is <= tol;
/// throws ConvergenceError after max_iter.
DiscreteCoupling sinkhorn(const Eigen::MatrixXd& cost, const Vector& a, const Vector& b,
                          double epsilon, const SinkhornOptions& options = {});

/// Largest absolute gradient entry of the discrete dual at (u, v); zero at
/// the dual optimum.
double dual_residual(const DiscreteCoupling& coupling);

/// Conditional law pi(. | x_i) = P_i. / a_i.
Vector conditional_row(const DiscreteCoupling& coupling, std::size_t i);

/// Conditional law at an arbitrary source point x, from the target
/// potential: w_j proportional to b_j exp((v_j - c(x, y_j)) / eps). Equals
/// conditional_row at support points.
Vector conditional_at(const DiscreteCoupling& coupling, const Matrix& ys,
                      std::span<const double> x, const langevin::CostFunction& cost);

/// Squared-euclidean-halved cost matrix between two point clouds.
Eigen::MatrixXd quadratic_cost_matrix(const Matrix& xs, const Matrix& ys);

/// Joint Gaussian optimal plan between N(0, Sigma_x) and N(0, Sigma_y) for
/// c = 0.5 ||x - y||^2 with regulariser eps * KL (equivalently the
/// conditional-entropy form).
struct GaussianEOTPlan {
    Vector mean;
    Eigen::MatrixXd sigma_x;
    Eigen::MatrixXd sigma_y;
    Eigen::MatrixXd cross;  // Cov(x, y), D_x x D_y
    double epsilon = 0.0;

    Eigen::MatrixXd joint_covariance() const;
    /// Conditional law y | x = N(cond_map * x, cond_cov).
    Eigen::MatrixXd conditional_map() const;
    Eigen::MatrixXd conditional_covariance() const;
};

GaussianEOTPlan gaussian_eot_plan(const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& sigma_y,
                                  double epsilon);

/// One-dimensional quadrature grid.
struct Grid1D {
    std::vector<double> points;
    std::vector<double> weights;

    /// n equispaced points on [lo, hi] with trapezoidal weights.
    static Grid1D uniform(double lo, double hi, std::size_t n);
    std::size_t size() const { return points.size(); }
    void validate() const;
};

/// A grid with a (possibly unnormalised) density evaluated at its points.
struct GridDensity {
    Grid1D grid;
    std::vector<double> density;

    static GridDensity from_function(Grid1D grid, const std::function<double(double)>& pdf);
    /// Probability masses w_i p_i / sum_j w_j p_j.
    Vector masses() const;
};

GridDensity gaussian_density(Grid1D grid, double mean, double variance);

using ScalarFunction = std::function<double(std::span<const double>)>;

struct QuadratureResult {
    double value = 0.0;
    /// Largest integrand value on the grid boundary relative to the maximum.
    double boundary_ratio = 0.0;
    bool tail_ok() const { return boundary_ratio < kTailTolerance; }

    static constexpr double kTailTolerance = 1e-12;
};

/// -eps log Z(f, x), Z(f, x) = integral of exp((f(y) - c(x, y)) / eps) dy
/// over the tensor-product grid, by stable log-sum-exp.
QuadratureResult log_partition_quadrature(const ScalarFunction& f,
                                          const langevin::CostFunction& cost,
                                          std::span<const double> x,
                                          std::span<const Grid1D> grids, double epsilon);

/// F(f) = -eps int log Z(f, x) dP(x) + int f dQ on one-dimensional grids.
QuadratureResult weak_dual_value(const ScalarFunction& f, const GridDensity& p,
                                 const GridDensity& q, const langevin::CostFunction& cost,
                                 double epsilon);

struct EotValue {
    double value = 0.0;           // transport + entropy term
    double transport = 0.0;       // sum P_ij c_ij
    double entropy_term = 0.0;    // -eps sum_i a_i H(pi(. | x_i)), differential
    DiscreteCoupling coupling;
};

/// Conditional-entropy primal value of the discretised instance. Discrete
/// entropies get a + log(cell width) correction so they approximate the
/// differential entropy.
EotValue eot_value_1d(const GridDensity& p, const GridDensity& q,
                      const langevin::CostFunction& cost, double epsilon,
                      const SinkhornOptions& options = {});

struct KlGap {
    double lhs = 0.0;   // F* - F(f)
    double rhs = 0.0;   // eps * KL(pi* || pi^f)
    double optimal_value = 0.0;
    double dual_value = 0.0;
};

KlGap kl_gap_check(const ScalarFunction& f, const GridDensity& p, const GridDensity& q,
                   const langevin::CostFunction& cost, double epsilon,
                   const SinkhornOptions& options = {});

/// Spread (max - min over probes) of v^{c,eps}(x) - (-eps log Z(f, x)) with
/// v = f + eps E_Q, E_Q = -log q.
double semidual_consistency_check(const ScalarFunction& f, const GridDensity& q,
                                  const langevin::CostFunction& cost, double epsilon,
                                  std::span<const double> x_probe);

/// Weak-dual potential f_j = v_j + eps log(b_j / w_j) on the target grid,
/// recovered from the Sinkhorn potentials.
std::vector<double> weak_potential_from_coupling(const DiscreteCoupling& coupling,
                                                 const GridDensity& q);

/// Piecewise-linear interpolant, constant beyond the end knots.
class PiecewiseLinear {
public:
    PiecewiseLinear(std::vector<double> knots, std::vector<double> values);
    double operator()(double t) const;
    double operator()(std::span<const double> y) const { return (*this)(y[0]); }

private:
    std::vector<double> knots_;
    std::vector<double> values_;
};

}  // namespace eot::reference
