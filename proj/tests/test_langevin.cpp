#include "eot/errors.hpp"
#include "eot/langevin.hpp"
#include "eot/rng.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

using namespace eot;
using langevin::CostFunction;
using langevin::SamplerConfig;

namespace {

nn::PotentialNetwork zero_net(std::size_t dim) {
    nn::NetworkConfig c;
    c.input_dim = dim;
    c.hidden_sizes = {1};
    c.init_scheme = nn::InitScheme::zeros;
    return nn::init_network(c);
}

// f(y) = a . y as a single affine layer.
nn::PotentialNetwork linear_net(const std::vector<double>& a) {
    nn::NetworkConfig c;
    c.input_dim = a.size();
    c.hidden_sizes = {};
    nn::DenseLayer l{Eigen::Map<const Eigen::RowVectorXd>(a.data(), static_cast<Eigen::Index>(a.size())),
                     Eigen::VectorXd::Zero(1)};
    return nn::make_network(c, {l});
}

nn::PotentialNetwork negated(nn::PotentialNetwork net) {
    net.layers.back().weight *= -1.0;
    net.layers.back().bias *= -1.0;
    return net;
}

Matrix filled(Eigen::Index rows, Eigen::Index cols, double v) {
    return Matrix::Constant(rows, cols, v);
}

class ThreadEnv {
public:
    explicit ThreadEnv(const char* value) {
        if (const char* old = std::getenv("EOT_THREADS")) {
            saved_ = old;
        }
        ::setenv("EOT_THREADS", value, 1);
    }
    ~ThreadEnv() {
        if (saved_.empty()) {
            ::unsetenv("EOT_THREADS");
        } else {
            ::setenv("EOT_THREADS", saved_.c_str(), 1);
        }
    }

private:
    std::string saved_;
};

double column_variance(const Matrix& m, Eigen::Index col) {
    const double mean = m.col(col).mean();
    return (m.col(col).array() - mean).square().sum() / static_cast<double>(m.rows() - 1);
}

}  // namespace

TEST(CostFunction, QuadraticValueAndGradient) {
    const auto c = CostFunction::quadratic();
    const std::vector<double> x{1.0, 2.0};
    const std::vector<double> y{4.0, -2.0};
    EXPECT_EQ(c(x, y), 0.5 * (9.0 + 16.0));
    std::vector<double> g(2);
    c.grad_y(x, y, g);
    EXPECT_EQ(g[0], 3.0);
    EXPECT_EQ(g[1], -4.0);
    EXPECT_THROW(c.check_dims(2, 3), ShapeError);
    EXPECT_THROW(CostFunction::custom({}, {}), ConfigError);
}

TEST(SamplerConfig, RejectsNonPositiveFields) {
    EXPECT_THROW((SamplerConfig{0.0, 0.1, 10, 1.0}.validate()), ConfigError);
    EXPECT_THROW((SamplerConfig{1.0, -0.1, 10, 1.0}.validate()), ConfigError);
    EXPECT_THROW((SamplerConfig{1.0, 0.1, 10, 0.0}.validate()), ConfigError);
    EXPECT_NO_THROW((SamplerConfig{1.0, 0.1, 0, 1.0}.validate()));
}

TEST(ConditionalEnergy, Examples) {
    const auto net = zero_net(2);
    const auto c = CostFunction::quadratic();
    const std::vector<double> x{0.0, 0.0};
    const std::vector<double> y{2.0, 0.0};
    EXPECT_EQ(langevin::conditional_energy(net, c, x, y, 1.0), 2.0);
    EXPECT_EQ(langevin::conditional_energy(net, c, x, y, 2.0), 1.0);
    EXPECT_THROW(langevin::conditional_energy(net, c, x, y, 0.0), ConfigError);

    nn::NetworkConfig nc;
    nc.input_dim = 2;
    nc.hidden_sizes = {8};
    nc.seed = 4;
    const auto seeded = nn::init_network(nc);
    const std::vector<double> x2{0.3, -1.0};
    const std::vector<double> y2{1.1, 0.4};
    EXPECT_EQ(langevin::conditional_energy(seeded, c, x2, y2, 0.7),
              (c(x2, y2) - nn::forward(seeded, y2)) / 0.7);
}

TEST(UlaStep, DeterministicDrift) {
    const langevin::ChainBatch batch{filled(1, 1, 4.0), filled(1, 1, 0.0)};
    const auto next = langevin::ula_step(batch, zero_net(1), CostFunction::quadratic(),
                                         {1.0, 0.1, 1, 1.0}, Matrix::Zero(1, 1));
    EXPECT_DOUBLE_EQ(next.Y(0, 0), 3.8);
    EXPECT_EQ(next.X, batch.X);
}

TEST(UlaStep, PureNoiseAtCostMinimum) {
    const Matrix x = oracle::random_matrix(13, 3, 1);
    const Matrix z = oracle::random_matrix(13, 3, 2);
    const double eta = 0.1;
    const auto next = langevin::ula_step({x, x}, zero_net(3), CostFunction::quadratic(),
                                         {1.0, eta, 1, 1.0}, z);
    for (Eigen::Index n = 0; n < 13; ++n) {
        for (Eigen::Index d = 0; d < 3; ++d) {
            EXPECT_EQ(next.Y(n, d), x(n, d) + std::sqrt(eta) * z(n, d));
        }
    }
}

TEST(UlaStep, DriftIsOddInPotentialMinusCost) {
    nn::NetworkConfig nc;
    nc.input_dim = 2;
    nc.hidden_sizes = {16, 16};
    nc.seed = 10;
    const auto net = nn::init_network(nc);
    const auto cost = CostFunction::quadratic();
    const auto flipped_cost = CostFunction::custom(
        [&](std::span<const double> x, std::span<const double> y) { return -cost(x, y); },
        [&](std::span<const double> x, std::span<const double> y, std::span<double> out) {
            cost.grad_y(x, y, out);
            for (auto& v : out) {
                v = -v;
            }
        });
    const Matrix X = oracle::random_matrix(20, 2, 3);
    const langevin::ChainBatch batch{Matrix::Zero(20, 2), X};
    const SamplerConfig cfg{0.5, 0.1, 1, 1.0};
    const auto a = langevin::ula_step(batch, net, cost, cfg, Matrix::Zero(20, 2));
    const auto b = langevin::ula_step(batch, negated(net), flipped_cost, cfg, Matrix::Zero(20, 2));
    for (Eigen::Index n = 0; n < 20; ++n) {
        for (Eigen::Index d = 0; d < 2; ++d) {
            EXPECT_EQ(a.Y(n, d), -b.Y(n, d));
        }
    }
}

TEST(UlaStep, BlockedBatchMatchesSingleRows) {
    nn::NetworkConfig nc;
    nc.input_dim = 2;
    nc.hidden_sizes = {32, 32};
    nc.activation = nn::Activation::leaky_relu;
    nc.seed = 2;
    const auto net = nn::init_network(nc);
    const Matrix X = oracle::random_matrix(19, 2, 4);
    const Matrix Y = oracle::random_matrix(19, 2, 5);
    const Matrix z = oracle::random_matrix(19, 2, 6);
    const SamplerConfig cfg{0.1, 0.05, 1, 1.0};
    const auto all = langevin::ula_step({Y, X}, net, CostFunction::quadratic(), cfg, z);
    for (Eigen::Index n = 0; n < 19; ++n) {
        const auto one = langevin::ula_step({Y.row(n), X.row(n)}, net, CostFunction::quadratic(),
                                            cfg, z.row(n));
        EXPECT_EQ(one.Y(0, 0), all.Y(n, 0));
        EXPECT_EQ(one.Y(0, 1), all.Y(n, 1));
    }
}

TEST(UlaStep, DivergenceCarriesStepIndex) {
    const langevin::ChainBatch batch{filled(1, 1, 1e6 - 1.0), filled(1, 1, 0.0)};
    const auto repulsive = CostFunction::custom(
        [](std::span<const double>, std::span<const double>) { return 0.0; },
        [](std::span<const double>, std::span<const double>, std::span<double> out) {
            out[0] = -1e3;
        });
    try {
        langevin::ula_step(batch, zero_net(1), repulsive, {1.0, 0.1, 1, 1.0}, Matrix::Zero(1, 1),
                           7);
        FAIL() << "expected divergence";
    } catch (const DivergedChainError& e) {
        EXPECT_EQ(e.step(), 7u);
        EXPECT_EQ(e.chain(), 0u);
    }
    EXPECT_THROW(langevin::ula_step(batch, zero_net(1), CostFunction::quadratic(),
                                    {1.0, 0.1, 1, 1.0}, Matrix::Zero(2, 1)),
                 ShapeError);
}

TEST(UlaStep, NonFiniteStateDiverges) {
    const langevin::ChainBatch batch{filled(1, 1, std::numeric_limits<double>::infinity()),
                                     filled(1, 1, 0.0)};
    EXPECT_THROW(langevin::ula_step(batch, zero_net(1), CostFunction::quadratic(),
                                    {1.0, 0.1, 1, 1.0}, Matrix::Zero(1, 1)),
                 DivergedChainError);
}

TEST(SampleConditional, ZeroStepsReturnsInit) {
    const Matrix init = oracle::random_matrix(5, 2, 1);
    const Matrix X = oracle::random_matrix(5, 2, 2);
    const Matrix out = langevin::sample_conditional(zero_net(2), CostFunction::quadratic(), X,
                                                    {1.0, 0.1, 0, 1.0}, init, {3, 0});
    EXPECT_EQ(out, init);
}

TEST(SampleConditional, GaussianTargetForZeroPotential) {
    const std::size_t n = 10000;
    Matrix X(n, 2);
    X.col(0).setConstant(0.7);
    X.col(1).setConstant(-1.2);
    const Matrix init = Matrix::Zero(n, 2);
    const Matrix Y = langevin::sample_conditional(zero_net(2), CostFunction::quadratic(), X,
                                                  {1.0, 0.1, 2000, 1.0}, init, {11, 0});
    EXPECT_NEAR(Y.col(0).mean(), 0.7, 0.05);
    EXPECT_NEAR(Y.col(1).mean(), -1.2, 0.05);
}

TEST(SampleConditional, LinearPotentialShiftsMean) {
    const std::size_t n = 10000;
    const Matrix X = Matrix::Constant(n, 2, 0.5);
    const Matrix Y = langevin::sample_conditional(linear_net({1.0, -0.5}),
                                                  CostFunction::quadratic(), X,
                                                  {1.0, 0.1, 2000, 1.0}, Matrix::Zero(n, 2),
                                                  {12, 0});
    EXPECT_NEAR(Y.col(0).mean(), 1.5, 0.05);
    EXPECT_NEAR(Y.col(1).mean(), 0.0, 0.05);
}

// AR(1) fixed point: var' = (1 - eta/2)^2 var + eta, so var = 1 / (1 - eta/4).
TEST(SampleConditional, StationaryVarianceOfUla) {
    const std::size_t n = 10000;
    for (const double eta : {0.05, 0.1}) {
        const Matrix X = Matrix::Zero(n, 1);
        const Matrix Y = langevin::sample_conditional(zero_net(1), CostFunction::quadratic(), X,
                                                      {1.0, eta, 5000, 1.0}, Matrix::Zero(n, 1),
                                                      {5, static_cast<std::uint64_t>(eta * 100)});
        const double expected = 1.0 / (1.0 - eta / 4.0);
        const double sd_of_var = expected * std::sqrt(2.0 / static_cast<double>(n - 1));
        EXPECT_NEAR(column_variance(Y, 0), expected, 3.0 * sd_of_var) << "eta " << eta;
    }
}

TEST(SampleConditional, IdenticalAcrossThreadCounts) {
    nn::NetworkConfig nc;
    nc.input_dim = 2;
    nc.hidden_sizes = {16, 16};
    nc.seed = 3;
    const auto net = nn::init_network(nc);
    const Matrix X = oracle::random_matrix(203, 2, 9);
    const Matrix init = oracle::random_matrix(203, 2, 10);
    const SamplerConfig cfg{0.5, 0.05, 50, 1.0};
    Matrix one;
    {
        ThreadEnv env("1");
        one = langevin::sample_conditional(net, CostFunction::quadratic(), X, cfg, init, {8, 1});
    }
    for (const char* t : {"2", "3", "7"}) {
        ThreadEnv env(t);
        EXPECT_EQ(langevin::sample_conditional(net, CostFunction::quadratic(), X, cfg, init, {8, 1}),
                  one)
            << t << " threads";
    }
    EXPECT_FALSE(langevin::sample_conditional(net, CostFunction::quadratic(), X, cfg, init, {8, 2}) ==
                 one);
}

TEST(SampleConditional, ReportsLowestDivergedChain) {
    // Chains with x > 0 are pushed outwards and diverge.
    const auto cost = CostFunction::custom(
        [](std::span<const double>, std::span<const double>) { return 0.0; },
        [](std::span<const double> x, std::span<const double>, std::span<double> out) {
            out[0] = x[0] > 0.0 ? -1e8 : 0.0;
        });
    Matrix X = Matrix::Zero(40, 1);
    X(23, 0) = 1.0;
    X(31, 0) = 1.0;
    for (const char* t : {"1", "4"}) {
        ThreadEnv env(t);
        try {
            langevin::sample_conditional(zero_net(1), cost, X, {1.0, 0.1, 10, 1.0},
                                         Matrix::Zero(40, 1), {1, 0});
            FAIL() << "expected divergence";
        } catch (const DivergedChainError& e) {
            EXPECT_EQ(e.chain(), 23u);
            EXPECT_EQ(e.step(), 0u);
        }
    }
}

TEST(ReplayBuffer, FillsThenEvicts) {
    langevin::ReplayBuffer buf(10, 0.95, 1);
    const Matrix a = oracle::random_matrix(5, 2, 1);
    const Matrix b = oracle::random_matrix(5, 2, 2);
    buf.update(a);
    buf.update(b);
    ASSERT_EQ(buf.size(), 10u);
    for (Eigen::Index n = 0; n < 5; ++n) {
        EXPECT_EQ(buf.entries()[static_cast<std::size_t>(n)][1], a(n, 1));
        EXPECT_EQ(buf.entries()[static_cast<std::size_t>(n) + 5][1], b(n, 1));
    }
    buf.update(oracle::random_matrix(5, 2, 3));
    EXPECT_EQ(buf.size(), 10u);

    langevin::ReplayBuffer big(10, 0.95, 1);
    big.update(oracle::random_matrix(15, 2, 4));
    EXPECT_EQ(big.size(), 10u);

    const auto before = big;
    big.update(Matrix(0, 2));
    EXPECT_EQ(big, before);
}

TEST(ReplayBuffer, RejectsBadInput) {
    EXPECT_THROW(langevin::ReplayBuffer(0, 0.5, 0), ConfigError);
    EXPECT_THROW(langevin::ReplayBuffer(10, 1.5, 0), ConfigError);
    langevin::ReplayBuffer buf(10, 0.5, 0);
    Matrix bad = Matrix::Zero(2, 2);
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(buf.update(bad), ShapeError);
    buf.update(Matrix::Zero(2, 2));
    EXPECT_THROW(buf.update(Matrix::Zero(2, 3)), ShapeError);
}

TEST(BufferInit, EmptyBufferFallsBackToNoise) {
    const langevin::ReplayBuffer buf(10, 1.0, 0);
    auto rng = substream(1, {0});
    const double sigma0 = 1.5;
    const Matrix init = langevin::buffer_init(buf, 100000, 1, sigma0, rng);
    EXPECT_NEAR(std::sqrt(column_variance(init, 0)), sigma0, 0.02 * sigma0);
}

TEST(BufferInit, ProbabilityZeroAndOne) {
    langevin::ReplayBuffer never(10, 0.0, 0);
    const Matrix v = Matrix::Constant(1, 2, 42.0);
    never.update(v);
    auto rng = substream(2, {0});
    const Matrix g = langevin::buffer_init(never, 1000, 2, 1.0, rng);
    EXPECT_LT(g.cwiseAbs().maxCoeff(), 10.0);

    langevin::ReplayBuffer always(10, 1.0, 0);
    always.update(v);
    const Matrix r = langevin::buffer_init(always, 1000, 2, 1.0, rng);
    EXPECT_TRUE((r.array() == 42.0).all());

    langevin::ReplayBuffer half(10, 0.5, 0);
    half.update(v);
    const Matrix h = langevin::buffer_init(half, 10000, 2, 1.0, rng);
    const double frac = static_cast<double>((h.col(0).array() == 42.0).count()) / 10000.0;
    EXPECT_NEAR(frac, 0.5, 0.03);
    EXPECT_THROW(langevin::buffer_init(half, 10, 3, 1.0, rng), ShapeError);
}
