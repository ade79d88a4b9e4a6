#include "eot/data_gen.hpp"
#include "eot/errors.hpp"
#include "eot/evaluation.hpp"
#include "eot/reference.hpp"
#include "eot/rng.hpp"
#include "eot/trainer.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace eot;
using langevin::CostFunction;
using oracle::flatten;
using oracle::max_rel_error;

namespace {

nn::NetworkConfig small_net(std::size_t dim, std::vector<std::size_t> hidden, std::uint64_t seed) {
    nn::NetworkConfig c;
    c.input_dim = dim;
    c.hidden_sizes = std::move(hidden);
    c.seed = seed;
    return c;
}

trainer::TrainConfig quick_config(std::size_t n, std::size_t k, std::size_t iterations) {
    trainer::TrainConfig t;
    t.sampler = {1.0, 0.1, k, 1.0};
    t.batch_size = n;
    t.n_iterations = iterations;
    t.lr = 1e-3;
    t.seed = 5;
    t.eval_every = 10;
    return t;
}

trainer::BatchSource gaussian_source(std::size_t dim, std::uint64_t tag) {
    return data::batch_source(data::DistributionSpec::standard_gaussian(dim), 99, tag);
}

nn::PotentialNetwork linear_net(const std::vector<double>& a) {
    nn::NetworkConfig c = small_net(a.size(), {}, 0);
    nn::DenseLayer l{Eigen::Map<const Eigen::RowVectorXd>(a.data(), static_cast<Eigen::Index>(a.size())),
                     Eigen::VectorXd::Zero(1)};
    return nn::make_network(c, {l});
}

}  // namespace

TEST(TrainConfig, Validation) {
    auto t = quick_config(8, 5, 1);
    EXPECT_NO_THROW(t.validate());
    t.batch_size = 0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = quick_config(8, 5, 1);
    t.decay = trainer::LrDecay{0, 1.0};
    EXPECT_THROW(t.validate(), ConfigError);
    t = quick_config(8, 5, 1);
    t.buffer_prob = 1.5;
    EXPECT_THROW(t.validate(), ConfigError);
}

TEST(TrainConfig, LinearDecaySchedule) {
    auto t = quick_config(8, 5, 11);
    t.lr = 1e-3;
    EXPECT_EQ(t.lr_at(7), 1e-3);
    t.decay = trainer::LrDecay{5, 1e-5};
    EXPECT_EQ(t.lr_at(4), 1e-3);
    EXPECT_EQ(t.lr_at(5), 1e-3);
    EXPECT_DOUBLE_EQ(t.lr_at(10), 1e-5);
    EXPECT_NEAR(t.lr_at(8), 1e-3 + 0.6 * (1e-5 - 1e-3), 1e-15);
}

TEST(SurrogateLoss, Examples) {
    const auto net = nn::init_network(small_net(2, {8}, 1));
    const Matrix y = oracle::random_matrix(16, 2, 1);
    EXPECT_EQ(trainer::surrogate_loss(net, y, y), 0.0);

    auto zc = small_net(2, {8}, 1);
    zc.init_scheme = nn::InitScheme::zeros;
    EXPECT_EQ(trainer::surrogate_loss(nn::init_network(zc), y, oracle::random_matrix(16, 2, 2)), 0.0);

    const std::vector<double> a{0.5, -2.0};
    const Matrix neg = oracle::random_matrix(16, 2, 3);
    const Matrix pos = oracle::random_matrix(16, 2, 4);
    const Eigen::RowVectorXd dm = pos.colwise().mean() - neg.colwise().mean();
    EXPECT_NEAR(trainer::surrogate_loss(linear_net(a), neg, pos), a[0] * dm(0) + a[1] * dm(1), 1e-14);
    EXPECT_THROW(trainer::surrogate_loss(net, neg, oracle::random_matrix(15, 2, 4)), ShapeError);
}

TEST(LossGradient, MatchesFiniteDifferencesOfSurrogate) {
    auto c = small_net(2, {8}, 6);
    auto net = nn::init_network(c);
    for (auto& l : net.layers) {
        l.bias.setConstant(0.05);
    }
    const Matrix neg = oracle::random_matrix(4, 2, 7);
    const Matrix pos = oracle::random_matrix(4, 2, 8);
    for (Eigen::Index n = 0; n < 4; ++n) {
        ASSERT_GT(oracle::min_abs_preactivation(net, neg.row(n).transpose()), 1e-3);
        ASSERT_GT(oracle::min_abs_preactivation(net, pos.row(n).transpose()), 1e-3);
    }
    const auto analytic = flatten(trainer::loss_gradient(net, neg, pos));
    const auto fd = oracle::fd_param_gradient(
        net, [&](const nn::PotentialNetwork& n) { return trainer::surrogate_loss(n, neg, pos); });
    EXPECT_LE(max_rel_error(analytic, fd), 1e-5);
}

TEST(LossGradient, AntisymmetricAndZeroOnEqualBatches) {
    const auto net = nn::init_network(small_net(3, {12, 6}, 2));
    const Matrix a = oracle::random_matrix(9, 3, 1);
    const Matrix b = oracle::random_matrix(9, 3, 2);
    EXPECT_EQ(trainer::loss_gradient(net, a, a).squared_norm(), 0.0);
    auto swapped = trainer::loss_gradient(net, b, a);
    swapped *= -1.0;
    EXPECT_EQ(trainer::loss_gradient(net, a, b), swapped);
}

TEST(LossGradient, ChainOutputsEnterOnlyAsConstants) {
    // Chain outputs contribute exactly grad_params_weighted at their final
    // states; nothing flows back through the sampler.
    const auto net_cfg = small_net(2, {16, 16}, 3);
    const auto cfg = quick_config(32, 20, 1);
    const auto state = trainer::init_train_state(net_cfg, cfg);
    const Matrix X = gaussian_source(2, stream_tag::source)(0, 32);
    const Matrix y_pos = gaussian_source(2, stream_tag::target)(0, 32);
    const Matrix y_neg = trainer::negative_samples(state, X, CostFunction::quadratic(), cfg);
    const std::vector<double> w(32, 1.0 / 32.0);
    const auto expected = nn::grad_params_weighted(state.net, y_pos, w) -
                          nn::grad_params_weighted(state.net, y_neg, w);
    EXPECT_EQ(trainer::loss_gradient(state.net, y_neg, y_pos), expected);

    const std::vector<double> zero(32, 0.0);
    auto neg_only = nn::grad_params_weighted(state.net, y_pos, zero) -
                    nn::grad_params_weighted(state.net, y_neg, w);
    neg_only *= -1.0;
    EXPECT_EQ(neg_only, nn::grad_params_weighted(state.net, y_neg, w));
}

TEST(TrainStep, ZeroLearningRateKeepsParameters) {
    const auto net_cfg = small_net(2, {8, 8}, 1);
    auto cfg = quick_config(16, 10, 1);
    cfg.lr = 0.0;
    const auto state = trainer::init_train_state(net_cfg, cfg);
    const auto next = trainer::train_step(state, gaussian_source(2, stream_tag::source),
                                          gaussian_source(2, stream_tag::target),
                                          CostFunction::quadratic(), cfg);
    EXPECT_EQ(next.net, state.net);
    EXPECT_EQ(next.buffer.size(), 16u);
    EXPECT_EQ(next.iteration, 1u);
    ASSERT_EQ(next.history.size(), 1u);
    EXPECT_EQ(next.history[0].iteration, 1u);
    EXPECT_EQ(next.history[0].buffer_size, 16u);
}

TEST(TrainStep, Deterministic) {
    const auto net_cfg = small_net(2, {8, 8}, 1);
    const auto cfg = quick_config(16, 10, 1);
    auto run = [&] {
        return trainer::train_step(trainer::init_train_state(net_cfg, cfg),
                                   gaussian_source(2, stream_tag::source),
                                   gaussian_source(2, stream_tag::target),
                                   CostFunction::quadratic(), cfg);
    };
    EXPECT_EQ(run(), run());
}

TEST(TrainStep, BadBatchSourceIsRejected) {
    const auto net_cfg = small_net(2, {8}, 1);
    const auto cfg = quick_config(16, 10, 1);
    const trainer::BatchSource short_source = [](std::size_t, std::size_t) {
        return Matrix::Zero(3, 2).eval();
    };
    EXPECT_THROW(trainer::train_step(trainer::init_train_state(net_cfg, cfg), short_source,
                                     gaussian_source(2, stream_tag::target),
                                     CostFunction::quadratic(), cfg),
                 ShapeError);
}

TEST(TrainStep, DivergenceNamesIteration) {
    const auto net_cfg = small_net(1, {4}, 1);
    auto cfg = quick_config(4, 5, 3);
    const auto repulsive = CostFunction::custom(
        [](std::span<const double>, std::span<const double>) { return 0.0; },
        [](std::span<const double>, std::span<const double>, std::span<double> out) {
            out[0] = -1e9;
        });
    try {
        trainer::train(net_cfg, cfg, gaussian_source(1, stream_tag::source),
                       gaussian_source(1, stream_tag::target), repulsive);
        FAIL() << "expected divergence";
    } catch (const DivergedChainError& e) {
        EXPECT_EQ(e.iteration(), 0);
    }
}

TEST(Train, ZeroIterationsReturnsInitialNetwork) {
    const auto net_cfg = small_net(2, {8}, 4);
    const auto cfg = quick_config(16, 10, 0);
    const auto result = trainer::train(net_cfg, cfg, gaussian_source(2, stream_tag::source),
                                       gaussian_source(2, stream_tag::target),
                                       CostFunction::quadratic());
    EXPECT_EQ(result.net, nn::init_network(net_cfg));
    EXPECT_TRUE(result.history.empty());
}

TEST(Train, FullRunIsReproducibleAndCallbackCadence) {
    const auto net_cfg = small_net(2, {16, 16}, 4);
    const auto cfg = quick_config(32, 20, 25);
    std::vector<std::size_t> seen;
    auto run = [&](const trainer::Callback& cb) {
        return trainer::train(net_cfg, cfg, gaussian_source(2, stream_tag::source),
                              gaussian_source(2, stream_tag::target), CostFunction::quadratic(), cb);
    };
    const auto a = run([&](const trainer::TrainState& s) { seen.push_back(s.iteration); });
    const auto b = run({});
    EXPECT_EQ(a.net, b.net);
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(trainer::metrics_csv(a.history), trainer::metrics_csv(b.history));
    EXPECT_EQ(seen, (std::vector<std::size_t>{10, 20}));
}

TEST(Train, SmokeRunProducesVaryingFiniteLoss) {
    const auto [sx, sy] = data::make_random_gaussian_pair({2, 7, 0.5, 2.0});
    const auto p = data::batch_source(data::DistributionSpec::gaussian(Vector::Zero(2), sx), 1,
                                      stream_tag::source);
    const auto q = data::batch_source(data::DistributionSpec::gaussian(Vector::Zero(2), sy), 1,
                                      stream_tag::target);
    const auto result = trainer::train(small_net(2, {32, 32}, 1), quick_config(256, 100, 500), p,
                                       q, CostFunction::quadratic());
    ASSERT_EQ(result.history.size(), 500u);
    double lo = result.history[0].loss;
    double hi = lo;
    for (const auto& h : result.history) {
        ASSERT_TRUE(std::isfinite(h.loss) && std::isfinite(h.grad_norm));
        lo = std::min(lo, h.loss);
        hi = std::max(hi, h.loss);
    }
    EXPECT_LT(lo, hi);
    EXPECT_EQ(result.history.back().buffer_size, 10000u);
}

TEST(Train, PlanErrorShrinksDuringTraining) {
    // P = Q: the learned plan should approach the entropic self-coupling.
    const auto [sigma, unused] = data::make_random_gaussian_pair({2, 3, 0.5, 2.0});
    const auto spec = data::DistributionSpec::gaussian(Vector::Zero(2), sigma);
    const auto p = data::batch_source(spec, 2, stream_tag::source);
    const auto q = data::batch_source(spec, 2, stream_tag::target);
    const auto plan = reference::gaussian_eot_plan(sigma, sigma, 1.0);
    const Matrix X = data::sample_range(spec, 2, stream_tag::evaluation, 0, 10000);
    const trainer::InferenceConfig inference{300, 0.1, 1.0, 1.0};
    std::vector<double> uvp;
    auto measure = [&](const nn::PotentialNetwork& net) {
        uvp.push_back(evaluation::bw_uvp(
            trainer::sample_plan(net, CostFunction::quadratic(), X, inference, 17), plan));
    };
    auto cfg = quick_config(256, 100, 150);
    cfg.eval_every = 50;
    const auto net_cfg = small_net(2, {32, 32}, 1);
    measure(nn::init_network(net_cfg));
    trainer::train(net_cfg, cfg, p, q, CostFunction::quadratic(),
                   [&](const trainer::TrainState& s) { measure(s.net); });
    ASSERT_EQ(uvp.size(), 4u);
    for (std::size_t k = 1; k < uvp.size(); ++k) {
        EXPECT_LT(uvp[k], uvp[k - 1]) << "checkpoint " << k;
    }
    EXPECT_LE(uvp.back(), uvp.front() / 5.0);
}

TEST(Inference, ZeroStepsGivesInitialNoise) {
    const auto net = nn::init_network(small_net(2, {8}, 1));
    const std::vector<double> x{3.0, -3.0};
    const trainer::InferenceConfig cfg{0, 0.1, 0.8, 1.0};
    const Matrix y = trainer::infer_conditional(net, CostFunction::quadratic(), x, cfg, 100000, 4);
    for (Eigen::Index d = 0; d < 2; ++d) {
        const double mean = y.col(d).mean();
        const double sd = std::sqrt((y.col(d).array() - mean).square().sum() / 99999.0);
        EXPECT_NEAR(sd, 0.8, 0.02 * 0.8);
    }
}

TEST(Inference, ZeroPotentialCentresOnX) {
    auto c = small_net(2, {4}, 0);
    c.init_scheme = nn::InitScheme::zeros;
    const auto net = nn::init_network(c);
    const std::vector<double> x{1.0, -0.5};
    const trainer::InferenceConfig cfg{2000, 0.1, 1.0, 1.0};
    const Matrix y = trainer::infer_conditional(net, CostFunction::quadratic(), x, cfg, 10000, 8);
    EXPECT_NEAR(y.col(0).mean(), 1.0, 0.05);
    EXPECT_NEAR(y.col(1).mean(), -0.5, 0.05);
    EXPECT_EQ(trainer::infer_conditional(net, CostFunction::quadratic(), x, cfg, 50, 8),
              trainer::infer_conditional(net, CostFunction::quadratic(), x, cfg, 50, 8));
}

TEST(Inference, SamplePlanJoinsSourceAndChains) {
    const auto net = nn::init_network(small_net(2, {8}, 1));
    const Matrix X = oracle::random_matrix(10, 2, 3);
    const Matrix joint = trainer::sample_plan(net, CostFunction::quadratic(), X,
                                              {20, 0.1, 1.0, 1.0}, 1);
    ASSERT_EQ(joint.cols(), 4);
    EXPECT_EQ(Matrix(joint.leftCols(2)), X);
    EXPECT_THROW(trainer::sample_plan(net, CostFunction::quadratic(), X, {20, 0.1, 0.0, 1.0}, 1),
                 ConfigError);
}

TEST(Metrics, CsvHeaderAndRows) {
    const std::vector<trainer::HistoryEntry> h{{1, 0.5, 2.0, -1.25, 16}};
    EXPECT_EQ(trainer::metrics_csv(h),
              std::string(trainer::kMetricsHeader) + "\n1,0.5,2,-1.25,16\n");
}
