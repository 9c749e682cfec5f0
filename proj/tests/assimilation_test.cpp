#include <gtest/gtest.h>

#include <cmath>

#include "dassim/assimilation.hpp"
#include "dassim/operators.hpp"
#include "test_util.hpp"

using namespace dassim;
using namespace dassim::test;

namespace {

CovarianceMatrix cov(const Matrix& m) { return CovarianceMatrix(m); }
CovarianceMatrix eye(std::size_t n, double v = 1.0) { return CovarianceMatrix::scaled_identity(n, v); }

VariationalSettings settings(std::size_t iters, double lr, bool record = true) {
    VariationalSettings s;
    s.max_iterations = iters;
    s.learning_rate = lr;
    s.record_log = record;
    return s;
}

}  // namespace

TEST(ObservationSeries, Invariants) {
    EXPECT_NO_THROW(ObservationSeries({2, 4, 6}, Matrix(3, 1)));
    EXPECT_THROW(ObservationSeries({2, 2}, Matrix(2, 1)), DimensionMismatch);
    EXPECT_THROW(ObservationSeries({1, 2}, Matrix(3, 1)), DimensionMismatch);
    EXPECT_THROW(ObservationSeries({1, 3}, Matrix(2, 1), {1}), DimensionMismatch);
    auto s = ObservationSeries::uniform(Matrix(4, 2), 5, 5);
    EXPECT_EQ(s.times, (std::vector<std::size_t>{5, 10, 15, 20}));
    EXPECT_EQ(s.gaps, (std::vector<std::size_t>{5, 5, 5}));
    EXPECT_EQ(s.segment(0), 5u);
}

TEST(KalmanUpdate, ScalarMidpoint) {
    Vector xa = kalman_update(Vector{0.0}, eye(1), Matrix{{1}}, eye(1), Vector{2.0});
    EXPECT_DOUBLE_EQ(xa[0], 1.0);
}

TEST(KalmanUpdate, ZeroForecastUncertaintyKeepsForecast) {
    Vector xf{0.3, -1.2};
    Vector xa = kalman_update(xf, cov(Matrix(2, 2)), Matrix::identity(2), eye(2), Vector{5.0, 5.0});
    EXPECT_EQ(xa, xf);
}

TEST(KalmanUpdate, PerfectObservationsLimit) {
    Vector y{4.0, -2.0, 0.5};
    Vector xa = kalman_update(Vector{0, 0, 0}, eye(3), Matrix::identity(3), eye(3, 1e-12), y);
    EXPECT_LT(max_abs_diff(xa, y), 1e-6);
}

TEST(KalmanUpdate, DimensionChecks) {
    EXPECT_THROW(kalman_update(Vector{0, 0}, eye(3), Matrix::identity(2), eye(2), Vector{1, 1}), DimensionMismatch);
    EXPECT_THROW(kalman_update(Vector{0, 0}, eye(2), Matrix{{1, 0}}, eye(2), Vector{1, 1}), DimensionMismatch);
}

TEST(KalmanUpdate, MatchesExplicitGainOnRandomSpdInstances) {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        const std::size_t m = 1 + rng.below(n);
        Matrix p = random_spd(n, rng), r = random_spd(m, rng), h = random_matrix(m, n, rng);
        Vector xf = random_vector(n, rng), y = random_vector(m, rng);
        Matrix k = explicit_gain(p, h, r);
        Vector innov = y;
        Vector hx = matvec(h, xf);
        for (std::size_t i = 0; i < m; ++i) innov[i] -= hx[i];
        Vector expected = xf;
        Vector inc = matvec(k, innov);
        for (std::size_t i = 0; i < n; ++i) expected[i] += inc[i];
        EXPECT_LT(max_abs_diff(kalman_update(xf, cov(p), h, cov(r), y), expected), 1e-12);
    }
}

TEST(KalmanFilter, PerfectObservationPersistence) {
    ObservationSeries obs({3}, Matrix{{1.5, -0.5}});
    auto out = kalman_filter(persistence_model(2, 4), Matrix::identity(2), eye(2), eye(2, 1e-12), Vector{0, 0}, obs);
    ASSERT_EQ(out.average_trajectory.rows(), 4u);
    EXPECT_LT(max_abs_diff(out.average_trajectory.row(3), obs.values.row(0)), 1e-9);
    EXPECT_FALSE(out.member_trajectories.has_value());
}

TEST(KalmanFilter, TwoHalfGainUpdates) {
    ObservationSeries obs({1, 2}, Matrix{{2}, {2}});
    auto out = kalman_filter(persistence_model(1, 2), Matrix{{1}}, eye(1), eye(1), Vector{0}, obs);
    ASSERT_EQ(out.average_trajectory.rows(), 3u);
    EXPECT_DOUBLE_EQ(out.average_trajectory(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(out.average_trajectory(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.average_trajectory(2, 0), 1.5);
}

TEST(KalmanFilter, ForecastOnlyFlagKeepsForecastRows) {
    ObservationSeries obs({1, 2}, Matrix{{2}, {2}});
    KalmanOptions opt;
    opt.forecast_only = true;
    auto out = kalman_filter(persistence_model(1, 2), Matrix{{1}}, eye(1), eye(1), Vector{0}, obs, opt);
    EXPECT_DOUBLE_EQ(out.average_trajectory(1, 0), 0.0);
    EXPECT_DOUBLE_EQ(out.average_trajectory(2, 0), 1.0);
}

TEST(KalmanFilter, SequenceLengthMismatch) {
    ObservationSeries obs({3, 6}, Matrix{{1}, {1}});
    EXPECT_THROW(kalman_filter(persistence_model(1, 3), Matrix{{1}}, eye(1), eye(1), Vector{0}, obs),
                 SequenceLengthMismatch);
}

TEST(KalmanFilter, MatchesHandRolledConstantGainFilter) {
    Rng rng(99);
    Matrix a{{0.9, 0.2}, {-0.1, 0.95}};
    Matrix p = random_spd(2, rng), r = random_spd(1, rng), h = random_matrix(1, 2, rng);
    const std::size_t gap = 3, cycles = 5;
    Matrix y = random_matrix(cycles, 1, rng);
    Vector xb{1.0, -0.5};

    auto out = kalman_filter(linear_sequence_model(a, gap), h, cov(p), cov(r), xb,
                             ObservationSeries::uniform(y, gap, gap));

    const Matrix k = explicit_gain(p, h, r);
    Matrix expected(1 + cycles * gap, 2);
    Vector x = xb;
    expected.set_row(0, x);
    for (std::size_t c = 0; c < cycles; ++c) {
        for (std::size_t s = 1; s <= gap; ++s) {
            x = matvec(a, x);
            expected.set_row(c * gap + s, x);
        }
        const double innov = y(c, 0) - (h(0, 0) * x[0] + h(0, 1) * x[1]);
        x[0] += k(0, 0) * innov;
        x[1] += k(1, 0) * innov;
        expected.set_row((c + 1) * gap, x);
    }
    EXPECT_LT(max_abs_diff(out.average_trajectory.storage(), expected.storage()), 1e-10);
}

TEST(Enkf, ZeroSpreadKeepsForecasts) {
    Matrix a{{1.0, 0.1}, {0.0, 1.0}};
    ObservationSeries obs({2, 4}, Matrix{{5, 5}, {5, 5}});
    Rng rng(1);
    auto out = enkf(8, linear_sequence_model(a, 2), identity_operator(2), cov(Matrix(2, 2)), eye(2), Vector{1, 1},
                    obs, rng);
    ASSERT_EQ(out.average_trajectory.rows(), 5u);
    Vector x{1, 1};
    for (std::size_t t = 1; t < 5; ++t) {
        x = matvec(a, x);
        EXPECT_LT(max_abs_diff(out.average_trajectory.row(t), x), 1e-12);
    }
}

TEST(Enkf, AverageIsMemberMean) {
    Rng rng(4);
    ObservationSeries obs({2, 4, 6}, random_matrix(3, 1, rng));
    auto out = enkf(12, linear_sequence_model(Matrix{{0.9, 0.3}, {-0.2, 1.0}}, 2), linear_operator(Matrix{{1, 0}}),
                    eye(2), eye(1, 0.1), Vector{0.5, 0.5}, obs, rng);
    ASSERT_TRUE(out.member_trajectories.has_value());
    const auto& members = *out.member_trajectories;
    ASSERT_EQ(members.size(), 12u);
    for (std::size_t t = 0; t < out.average_trajectory.rows(); ++t) {
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (const auto& m : members) s += m(t, j);
            EXPECT_NEAR(out.average_trajectory(t, j), s / 12.0, 1e-12);
        }
    }
}

TEST(Enkf, Deterministic) {
    Rng rng(7);
    ObservationSeries obs({1, 2}, Matrix{{1, 0}, {2, 1}});
    auto run = [&] {
        return enkf(20, persistence_model(2, 2), identity_operator(2), eye(2), eye(2, 0.5), Vector{0, 0}, obs, Rng(3));
    };
    auto a = run(), b = run();
    EXPECT_EQ(a.average_trajectory, b.average_trajectory);
    EXPECT_EQ(*a.member_trajectories, *b.member_trajectories);
}

TEST(Enkf, RejectsSingleMember) {
    ObservationSeries obs({1}, Matrix{{1}});
    EXPECT_THROW(enkf(1, persistence_model(1, 2), identity_operator(1), eye(1), eye(1), Vector{0}, obs, Rng(0)),
                 DimensionMismatch);
}

TEST(Enkf, CollapseRaisesUnlessJittered) {
    ObservationSeries obs({1}, Matrix{{1}});
    const CovarianceMatrix zero(Matrix(1, 1));
    EXPECT_THROW(enkf(5, persistence_model(1, 2), identity_operator(1), zero, zero, Vector{0}, obs, Rng(0)),
                 NotPositiveDefinite);
    EnkfOptions opt;
    opt.r_jitter = 1e-6;
    EXPECT_NO_THROW(enkf(5, persistence_model(1, 2), identity_operator(1), zero, zero, Vector{0}, obs, Rng(0), opt));
}

namespace {

// Relative error of the one-cycle EnKF mean analysis against the exact
// Kalman analysis for the same forecast distribution.
double enkf_vs_kalman(std::size_t n_e, std::uint64_t seed) {
    const Matrix a{{0.95, 0.1}, {-0.1, 0.9}};
    const Matrix p{{1.0, 0.3}, {0.3, 0.5}};
    const Matrix h{{1.0, 0.5}};
    const Matrix r{{0.4}};
    const Vector xb{2.0, -1.0};
    const Vector y{0.5};
    auto out = enkf(n_e, linear_sequence_model(a, 1), linear_operator(h), cov(p), cov(r), xb,
                    ObservationSeries({1}, Matrix::row_vector(y)), Rng(seed));
    const Matrix pf = matmul(matmul(a, p), a.transpose());
    const Vector exact = kalman_update(matvec(a, xb), cov(pf), h, cov(r), y);
    const Vector mean = out.average_trajectory.row_copy(1);
    Vector diff = mean;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= exact[i];
    return norm2(diff) / norm2(exact);
}

}  // namespace

TEST(Enkf, ConvergesToKalmanAnalysis) {
    const double small = enkf_vs_kalman(100, 11);
    const double large = enkf_vs_kalman(10000, 11);
    EXPECT_LT(large, 0.05);
    EXPECT_LT(large, small);
}

TEST(Cost3dvar, Examples) {
    auto id = identity_operator(1);
    EXPECT_DOUBLE_EQ(cost_3dvar(Vector{1}, Vector{0}, eye(1), eye(1), Vector{2}, id), 2.0);
    Rng rng(3);
    auto h = dense_operator(DenseNetwork::random({3, 4, 2}, Activation::tanh, Activation::identity, rng));
    Vector xb = random_vector(3, rng);
    EXPECT_DOUBLE_EQ(cost_3dvar(xb, xb, eye(3), eye(2), h.evaluate(xb).storage(), h), 0.0);
}

TEST(Cost3dvar, GradientVanishesAtBlue) {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix b = random_spd(3, rng), r = random_spd(2, rng), h = random_matrix(2, 3, rng);
        Vector xb = random_vector(3, rng), y = random_vector(2, rng);
        Vector blue = kalman_update(xb, cov(b), h, cov(r), y);
        EXPECT_LT(norm2(cost_3dvar_gradient(blue, xb, cov(b), cov(r), y, linear_operator(h))), 1e-8);
    }
}

TEST(Var3d, MidpointOfEqualWeights) {
    auto out = var3d(identity_operator(2), eye(2), eye(2), Matrix{{0, 0}}, Matrix{{2, 4}}, settings(2000, 0.05));
    EXPECT_LT(max_abs_diff(out.assimilated_state.storage(), Vector{1, 2}), 1e-3);
    EXPECT_EQ(out.log.j.size(), 2000u);
    EXPECT_EQ(out.log.states.size(), 2000u);
    EXPECT_TRUE(out.log.jb.empty());
    EXPECT_LE(out.log.j.back(), out.log.j.front());
}

TEST(Var3d, ConvergesToBlue) {
    auto out = var3d(linear_operator(Matrix{{1, 0}}), eye(2), eye(1), Matrix{{0, 0}}, Matrix{{2}}, settings(2000, 0.05));
    EXPECT_LT(max_abs_diff(out.assimilated_state.storage(), Vector{1, 0}), 1e-3);
    EXPECT_LT(norm2(cost_3dvar_gradient(Vector{1, 0}, Vector{0, 0}, eye(2), eye(1), Vector{2},
                                        linear_operator(Matrix{{1, 0}}))),
              1e-8);
}

TEST(Var3d, ZeroInnovationFixedPoint) {
    Rng rng(8);
    auto h = dense_operator(DenseNetwork::random({3, 5, 2}, Activation::tanh, Activation::identity, rng));
    Matrix xb = random_matrix(1, 3, rng);
    auto out = var3d(h, eye(3), eye(2), xb, h.evaluate(xb), settings(100, 0.1));
    EXPECT_LT(max_abs_diff(out.assimilated_state.storage(), xb.storage()), 1e-6);
}

TEST(Var3d, BatchRowsMatchIndependentRuns) {
    Rng rng(10);
    Matrix h = random_matrix(2, 3, rng);
    Matrix xb = random_matrix(3, 3, rng), y = random_matrix(3, 2, rng);
    auto batch = var3d(linear_operator(h), eye(3), eye(2, 0.5), xb, y, settings(300, 0.05, false));
    for (std::size_t i = 0; i < 3; ++i) {
        auto single = var3d(linear_operator(h), eye(3), eye(2, 0.5), row_block(xb, i, 1), row_block(y, i, 1),
                            settings(300, 0.05));
        EXPECT_EQ(single.assimilated_state.row_copy(0), batch.assimilated_state.row_copy(i));
    }
    EXPECT_TRUE(batch.log.states.empty());
    EXPECT_EQ(batch.log.j.size(), 300u);
}

TEST(Var3d, DivergenceKeepsPartialLog) {
    // h(x) = log x; pulling toward y = -100 walks x through zero.
    auto h = callable_operator(
        1, 1, 1,
        [](const Matrix& x) {
            Matrix y = x;
            for (double& v : y.data()) v = std::log(v);
            return y;
        },
        [](const Matrix& x, const Matrix& g) {
            Matrix r = g;
            for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] /= x.data()[i];
            return r;
        });
    try {
        var3d(h, eye(1), eye(1), Matrix{{1.0}}, Matrix{{-100.0}}, settings(50, 1.0));
        FAIL() << "expected OptimizationDiverged";
    } catch (const OptimizationDiverged& e) {
        EXPECT_GE(e.partial_log.j.size(), 1u);
        EXPECT_LT(e.partial_log.j.size(), 50u);
    }
}

TEST(Var3d, MinimizerInvariantUnderCovarianceScaling) {
    Rng rng(41);
    Matrix b = random_spd(2, rng, 1.0), r = random_spd(2, rng, 1.0), h = random_matrix(2, 2, rng);
    Matrix xb = random_matrix(1, 2, rng), y = random_matrix(1, 2, rng);
    auto one = var3d(linear_operator(h), cov(b), cov(r), xb, y, settings(4000, 0.02, false));
    auto ten = var3d(linear_operator(h), cov(b * 10.0), cov(r * 10.0), xb, y, settings(4000, 0.02, false));
    EXPECT_LT(max_abs_diff(one.assimilated_state.storage(), ten.assimilated_state.storage()), 1e-3);
}

TEST(Cost4dvar, ScalarPersistenceCost) {
    ObservationSeries obs({0, 1}, Matrix{{3}, {3}});
    auto m = persistence_model(1, 2);
    auto id = identity_operator(1);
    for (double x : {-1.0, 0.0, 2.0, 3.5}) {
        auto c = cost_4dvar(Vector{x}, Vector{0}, eye(1), eye(1), m, id, obs);
        EXPECT_DOUBLE_EQ(c.jb, x * x);
        EXPECT_DOUBLE_EQ(c.jo, 2 * (3 - x) * (3 - x));
        EXPECT_EQ(c.j, c.jb + c.jo);
    }
}

TEST(Cost4dvar, ConsistentTrajectoryCostsNothing) {
    Rng rng(5);
    auto m = lstm_forward_model(LstmStack::random(2, 3, 4, 2, rng));
    auto h = linear_operator(random_matrix(2, 3, rng));
    Vector xb = random_vector(3, rng);
    Matrix y(3, 2);
    Vector x = xb;
    for (std::size_t k = 0; k < 3; ++k) {
        if (k > 0) x = m.evaluate(x).row_copy(2);
        y.set_row(k, h.evaluate(x).row(0));
    }
    ObservationSeries obs({0, 2, 4}, y);
    EXPECT_LT(cost_4dvar(xb, xb, eye(3), eye(2), m, h, obs).j, 1e-24);
}

TEST(Cost4dvar, NeedsTwoObservationsAndMatchingWindow) {
    auto m = persistence_model(1, 2);
    auto id = identity_operator(1);
    EXPECT_THROW(cost_4dvar(Vector{0}, Vector{0}, eye(1), eye(1), m, id, ObservationSeries({0}, Matrix{{1}})),
                 DimensionMismatch);
    EXPECT_THROW(cost_4dvar(Vector{0}, Vector{0}, eye(1), eye(1), m, id, ObservationSeries({0, 3}, Matrix{{1}, {1}})),
                 SequenceLengthMismatch);
}

TEST(Cost4dvar, TapeGradientMatchesFiniteDifferences) {
    Rng rng(61);
    // A small dense net wrapped into a one-step sequence model.
    auto step = DenseNetwork::random({3, 6, 3}, Activation::tanh, Activation::identity, rng);
    auto m = callable_operator(
        3, 2, 3,
        [step](const Matrix& x) { return vstack(x, Matrix::row_vector(dense_forward(step, x.row(0)))); },
        [step](const Matrix& x, const Matrix& g) {
            Matrix r = dense_operator(step).vjp(x, row_block(g, 1, 1));
            for (std::size_t i = 0; i < 3; ++i) r(0, i) += g(0, i);
            return r;
        });
    auto h = dense_operator(DenseNetwork::random({3, 4, 2}, Activation::tanh, Activation::identity, rng));
    ObservationSeries obs({0, 1, 2, 3}, random_matrix(4, 2, rng));
    Matrix b = random_spd(3, rng, 1.0), r = random_spd(2, rng, 1.0);
    Vector xb = random_vector(3, rng);
    for (int trial = 0; trial < 5; ++trial) {
        Vector x = random_vector(3, rng);
        Vector g = cost_4dvar_gradient(x, xb, cov(b), cov(r), m, h, obs);
        Vector fd = finite_diff_gradient(
            [&](std::span<const double> v) { return cost_4dvar(v, xb, cov(b), cov(r), m, h, obs).j; }, x);
        EXPECT_LT(rel_error(g, fd), 1e-4);
    }
}

TEST(Var4d, ScalarPersistenceConvergesToHandMinimizer) {
    ObservationSeries obs({0, 1}, Matrix{{3}, {3}});
    auto out = var4d(persistence_model(1, 2), identity_operator(1), eye(1), eye(1), Vector{0}, obs,
                     settings(2000, 0.05));
    EXPECT_NEAR(out.assimilated_state(0, 0), 2.0, 1e-3);
    ASSERT_EQ(out.log.j.size(), 2000u);
    for (std::size_t i = 0; i < out.log.j.size(); ++i) EXPECT_EQ(out.log.j[i], out.log.jb[i] + out.log.jo[i]);
    EXPECT_LE(out.log.j.back(), out.log.j.front());
}

TEST(Var4d, ZeroInnovationFixedPoint) {
    Rng rng(2);
    Matrix a{{0.9, 0.1}, {0.0, 1.1}};
    auto m = linear_sequence_model(a, 2);
    Vector xb{0.4, -0.3};
    Matrix y(3, 2);
    Vector x = xb;
    for (std::size_t k = 0; k < 3; ++k) {
        if (k > 0) x = matvec(a, matvec(a, x));
        y.set_row(k, x);
    }
    auto out = var4d(m, identity_operator(2), eye(2), eye(2), xb, ObservationSeries({0, 2, 4}, y), settings(200, 0.1));
    EXPECT_LT(max_abs_diff(out.assimilated_state.storage(), xb), 1e-6);
}

TEST(Var4d, MinimizerInvariantUnderCovarianceScaling) {
    Matrix a{{0.9, 0.2}, {-0.2, 0.9}};
    ObservationSeries obs({0, 1, 2}, Matrix{{1, 0}, {0.5, 0.5}, {0.2, 0.9}});
    auto run = [&](double scale) {
        return var4d(linear_sequence_model(a, 1), identity_operator(2), eye(2, scale), eye(2, 0.5 * scale),
                     Vector{0, 0}, obs, settings(4000, 0.02, false))
            .assimilated_state;
    };
    EXPECT_LT(max_abs_diff(run(1.0).storage(), run(10.0).storage()), 1e-3);
}
