#include <gtest/gtest.h>

#include <cmath>

#include "dassim/operators.hpp"
#include "test_util.hpp"

using namespace dassim;
using dassim::test::random_matrix;
using dassim::test::rel_error;

namespace {

// Relative error between vjp(x, y_bar) and the central-difference gradient
// of x -> <y_bar, evaluate(x)>.
double vjp_vs_fd(const DifferentiableOperator& op, const Matrix& x, const Matrix& y_bar) {
    Matrix analytic = op.vjp(x, y_bar);
    auto f = [&](std::span<const double> v) {
        Matrix y = op.evaluate(Matrix(x.rows(), x.cols(), Vector(v.begin(), v.end())));
        return dot(y.data(), y_bar.data());
    };
    Vector fd = finite_diff_gradient(f, x.storage(), 1e-5);
    return rel_error(analytic.storage(), fd);
}

}  // namespace

TEST(LinearOperator, Examples) {
    auto id = identity_operator(3);
    Vector x{1.0, -2.0, 0.5};
    EXPECT_EQ(id.evaluate(x).storage(), x);
    EXPECT_EQ(id.vjp(x, Matrix::row_vector(x)).storage(), x);

    auto pick = linear_operator(Matrix{{1, 0}});
    EXPECT_EQ(pick.evaluate(Vector{3, 7}).storage(), (Vector{3}));
    EXPECT_EQ(pick.vjp(Vector{3, 7}, Matrix{{1}}).storage(), (Vector{1, 0}));

    EXPECT_EQ(linear_operator(Matrix::identity(2) * 2.0).evaluate(Vector{1, 2}).storage(), (Vector{2, 4}));
}

TEST(LinearOperator, DimensionMismatchOnApply) {
    auto h = linear_operator(Matrix{{1, 0}});
    EXPECT_THROW(h.evaluate(Vector{1, 2, 3}), DimensionMismatch);
}

TEST(LinearOperator, BatchIsRowWise) {
    auto h = linear_operator(Matrix{{1, 2}, {0, 1}, {3, 0}});
    Matrix batch{{1, 1}, {2, -1}};
    Matrix y = h.evaluate(batch);
    ASSERT_EQ(y.rows(), 2u);
    EXPECT_EQ(y.row_copy(0), h.evaluate(Vector{1, 1}).storage());
    EXPECT_EQ(y.row_copy(1), h.evaluate(Vector{2, -1}).storage());
}

TEST(DenseForward, IdentityNetwork) {
    DenseNetwork net;
    net.layers.push_back({Matrix::identity(3), Matrix(1, 3), Activation::identity});
    Vector x{0.1, 0.2, -4};
    EXPECT_EQ(dense_forward(net, x), x);
}

TEST(DenseForward, HandEvaluation) {
    DenseNetwork net;
    net.layers.push_back({Matrix{{1, 1}}, Matrix{{0.5}}, Activation::tanh});
    Vector y = dense_forward(net, Vector{0.25, 0.25});
    ASSERT_EQ(y.size(), 1u);
    EXPECT_NEAR(y[0], 0.76159, 1e-5);
    EXPECT_DOUBLE_EQ(y[0], std::tanh(1.0));
}

TEST(DenseForward, DimensionMismatch) {
    Rng rng(1);
    auto net = DenseNetwork::random({3, 4, 2}, Activation::tanh, Activation::identity, rng);
    EXPECT_THROW(dense_forward(net, Vector{1, 2}), DimensionMismatch);
}

TEST(DenseForward, VjpMatchesFiniteDifferences) {
    Rng rng(17);
    for (auto act : {Activation::tanh, Activation::sigmoid, Activation::identity}) {
        auto op = dense_operator(DenseNetwork::random({3, 4, 2}, act, Activation::identity, rng));
        EXPECT_LT(vjp_vs_fd(op, random_matrix(1, 3, rng), random_matrix(1, 2, rng)), 1e-5) << to_string(act);
    }
}

TEST(LstmRollout, ZeroWeightsEmitReadoutBias) {
    LstmStack s = LstmStack::zeros(2, 3, 5, 4);
    s.readout_bias = Matrix{{0.5, -1.0, 2.0}};
    Matrix seq = lstm_rollout(s, Vector{10, -3, 7});
    ASSERT_EQ(seq.rows(), 4u);
    ASSERT_EQ(seq.cols(), 3u);
    for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(seq.row_copy(t), (Vector{0.5, -1.0, 2.0}));
}

TEST(LstmRollout, ShortestWindow) {
    Rng rng(3);
    LstmStack s = LstmStack::random(1, 3, 4, 1, rng);
    Matrix seq = lstm_rollout(s, Vector{0.1, 0.2, 0.3});
    EXPECT_EQ(seq.rows(), 1u);
    EXPECT_EQ(seq.cols(), 3u);
}

TEST(LstmRollout, VjpOfSumMatchesFiniteDifferences) {
    Rng rng(23);
    LstmStack s = LstmStack::random(2, 3, 4, 6, rng);
    auto f = [&](std::span<const double> x) {
        Matrix seq = lstm_rollout(s, x);
        double total = 0.0;
        for (double v : seq.data()) total += v;
        return total;
    };
    Vector x0{0.3, -0.2, 0.5};
    Tape tape;
    Var in = tape.input(Matrix::row_vector(x0));
    Var total = sum(concat_rows(s.rollout(tape, in, s.out_seq_length)));
    Matrix grad = tape.backward(total).of(in);
    EXPECT_LT(rel_error(grad.storage(), finite_diff_gradient(f, x0, 1e-5)), 1e-4);
}

TEST(LstmRollout, DimensionMismatch) {
    LstmStack s = LstmStack::zeros(1, 3, 2, 2);
    EXPECT_THROW(lstm_rollout(s, Vector{1, 2}), DimensionMismatch);
}

TEST(LstmForwardModel, PrependsStartState) {
    Rng rng(4);
    LstmStack s = LstmStack::random(2, 3, 4, 5, rng);
    auto m = lstm_forward_model(s);
    EXPECT_EQ(m.output_rows(), 6u);
    Vector x0{0.1, 0.4, -0.3};
    Matrix seq = m.evaluate(x0);
    EXPECT_EQ(seq.row_copy(0), x0);
    Matrix bare = lstm_rollout(s, x0);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(seq.row_copy(t + 1), bare.row_copy(t));
}

TEST(Compose, Examples) {
    auto id = identity_operator(2);
    auto c = compose({id});
    EXPECT_EQ(c.evaluate(Vector{1, 2}).storage(), (Vector{1, 2}));

    auto two = linear_operator(Matrix{{2}});
    auto three = linear_operator(Matrix{{3}});
    auto six = compose({two, three});
    EXPECT_EQ(six.evaluate(Vector{1}).storage(), (Vector{6}));
    EXPECT_EQ(six.vjp(Vector{1}, Matrix{{1}}).storage(), (Vector{6}));
}

TEST(Compose, LatentObservationOperatorShape) {
    Rng rng(9);
    // Field sizes 16 (u) and 16 (h), latent sizes 4 and 3.
    Autoencoder ae_u = Autoencoder::random({16, 8, 4}, Activation::tanh, rng);
    Autoencoder ae_h = Autoencoder::random({16, 8, 3}, Activation::tanh, rng);
    auto h_full = dense_operator(DenseNetwork::random({16, 16}, Activation::tanh, Activation::identity, rng));
    auto latent_h = compose({ae_u.decoder_operator(), h_full, ae_h.encoder_operator()});
    EXPECT_EQ(latent_h.input_dim(), ae_u.latent_dim());
    EXPECT_EQ(latent_h.output_dim(), ae_h.latent_dim());
    EXPECT_LT(vjp_vs_fd(latent_h, random_matrix(1, 4, rng), random_matrix(1, 3, rng)), 1e-5);
}

TEST(Compose, MismatchDetectedAtConstruction) {
    EXPECT_THROW(compose({identity_operator(2), identity_operator(3)}), DimensionMismatch);
    // A sequence model may only come last.
    EXPECT_THROW(compose({persistence_model(2, 3), identity_operator(2)}), DimensionMismatch);
}

TEST(Compose, AssociativeAndIdentityIsNoOp) {
    Rng rng(31);
    auto a = dense_operator(DenseNetwork::random({3, 5, 4}, Activation::tanh, Activation::identity, rng));
    auto b = linear_operator(random_matrix(2, 4, rng));
    auto c = dense_operator(DenseNetwork::random({2, 3}, Activation::sigmoid, Activation::identity, rng));
    auto left = compose({compose({a, b}), c});
    auto right = compose({a, compose({b, c})});
    for (int trial = 0; trial < 10; ++trial) {
        Matrix x = random_matrix(1, 3, rng);
        EXPECT_EQ(left.evaluate(x), right.evaluate(x));
        EXPECT_EQ(compose({identity_operator(3), a, identity_operator(4)}).evaluate(x), a.evaluate(x));
    }
}

TEST(OperatorContract, ShippedOperatorsVjpMatchesFiniteDifferences) {
    Rng rng(77);
    std::vector<DifferentiableOperator> ops = {
        linear_operator(random_matrix(3, 4, rng)),
        dense_operator(DenseNetwork::random({4, 6, 3}, Activation::tanh, Activation::identity, rng)),
        dense_operator(DenseNetwork::random({4, 5, 5, 2}, Activation::sigmoid, Activation::tanh, rng)),
        persistence_model(4, 3),
        lstm_forward_model(LstmStack::random(2, 4, 5, 3, rng)),
        compose({linear_operator(random_matrix(4, 4, rng)),
                 dense_operator(DenseNetwork::random({4, 3}, Activation::tanh, Activation::tanh, rng))}),
    };
    for (const auto& op : ops) {
        for (int trial = 0; trial < 5; ++trial) {
            Matrix x = random_matrix(1, op.input_dim(), rng);
            Matrix y_bar = random_matrix(op.output_rows(), op.output_dim(), rng);
            EXPECT_LT(vjp_vs_fd(op, x, y_bar), 1e-5) << op.kind();
        }
    }
}

TEST(CallableOperator, WrapsUserCode) {
    // Elementwise square with its hand-written vjp.
    auto sq = callable_operator(
        2, 1, 2,
        [](const Matrix& x) {
            Matrix y = x;
            for (double& v : y.data()) v *= v;
            return y;
        },
        [](const Matrix& x, const Matrix& g) {
            Matrix r = g;
            for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] *= 2.0 * x.data()[i];
            return r;
        },
        "square");
    EXPECT_EQ(sq.evaluate(Vector{3, -2}).storage(), (Vector{9, 4}));
    Rng rng(2);
    EXPECT_LT(vjp_vs_fd(compose({sq, identity_operator(2)}), random_matrix(1, 2, rng), random_matrix(1, 2, rng)), 1e-5);
    EXPECT_THROW(sq.bind_args(Vector{1.0}), TypeMismatch);
}

TEST(Training, ConfigValidation) {
    TrainingConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), TypeMismatch);
    cfg.epochs = 1;
    cfg.validation_fraction = 1.0;
    EXPECT_THROW(cfg.validate(), TypeMismatch);
}

TEST(Training, OnePercentOfEightThousandIsEighty) {
    TrainingConfig cfg;
    cfg.validation_fraction = 0.01;
    EXPECT_EQ(cfg.validation_count(8000), 80u);
}

TEST(Training, ValidationSplitSizes) {
    Rng rng(5);
    Matrix x = random_matrix(200, 2, rng);
    TrainingConfig cfg;
    cfg.validation_fraction = 0.1;
    cfg.epochs = 1;
    auto r = train(DenseNetwork::random({2, 2}, Activation::tanh, Activation::identity, rng), x, x, cfg);
    EXPECT_EQ(r.validation_count, 20u);
    EXPECT_EQ(r.train_count, 180u);
    EXPECT_EQ(r.validation_history.size(), 1u);
}

TEST(Training, AutoencoderMemorizesRepeatedVector) {
    Rng rng(12);
    Vector v = test::random_vector(8, rng);
    Matrix data(16, 8);
    for (std::size_t i = 0; i < 16; ++i) data.set_row(i, v);
    TrainingConfig cfg;
    cfg.epochs = 500;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    auto r = train(Autoencoder::random({8, 6, 3}, Activation::tanh, rng), data, data, cfg);
    ASSERT_EQ(r.loss_history.size(), 500u);
    EXPECT_LT(r.loss_history.back(), 1e-4 * r.initial_loss);
    EXPECT_LE(r.loss_history.back(), r.initial_loss);
}

TEST(Training, DeterministicUnderSeed) {
    Rng data_rng(8);
    Matrix x = random_matrix(64, 3, data_rng);
    Matrix y = random_matrix(64, 2, data_rng);
    TrainingConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 10;
    cfg.learning_rate = 1e-2;
    cfg.seed = 42;
    cfg.validation_fraction = 0.1;
    Rng init(1);
    auto net = DenseNetwork::random({3, 8, 2}, Activation::tanh, Activation::identity, init);
    auto a = train(net, x, y, cfg);
    auto b = train(net, x, y, cfg);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.validation_history, b.validation_history);
    EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
}

TEST(Training, ZeroLearningRateKeepsWeights) {
    Rng rng(6);
    Matrix x = random_matrix(20, 3, rng);
    auto net = DenseNetwork::random({3, 4, 3}, Activation::tanh, Activation::identity, rng);
    TrainingConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.0;
    auto r = train(net, x, x, cfg);
    EXPECT_EQ(serialize_model(r.model), serialize_model(net));
}

TEST(Training, LstmLearnsAndShrinksLoss) {
    // Sequences of a damped rotation: the LSTM sees x_t and must emit
    // x_{t+1}, x_{t+2}.
    const std::size_t n = 120;
    Matrix traj(n + 2, 2);
    traj(0, 0) = 1.0;
    for (std::size_t t = 1; t < n + 2; ++t) {
        traj(t, 0) = 0.98 * (std::cos(0.2) * traj(t - 1, 0) - std::sin(0.2) * traj(t - 1, 1));
        traj(t, 1) = 0.98 * (std::sin(0.2) * traj(t - 1, 0) + std::cos(0.2) * traj(t - 1, 1));
    }
    Matrix inputs(n, 2), targets(n, 4);
    for (std::size_t t = 0; t < n; ++t) {
        inputs.set_row(t, traj.row(t));
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t j = 0; j < 2; ++j) targets(t, 2 * k + j) = traj(t + 1 + k, j);
    }
    Rng rng(10);
    TrainingConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    cfg.validation_fraction = 0.05;
    cfg.split = ValidationSplit::trailing;
    auto r = train(LstmStack::random(2, 2, 8, 2, rng), inputs, targets, cfg);
    EXPECT_EQ(r.validation_count, 6u);
    EXPECT_LT(r.loss_history.back(), 0.5 * r.initial_loss);
}

TEST(ModelIo, RoundTripEveryKind) {
    Rng rng(21);
    std::vector<AnyModel> models = {
        DenseNetwork::random({4, 7, 2}, Activation::relu, Activation::sigmoid, rng),
        LstmStack::random(2, 3, 5, 4, rng),
        Autoencoder::random({10, 6, 3}, Activation::tanh, rng),
    };
    for (const auto& m : models) {
        const std::string bytes = serialize_model(m);
        EXPECT_EQ(bytes.compare(0, 12, "DASSIM-NN-1\n"), 0);
        EXPECT_EQ(serialize_model(deserialize_model(bytes)), bytes);
    }
}

TEST(ModelIo, RejectsCorruptFiles) {
    Rng rng(1);
    std::string bytes = serialize_model(AnyModel(DenseNetwork::random({2, 2}, Activation::tanh, Activation::identity, rng)));
    EXPECT_THROW(deserialize_model("NOT-A-MODEL-FILE-AT-ALL"), ModelFormatError);
    EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 3)), ModelFormatError);
    EXPECT_THROW(deserialize_model(bytes + "x"), ModelFormatError);
}
