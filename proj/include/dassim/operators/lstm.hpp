#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dassim/operators/dense.hpp"

namespace dassim {

// One LSTM layer. Gate blocks are stacked in the order input, forget,
// cell, output along the rows of the weights (4*hidden rows).
struct LstmLayer {
    Matrix w_input;   // 4h x in
    Matrix w_hidden;  // 4h x h
    Matrix bias;      // 1 x 4h
};

// Stacked LSTM with an affine readout from the top hidden state back to
// the state space. A rollout feeds each emitted state into the next cell
// step; the (h, c) memory of every layer starts at zero.
struct LstmStack {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t out_seq_length = 1;
    std::vector<LstmLayer> layers;
    Matrix readout_weight;  // input_dim x h
    Matrix readout_bias;    // 1 x input_dim

    static LstmStack random(std::size_t num_layers, std::size_t input_dim, std::size_t hidden_dim,
                            std::size_t out_seq_length, Rng& rng) {
        LstmStack s;
        s.input_dim = input_dim;
        s.hidden_dim = hidden_dim;
        s.out_seq_length = out_seq_length;
        for (std::size_t k = 0; k < num_layers; ++k) {
            const std::size_t in = k == 0 ? input_dim : hidden_dim;
            LstmLayer l;
            l.w_input = init_uniform(4 * hidden_dim, in, hidden_dim, rng);
            l.w_hidden = init_uniform(4 * hidden_dim, hidden_dim, hidden_dim, rng);
            l.bias = init_uniform(1, 4 * hidden_dim, hidden_dim, rng);
            s.layers.push_back(std::move(l));
        }
        s.readout_weight = init_uniform(input_dim, hidden_dim, hidden_dim, rng);
        s.readout_bias = init_uniform(1, input_dim, hidden_dim, rng);
        return s;
    }

    static LstmStack zeros(std::size_t num_layers, std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t out_seq_length) {
        LstmStack s;
        s.input_dim = input_dim;
        s.hidden_dim = hidden_dim;
        s.out_seq_length = out_seq_length;
        for (std::size_t k = 0; k < num_layers; ++k) {
            const std::size_t in = k == 0 ? input_dim : hidden_dim;
            s.layers.push_back({Matrix(4 * hidden_dim, in), Matrix(4 * hidden_dim, hidden_dim), Matrix(1, 4 * hidden_dim)});
        }
        s.readout_weight = Matrix(input_dim, hidden_dim);
        s.readout_bias = Matrix(1, input_dim);
        return s;
    }

    std::size_t num_layers() const { return layers.size(); }

    void check() const {
        detail::require_dims(out_seq_length >= 1, "LstmStack: out_seq_length must be at least 1");
        detail::require_dims(!layers.empty(), "LstmStack: no layers");
        const std::size_t h4 = 4 * hidden_dim;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const std::size_t in = k == 0 ? input_dim : hidden_dim;
            const auto& l = layers[k];
            detail::require_dims(l.w_input.rows() == h4 && l.w_input.cols() == in && l.w_hidden.rows() == h4 &&
                                     l.w_hidden.cols() == hidden_dim && l.bias.rows() == 1 && l.bias.cols() == h4,
                                 "LstmStack: gate weight shapes inconsistent in layer " + std::to_string(k));
        }
        detail::require_dims(readout_weight.rows() == input_dim && readout_weight.cols() == hidden_dim &&
                                 readout_bias.rows() == 1 && readout_bias.cols() == input_dim,
                             "LstmStack: readout shape");
    }

    std::vector<const Matrix*> parameters() const {
        std::vector<const Matrix*> p;
        for (const auto& l : layers) {
            p.push_back(&l.w_input);
            p.push_back(&l.w_hidden);
            p.push_back(&l.bias);
        }
        p.push_back(&readout_weight);
        p.push_back(&readout_bias);
        return p;
    }
    std::vector<Matrix*> mutable_parameters() {
        std::vector<Matrix*> p;
        for (auto& l : layers) {
            p.push_back(&l.w_input);
            p.push_back(&l.w_hidden);
            p.push_back(&l.bias);
        }
        p.push_back(&readout_weight);
        p.push_back(&readout_bias);
        return p;
    }

    // Autoregressive rollout of a batch x0 (B x input_dim): returns
    // out_seq_length nodes, each B x input_dim, the t-th being the state
    // t + 1 steps after x0.
    std::vector<Var> rollout(Tape& tape, std::span<const Var> params, const Var& x0, std::size_t steps) const {
        detail::require_dims(x0.cols() == input_dim, "lstm_rollout: input has " + std::to_string(x0.cols()) +
                                                         " columns, expected " + std::to_string(input_dim));
        const std::size_t batch = x0.rows();
        const std::size_t h = hidden_dim;
        std::vector<Var> hidden, cell;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            hidden.push_back(tape.constant(Matrix(batch, h)));
            cell.push_back(tape.constant(Matrix(batch, h)));
        }
        const Var& w_out = params[3 * layers.size()];
        const Var& b_out = params[3 * layers.size() + 1];
        std::vector<Var> outputs;
        outputs.reserve(steps);
        Var input = x0;
        for (std::size_t t = 0; t < steps; ++t) {
            Var below = input;
            for (std::size_t k = 0; k < layers.size(); ++k) {
                Var z = add_row(matmul_nt(below, params[3 * k]) + matmul_nt(hidden[k], params[3 * k + 1]),
                                params[3 * k + 2]);
                Var gi = sigmoid(slice_cols(z, 0, h));
                Var gf = sigmoid(slice_cols(z, h, h));
                Var gg = tanh(slice_cols(z, 2 * h, h));
                Var go = sigmoid(slice_cols(z, 3 * h, h));
                cell[k] = mul(gf, cell[k]) + mul(gi, gg);
                hidden[k] = mul(go, tanh(cell[k]));
                below = hidden[k];
            }
            Var y = add_row(matmul_nt(below, w_out), b_out);
            outputs.push_back(y);
            input = y;
        }
        return outputs;
    }

    std::vector<Var> rollout(Tape& tape, const Var& x0, std::size_t steps) const {
        std::vector<Var> params;
        for (const Matrix* p : parameters()) params.push_back(tape.constant(*p));
        return rollout(tape, params, x0, steps);
    }

    // Training view: a batch of start states maps to the flattened rollout
    // (B x out_seq_length*input_dim), row t of the sequence occupying
    // columns [t*input_dim, (t+1)*input_dim).
    Var record(Tape& tape, std::span<const Var> params, const Var& x0) const {
        return concat_cols(rollout(tape, params, x0, out_seq_length));
    }
};

// out_seq_length x input_dim sequence; row t is the state t + 1 steps
// after x0.
inline Matrix lstm_rollout(const LstmStack& model, std::span<const double> x0) {
    model.check();
    Tape tape;
    auto rows = model.rollout(tape, tape.input(Matrix::row_vector(x0)), model.out_seq_length);
    return concat_rows(rows).value();
}

namespace detail {

class LstmForwardModel final : public OperatorImpl {
public:
    explicit LstmForwardModel(LstmStack model) : model_(std::move(model)) { model_.check(); }
    std::size_t input_dim() const override { return model_.input_dim; }
    std::size_t output_rows() const override { return model_.out_seq_length + 1; }
    std::size_t output_dim() const override { return model_.input_dim; }
    std::string kind() const override { return "lstm"; }
    Var apply(Tape& tape, const Var& x) const override {
        std::vector<Var> rows{x};
        auto predicted = model_.rollout(tape, x, model_.out_seq_length);
        rows.insert(rows.end(), predicted.begin(), predicted.end());
        return concat_rows(rows);
    }

private:
    LstmStack model_;
};

}  // namespace detail

// Forward-model view of an LSTM surrogate: the output starts with the input
// state and continues with the out_seq_length predicted states, so a model
// trained for `gap` steps yields gap + 1 rows ending at the next
// observation instant.
inline DifferentiableOperator lstm_forward_model(LstmStack model) {
    return DifferentiableOperator(std::make_shared<detail::LstmForwardModel>(std::move(model)));
}

}  // namespace dassim
