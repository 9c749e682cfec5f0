#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dassim/numerics/rng.hpp"
#include "dassim/operators/operator.hpp"

namespace dassim {

enum class Activation { identity, tanh, relu, sigmoid };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity" || s == "linear") return Activation::identity;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    throw TypeMismatch("unknown activation '" + s + "'");
}

inline Var activate(const Var& v, Activation a) {
    switch (a) {
        case Activation::identity: return v;
        case Activation::tanh: return tanh(v);
        case Activation::relu: return relu(v);
        case Activation::sigmoid: return sigmoid(v);
    }
    return v;
}

// Weight initialization shared by the networks: uniform in +-1/sqrt(fan_in).
inline Matrix init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(-bound, bound);
    return m;
}

struct DenseLayer {
    Matrix weight;  // out x in
    Matrix bias;    // 1 x out
    Activation activation = Activation::identity;
};

// Multilayer perceptron. Layer k maps x -> act(x W_k^T + b_k).
struct DenseNetwork {
    std::vector<DenseLayer> layers;

    // widths = {in, h1, ..., out}. Hidden layers use `hidden`, the last
    // layer uses `output`.
    static DenseNetwork random(const std::vector<std::size_t>& widths, Activation hidden, Activation output, Rng& rng) {
        detail::require_dims(widths.size() >= 2, "DenseNetwork: need at least input and output widths");
        DenseNetwork net;
        for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
            DenseLayer layer;
            layer.weight = init_uniform(widths[k + 1], widths[k], widths[k], rng);
            layer.bias = init_uniform(1, widths[k + 1], widths[k], rng);
            layer.activation = k + 2 == widths.size() ? output : hidden;
            net.layers.push_back(std::move(layer));
        }
        return net;
    }

    std::size_t input_dim() const { return layers.front().weight.cols(); }
    std::size_t output_dim() const { return layers.back().weight.rows(); }

    void check() const {
        detail::require_dims(!layers.empty(), "DenseNetwork: no layers");
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& l = layers[k];
            detail::require_dims(l.bias.rows() == 1 && l.bias.cols() == l.weight.rows(),
                                 "DenseNetwork: bias shape in layer " + std::to_string(k));
            if (k > 0)
                detail::require_dims(l.weight.cols() == layers[k - 1].weight.rows(),
                                     "DenseNetwork: layer " + std::to_string(k) + " does not chain");
            if (!l.weight.all_finite() || !l.bias.all_finite())
                throw NanEncountered("DenseNetwork: non-finite weights in layer " + std::to_string(k));
        }
    }

    std::vector<const Matrix*> parameters() const {
        std::vector<const Matrix*> p;
        for (const auto& l : layers) {
            p.push_back(&l.weight);
            p.push_back(&l.bias);
        }
        return p;
    }
    std::vector<Matrix*> mutable_parameters() {
        std::vector<Matrix*> p;
        for (auto& l : layers) {
            p.push_back(&l.weight);
            p.push_back(&l.bias);
        }
        return p;
    }

    // Records the network on a tape with parameters supplied as tape nodes
    // (in parameters() order), so gradients flow to them.
    Var record(Tape& tape, std::span<const Var> params, const Var& x) const {
        (void)tape;
        detail::require_dims(x.cols() == input_dim(), "dense_forward: input has " + std::to_string(x.cols()) +
                                                          " columns, network expects " + std::to_string(input_dim()));
        Var h = x;
        for (std::size_t k = 0; k < layers.size(); ++k)
            h = activate(add_row(matmul_nt(h, params[2 * k]), params[2 * k + 1]), layers[k].activation);
        return h;
    }

    Var record(Tape& tape, const Var& x) const {
        std::vector<Var> params;
        for (const Matrix* p : parameters()) params.push_back(tape.constant(*p));
        return record(tape, params, x);
    }
};

inline Vector dense_forward(const DenseNetwork& net, std::span<const double> x) {
    Tape tape;
    return net.record(tape, tape.input(Matrix::row_vector(x))).value().storage();
}

namespace detail {

class DenseOperator final : public OperatorImpl {
public:
    explicit DenseOperator(DenseNetwork net) : net_(std::move(net)) { net_.check(); }
    std::size_t input_dim() const override { return net_.input_dim(); }
    std::size_t output_rows() const override { return 1; }
    std::size_t output_dim() const override { return net_.output_dim(); }
    std::string kind() const override { return "dense"; }
    Var apply(Tape& tape, const Var& x) const override { return net_.record(tape, x); }

private:
    DenseNetwork net_;
};

}  // namespace detail

inline DifferentiableOperator dense_operator(DenseNetwork net) {
    return DifferentiableOperator(std::make_shared<detail::DenseOperator>(std::move(net)));
}

}  // namespace dassim
