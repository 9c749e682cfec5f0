#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dassim/numerics/adam.hpp"
#include "dassim/numerics/rng.hpp"
#include "dassim/numerics/tape.hpp"

namespace dassim {

enum class ValidationSplit { random, trailing };

struct TrainingConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double validation_fraction = 0.0;
    // random for autoencoders and MLPs, trailing for sequence models.
    ValidationSplit split = ValidationSplit::random;

    void validate() const {
        if (epochs < 1) throw TypeMismatch("TrainingConfig: epochs must be at least 1");
        if (batch_size < 1) throw TypeMismatch("TrainingConfig: batch_size must be at least 1");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw TypeMismatch("TrainingConfig: validation_fraction must lie in [0, 1)");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw TypeMismatch("TrainingConfig: learning_rate must be finite and non-negative");
    }

    // floor(fraction * n), guarded against representation error so that
    // 1% of 8000 is exactly 80.
    std::size_t validation_count(std::size_t n) const {
        return static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(n) + 1e-9));
    }
};

// A network the training loop can drive.
template <class M>
concept Trainable = requires(M m, const M cm, Tape& t, std::span<const Var> p, const Var& x) {
    { cm.parameters() } -> std::same_as<std::vector<const Matrix*>>;
    { m.mutable_parameters() } -> std::same_as<std::vector<Matrix*>>;
    { cm.record(t, p, x) } -> std::same_as<Var>;
};

template <class M>
struct TrainResult {
    M model;
    double initial_loss = 0.0;
    std::vector<double> loss_history;        // full training-set MSE after each epoch
    std::vector<double> validation_history;  // empty when there is no validation split
    std::size_t train_count = 0;
    std::size_t validation_count = 0;
};

// Thrown when a loss or gradient goes non-finite; carries what was
// recorded before the failure.
class TrainingDiverged : public NanEncountered {
public:
    TrainingDiverged(const std::string& what, std::vector<double> partial)
        : NanEncountered(what), partial_history(std::move(partial)) {}
    std::vector<double> partial_history;
};

namespace detail {

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.set_row(i, m.row(idx[i]));
    return out;
}

template <Trainable M>
double dataset_loss(const M& model, const Matrix& inputs, const Matrix& targets, std::span<const std::size_t> idx) {
    if (idx.empty()) return 0.0;
    constexpr std::size_t chunk = 1024;
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
        const std::size_t n = std::min(chunk, idx.size() - start);
        auto sel = idx.subspan(start, n);
        Tape tape;
        std::vector<Var> params;
        for (const Matrix* p : model.parameters()) params.push_back(tape.constant(*p));
        Var pred = model.record(tape, params, tape.constant(gather_rows(inputs, sel)));
        Var loss = mean_square(pred - tape.constant(gather_rows(targets, sel)));
        total += loss.scalar() * static_cast<double>(n);
    }
    return total / static_cast<double>(idx.size());
}

}  // namespace detail

// Mini-batch Adam on mean squared error. Each row of `inputs` is one
// sample and the matching row of `targets` its expected network output.
template <Trainable M>
TrainResult<M> train(M model, const Matrix& inputs, const Matrix& targets, const TrainingConfig& cfg) {
    cfg.validate();
    detail::require_dims(inputs.rows() == targets.rows() && inputs.rows() > 0,
                         "train: inputs and targets must have the same positive number of rows");
    Rng rng(cfg.seed);
    const std::size_t n = inputs.rows();
    const std::size_t n_val = cfg.validation_count(n);
    detail::require_dims(n_val < n, "train: validation split leaves no training data");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (cfg.split == ValidationSplit::random) {
        for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
    }
    // The last n_val entries of `order` form the validation set; for a
    // trailing split those are the final samples in time.
    std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
    if (cfg.split == ValidationSplit::random) std::sort(train_idx.begin(), train_idx.end());

    TrainResult<M> result{std::move(model), 0.0, {}, {}, train_idx.size(), val_idx.size()};
    M& net = result.model;

    std::vector<AdamState> adam;
    for (const Matrix* p : net.parameters()) adam.push_back(AdamState::for_size(p->size(), cfg.learning_rate));

    result.initial_loss = detail::dataset_loss(net, inputs, targets, train_idx);
    if (!std::isfinite(result.initial_loss)) throw TrainingDiverged("train: initial loss is not finite", {});

    std::vector<std::size_t> shuffled = train_idx;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = shuffled.size(); i-- > 1;) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
        for (std::size_t start = 0; start < shuffled.size(); start += cfg.batch_size) {
            const std::size_t bs = std::min(cfg.batch_size, shuffled.size() - start);
            std::span<const std::size_t> sel(shuffled.data() + start, bs);
            Tape tape;
            std::vector<Var> params;
            for (const Matrix* p : net.parameters()) params.push_back(tape.input(*p));
            Var pred = net.record(tape, params, tape.constant(detail::gather_rows(inputs, sel)));
            Var loss = mean_square(pred - tape.constant(detail::gather_rows(targets, sel)));
            if (!std::isfinite(loss.scalar()))
                throw TrainingDiverged("train: loss became non-finite in epoch " + std::to_string(epoch + 1),
                                       result.loss_history);
            Gradients g = tape.backward(loss);
            auto mutable_params = net.mutable_parameters();
            try {
                for (std::size_t k = 0; k < params.size(); ++k)
                    detail::adam_update_inplace(mutable_params[k]->data(), g.of(params[k]).data(), adam[k]);
            } catch (const NanEncountered&) {
                throw TrainingDiverged("train: non-finite gradient in epoch " + std::to_string(epoch + 1),
                                       result.loss_history);
            }
        }
        const double epoch_loss = detail::dataset_loss(net, inputs, targets, train_idx);
        if (!std::isfinite(epoch_loss))
            throw TrainingDiverged("train: loss became non-finite after epoch " + std::to_string(epoch + 1),
                                   result.loss_history);
        result.loss_history.push_back(epoch_loss);
        if (!val_idx.empty()) result.validation_history.push_back(detail::dataset_loss(net, inputs, targets, val_idx));
    }
    return result;
}

}  // namespace dassim
