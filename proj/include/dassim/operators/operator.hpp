#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dassim/numerics/tape.hpp"

namespace dassim {

// Behaviour behind a DifferentiableOperator.
// 
// Observation-type operators have output_rows() == 1 and map a batch of
// states (B x input_dim) row by row to B x output_dim. Forward models map a
// single 1 x input_dim state to an output_rows() x output_dim sequence whose
// row j approximates the state j steps later (row 0 is the starting
// instant, the last row the next observation instant).
class OperatorImpl {
public:
    virtual ~OperatorImpl() = default;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_rows() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual Var apply(Tape& tape, const Var& x) const = 0;
    virtual std::string kind() const = 0;

    // Returns an operator with extra scalar arguments bound (the opaque
    // `args` tuple of a case). Operators that take no arguments reject a
    // non-empty list.
    virtual std::shared_ptr<const OperatorImpl> bind_args(std::span<const double> args) const;
};

// Immutable, cheaply copyable handle to a differentiable map. Evaluation is
// deterministic and safe from several threads at once.
class DifferentiableOperator {
public:
    DifferentiableOperator() = default;
    explicit DifferentiableOperator(std::shared_ptr<const OperatorImpl> impl) : impl_(std::move(impl)) {}

    bool valid() const noexcept { return impl_ != nullptr; }
    std::size_t input_dim() const { return impl().input_dim(); }
    std::size_t output_rows() const { return impl().output_rows(); }
    std::size_t output_dim() const { return impl().output_dim(); }
    bool is_sequence_model() const { return output_rows() > 1; }
    std::string kind() const { return impl().kind(); }

    // Records the operator on a tape.
    Var apply(Tape& tape, const Var& x) const {
        detail::require_dims(x.cols() == input_dim(), kind() + ": input has " + std::to_string(x.cols()) +
                                                          " columns, expected " + std::to_string(input_dim()));
        if (output_rows() > 1)
            detail::require_dims(x.rows() == 1, kind() + ": sequence models take a single state");
        return impl().apply(tape, x);
    }

    Matrix evaluate(const Matrix& x) const {
        Tape tape;
        return apply(tape, tape.input(x)).value();
    }
    Matrix evaluate(std::span<const double> x) const { return evaluate(Matrix::row_vector(x)); }

    // y_bar^T J(x): the input cotangent for output cotangent y_bar.
    Matrix vjp(const Matrix& x, const Matrix& y_bar) const {
        Tape tape;
        Var in = tape.input(x);
        Var out = apply(tape, in);
        return tape.backward(out, y_bar).of(in);
    }
    Matrix vjp(std::span<const double> x, const Matrix& y_bar) const { return vjp(Matrix::row_vector(x), y_bar); }

    DifferentiableOperator bind_args(std::span<const double> args) const {
        if (args.empty()) return *this;
        return DifferentiableOperator(impl().bind_args(args));
    }

    // Identity, not behaviour: two handles are equal when they share one
    // implementation.
    friend bool operator==(const DifferentiableOperator& a, const DifferentiableOperator& b) {
        return a.impl_ == b.impl_;
    }

    const OperatorImpl& impl() const {
        if (!impl_) throw DimensionMismatch("DifferentiableOperator: empty operator");
        return *impl_;
    }

private:
    std::shared_ptr<const OperatorImpl> impl_;
};

inline std::shared_ptr<const OperatorImpl> OperatorImpl::bind_args(std::span<const double> args) const {
    throw TypeMismatch(kind() + " takes no extra arguments but " + std::to_string(args.size()) + " were given");
}

namespace detail {

class LinearOperator final : public OperatorImpl {
public:
    explicit LinearOperator(Matrix h) : h_(std::move(h)) {
        if (!h_.all_finite()) throw DimensionMismatch("linear_operator: non-finite entries");
    }
    std::size_t input_dim() const override { return h_.cols(); }
    std::size_t output_rows() const override { return 1; }
    std::size_t output_dim() const override { return h_.rows(); }
    std::string kind() const override { return "linear"; }
    Var apply(Tape& tape, const Var& x) const override { return matmul_nt(x, tape.constant(h_)); }

private:
    Matrix h_;
};

class CallableOperator final : public OperatorImpl {
public:
    using Eval = std::function<Matrix(const Matrix& x)>;
    using Vjp = std::function<Matrix(const Matrix& x, const Matrix& y_bar)>;

    CallableOperator(std::size_t in, std::size_t rows, std::size_t out, Eval eval, Vjp vjp, std::string name)
        : in_(in), rows_(rows), out_(out), eval_(std::move(eval)), vjp_(std::move(vjp)), name_(std::move(name)) {}
    std::size_t input_dim() const override { return in_; }
    std::size_t output_rows() const override { return rows_; }
    std::size_t output_dim() const override { return out_; }
    std::string kind() const override { return name_; }
    Var apply(Tape&, const Var& x) const override {
        Matrix xv = x.value();
        Matrix y = eval_(xv);
        const std::size_t expect_rows = rows_ == 1 ? xv.rows() : rows_;
        if (y.rows() != expect_rows || y.cols() != out_)
            throw DimensionMismatch(name_ + ": callable returned " + y.shape_string());
        return custom(x, std::move(y), [vjp = vjp_, xv = std::move(xv)](const Matrix& g) { return vjp(xv, g); });
    }

private:
    std::size_t in_, rows_, out_;
    Eval eval_;
    Vjp vjp_;
    std::string name_;
};

class PersistenceModel final : public OperatorImpl {
public:
    PersistenceModel(std::size_t dim, std::size_t rows) : dim_(dim), rows_(rows) {
        require_dims(rows >= 1, "persistence_model: at least one output row");
    }
    std::size_t input_dim() const override { return dim_; }
    std::size_t output_rows() const override { return rows_; }
    std::size_t output_dim() const override { return dim_; }
    std::string kind() const override { return "persistence"; }
    Var apply(Tape&, const Var& x) const override {
        if (rows_ == 1) return x;
        return concat_rows(std::vector<Var>(rows_, x));
    }

private:
    std::size_t dim_, rows_;
};

class ComposedOperator final : public OperatorImpl {
public:
    explicit ComposedOperator(std::vector<DifferentiableOperator> parts) : parts_(std::move(parts)) {
        require_dims(!parts_.empty(), "compose: empty operator list");
        for (std::size_t i = 0; i + 1 < parts_.size(); ++i) {
            require_dims(parts_[i].output_rows() == 1,
                         "compose: only the last operator may produce a sequence (part " + std::to_string(i) + ")");
            require_dims(parts_[i].output_dim() == parts_[i + 1].input_dim(),
                         "compose: part " + std::to_string(i) + " outputs " + std::to_string(parts_[i].output_dim()) +
                             " values but part " + std::to_string(i + 1) + " expects " +
                             std::to_string(parts_[i + 1].input_dim()));
        }
    }
    std::size_t input_dim() const override { return parts_.front().input_dim(); }
    std::size_t output_rows() const override { return parts_.back().output_rows(); }
    std::size_t output_dim() const override { return parts_.back().output_dim(); }
    std::string kind() const override {
        std::string k = "compose(";
        for (std::size_t i = 0; i < parts_.size(); ++i) k += (i ? "," : "") + parts_[i].kind();
        return k + ")";
    }
    Var apply(Tape& tape, const Var& x) const override {
        Var v = x;
        for (const auto& p : parts_) v = p.apply(tape, v);
        return v;
    }
    const std::vector<DifferentiableOperator>& parts() const { return parts_; }

private:
    std::vector<DifferentiableOperator> parts_;
};

}  // namespace detail

// x -> h x (row-wise: X h^T for a batch).
inline DifferentiableOperator linear_operator(Matrix h) {
    return DifferentiableOperator(std::make_shared<detail::LinearOperator>(std::move(h)));
}

inline DifferentiableOperator identity_operator(std::size_t n) { return linear_operator(Matrix::identity(n)); }

// Wraps user code. For rows == 1 the callable receives a batch and must
// return one output row per input row; otherwise it receives one state and
// returns a rows x out sequence.
inline DifferentiableOperator callable_operator(std::size_t input_dim, std::size_t output_rows, std::size_t output_dim,
                                                detail::CallableOperator::Eval eval,
                                                detail::CallableOperator::Vjp vjp, std::string name = "callable") {
    return DifferentiableOperator(std::make_shared<detail::CallableOperator>(
        input_dim, output_rows, output_dim, std::move(eval), std::move(vjp), std::move(name)));
}

// Forward model that holds the state constant for `rows` instants.
inline DifferentiableOperator persistence_model(std::size_t dim, std::size_t rows) {
    return DifferentiableOperator(std::make_shared<detail::PersistenceModel>(dim, rows));
}

// Pipeline composition: parts.front() is applied first, so the latent
// observation operator is compose({D_u, H, E_h}). Dimension
// chaining is checked here, not at first use.
inline DifferentiableOperator compose(std::vector<DifferentiableOperator> parts) {
    if (parts.size() == 1) return parts.front();
    return DifferentiableOperator(std::make_shared<detail::ComposedOperator>(std::move(parts)));
}

}  // namespace dassim
