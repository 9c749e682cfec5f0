#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dassim/numerics/covariance.hpp"

namespace dassim {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    // Convenience for 1x1 results.
    double scalar() const { return value()(0, 0); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Gradients produced by a backward pass, indexed by node.
class Gradients {
public:
    Gradients() = default;
    Gradients(std::vector<Matrix> grads, std::vector<bool> reached)
        : grads_(std::move(grads)), reached_(std::move(reached)) {}

    const Matrix& of(const Var& v) const { return grads_.at(v.id()); }
    // False when v never influenced the output: its gradient is zero and
    // the graph is disconnected with respect to v.
    bool connected(const Var& v) const { return reached_.at(v.id()); }

private:
    std::vector<Matrix> grads_;
    std::vector<bool> reached_;
};

// Reverse-mode gradient tape over matrix-valued nodes. Node order is
// creation order, which is a topological order, so the backward pass is a
// single reverse sweep that visits each reached node once.
class Tape {
public:
    using Backward = std::function<void(const Matrix& grad_out, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Matrix value) { return push(std::move(value), {}, nullptr); }
    Var constant(Matrix value) { return push(std::move(value), {}, nullptr); }

    Var push(Matrix value, std::vector<std::size_t> parents, Backward backward) {
        nodes_.push_back(Node{std::move(value), std::move(parents), std::move(backward)});
        return Var(this, nodes_.size() - 1);
    }

    const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Adds g into the pending gradient of node id (used by backward rules).
    void accumulate(std::size_t id, const Matrix& g) {
        Matrix& slot = pending_.at(id);
        if (!reached_[id]) {
            slot = g;
            reached_[id] = true;
        } else {
            slot += g;
        }
    }
    void accumulate(std::size_t id, Matrix&& g) {
        Matrix& slot = pending_.at(id);
        if (!reached_[id]) {
            slot = std::move(g);
            reached_[id] = true;
        } else {
            slot += g;
        }
    }

    Gradients backward(const Var& output, const Matrix& seed) {
        const Matrix& out_value = value(output.id());
        if (seed.rows() != out_value.rows() || seed.cols() != out_value.cols())
            throw DimensionMismatch("Tape::backward: seed " + seed.shape_string() + " vs output " +
                                    out_value.shape_string());
        const std::size_t n = output.id() + 1;
        pending_.assign(nodes_.size(), Matrix());
        reached_.assign(nodes_.size(), false);
        accumulate(output.id(), seed);
        for (std::size_t id = n; id-- > 0;) {
            if (!reached_[id]) continue;
            const Node& node = nodes_[id];
            if (node.backward) node.backward(pending_[id], *this);
        }
        for (std::size_t id = 0; id < nodes_.size(); ++id)
            if (!reached_[id]) pending_[id] = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
        Gradients g(std::move(pending_), std::move(reached_));
        pending_.clear();
        reached_.clear();
        return g;
    }

    // Backward from a 1x1 output with unit seed.
    Gradients backward(const Var& scalar_output) { return backward(scalar_output, Matrix(1, 1, 1.0)); }

private:
    struct Node {
        Matrix value;
        std::vector<std::size_t> parents;
        Backward backward;
    };

    std::deque<Node> nodes_;
    std::vector<Matrix> pending_;
    std::vector<bool> reached_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

inline Gradients tape_backward(Tape& tape, const Var& output, const Matrix& seed_cotangent) {
    return tape.backward(output, seed_cotangent);
}

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
    if (&a.tape() != &b.tape()) throw DimensionMismatch("tape: operands recorded on different tapes");
    return a.tape();
}

template <class F, class DF>
Var elementwise(const Var& a, F f, DF df_from_xy) {
    const Matrix& x = a.value();
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = f(x.data()[i]);
    const std::size_t ia = a.id();
    return a.tape().push(std::move(y), {ia}, [ia, df_from_xy](const Matrix& g, Tape& t) {
        const Matrix& xv = t.value(ia);
        Matrix gx(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) gx.data()[i] = g.data()[i] * df_from_xy(xv.data()[i]);
        t.accumulate(ia, std::move(gx));
    });
}

}  // namespace detail

// ---- primitives --------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(a.value() + b.value(), {ia, ib}, [ia, ib](const Matrix& g, Tape& tp) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(a.value() - b.value(), {ia, ib}, [ia, ib](const Matrix& g, Tape& tp) {
        tp.accumulate(ia, g);
        tp.accumulate(ib, g * -1.0);
    });
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const Matrix& x = a.value();
    const Matrix& y = b.value();
    detail::require_dims(x.rows() == y.rows() && x.cols() == y.cols(), "mul: shape mismatch");
    Matrix z(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) z.data()[i] = x.data()[i] * y.data()[i];
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(z), {ia, ib}, [ia, ib](const Matrix& g, Tape& tp) {
        const Matrix& xv = tp.value(ia);
        const Matrix& yv = tp.value(ib);
        Matrix ga(g.rows(), g.cols()), gb(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.data()[i] = g.data()[i] * yv.data()[i];
            gb.data()[i] = g.data()[i] * xv.data()[i];
        }
        tp.accumulate(ia, std::move(ga));
        tp.accumulate(ib, std::move(gb));
    });
}

inline Var scale(const Var& a, double s) {
    const std::size_t ia = a.id();
    return a.tape().push(a.value() * s, {ia}, [ia, s](const Matrix& g, Tape& tp) { tp.accumulate(ia, g * s); });
}

// a (r x k) times b (k x c).
inline Var matmul(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(dassim::matmul(a.value(), b.value()), {ia, ib}, [ia, ib](const Matrix& g, Tape& tp) {
        tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
        tp.accumulate(ib, matmul_tn(tp.value(ia), g));
    });
}

// a (r x k) times b^T, with b (c x k). This is the dense-layer product X W^T.
inline Var matmul_nt(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(dassim::matmul_nt(a.value(), b.value()), {ia, ib}, [ia, ib](const Matrix& g, Tape& tp) {
        tp.accumulate(ia, dassim::matmul(g, tp.value(ib)));
        tp.accumulate(ib, matmul_tn(g, tp.value(ia)));
    });
}

// a (r x c) plus the 1 x c row b broadcast over every row.
inline Var add_row(const Var& a, const Var& b) {
    Tape& t = detail::same_tape(a, b);
    const Matrix& x = a.value();
    const Matrix& r = b.value();
    detail::require_dims(r.rows() == 1 && r.cols() == x.cols(), "add_row: bias " + r.shape_string() +
                                                                    " does not broadcast over " + x.shape_string());
    Matrix y = x;
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += r(0, j);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(y), {ia, ib}, [ia, ib](const Matrix& g, Tape& tp) {
        tp.accumulate(ia, g);
        Matrix gb(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
        tp.accumulate(ib, std::move(gb));
    });
}

inline Var tanh(const Var& a) {
    return detail::elementwise(
        a, [](double x) { return std::tanh(x); },
        [](double x) {
            const double y = std::tanh(x);
            return 1.0 - y * y;
        });
}

inline Var sigmoid(const Var& a) {
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    return detail::elementwise(a, sig, [sig](double x) {
        const double s = sig(x);
        return s * (1.0 - s);
    });
}

inline Var relu(const Var& a) {
    return detail::elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

// Columns [first, first + count).
inline Var slice_cols(const Var& a, std::size_t first, std::size_t count) {
    const Matrix& x = a.value();
    detail::require_dims(first + count <= x.cols(), "slice_cols: out of range");
    Matrix y(x.rows(), count);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) y(i, j) = x(i, first + j);
    const std::size_t ia = a.id();
    const std::size_t total = x.cols();
    return a.tape().push(std::move(y), {ia}, [ia, first, count, total](const Matrix& g, Tape& tp) {
        Matrix gx(g.rows(), total);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < count; ++j) gx(i, first + j) = g(i, j);
        tp.accumulate(ia, std::move(gx));
    });
}

// Rows [first, first + count).
inline Var slice_rows(const Var& a, std::size_t first, std::size_t count) {
    const Matrix& x = a.value();
    Matrix y = row_block(x, first, count);
    const std::size_t ia = a.id();
    const std::size_t total = x.rows();
    return a.tape().push(std::move(y), {ia}, [ia, first, count, total](const Matrix& g, Tape& tp) {
        Matrix gx(total, g.cols());
        for (std::size_t i = 0; i < count; ++i) gx.set_row(first + i, g.row(i));
        tp.accumulate(ia, std::move(gx));
    });
}

inline Var last_row(const Var& a) { return slice_rows(a, a.rows() - 1, 1); }

inline Var concat_cols(const std::vector<Var>& parts) {
    detail::require_dims(!parts.empty(), "concat_cols: no operands");
    Tape& t = parts.front().tape();
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    std::vector<std::size_t> ids, widths;
    for (const auto& p : parts) {
        detail::require_dims(p.rows() == rows && &p.tape() == &t, "concat_cols: row mismatch");
        ids.push_back(p.id());
        widths.push_back(p.cols());
        cols += p.cols();
    }
    Matrix y(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Matrix& x = p.value();
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) y(i, off + j) = x(i, j);
        off += x.cols();
    }
    return t.push(std::move(y), ids, [ids, widths](const Matrix& g, Tape& tp) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            Matrix gk(g.rows(), widths[k]);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < widths[k]; ++j) gk(i, j) = g(i, o + j);
            tp.accumulate(ids[k], std::move(gk));
            o += widths[k];
        }
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    detail::require_dims(!parts.empty(), "concat_rows: no operands");
    Tape& t = parts.front().tape();
    Matrix y;
    std::vector<std::size_t> ids, heights;
    for (const auto& p : parts) {
        detail::require_dims(&p.tape() == &t, "concat_rows: operands on different tapes");
        y = vstack(y, p.value());
        ids.push_back(p.id());
        heights.push_back(p.rows());
    }
    return t.push(std::move(y), ids, [ids, heights](const Matrix& g, Tape& tp) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            tp.accumulate(ids[k], row_block(g, o, heights[k]));
            o += heights[k];
        }
    });
}

// Sum of all entries, as a 1x1 node.
inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::size_t ia = a.id();
    const std::size_t r = a.rows(), c = a.cols();
    return a.tape().push(Matrix(1, 1, s), {ia}, [ia, r, c](const Matrix& g, Tape& tp) {
        tp.accumulate(ia, Matrix(r, c, g(0, 0)));
    });
}

// Mean of squared entries, as a 1x1 node.
inline Var mean_square(const Var& a) {
    const Matrix& x = a.value();
    double s = 0.0;
    for (double v : x.data()) s += v * v;
    const double n = static_cast<double>(x.size());
    const std::size_t ia = a.id();
    return a.tape().push(Matrix(1, 1, s / n), {ia}, [ia, n](const Matrix& g, Tape& tp) {
        Matrix gx = tp.value(ia) * (2.0 * g(0, 0) / n);
        tp.accumulate(ia, std::move(gx));
    });
}

// Sum over rows d_i of d_i C^{-1} d_i^T, as a 1x1 node. This is the
// squared C^{-1}-weighted norm used by the variational costs; the solve
// goes through the Cholesky factor of C.
inline Var weighted_sq_norm(const Var& d, const CovarianceMatrix& c) {
    const Matrix& x = d.value();
    detail::require_dims(x.cols() == c.dim(), "weighted_sq_norm: vector length " + std::to_string(x.cols()) +
                                                  " vs covariance dim " + std::to_string(c.dim()));
    Matrix solved = spd_solve(c, x.transpose()).transpose();  // rows: C^{-1} d_i
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i] * solved.data()[i];
    const std::size_t id = d.id();
    return d.tape().push(Matrix(1, 1, s), {id}, [id, solved = std::move(solved)](const Matrix& g, Tape& tp) {
        tp.accumulate(id, solved * (2.0 * g(0, 0)));
    });
}

// Node whose value was computed outside the tape; vjp maps the output
// cotangent to the input cotangent.
inline Var custom(const Var& input, Matrix value, std::function<Matrix(const Matrix& grad_out)> vjp) {
    const std::size_t ia = input.id();
    return input.tape().push(std::move(value), {ia}, [ia, vjp = std::move(vjp)](const Matrix& g, Tape& tp) {
        tp.accumulate(ia, vjp(g));
    });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace dassim
