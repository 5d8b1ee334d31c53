#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "oodseg/diffmath/tensor.hpp"

namespace oodseg::diffmath {

enum class OpKind {
    variable,
    constant,
    add,
    sub,
    mul,
    div,
    neg,
    add_scalar,
    scale,
    matmul,
    transpose,
    concat_cols,
    sigmoid,
    tanh,
    exp,
    log,
    abs,
    square,
    sqrt,
    relu,
    clamp,
    sum,
    mean,
    masked_mean,
    dot,
    softmax_rows,
    add_row,
    mul_col,
    reshape,
    select,
    bce,
};

std::string_view to_string(OpKind kind) noexcept;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its Tape lives.
class Var {
public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    double item() const { return value().item(); }
    /// Adjoint accumulated by the last backward pass (zeros if unreached).
    Tensor grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode differentiation record.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children and backward() is a single reverse sweep. A Tape is not
/// thread-safe; use one per thread.
class Tape {
public:
    // Receives the node's own adjoint and pushes contributions to parents.
    using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives a gradient.
    Var variable(Tensor value);
    /// Leaf excluded from differentiation.
    Var constant(Tensor value);

    /// Resets all adjoints, seeds d(loss)/d(loss) = 1 and sweeps backwards.
    /// Throws ShapeError when `loss` is not a single-element node.
    void backward(const Var& loss);
    void zero_grad();

    std::size_t size() const noexcept { return nodes_.size(); }
    OpKind kind(const Var& v) const { return nodes_.at(v.id()).kind; }
    std::span<const std::size_t> parents(const Var& v) const { return nodes_.at(v.id()).parents; }

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    Tensor grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    // Used by operation implementations.
    Var record(OpKind kind, std::vector<std::size_t> parents, Tensor value, BackwardFn backward);
    void accumulate(std::size_t id, std::span<const double> delta);
    void accumulate_at(std::size_t id, std::size_t index, double delta);

private:
    struct Node {
        OpKind kind;
        std::vector<std::size_t> parents;
        Tensor value;
        std::vector<double> adjoint;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
};

// Elementwise binary ops. Shapes must match, or one operand must hold a
// single element, which is then broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& a);
Var add_scalar(const Var& a, double c);
Var scale(const Var& a, double c);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// [n x a] ++ [n x b] -> [n x (a+b)]
Var concat_cols(const Var& a, const Var& b);
Var reshape(const Var& a, Shape shape);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
/// Domain x > 0.
Var log(const Var& a);
/// Subgradient 0 at x = 0.
Var abs(const Var& a);
Var square(const Var& a);
/// Domain x > 0.
Var sqrt(const Var& a);
Var relu(const Var& a);
/// Gradient passes only strictly inside (lo, hi).
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over entries where `mask` is nonzero; `mask` must match a's shape
/// and select at least one entry.
Var masked_mean(const Var& a, const Tensor& mask);
Var dot(const Var& a, const Var& b);

Var softmax_rows(const Var& a);
/// [n x c] + [1 x c] (bias added to every row)
Var add_row(const Var& a, const Var& row);
/// [n x c] * [n x 1] (each row scaled by its gate)
Var mul_col(const Var& a, const Var& col);

/// Picks a where `mask` is nonzero, else b. Shapes of a, b and mask match.
Var select(const Tensor& mask, const Var& a, const Var& b);
/// Elementwise binary cross-entropy -[y ln p + (1-y) ln(1-p)] with p clamped
/// to [eps, 1 - eps]; the gradient is zero where the clamp is active.
Var bce(const Var& p, const Tensor& target, double eps);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }
inline Var operator+(double c, const Var& a) { return add_scalar(a, c); }
inline Var operator-(const Var& a, double c) { return add_scalar(a, -c); }
inline Var operator-(double c, const Var& a) { return add_scalar(neg(a), c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

/// Numerically stable logistic function on plain doubles.
double sigmoid(double x) noexcept;

}  // namespace oodseg::diffmath
