#include "oodseg/diffmath/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oodseg/errors.hpp"

namespace oodseg::diffmath {

std::string_view to_string(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::variable: return "variable";
        case OpKind::constant: return "constant";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::neg: return "neg";
        case OpKind::add_scalar: return "add_scalar";
        case OpKind::scale: return "scale";
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::concat_cols: return "concat_cols";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::tanh: return "tanh";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::abs: return "abs";
        case OpKind::square: return "square";
        case OpKind::sqrt: return "sqrt";
        case OpKind::relu: return "relu";
        case OpKind::clamp: return "clamp";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::masked_mean: return "masked_mean";
        case OpKind::dot: return "dot";
        case OpKind::softmax_rows: return "softmax_rows";
        case OpKind::add_row: return "add_row";
        case OpKind::mul_col: return "mul_col";
        case OpKind::reshape: return "reshape";
        case OpKind::select: return "select";
        case OpKind::bce: return "bce";
    }
    return "unknown";
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const { return tape_->grad(id_); }

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{OpKind::variable, {}, std::move(value), {}, nullptr, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{OpKind::constant, {}, std::move(value), {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<std::size_t> parents, Tensor value, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_.at(p).requires_grad;
    nodes_.push_back(Node{kind, std::move(parents), std::move(value), {}, needs ? std::move(backward) : nullptr, needs});
    return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.adjoint.empty()) return Tensor::zeros(n.value.shape());
    return Tensor(n.value.shape(), n.adjoint);
}

void Tape::accumulate(std::size_t id, std::span<const double> delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.adjoint.empty()) n.adjoint.assign(n.value.size(), 0.0);
    for (std::size_t i = 0; i < delta.size(); ++i) n.adjoint[i] += delta[i];
}

void Tape::accumulate_at(std::size_t id, std::size_t index, double delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.adjoint.empty()) n.adjoint.assign(n.value.size(), 0.0);
    n.adjoint[index] += delta;
}

void Tape::zero_grad() {
    for (Node& n : nodes_) n.adjoint.clear();
}

void Tape::backward(const Var& loss) {
    if (loss.tape_ != this) throw ValidationError("backward: loss belongs to a different tape");
    const Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_to_string(root.value.shape()));
    }
    zero_grad();
    if (!root.requires_grad) return;
    nodes_[loss.id()].adjoint.assign(1, 1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.adjoint.empty()) continue;
        // The adjoint is copied because the callback may touch other nodes.
        const std::vector<double> adj = n.adjoint;
        n.backward(*this, adj);
    }
}

namespace {

Tape& common_tape(const Var& a, const Var& b, const char* op) {
    if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
        throw ValidationError(std::string(op) + ": operands live on different tapes");
    }
    return a.tape();
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
}

enum class Bcast { none, left_scalar, right_scalar };

Bcast broadcast_mode(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Bcast::none;
    if (b.size() == 1) return Bcast::right_scalar;
    if (a.size() == 1) return Bcast::left_scalar;
    shape_mismatch(op, a.shape(), b.shape());
}

template <typename F>
Tensor map_values(const Tensor& a, F f) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return Tensor(a.shape(), std::move(out));
}

// Elementwise binary op with scalar broadcasting. `da`/`db` return the
// local partial derivatives at (x, y).
template <typename F, typename DA, typename DB>
Var binary(OpKind kind, const char* name, const Var& a, const Var& b, F f, DA da, DB db) {
    Tape& tape = common_tape(a, b, name);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Bcast mode = broadcast_mode(name, av, bv);
    const Shape out_shape = mode == Bcast::left_scalar ? bv.shape() : av.shape();
    const std::size_t n = shape_size(out_shape);
    auto ai = [mode](std::size_t i) { return mode == Bcast::left_scalar ? 0 : i; };
    auto bi = [mode](std::size_t i) { return mode == Bcast::right_scalar ? 0 : i; };

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[ai(i)], bv[bi(i)]);

    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return tape.record(kind, {ia, ib}, Tensor(out_shape, std::move(out)),
                       [ia, ib, n, ai, bi, da, db](Tape& t, std::span<const double> g) {
                           const Tensor& x = t.value(ia);
                           const Tensor& y = t.value(ib);
                           const bool need_a = t.requires_grad(ia);
                           const bool need_b = t.requires_grad(ib);
                           for (std::size_t i = 0; i < n; ++i) {
                               const double xv = x[ai(i)];
                               const double yv = y[bi(i)];
                               if (need_a) t.accumulate_at(ia, ai(i), g[i] * da(xv, yv));
                               if (need_b) t.accumulate_at(ib, bi(i), g[i] * db(xv, yv));
                           }
                       });
}

// Elementwise unary op; `d(x, y)` is the local derivative given input x and
// output y.
template <typename F, typename D>
Var unary(OpKind kind, const Var& a, F f, D d) {
    Tape& tape = a.tape();
    Tensor out = map_values(a.value(), f);
    const std::size_t ia = a.id();
    const std::size_t io = tape.size();
    return tape.record(kind, {ia}, std::move(out), [ia, io, d](Tape& t, std::span<const double> g) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(io);
        std::vector<double> delta(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) delta[i] = g[i] * d(x[i], y[i]);
        t.accumulate(ia, delta);
    });
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
    return binary(OpKind::add, "add", a, b, [](double x, double y) { return x + y; },
                  [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return binary(OpKind::sub, "sub", a, b, [](double x, double y) { return x - y; },
                  [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary(OpKind::mul, "mul", a, b, [](double x, double y) { return x * y; },
                  [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
    for (double y : b.value().data()) {
        if (y == 0.0) throw NumericError("div: division by zero");
    }
    return binary(OpKind::div, "div", a, b, [](double x, double y) { return x / y; },
                  [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var neg(const Var& a) {
    return unary(OpKind::neg, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var add_scalar(const Var& a, double c) {
    return unary(OpKind::add_scalar, a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var scale(const Var& a, double c) {
    return unary(OpKind::scale, a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var matmul(const Var& a, const Var& b) {
    Tape& tape = common_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2("matmul", av);
    require_rank2("matmul", bv);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) shape_mismatch("matmul", av.shape(), bv.shape());

    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(OpKind::matmul, {ia, ib}, Tensor({m, n}, std::move(out)),
                       [ia, ib, m, k, n](Tape& t, std::span<const double> g) {
                           const Tensor& x = t.value(ia);
                           const Tensor& y = t.value(ib);
                           if (t.requires_grad(ia)) {
                               std::vector<double> ga(m * k, 0.0);
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t p = 0; p < k; ++p) {
                                       double s = 0.0;
                                       for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
                                       ga[i * k + p] = s;
                                   }
                               t.accumulate(ia, ga);
                           }
                           if (t.requires_grad(ib)) {
                               std::vector<double> gb(k * n, 0.0);
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t p = 0; p < k; ++p) {
                                       const double xip = x[i * k + p];
                                       if (xip == 0.0) continue;
                                       for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xip * g[i * n + j];
                                   }
                               t.accumulate(ib, gb);
                           }
                       });
}

Var transpose(const Var& a) {
    const Tensor& av = a.value();
    require_rank2("transpose", av);
    const std::size_t r = av.rows(), c = av.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    const std::size_t ia = a.id();
    return a.tape().record(OpKind::transpose, {ia}, Tensor({c, r}, std::move(out)),
                           [ia, r, c](Tape& t, std::span<const double> g) {
                               std::vector<double> ga(r * c);
                               for (std::size_t i = 0; i < r; ++i)
                                   for (std::size_t j = 0; j < c; ++j) ga[i * c + j] = g[j * r + i];
                               t.accumulate(ia, ga);
                           });
}

Var concat_cols(const Var& a, const Var& b) {
    Tape& tape = common_tape(a, b, "concat_cols");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2("concat_cols", av);
    require_rank2("concat_cols", bv);
    if (av.rows() != bv.rows()) shape_mismatch("concat_cols", av.shape(), bv.shape());
    const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols(), c = ca + cb;
    std::vector<double> out(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out[i * c + j] = av[i * ca + j];
        for (std::size_t j = 0; j < cb; ++j) out[i * c + ca + j] = bv[i * cb + j];
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(OpKind::concat_cols, {ia, ib}, Tensor({n, c}, std::move(out)),
                       [ia, ib, n, ca, cb, c](Tape& t, std::span<const double> g) {
                           std::vector<double> ga(n * ca), gb(n * cb);
                           for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] = g[i * c + j];
                               for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] = g[i * c + ca + j];
                           }
                           t.accumulate(ia, ga);
                           t.accumulate(ib, gb);
                       });
}

Var reshape(const Var& a, Shape shape) {
    const Tensor& av = a.value();
    if (shape_size(shape) != av.size()) shape_mismatch("reshape", av.shape(), shape);
    const std::size_t ia = a.id();
    std::vector<double> data(av.data().begin(), av.data().end());
    return a.tape().record(OpKind::reshape, {ia}, Tensor(std::move(shape), std::move(data)),
                           [ia](Tape& t, std::span<const double> g) { t.accumulate(ia, g); });
}

Var sigmoid(const Var& a) {
    return unary(OpKind::sigmoid, a, [](double x) { return sigmoid(x); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
    return unary(OpKind::tanh, a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var exp(const Var& a) {
    return unary(OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
    for (double x : a.value().data()) {
        if (!(x > 0.0)) throw NumericError("log: argument must be positive, got " + std::to_string(x));
    }
    return unary(OpKind::log, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(const Var& a) {
    return unary(OpKind::abs, a, [](double x) { return std::abs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
    return unary(OpKind::square, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
    for (double x : a.value().data()) {
        if (!(x > 0.0)) throw NumericError("sqrt: argument must be positive, got " + std::to_string(x));
    }
    return unary(OpKind::sqrt, a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Var relu(const Var& a) {
    return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp(const Var& a, double lo, double hi) {
    if (!(lo <= hi)) throw ValidationError("clamp: lo must not exceed hi");
    return unary(OpKind::clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double x : av.data()) s += x;
    const std::size_t ia = a.id(), n = av.size();
    return a.tape().record(OpKind::sum, {ia}, Tensor::scalar(s), [ia, n](Tape& t, std::span<const double> g) {
        t.accumulate(ia, std::vector<double>(n, g[0]));
    });
}

Var mean(const Var& a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double x : av.data()) s += x;
    const std::size_t ia = a.id(), n = av.size();
    const double inv = 1.0 / static_cast<double>(n);
    return a.tape().record(OpKind::mean, {ia}, Tensor::scalar(s * inv),
                           [ia, n, inv](Tape& t, std::span<const double> g) {
                               t.accumulate(ia, std::vector<double>(n, g[0] * inv));
                           });
}

Var masked_mean(const Var& a, const Tensor& mask) {
    const Tensor& av = a.value();
    if (av.shape() != mask.shape()) shape_mismatch("masked_mean", av.shape(), mask.shape());
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (mask[i] != 0.0) {
            s += av[i];
            ++count;
        }
    }
    if (count == 0) throw NumericError("masked_mean: mask selects no entries");
    const double inv = 1.0 / static_cast<double>(count);
    const std::size_t ia = a.id();
    std::vector<double> weights(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) weights[i] = mask[i] != 0.0 ? inv : 0.0;
    return a.tape().record(OpKind::masked_mean, {ia}, Tensor::scalar(s * inv),
                           [ia, weights = std::move(weights)](Tape& t, std::span<const double> g) {
                               std::vector<double> delta(weights.size());
                               for (std::size_t i = 0; i < weights.size(); ++i) delta[i] = g[0] * weights[i];
                               t.accumulate(ia, delta);
                           });
}

Var dot(const Var& a, const Var& b) {
    Tape& tape = common_tape(a, b, "dot");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.size() != bv.size()) shape_mismatch("dot", av.shape(), bv.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(OpKind::dot, {ia, ib}, Tensor::scalar(s), [ia, ib](Tape& t, std::span<const double> g) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        std::vector<double> ga(x.size()), gb(y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            ga[i] = g[0] * y[i];
            gb[i] = g[0] * x[i];
        }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

Var softmax_rows(const Var& a) {
    const Tensor& av = a.value();
    require_rank2("softmax_rows", av);
    const std::size_t r = av.rows(), c = av.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, av[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(av[i * c + j] - mx);
            z += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    const std::size_t ia = a.id();
    const std::size_t io = a.tape().size();
    return a.tape().record(OpKind::softmax_rows, {ia}, Tensor({r, c}, std::move(out)),
                           [ia, io, r, c](Tape& t, std::span<const double> g) {
                               const Tensor& y = t.value(io);
                               std::vector<double> ga(r * c);
                               for (std::size_t i = 0; i < r; ++i) {
                                   double gy = 0.0;
                                   for (std::size_t j = 0; j < c; ++j) gy += g[i * c + j] * y[i * c + j];
                                   for (std::size_t j = 0; j < c; ++j)
                                       ga[i * c + j] = y[i * c + j] * (g[i * c + j] - gy);
                               }
                               t.accumulate(ia, ga);
                           });
}

Var add_row(const Var& a, const Var& row) {
    Tape& tape = common_tape(a, row, "add_row");
    const Tensor& av = a.value();
    const Tensor& rv = row.value();
    require_rank2("add_row", av);
    const std::size_t n = av.rows(), c = av.cols();
    if (rv.size() != c) shape_mismatch("add_row", av.shape(), rv.shape());
    std::vector<double> out(n * c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] + rv[j];
    const std::size_t ia = a.id(), ir = row.id();
    return tape.record(OpKind::add_row, {ia, ir}, Tensor({n, c}, std::move(out)),
                       [ia, ir, n, c](Tape& t, std::span<const double> g) {
                           t.accumulate(ia, g);
                           std::vector<double> gr(c, 0.0);
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
                           t.accumulate(ir, gr);
                       });
}

Var mul_col(const Var& a, const Var& col) {
    Tape& tape = common_tape(a, col, "mul_col");
    const Tensor& av = a.value();
    const Tensor& cv = col.value();
    require_rank2("mul_col", av);
    const std::size_t n = av.rows(), c = av.cols();
    if (cv.size() != n) shape_mismatch("mul_col", av.shape(), cv.shape());
    std::vector<double> out(n * c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] * cv[i];
    const std::size_t ia = a.id(), ic = col.id();
    return tape.record(OpKind::mul_col, {ia, ic}, Tensor({n, c}, std::move(out)),
                       [ia, ic, n, c](Tape& t, std::span<const double> g) {
                           const Tensor& x = t.value(ia);
                           const Tensor& gate = t.value(ic);
                           std::vector<double> ga(n * c), gc(n, 0.0);
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < c; ++j) {
                                   ga[i * c + j] = g[i * c + j] * gate[i];
                                   gc[i] += g[i * c + j] * x[i * c + j];
                               }
                           t.accumulate(ia, ga);
                           t.accumulate(ic, gc);
                       });
}

Var select(const Tensor& mask, const Var& a, const Var& b) {
    Tape& tape = common_tape(a, b, "select");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape() != bv.shape()) shape_mismatch("select", av.shape(), bv.shape());
    if (av.shape() != mask.shape()) shape_mismatch("select", av.shape(), mask.shape());
    std::vector<double> out(av.size());
    std::vector<bool> pick(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        pick[i] = mask[i] != 0.0;
        out[i] = pick[i] ? av[i] : bv[i];
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(OpKind::select, {ia, ib}, Tensor(av.shape(), std::move(out)),
                       [ia, ib, pick = std::move(pick)](Tape& t, std::span<const double> g) {
                           std::vector<double> ga(g.size(), 0.0), gb(g.size(), 0.0);
                           for (std::size_t i = 0; i < g.size(); ++i) (pick[i] ? ga : gb)[i] = g[i];
                           t.accumulate(ia, ga);
                           t.accumulate(ib, gb);
                       });
}

Var bce(const Var& p, const Tensor& target, double eps) {
    const Tensor& pv = p.value();
    if (pv.shape() != target.shape()) shape_mismatch("bce", pv.shape(), target.shape());
    if (!(eps > 0.0 && eps < 0.5)) throw ValidationError("bce: eps must lie in (0, 0.5)");
    std::vector<double> out(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double c = std::clamp(pv[i], eps, 1.0 - eps);
        const double y = target[i];
        out[i] = -(y * std::log(c) + (1.0 - y) * std::log(1.0 - c));
    }
    const std::size_t ip = p.id();
    return p.tape().record(OpKind::bce, {ip}, Tensor(pv.shape(), std::move(out)),
                           [ip, target, eps](Tape& t, std::span<const double> g) {
                               const Tensor& x = t.value(ip);
                               std::vector<double> delta(g.size(), 0.0);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   const double c = x[i];
                                   if (!(c > eps && c < 1.0 - eps)) continue;
                                   delta[i] = g[i] * (c - target[i]) / (c * (1.0 - c));
                               }
                               t.accumulate(ip, delta);
                           });
}

}  // namespace oodseg::diffmath
