#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cslstm/errors.hpp"

namespace cslstm::ad {

using Shape = std::vector<std::int64_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major tensor. grad is empty until a backward pass deposits into
// it; zero_grad() clears between optimizer steps.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.data.assign(numel(shape), 0.0);
        t.shape = std::move(shape);
        t.requires_grad = requires_grad;
        return t;
    }

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (numel(shape) != data.size()) {
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::move(data);
        t.requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from({}, {v}, requires_grad);
    }

    std::size_t size() const { return data.size(); }

    void zero_grad() { grad.assign(data.size(), 0.0); }
};

class Tape;

// Handle to a node on a tape; cheap to copy.
struct Var {
    Tape* tape = nullptr;
    int idx = -1;
};

enum class Op : std::uint8_t {
    leaf,
    constant,
    matmul,
    add,
    sub,
    mul,
    concat,
    slice,
    sigmoid,
    tanh,
    exp,
    log,
    square,
    sum,
    mean,
    clamp_min,
};

// Records every executed op; nodes are appended in execution order so the
// reverse sweep is a plain backwards loop.
class Tape {
public:
    Var leaf(Tensor& t) {
        Node node;
        node.op = Op::leaf;
        node.shape = t.shape;
        node.val = t.data.data();
        node.n = t.data.size();
        node.bound = &t;
        node.needs_grad = t.requires_grad;
        return push(std::move(node));
    }

    Var constant(Shape shape, std::vector<double> data) {
        if (numel(shape) != data.size()) {
            throw std::invalid_argument("constant data length does not match shape " +
                                        shape_str(shape));
        }
        Node node;
        node.op = Op::constant;
        node.shape = std::move(shape);
        node.owned = std::move(data);
        node.val = node.owned.data();
        node.n = node.owned.size();
        return push(std::move(node));
    }

    Var constant_scalar(double v) { return constant({}, {v}); }

    Var constant_vector(std::span<const double> v) {
        return constant({static_cast<std::int64_t>(v.size())},
                        std::vector<double>(v.begin(), v.end()));
    }

    const Shape& shape(Var v) const { return at(v).shape; }

    std::span<const double> value(Var v) const {
        const Node& node = at(v);
        return {node.val, node.n};
    }

    std::span<const double> grad(Var v) const {
        const Node& node = at(v);
        if (node.grad.size() != node.n) {
            throw std::logic_error("grad requested before backward populated this node");
        }
        return {node.grad.data(), node.grad.size()};
    }

    // Populates gradients of every requires_grad leaf reachable from `loss`
    // and accumulates them into the bound tensors' grad arrays.
    void backward(Var loss) {
        if (loss.tape != this) throw std::invalid_argument("backward: var from another tape");
        if (backward_done_) {
            throw std::logic_error("backward already ran on this tape; record a fresh tape");
        }
        Node& top = nodes_[static_cast<std::size_t>(loss.idx)];
        if (top.n != 1) {
            throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                        shape_str(top.shape));
        }
        backward_done_ = true;
        for (auto& node : nodes_) {
            if (node.needs_grad) node.grad.assign(node.n, 0.0);
        }
        if (top.needs_grad) {
            top.grad[0] = 1.0;
            for (int i = loss.idx; i >= 0; --i) backprop_node(static_cast<std::size_t>(i));
        }
        for (auto& node : nodes_) {
            if (node.bound && node.bound->requires_grad) {
                auto& g = node.bound->grad;
                if (g.size() != node.n) g.assign(node.n, 0.0);
                for (std::size_t k = 0; k < node.n; ++k) g[k] += node.grad[k];
            }
        }
    }

    bool backward_done() const { return backward_done_; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    friend Var matmul(Var, Var);
    friend Var add(Var, Var);
    friend Var sub(Var, Var);
    friend Var mul(Var, Var);
    friend Var concat(Var, Var, int);
    friend Var slice(Var, std::int64_t, std::int64_t, int);
    friend Var unary_op(Op, Var);
    friend Var reduce_op(Op, Var);
    friend Var clamp_min(Var, double);

    struct Node {
        Op op = Op::constant;
        int a = -1, b = -1;
        std::int64_t i0 = 0, i1 = 0;  // axis / start (op-specific)
        double x0 = 0.0;              // clamp floor
        Shape shape;
        std::vector<double> owned;
        const double* val = nullptr;
        std::size_t n = 0;
        std::vector<double> grad;
        Tensor* bound = nullptr;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    Var push(Node node) {
        nodes_.push_back(std::move(node));
        return Var{this, static_cast<int>(nodes_.size() - 1)};
    }

    const Node& at(Var v) const {
        if (v.tape != this || v.idx < 0 ||
            static_cast<std::size_t>(v.idx) >= nodes_.size()) {
            throw std::invalid_argument("var does not belong to this tape");
        }
        return nodes_[static_cast<std::size_t>(v.idx)];
    }

    Var new_op(Op op, int a, int b, Shape shape) {
        Node node;
        node.op = op;
        node.a = a;
        node.b = b;
        node.owned.assign(numel(shape), 0.0);
        node.shape = std::move(shape);
        node.val = node.owned.data();
        node.n = node.owned.size();
        node.needs_grad = (a >= 0 && nodes_[static_cast<std::size_t>(a)].needs_grad) ||
                          (b >= 0 && nodes_[static_cast<std::size_t>(b)].needs_grad);
        return push(std::move(node));
    }

    void add_grad(int idx, std::size_t k, double v) {
        Node& node = nodes_[static_cast<std::size_t>(idx)];
        if (node.needs_grad) node.grad[k] += v;
    }

    void backprop_node(std::size_t i);
};

namespace tape_detail {

inline void require_same_tape(Var a, Var b) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw std::invalid_argument("operands must come from the same tape");
    }
}

}  // namespace tape_detail

// ---- forward ops ----------------------------------------------------------

inline Var matmul(Var a, Var b) {
    tape_detail::require_same_tape(a, b);
    Tape& tp = *a.tape;
    const auto& sa = tp.shape(a);
    const auto& sb = tp.shape(b);
    if (sa.size() != 2 || (sb.size() != 2 && sb.size() != 1)) {
        throw std::invalid_argument("matmul expects (matrix, matrix) or (matrix, vector), got " +
                                    shape_str(sa) + " and " + shape_str(sb));
    }
    const std::int64_t m = sa[0], k = sa[1];
    const std::int64_t inner = sb[0];
    if (inner != k) {
        throw std::invalid_argument("matmul inner dimensions differ: " + shape_str(sa) + " vs " +
                                    shape_str(sb));
    }
    const std::int64_t ncols = sb.size() == 2 ? sb[1] : 1;
    Shape out_shape = sb.size() == 2 ? Shape{m, ncols} : Shape{m};
    Var out = tp.new_op(Op::matmul, a.idx, b.idx, std::move(out_shape));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    const double* A = tp.nodes_[static_cast<std::size_t>(a.idx)].val;
    const double* B = tp.nodes_[static_cast<std::size_t>(b.idx)].val;
    double* C = node.owned.data();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t l = 0; l < ncols; ++l) {
            double acc = 0.0;
            const double* arow = A + i * k;
            if (ncols == 1) {
                for (std::int64_t j = 0; j < k; ++j) acc += arow[j] * B[j];
            } else {
                for (std::int64_t j = 0; j < k; ++j) acc += arow[j] * B[j * ncols + l];
            }
            C[i * ncols + l] = acc;
        }
    }
    return out;
}

namespace tape_detail {

inline Var elementwise(Op op, Var a, Var b) {
    require_same_tape(a, b);
    Tape& tp = *a.tape;
    const auto& sa = tp.shape(a);
    const auto& sb = tp.shape(b);
    const bool a_scalar = numel(sa) == 1 && sa.size() <= 1;
    const bool b_scalar = numel(sb) == 1 && sb.size() <= 1;
    if (sa != sb) {
        // scalar * tensor is the only permitted broadcast, and only for mul
        if (op != Op::mul || (!a_scalar && !b_scalar)) {
            throw std::invalid_argument("elementwise op shape mismatch: " + shape_str(sa) +
                                        " vs " + shape_str(sb));
        }
    }
    return {};
}

}  // namespace tape_detail

inline Var add(Var a, Var b) {
    tape_detail::elementwise(Op::add, a, b);
    Tape& tp = *a.tape;
    Var out = tp.new_op(Op::add, a.idx, b.idx, tp.shape(a));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    auto va = tp.value(a);
    auto vb = tp.value(b);
    for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = va[i] + vb[i];
    return out;
}

inline Var sub(Var a, Var b) {
    tape_detail::elementwise(Op::sub, a, b);
    Tape& tp = *a.tape;
    Var out = tp.new_op(Op::sub, a.idx, b.idx, tp.shape(a));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    auto va = tp.value(a);
    auto vb = tp.value(b);
    for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = va[i] - vb[i];
    return out;
}

inline Var mul(Var a, Var b) {
    tape_detail::elementwise(Op::mul, a, b);
    Tape& tp = *a.tape;
    auto va = tp.value(a);
    auto vb = tp.value(b);
    Shape out_shape = va.size() >= vb.size() ? tp.shape(a) : tp.shape(b);
    Var out = tp.new_op(Op::mul, a.idx, b.idx, std::move(out_shape));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    if (va.size() == vb.size()) {
        for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = va[i] * vb[i];
    } else if (va.size() == 1) {
        for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = va[0] * vb[i];
    } else {
        for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = va[i] * vb[0];
    }
    return out;
}

inline Var concat(Var a, Var b, int axis = 0) {
    tape_detail::require_same_tape(a, b);
    Tape& tp = *a.tape;
    const auto& sa = tp.shape(a);
    const auto& sb = tp.shape(b);
    if (sa.size() != sb.size() || sa.empty() || sa.size() > 2) {
        throw std::invalid_argument("concat expects two 1-D or two 2-D tensors, got " +
                                    shape_str(sa) + " and " + shape_str(sb));
    }
    if (axis < 0 || axis >= static_cast<int>(sa.size())) {
        throw std::invalid_argument("concat axis " + std::to_string(axis) +
                                    " out of range for " + shape_str(sa));
    }
    for (std::size_t d = 0; d < sa.size(); ++d) {
        if (static_cast<int>(d) != axis && sa[d] != sb[d]) {
            throw std::invalid_argument("concat shapes disagree off-axis: " + shape_str(sa) +
                                        " vs " + shape_str(sb));
        }
    }
    const bool axis0 = axis == 0 || sa.size() == 1;
    const std::int64_t rows = sa[0];
    const std::int64_t ca = sa.size() == 2 ? sa[1] : 0;
    const std::int64_t cb = sb.size() == 2 ? sb[1] : 0;
    Shape out_shape = sa;
    out_shape[static_cast<std::size_t>(axis)] += sb[static_cast<std::size_t>(axis)];
    Var out = tp.new_op(Op::concat, a.idx, b.idx, std::move(out_shape));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    node.i0 = axis;
    auto va = tp.value(a);
    auto vb = tp.value(b);
    if (axis0) {
        std::copy(va.begin(), va.end(), node.owned.begin());
        std::copy(vb.begin(), vb.end(), node.owned.begin() + static_cast<std::ptrdiff_t>(va.size()));
    } else {
        for (std::int64_t r = 0; r < rows; ++r) {
            std::copy(va.begin() + r * ca, va.begin() + (r + 1) * ca,
                      node.owned.begin() + r * (ca + cb));
            std::copy(vb.begin() + r * cb, vb.begin() + (r + 1) * cb,
                      node.owned.begin() + r * (ca + cb) + ca);
        }
    }
    return out;
}

inline Var slice(Var x, std::int64_t start, std::int64_t len, int axis = 0) {
    Tape& tp = *x.tape;
    const auto& sx = tp.shape(x);
    if (sx.empty() || sx.size() > 2) {
        throw std::invalid_argument("slice expects a 1-D or 2-D tensor, got " + shape_str(sx));
    }
    if (axis < 0 || axis >= static_cast<int>(sx.size())) {
        throw std::invalid_argument("slice axis out of range for " + shape_str(sx));
    }
    const std::int64_t extent = sx[static_cast<std::size_t>(axis)];
    if (start < 0 || len < 1 || start + len > extent) {
        throw std::invalid_argument("slice [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") out of range for " +
                                    shape_str(sx));
    }
    const bool axis0 = axis == 0 || sx.size() == 1;
    const std::int64_t rows = sx[0];
    const std::int64_t cols = sx.size() == 2 ? sx[1] : 1;
    Shape out_shape = sx;
    out_shape[static_cast<std::size_t>(axis)] = len;
    Var out = tp.new_op(Op::slice, x.idx, -1, std::move(out_shape));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    node.i0 = axis;
    node.i1 = start;
    auto vx = tp.value(x);
    if (axis0) {
        const std::int64_t rowlen = cols;
        std::copy(vx.begin() + start * rowlen, vx.begin() + (start + len) * rowlen,
                  node.owned.begin());
    } else {
        for (std::int64_t r = 0; r < rows; ++r) {
            std::copy(vx.begin() + r * cols + start, vx.begin() + r * cols + start + len,
                      node.owned.begin() + r * len);
        }
    }
    return out;
}

inline Var unary_op(Op op, Var x) {
    Tape& tp = *x.tape;
    Var out = tp.new_op(op, x.idx, -1, tp.shape(x));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    auto vx = tp.value(x);
    switch (op) {
        case Op::sigmoid:
            for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = 1.0 / (1.0 + std::exp(-vx[i]));
            break;
        case Op::tanh:
            for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = std::tanh(vx[i]);
            break;
        case Op::exp:
            for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = std::exp(vx[i]);
            break;
        case Op::log:
            for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = std::log(vx[i]);
            break;
        case Op::square:
            for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = vx[i] * vx[i];
            break;
        default:
            throw std::logic_error("not a unary op");
    }
    return out;
}

inline Var sigmoid(Var x) { return unary_op(Op::sigmoid, x); }
inline Var tanh(Var x) { return unary_op(Op::tanh, x); }
inline Var exp(Var x) { return unary_op(Op::exp, x); }
inline Var log(Var x) { return unary_op(Op::log, x); }
inline Var square(Var x) { return unary_op(Op::square, x); }

inline Var reduce_op(Op op, Var x) {
    Tape& tp = *x.tape;
    Var out = tp.new_op(op, x.idx, -1, Shape{});
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    auto vx = tp.value(x);
    double acc = 0.0;
    for (double v : vx) acc += v;
    node.owned[0] = op == Op::mean ? acc / static_cast<double>(vx.size()) : acc;
    return out;
}

inline Var sum(Var x) { return reduce_op(Op::sum, x); }
inline Var mean(Var x) { return reduce_op(Op::mean, x); }

inline Var clamp_min(Var x, double floor) {
    Tape& tp = *x.tape;
    Var out = tp.new_op(Op::clamp_min, x.idx, -1, tp.shape(x));
    auto& node = tp.nodes_[static_cast<std::size_t>(out.idx)];
    node.x0 = floor;
    auto vx = tp.value(x);
    for (std::size_t i = 0; i < node.n; ++i) node.owned[i] = vx[i] > floor ? vx[i] : floor;
    return out;
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---- backward rules --------------------------------------------------------

inline void Tape::backprop_node(std::size_t i) {
    Node& node = nodes_[i];
    if (!node.needs_grad) return;
    const double* g = node.grad.data();
    switch (node.op) {
        case Op::leaf:
        case Op::constant:
            break;
        case Op::matmul: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(node.b)];
            const std::int64_t m = na.shape[0], k = na.shape[1];
            const std::int64_t ncols = nb.shape.size() == 2 ? nb.shape[1] : 1;
            if (na.needs_grad) {
                double* ga = nodes_[static_cast<std::size_t>(node.a)].grad.data();
                for (std::int64_t r = 0; r < m; ++r) {
                    for (std::int64_t j = 0; j < k; ++j) {
                        double acc = 0.0;
                        for (std::int64_t l = 0; l < ncols; ++l)
                            acc += g[r * ncols + l] * nb.val[j * ncols + l];
                        ga[r * k + j] += acc;
                    }
                }
            }
            if (nb.needs_grad) {
                double* gb = nodes_[static_cast<std::size_t>(node.b)].grad.data();
                for (std::int64_t r = 0; r < m; ++r) {
                    const double* arow = na.val + r * k;
                    for (std::int64_t l = 0; l < ncols; ++l) {
                        const double gr = g[r * ncols + l];
                        if (gr == 0.0) continue;
                        for (std::int64_t j = 0; j < k; ++j) gb[j * ncols + l] += arow[j] * gr;
                    }
                }
            }
            break;
        }
        case Op::add:
            for (std::size_t k = 0; k < node.n; ++k) {
                add_grad(node.a, k, g[k]);
                add_grad(node.b, k, g[k]);
            }
            break;
        case Op::sub:
            for (std::size_t k = 0; k < node.n; ++k) {
                add_grad(node.a, k, g[k]);
                add_grad(node.b, k, -g[k]);
            }
            break;
        case Op::mul: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(node.b)];
            if (na.n == nb.n) {
                for (std::size_t k = 0; k < node.n; ++k) {
                    add_grad(node.a, k, g[k] * nb.val[k]);
                    add_grad(node.b, k, g[k] * na.val[k]);
                }
            } else if (na.n == 1) {
                for (std::size_t k = 0; k < node.n; ++k) {
                    add_grad(node.a, 0, g[k] * nb.val[k]);
                    add_grad(node.b, k, g[k] * na.val[0]);
                }
            } else {
                for (std::size_t k = 0; k < node.n; ++k) {
                    add_grad(node.a, k, g[k] * nb.val[0]);
                    add_grad(node.b, 0, g[k] * na.val[k]);
                }
            }
            break;
        }
        case Op::concat: {
            const Node& na = nodes_[static_cast<std::size_t>(node.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(node.b)];
            if (node.i0 == 0 || node.shape.size() == 1) {
                for (std::size_t k = 0; k < na.n; ++k) add_grad(node.a, k, g[k]);
                for (std::size_t k = 0; k < nb.n; ++k) add_grad(node.b, k, g[na.n + k]);
            } else {
                const std::int64_t rows = na.shape[0], ca = na.shape[1], cb = nb.shape[1];
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t c = 0; c < ca; ++c)
                        add_grad(node.a, static_cast<std::size_t>(r * ca + c),
                                 g[r * (ca + cb) + c]);
                    for (std::int64_t c = 0; c < cb; ++c)
                        add_grad(node.b, static_cast<std::size_t>(r * cb + c),
                                 g[r * (ca + cb) + ca + c]);
                }
            }
            break;
        }
        case Op::slice: {
            const Node& nx = nodes_[static_cast<std::size_t>(node.a)];
            if (node.i0 == 0 || nx.shape.size() == 1) {
                const std::int64_t rowlen = nx.shape.size() == 2 ? nx.shape[1] : 1;
                const std::size_t off = static_cast<std::size_t>(node.i1 * rowlen);
                for (std::size_t k = 0; k < node.n; ++k) add_grad(node.a, off + k, g[k]);
            } else {
                const std::int64_t rows = nx.shape[0], cols = nx.shape[1];
                const std::int64_t len = node.shape[1];
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t c = 0; c < len; ++c) {
                        add_grad(node.a, static_cast<std::size_t>(r * cols + node.i1 + c),
                                 g[r * len + c]);
                    }
                }
            }
            break;
        }
        case Op::sigmoid:
            for (std::size_t k = 0; k < node.n; ++k) {
                const double y = node.val[k];
                add_grad(node.a, k, g[k] * y * (1.0 - y));
            }
            break;
        case Op::tanh:
            for (std::size_t k = 0; k < node.n; ++k) {
                const double y = node.val[k];
                add_grad(node.a, k, g[k] * (1.0 - y * y));
            }
            break;
        case Op::exp:
            for (std::size_t k = 0; k < node.n; ++k) add_grad(node.a, k, g[k] * node.val[k]);
            break;
        case Op::log: {
            const Node& nx = nodes_[static_cast<std::size_t>(node.a)];
            for (std::size_t k = 0; k < node.n; ++k) add_grad(node.a, k, g[k] / nx.val[k]);
            break;
        }
        case Op::square: {
            const Node& nx = nodes_[static_cast<std::size_t>(node.a)];
            for (std::size_t k = 0; k < node.n; ++k)
                add_grad(node.a, k, g[k] * 2.0 * nx.val[k]);
            break;
        }
        case Op::sum: {
            const Node& nx = nodes_[static_cast<std::size_t>(node.a)];
            for (std::size_t k = 0; k < nx.n; ++k) add_grad(node.a, k, g[0]);
            break;
        }
        case Op::mean: {
            const Node& nx = nodes_[static_cast<std::size_t>(node.a)];
            const double scale = 1.0 / static_cast<double>(nx.n);
            for (std::size_t k = 0; k < nx.n; ++k) add_grad(node.a, k, g[0] * scale);
            break;
        }
        case Op::clamp_min: {
            const Node& nx = nodes_[static_cast<std::size_t>(node.a)];
            for (std::size_t k = 0; k < node.n; ++k) {
                if (nx.val[k] > node.x0) add_grad(node.a, k, g[k]);
            }
            break;
        }
    }
}

}  // namespace cslstm::ad
