#include "tadfkd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace tadfkd {

namespace {

using detail::Node;
using detail::Op;

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(a.shape) +
                            " and " + shape_str(b.shape) + " differ");
    }
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeMismatch(std::string(op) + ": expected rank-2 tensor, got " +
                            shape_str(t.shape));
    }
}

// exp overflows beyond ~709.78; clamp keeps forward values finite on
// finite inputs, same contract as the log/divide guards.
constexpr double kExpMax = 700.0;

Graph* common_graph(const Tensor& a, const Tensor& b) {
    if (a.graph && b.graph && a.graph != b.graph) {
        throw InvalidSpec("op: inputs recorded on two different graphs");
    }
    return a.graph ? a.graph : b.graph;
}

int lift(Graph& g, const Tensor& t) {
    if (t.on_graph()) return t.node;
    return g.leaf(t).node;
}

// Records a node when any input is on a graph; returns the out tensor.
Tensor emit(Graph* g, Node n, std::vector<int> shape, std::vector<double> values,
            const Tensor* x0, const Tensor* x1) {
    Tensor out(std::move(shape), std::move(values));
    if (g != nullptr) {
        n.in0 = x0 ? lift(*g, *x0) : -1;
        n.in1 = x1 ? lift(*g, *x1) : -1;
        n.shape = out.shape;
        n.values = out.values;
        out.graph = g;
        out.node = g->record(std::move(n));
    }
    return out;
}

double safe_div_denom(double r) {
    if (r >= 0.0) return std::max(r, kEps);
    return std::min(r, -kEps);
}

} // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
    for (int d : shape) {
        if (d <= 0) throw ShapeMismatch("Tensor: nonpositive extent in " + shape_str(shape));
    }
    if (shape_product(shape) != values.size()) {
        throw ShapeMismatch("Tensor: " + shape_str(shape) + " does not hold " +
                            std::to_string(values.size()) + " values");
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

int Tensor::rows() const {
    if (rank() != 2) throw ShapeMismatch("rows(): tensor is not rank 2");
    return shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw ShapeMismatch("cols(): tensor is not rank 2");
    return shape[1];
}

double Tensor::at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                  static_cast<std::size_t>(c)];
}

double& Tensor::at(int r, int c) {
    return values[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                  static_cast<std::size_t>(c)];
}

double Tensor::item() const {
    if (values.size() != 1) {
        throw NotScalar("item(): tensor has " + std::to_string(values.size()) + " elements");
    }
    return values[0];
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Tensor Graph::leaf(const Tensor& value) {
    Node n;
    n.op = Op::leaf;
    n.shape = value.shape;
    n.values = value.values;
    Tensor out = value.detached();
    out.graph = this;
    out.node = record(std::move(n));
    return out;
}

int Graph::record(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace {

Tensor binary_ew(Op op, const Tensor& a, const Tensor& b, const char* name) {
    require_same_shape(a, b, name);
    std::vector<double> out(a.size());
    switch (op) {
        case Op::add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values[i] + b.values[i];
            break;
        case Op::sub:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values[i] - b.values[i];
            break;
        case Op::mul:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values[i] * b.values[i];
            break;
        default: break;
    }
    Node n;
    n.op = op;
    return emit(common_graph(a, b), std::move(n), a.shape, std::move(out), &a, &b);
}

Tensor unary_ew(Op op, const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = x.values[i];
        switch (op) {
            case Op::relu:    out[i] = v > 0.0 ? v : 0.0; break;
            case Op::tanh_fn: out[i] = std::tanh(v); break;
            case Op::exp_fn:  out[i] = std::exp(std::min(v, kExpMax)); break;
            case Op::log_fn:  out[i] = std::log(std::max(v, kEps)); break;
            case Op::abs_fn:  out[i] = std::abs(v); break;
            case Op::sqrt_fn: out[i] = std::sqrt(std::max(v, 0.0)); break;
            default: break;
        }
    }
    Node n;
    n.op = op;
    return emit(x.graph, std::move(n), x.shape, std::move(out), &x, nullptr);
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_ew(Op::add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_ew(Op::sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_ew(Op::mul, a, b, "mul"); }
Tensor relu(const Tensor& x) { return unary_ew(Op::relu, x); }
Tensor tanh(const Tensor& x) { return unary_ew(Op::tanh_fn, x); }
Tensor exp(const Tensor& x) { return unary_ew(Op::exp_fn, x); }
Tensor log(const Tensor& x) { return unary_ew(Op::log_fn, x); }
Tensor abs(const Tensor& x) { return unary_ew(Op::abs_fn, x); }
Tensor sqrt(const Tensor& x) { return unary_ew(Op::sqrt_fn, x); }

Tensor affine(const Tensor& x, double a, double b) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x.values[i] + b;
    Node n;
    n.op = Op::affine;
    n.a = a;
    n.b = b;
    return emit(x.graph, std::move(n), x.shape, std::move(out), &x, nullptr);
}

Tensor scale(const Tensor& x, double a) { return affine(x, a, 0.0); }

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.shape[1] != b.shape[0]) {
        throw ShapeMismatch("matmul: inner dimensions disagree, " + shape_str(a.shape) +
                            " x " + shape_str(b.shape));
    }
    const int m = a.shape[0], k = a.shape[1], ncols = b.shape[1];
    std::vector<double> out(static_cast<std::size_t>(m) * ncols, 0.0);
    // i-k-j order keeps the inner loop contiguous in both b and out.
    for (int i = 0; i < m; ++i) {
        const double* arow = &a.values[static_cast<std::size_t>(i) * k];
        double* orow = &out[static_cast<std::size_t>(i) * ncols];
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = &b.values[static_cast<std::size_t>(kk) * ncols];
            for (int j = 0; j < ncols; ++j) orow[j] += av * brow[j];
        }
    }
    Node n;
    n.op = Op::matmul;
    return emit(common_graph(a, b), std::move(n), {m, ncols}, std::move(out), &a, &b);
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const int m = a.shape[0], ncols = a.shape[1];
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < ncols; ++j)
            out[static_cast<std::size_t>(j) * m + i] = a.values[static_cast<std::size_t>(i) * ncols + j];
    Node n;
    n.op = Op::transpose;
    return emit(a.graph, std::move(n), {ncols, m}, std::move(out), &a, nullptr);
}

// ---------------------------------------------------------------------------
// Row broadcasts
// ---------------------------------------------------------------------------

namespace {

Tensor row_op(Op op, const Tensor& a, const Tensor& r, const char* name) {
    require_rank2(a, name);
    if (r.rank() != 1 || r.shape[0] != a.shape[1]) {
        throw ShapeMismatch(std::string(name) + ": row vector " + shape_str(r.shape) +
                            " does not match " + shape_str(a.shape));
    }
    const int m = a.shape[0], ncols = a.shape[1];
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * ncols;
        for (int j = 0; j < ncols; ++j) {
            const double av = a.values[base + j];
            const double rv = r.values[static_cast<std::size_t>(j)];
            switch (op) {
                case Op::add_row: out[base + j] = av + rv; break;
                case Op::sub_row: out[base + j] = av - rv; break;
                case Op::mul_row: out[base + j] = av * rv; break;
                case Op::div_row: out[base + j] = av / safe_div_denom(rv); break;
                default: break;
            }
        }
    }
    Node n;
    n.op = op;
    return emit(common_graph(a, r), std::move(n), a.shape, std::move(out), &a, &r);
}

} // namespace

Tensor add_row(const Tensor& a, const Tensor& r) { return row_op(Op::add_row, a, r, "add_row"); }
Tensor sub_row(const Tensor& a, const Tensor& r) { return row_op(Op::sub_row, a, r, "sub_row"); }
Tensor mul_row(const Tensor& a, const Tensor& r) { return row_op(Op::mul_row, a, r, "mul_row"); }
Tensor div_row(const Tensor& a, const Tensor& r) { return row_op(Op::div_row, a, r, "div_row"); }

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace {

struct ReducePlan {
    std::vector<int> out_shape;
    std::vector<std::size_t> out_index; // input flat index -> output flat index
    std::size_t count = 1;              // elements folded into each output slot
};

ReducePlan make_reduce_plan(const std::vector<int>& shape, std::span<const int> axes) {
    const int rank = static_cast<int>(shape.size());
    std::vector<bool> reduced(static_cast<std::size_t>(rank), false);
    for (int ax : axes) {
        if (ax < 0 || ax >= rank) {
            throw InvalidAxis("reduce: axis " + std::to_string(ax) + " out of range for " +
                              shape_str(shape));
        }
        if (reduced[static_cast<std::size_t>(ax)]) {
            throw InvalidAxis("reduce: repeated axis " + std::to_string(ax));
        }
        reduced[static_cast<std::size_t>(ax)] = true;
    }

    ReducePlan plan;
    for (int d = 0; d < rank; ++d) {
        if (reduced[static_cast<std::size_t>(d)]) {
            plan.count *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
        } else {
            plan.out_shape.push_back(shape[static_cast<std::size_t>(d)]);
        }
    }

    // Output strides over the kept dimensions.
    std::vector<std::size_t> out_strides(static_cast<std::size_t>(rank), 0);
    std::size_t stride = 1;
    for (int d = rank - 1; d >= 0; --d) {
        if (!reduced[static_cast<std::size_t>(d)]) {
            out_strides[static_cast<std::size_t>(d)] = stride;
            stride *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
        }
    }

    const std::size_t total = shape_product(shape);
    plan.out_index.resize(total);
    std::vector<int> idx(static_cast<std::size_t>(rank), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t oi = 0;
        for (int d = 0; d < rank; ++d) {
            oi += out_strides[static_cast<std::size_t>(d)] *
                  static_cast<std::size_t>(idx[static_cast<std::size_t>(d)]);
        }
        plan.out_index[flat] = oi;
        for (int d = rank - 1; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] < shape[static_cast<std::size_t>(d)]) break;
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
    return plan;
}

Tensor reduce_impl(Op op, const Tensor& x, std::span<const int> axes) {
    ReducePlan plan = make_reduce_plan(x.shape, axes);
    std::vector<double> out(shape_product(plan.out_shape), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) out[plan.out_index[i]] += x.values[i];
    if (op == Op::reduce_mean) {
        const double inv = 1.0 / static_cast<double>(plan.count);
        for (double& v : out) v *= inv;
    }
    Node n;
    n.op = op;
    n.axes.assign(axes.begin(), axes.end());
    return emit(x.graph, std::move(n), std::move(plan.out_shape), std::move(out), &x, nullptr);
}

std::vector<int> all_axes(const Tensor& x) {
    std::vector<int> axes(static_cast<std::size_t>(x.rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return axes;
}

} // namespace

Tensor reduce_sum(const Tensor& x, std::span<const int> axes) { return reduce_impl(Op::reduce_sum, x, axes); }
Tensor reduce_mean(const Tensor& x, std::span<const int> axes) { return reduce_impl(Op::reduce_mean, x, axes); }
Tensor reduce_sum(const Tensor& x) { auto a = all_axes(x); return reduce_impl(Op::reduce_sum, x, a); }
Tensor reduce_mean(const Tensor& x) { auto a = all_axes(x); return reduce_impl(Op::reduce_mean, x, a); }

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
    require_rank2(logits, "softmax");
    const int m = logits.shape[0], c = logits.shape[1];
    if (c < 2) throw ShapeMismatch("softmax: needs at least 2 classes");
    std::vector<double> out(logits.size());
    for (int i = 0; i < m; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        double mx = logits.values[base];
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.values[base + j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            out[base + j] = std::exp(logits.values[base + j] - mx);
            sum += out[base + j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < c; ++j) out[base + j] *= inv;
    }
    Node n;
    n.op = Op::softmax;
    return emit(logits.graph, std::move(n), logits.shape, std::move(out), &logits, nullptr);
}

// ---------------------------------------------------------------------------
// Column gather
// ---------------------------------------------------------------------------

Tensor gather_cols(const Tensor& a, std::span<const int> cols) {
    require_rank2(a, "gather_cols");
    const int m = a.shape[0], ncols = a.shape[1];
    const int k = static_cast<int>(cols.size());
    if (k == 0) throw InvalidAxis("gather_cols: empty column list");
    for (int c : cols) {
        if (c < 0 || c >= ncols) {
            throw InvalidAxis("gather_cols: column " + std::to_string(c) + " out of range");
        }
    }
    std::vector<double> out(static_cast<std::size_t>(m) * k);
    for (int i = 0; i < m; ++i) {
        const std::size_t ib = static_cast<std::size_t>(i) * ncols;
        const std::size_t ob = static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) out[ob + j] = a.values[ib + static_cast<std::size_t>(cols[j])];
    }
    Node n;
    n.op = Op::gather_cols;
    n.axes.assign(cols.begin(), cols.end());
    return emit(a.graph, std::move(n), {m, k}, std::move(out), &a, nullptr);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

GradientMap Graph::backward(const Tensor& loss, std::span<const Tensor> params) const {
    if (loss.graph != this || loss.node < 0) {
        throw InvalidSpec("backward: loss is not recorded on this graph");
    }
    if (loss.size() != 1) {
        throw NotScalar("backward: loss has " + std::to_string(loss.size()) + " elements");
    }

    std::vector<std::vector<double>> grads(nodes_.size());
    auto grad_of = [&](int id) -> std::vector<double>& {
        auto& g = grads[static_cast<std::size_t>(id)];
        if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(id)].values.size(), 0.0);
        return g;
    };
    grad_of(loss.node)[0] = 1.0;

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        const auto& g = grads[static_cast<std::size_t>(id)];
        if (g.empty()) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.op == Op::leaf) continue;
        const Node* x0 = n.in0 >= 0 ? &nodes_[static_cast<std::size_t>(n.in0)] : nullptr;
        const Node* x1 = n.in1 >= 0 ? &nodes_[static_cast<std::size_t>(n.in1)] : nullptr;

        switch (n.op) {
            case Op::add: {
                auto& g0 = grad_of(n.in0);
                auto& g1 = grad_of(n.in1);
                for (std::size_t i = 0; i < g.size(); ++i) { g0[i] += g[i]; g1[i] += g[i]; }
                break;
            }
            case Op::sub: {
                auto& g0 = grad_of(n.in0);
                auto& g1 = grad_of(n.in1);
                for (std::size_t i = 0; i < g.size(); ++i) { g0[i] += g[i]; g1[i] -= g[i]; }
                break;
            }
            case Op::mul: {
                auto& g0 = grad_of(n.in0);
                auto& g1 = grad_of(n.in1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g0[i] += g[i] * x1->values[i];
                    g1[i] += g[i] * x0->values[i];
                }
                break;
            }
            case Op::relu: {
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x0->values[i] > 0.0) g0[i] += g[i];
                }
                break;
            }
            case Op::tanh_fn: {
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g0[i] += g[i] * (1.0 - n.values[i] * n.values[i]);
                }
                break;
            }
            case Op::exp_fn: {
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) g0[i] += g[i] * n.values[i];
                break;
            }
            case Op::log_fn: {
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g0[i] += g[i] / std::max(x0->values[i], kEps);
                }
                break;
            }
            case Op::abs_fn: {
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double v = x0->values[i];
                    if (v > 0.0) g0[i] += g[i];
                    else if (v < 0.0) g0[i] -= g[i];
                    // subgradient at 0 is 0
                }
                break;
            }
            case Op::sqrt_fn: {
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g0[i] += g[i] * 0.5 / std::max(n.values[i], kEps);
                }
                break;
            }
            case Op::affine: {
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g.size(); ++i) g0[i] += g[i] * n.a;
                break;
            }
            case Op::matmul: {
                const int m = x0->shape[0], k = x0->shape[1], c = x1->shape[1];
                auto& g0 = grad_of(n.in0); // dA = G * B^T  [m x k]
                auto& g1 = grad_of(n.in1); // dB = A^T * G  [k x c]
                for (int i = 0; i < m; ++i) {
                    const double* grow = &g[static_cast<std::size_t>(i) * c];
                    const double* arow = &x0->values[static_cast<std::size_t>(i) * k];
                    double* g0row = &g0[static_cast<std::size_t>(i) * k];
                    for (int kk = 0; kk < k; ++kk) {
                        const double* brow = &x1->values[static_cast<std::size_t>(kk) * c];
                        double acc = 0.0;
                        for (int j = 0; j < c; ++j) acc += grow[j] * brow[j];
                        g0row[kk] += acc;
                        const double av = arow[kk];
                        if (av != 0.0) {
                            double* g1row = &g1[static_cast<std::size_t>(kk) * c];
                            for (int j = 0; j < c; ++j) g1row[j] += av * grow[j];
                        }
                    }
                }
                break;
            }
            case Op::transpose: {
                const int m = x0->shape[0], c = x0->shape[1];
                auto& g0 = grad_of(n.in0);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < c; ++j)
                        g0[static_cast<std::size_t>(i) * c + j] +=
                            g[static_cast<std::size_t>(j) * m + i];
                break;
            }
            case Op::add_row:
            case Op::sub_row: {
                const int m = n.shape[0], c = n.shape[1];
                const double sgn = n.op == Op::add_row ? 1.0 : -1.0;
                auto& g0 = grad_of(n.in0);
                auto& g1 = grad_of(n.in1);
                for (int i = 0; i < m; ++i) {
                    const std::size_t base = static_cast<std::size_t>(i) * c;
                    for (int j = 0; j < c; ++j) {
                        g0[base + j] += g[base + j];
                        g1[static_cast<std::size_t>(j)] += sgn * g[base + j];
                    }
                }
                break;
            }
            case Op::mul_row: {
                const int m = n.shape[0], c = n.shape[1];
                auto& g0 = grad_of(n.in0);
                auto& g1 = grad_of(n.in1);
                for (int i = 0; i < m; ++i) {
                    const std::size_t base = static_cast<std::size_t>(i) * c;
                    for (int j = 0; j < c; ++j) {
                        g0[base + j] += g[base + j] * x1->values[static_cast<std::size_t>(j)];
                        g1[static_cast<std::size_t>(j)] += g[base + j] * x0->values[base + j];
                    }
                }
                break;
            }
            case Op::div_row: {
                const int m = n.shape[0], c = n.shape[1];
                auto& g0 = grad_of(n.in0);
                auto& g1 = grad_of(n.in1);
                for (int i = 0; i < m; ++i) {
                    const std::size_t base = static_cast<std::size_t>(i) * c;
                    for (int j = 0; j < c; ++j) {
                        const double r = safe_div_denom(x1->values[static_cast<std::size_t>(j)]);
                        g0[base + j] += g[base + j] / r;
                        g1[static_cast<std::size_t>(j)] -= g[base + j] * n.values[base + j] / r;
                    }
                }
                break;
            }
            case Op::reduce_sum:
            case Op::reduce_mean: {
                ReducePlan plan = make_reduce_plan(x0->shape, n.axes);
                const double w = n.op == Op::reduce_mean
                                     ? 1.0 / static_cast<double>(plan.count)
                                     : 1.0;
                auto& g0 = grad_of(n.in0);
                for (std::size_t i = 0; i < g0.size(); ++i) g0[i] += w * g[plan.out_index[i]];
                break;
            }
            case Op::softmax: {
                const int m = n.shape[0], c = n.shape[1];
                auto& g0 = grad_of(n.in0);
                for (int i = 0; i < m; ++i) {
                    const std::size_t base = static_cast<std::size_t>(i) * c;
                    double dot = 0.0;
                    for (int j = 0; j < c; ++j) dot += g[base + j] * n.values[base + j];
                    for (int j = 0; j < c; ++j) {
                        g0[base + j] += n.values[base + j] * (g[base + j] - dot);
                    }
                }
                break;
            }
            case Op::gather_cols: {
                const int m = n.shape[0], k = n.shape[1];
                const int c = x0->shape[1];
                auto& g0 = grad_of(n.in0);
                for (int i = 0; i < m; ++i) {
                    const std::size_t ob = static_cast<std::size_t>(i) * k;
                    const std::size_t ib = static_cast<std::size_t>(i) * c;
                    for (int j = 0; j < k; ++j) {
                        g0[ib + static_cast<std::size_t>(n.axes[static_cast<std::size_t>(j)])] +=
                            g[ob + j];
                    }
                }
                break;
            }
            case Op::leaf:
                break;
        }
    }

    GradientMap out;
    out.reserve(params.size());
    for (const Tensor& p : params) {
        if (p.graph == this && p.node >= 0 &&
            !grads[static_cast<std::size_t>(p.node)].empty()) {
            out.emplace_back(p.shape, grads[static_cast<std::size_t>(p.node)]);
        } else {
            out.push_back(Tensor::zeros(p.shape));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference check
// ---------------------------------------------------------------------------

double finite_diff_check(const ScalarFn& f, std::span<const Tensor> params, double eps) {
    std::vector<Tensor> work(params.begin(), params.end());
    for (Tensor& p : work) p = p.detached();

    auto eval = [&](std::span<const Tensor> at) {
        Graph g;
        std::vector<Tensor> staged;
        staged.reserve(at.size());
        for (const Tensor& p : at) staged.push_back(g.leaf(p));
        return f(g, staged).item();
    };

    // Analytic gradients at the base point.
    Graph g;
    std::vector<Tensor> staged;
    staged.reserve(work.size());
    for (const Tensor& p : work) staged.push_back(g.leaf(p));
    Tensor loss = f(g, staged);
    if (loss.size() != 1) throw NotScalar("finite_diff_check: f did not return a scalar");
    GradientMap analytic = g.backward(loss, staged);

    double max_err = 0.0;
    for (std::size_t pi = 0; pi < work.size(); ++pi) {
        for (std::size_t ci = 0; ci < work[pi].values.size(); ++ci) {
            const double saved = work[pi].values[ci];
            work[pi].values[ci] = saved + eps;
            const double fp = eval(work);
            work[pi].values[ci] = saved - eps;
            const double fm = eval(work);
            work[pi].values[ci] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double err = std::abs(analytic[pi].values[ci] - fd) / std::max(1.0, std::abs(fd));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

} // namespace tadfkd
