#pragma once

// Dense f64 tensors with reverse-mode automatic differentiation on a
// per-pass tape. Every op evaluates eagerly; when an input lives on a
// Graph the op is also recorded so backward() can replay exact VJPs.
// Tensors without a graph handle are constants and cost no tape space.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tadfkd/errors.hpp"

namespace tadfkd {

class Graph;

// Clamp used for log/divide guards. Keeps every forward op finite on
// finite inputs; well below any tolerance asserted in tests.
inline constexpr double kEps = 1e-8;

struct Tensor {
    std::vector<int> shape;      // row-major extents
    std::vector<double> values;
    Graph* graph = nullptr;      // tape this tensor is recorded on, if any
    int node = -1;               // handle into graph; -1 for constants

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<double> values_);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v);

    std::size_t size() const { return values.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const;
    int cols() const;

    double at(int r, int c) const;
    double& at(int r, int c);

    // Scalar value; throws NotScalar when the tensor has more than one element.
    double item() const;

    bool on_graph() const { return graph != nullptr && node >= 0; }
    // Value copy with no tape handle.
    Tensor detached() const { return Tensor(shape, values); }
};

// Gradients aligned one-to-one with the parameter span given to backward().
using GradientMap = std::vector<Tensor>;

namespace detail {

enum class Op : std::uint8_t {
    leaf,
    add, sub, mul,
    relu, tanh_fn, exp_fn, log_fn, abs_fn, sqrt_fn,
    affine,
    matmul, transpose,
    add_row, sub_row, mul_row, div_row,
    reduce_sum, reduce_mean,
    softmax,
    gather_cols,
};

struct Node {
    Op op = Op::leaf;
    int in0 = -1;
    int in1 = -1;
    std::vector<int> shape;
    std::vector<double> values;
    double a = 0.0;              // affine: a*x + b
    double b = 0.0;
    std::vector<int> axes;       // reductions / gathered column indices
};

} // namespace detail

// Append-only computation tape. One graph per forward/backward pass;
// a single graph must not be touched from two threads, distinct graphs
// are independent.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Records `value` as a leaf and returns a handle tensor for it.
    Tensor leaf(const Tensor& value);

    // Reverse-mode gradients of a scalar loss w.r.t. each tensor in
    // `params`. Parameters that never reached the loss (or are not on
    // this graph) get zero gradients of their own shape. Each node is
    // visited exactly once.
    GradientMap backward(const Tensor& loss, std::span<const Tensor> params) const;

    std::size_t node_count() const { return nodes_.size(); }

    // Internal to the op implementations.
    int record(detail::Node n);
    const detail::Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

private:
    std::vector<detail::Node> nodes_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);       // input clamped to >= kEps
Tensor abs(const Tensor& x);       // subgradient at 0 is 0
Tensor sqrt(const Tensor& x);      // negative inputs clamped to 0
Tensor affine(const Tensor& x, double a, double b); // a*x + b
Tensor scale(const Tensor& x, double a);

// ---- linear algebra (rank 2) ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- row-vector broadcasts: a is [m x n], r is [n] ----
Tensor add_row(const Tensor& a, const Tensor& r);
Tensor sub_row(const Tensor& a, const Tensor& r);
Tensor mul_row(const Tensor& a, const Tensor& r);
Tensor div_row(const Tensor& a, const Tensor& r); // |r| clamped to >= kEps

// ---- reductions; axes are removed from the shape ----
Tensor reduce_sum(const Tensor& x, std::span<const int> axes);
Tensor reduce_mean(const Tensor& x, std::span<const int> axes);
Tensor reduce_sum(const Tensor& x);   // all axes -> scalar
Tensor reduce_mean(const Tensor& x);

// ---- rows of [batch x C] to probability rows, max-subtracted ----
Tensor softmax(const Tensor& logits);

// ---- column gather on [m x n]: out[:,j] = a[:,cols[j]] ----
Tensor gather_cols(const Tensor& a, std::span<const int> cols);

// Scalar function of a parameter list, built on the supplied graph from
// the staged leaf tensors the harness passes in.
using ScalarFn = std::function<Tensor(Graph&, std::span<const Tensor>)>;

// Central-finite-difference gradient check. Evaluates `f` analytically
// (tape + backward) and numerically at +-eps per coordinate and returns
// max |analytic - fd| / max(1, |fd|) over all coordinates. `f` must be
// deterministic.
double finite_diff_check(const ScalarFn& f, std::span<const Tensor> params,
                         double eps = 1e-5);

} // namespace tadfkd
