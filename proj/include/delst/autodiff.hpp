#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "delst/errors.hpp"

/// Minimal reverse-mode differentiation over dense row-major float64 matrices.
///
/// A Tape owns every node created on it; Var is a cheap handle (tape + index).
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() is a single reverse sweep. Gradients of a
/// node used several times are summed.
///
/// Only rank-2 shapes exist. Scalars are 1x1, column vectors are m x 1.
namespace delst::ad {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense tensor value, used at the boundary of the tape.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
        require(values.size() == shape.size(), "Tensor: value count does not match shape");
    }
    static Tensor zeros(Shape s) { return Tensor(s, std::vector<double>(s.size(), 0.0)); }
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
};

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    Shape shape() const;
    std::span<const double> values() const;
    double item() const;
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    /// Backward rule: reads the node's upstream gradient and accumulates into inputs.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor t);
    Var constant(Shape s, std::vector<double> values) { return constant(Tensor(s, std::move(values))); }
    Var parameter(Tensor t);

    /// Appends a node. Used by the primitive ops; `fn` may be empty for leaves.
    Var push(std::string_view op, Shape shape, std::vector<double> values, std::vector<std::size_t> inputs,
             BackwardFn fn);

    /// Seeds d loss / d loss = 1 and replays the tape in reverse.
    void backward(Var loss);

    /// Gradient accumulated for `v`; all zeros when `v` was not reached.
    Tensor grad(Var v) const;

    const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
    std::span<const double> values(std::size_t id) const { return nodes_[id].values; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }
    std::string_view op_name(std::size_t id) const { return nodes_[id].op; }

    /// Upstream gradient of node `id` during backward (empty if never reached).
    std::span<const double> upstream(std::size_t id) const { return nodes_[id].grad; }
    /// Accumulation target for an input of the node being replayed.
    std::span<double> grad_slot(std::size_t id);

    /// Test hook: scales the local derivative of every node named `op` by `factor`.
    void inject_fault(std::string op, double factor) {
        fault_op_ = std::move(op);
        fault_factor_ = factor;
    }
    double fault_factor(std::string_view op) const { return op == fault_op_ ? fault_factor_ : 1.0; }

private:
    struct Node {
        std::string_view op;
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::string fault_op_;
    double fault_factor_ = 1.0;
};

// Structural ops.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// a (m x n) + b (1 x n), row-broadcast bias.
Var add_row(Var a, Var b);
/// a (m x n) * s (m x 1), per-row scale.
Var mul_col(Var a, Var s);
Var mul_scalar(Var a, double s);
Var add_scalar(Var a, double s);
Var sum(Var a);
Var mean(Var a);
/// Per-row sum, m x 1.
Var row_sum(Var a);
/// Per-row dot product of two m x n matrices, m x 1.
Var row_dot(Var a, Var b);
/// Per-row Euclidean norm, m x 1; subgradient 0 at a zero row.
Var l2_norm(Var a);
Var concat_cols(Var a, Var b);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// out[i][j] = a[j] - b[i] for column vectors a (p x 1), b (q x 1); shape q x p.
Var outer_diff(Var a, Var b);
/// Replaces entries where mask != 0 with `fill`; those entries get no gradient.
Var mask_fill(Var a, std::span<const unsigned char> mask, double fill);

// Elementwise ops.
Var sinh(Var a);
/// sinh(x)/x with series expansions near 0.
Var sinhc(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var relu(Var a);
/// max(0, x); subgradient 0 at the kink.
Var hinge_max0(Var a);
/// max(x, floor); gradient 0 where the floor is active.
Var clamp_min(Var a, double floor);
/// asin(clamp(x, -1, 1)); gradient 0 on the saturated region |x| >= 1.
Var asin_clamped(Var a);
/// acos(clamp(x, -1, 1)); gradient 0 on the saturated region |x| >= 1.
Var acos_clamped(Var a);
/// acosh(max(x, 1)); gradient 0 for x <= 1.
Var acosh_clamped(Var a);

// Composite kernels.
/// Cosine similarity matrix between rows of a (m x d) and rows of b (n x d).
Var cosine_similarity(Var a, Var b);
/// Mean over rows of logsumexp(row) - row[i] for a square logit matrix: the
/// softmax cross-entropy with the diagonal as target, log-sum-exp stabilised.
Var softmax_logsumexp(Var logits);

struct GradCheckReport {
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t count = 0;
};

/// Relative error with the denominator floored at `floor`.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares `analytic` to central differences of `f` at `x`, coordinate by
/// coordinate. `f` must be deterministic; `x` is restored on return.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x, std::span<const double> analytic, double h = 1e-5,
                           double floor = 1e-6);

}  // namespace delst::ad
