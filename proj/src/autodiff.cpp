#include "delst/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace delst::ad {

namespace {
constexpr double kMinNorm = 1e-12;
}

Shape Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::values() const { return tape_->values(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::item() const {
    require(shape().size() == 1, "Var::item: not a scalar");
    return values()[0];
}

Var Tape::constant(Tensor t) { return push("constant", t.shape, std::move(t.values), {}, nullptr); }

Var Tape::parameter(Tensor t) {
    Var v = push("parameter", t.shape, std::move(t.values), {}, nullptr);
    nodes_[v.id()].requires_grad = true;
    return v;
}

Var Tape::push(std::string_view op, Shape shape, std::vector<double> values, std::vector<std::size_t> inputs,
               BackwardFn fn) {
    require(values.size() == shape.size(), "Tape::push: value count does not match shape");
    Node node;
    node.op = op;
    node.shape = shape;
    node.values = std::move(values);
    for (std::size_t in : inputs) {
        require(in < nodes_.size(), "Tape::push: input from the future");
        node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    }
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    require(&loss.tape() == this, "Tape::backward: loss belongs to another tape");
    require(loss.shape().size() == 1, "Tape::backward: loss must be a scalar");
    for (Node& n : nodes_) n.grad.clear();
    grad_slot(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.grad.empty() || !n.backward) continue;
        n.backward(*this, id);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor::zeros(n.shape);
    return Tensor(n.shape, n.grad);
}

namespace {

// Elementwise op with derivative d(x, y). Upstream zeros are skipped so that
// saturated or masked entries never turn an infinite local derivative into NaN.
template <class F, class D>
Var unary(std::string_view name, Var a, F f, D d) {
    Tape& t = a.tape();
    auto in = a.values();
    std::vector<double> out(in.size());
    std::transform(in.begin(), in.end(), out.begin(), f);
    const std::size_t ia = a.id();
    return t.push(name, a.shape(), std::move(out), {ia}, [ia, d, name](Tape& tp, std::size_t self) {
        auto g = tp.upstream(self);
        auto x = tp.values(ia);
        auto y = tp.values(self);
        const double fault = tp.fault_factor(name);
        auto ga = tp.grad_slot(ia);
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (g[k] == 0.0) continue;
            ga[k] += g[k] * d(x[k], y[k]) * fault;
        }
    });
}

void check_same(Var a, Var b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
    const Shape sa = a.shape(), sb = b.shape();
    require(sa.cols == sb.rows, "matmul: inner dimensions differ");
    const std::size_t m = sa.rows, k = sa.cols, n = sb.cols;
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &bv[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().push("matmul", {m, n}, std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        if (t.requires_grad(ia)) {
            auto bvals = t.values(ib);
            auto ga = t.grad_slot(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bvals[p * n + j];
                    ga[i * k + p] += s;
                }
        }
        if (t.requires_grad(ib)) {
            auto avals = t.values(ia);
            auto gb = t.grad_slot(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = avals[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                }
        }
    });
}

Var transpose(Var a) {
    const Shape s = a.shape();
    auto av = a.values();
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) out[j * s.rows + i] = av[i * s.cols + j];
    const std::size_t ia = a.id();
    return a.tape().push("transpose", {s.cols, s.rows}, std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        auto ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < s.rows; ++i)
            for (std::size_t j = 0; j < s.cols; ++j) ga[i * s.cols + j] += g[j * s.rows + i];
    });
}

namespace {

template <class F, class DA, class DB>
Var binary(std::string_view name, Var a, Var b, F f, DA da, DB db) {
    check_same(a, b, name.data());
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(av[k], bv[k]);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().push(name, a.shape(), std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        auto x = t.values(ia);
        auto y = t.values(ib);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_slot(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                if (g[k] != 0.0) ga[k] += g[k] * da(x[k], y[k]);
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_slot(ib);
            for (std::size_t k = 0; k < g.size(); ++k)
                if (g[k] != 0.0) gb[k] += g[k] * db(x[k], y[k]);
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary("add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
                  [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary("sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
                  [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary("mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
                  [](double x, double) { return x; });
}

Var div(Var a, Var b) {
    return binary("div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
                  [](double x, double y) { return -x / (y * y); });
}

Var add_row(Var a, Var b) {
    const Shape s = a.shape();
    require(b.shape() == Shape{1, s.cols}, "add_row: bias must be 1 x cols");
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(av.begin(), av.end());
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) out[i * s.cols + j] += bv[j];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().push("add_row", s, std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_slot(ia);
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_slot(ib);
            for (std::size_t i = 0; i < s.rows; ++i)
                for (std::size_t j = 0; j < s.cols; ++j) gb[j] += g[i * s.cols + j];
        }
    });
}

Var mul_col(Var a, Var sc) {
    const Shape s = a.shape();
    require(sc.shape() == Shape{s.rows, 1}, "mul_col: scale must be rows x 1");
    auto av = a.values();
    auto sv = sc.values();
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) out[i * s.cols + j] = av[i * s.cols + j] * sv[i];
    const std::size_t ia = a.id(), is = sc.id();
    return a.tape().push("mul_col", s, std::move(out), {ia, is}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        auto x = t.values(ia);
        auto y = t.values(is);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_slot(ia);
            for (std::size_t i = 0; i < s.rows; ++i)
                for (std::size_t j = 0; j < s.cols; ++j) ga[i * s.cols + j] += g[i * s.cols + j] * y[i];
        }
        if (t.requires_grad(is)) {
            auto gs = t.grad_slot(is);
            for (std::size_t i = 0; i < s.rows; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < s.cols; ++j) acc += g[i * s.cols + j] * x[i * s.cols + j];
                gs[i] += acc;
            }
        }
    });
}

Var mul_scalar(Var a, double s) {
    return unary("mul_scalar", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sum(Var a) {
    auto av = a.values();
    double s = 0.0;
    for (double v : av) s += v;
    const std::size_t ia = a.id();
    return a.tape().push("sum", {1, 1}, {s}, {ia}, [ia](Tape& t, std::size_t self) {
        const double g = t.upstream(self)[0];
        for (double& x : t.grad_slot(ia)) x += g;
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.shape().size());
    require(n > 0, "mean: empty tensor");
    return mul_scalar(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
    const Shape s = a.shape();
    auto av = a.values();
    std::vector<double> out(s.rows, 0.0);
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) out[i] += av[i * s.cols + j];
    const std::size_t ia = a.id();
    return a.tape().push("row_sum", {s.rows, 1}, std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        auto ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < s.rows; ++i)
            for (std::size_t j = 0; j < s.cols; ++j) ga[i * s.cols + j] += g[i];
    });
}

Var row_dot(Var a, Var b) {
    check_same(a, b, "row_dot");
    const Shape s = a.shape();
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(s.rows, 0.0);
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < s.cols; ++j) out[i] += av[i * s.cols + j] * bv[i * s.cols + j];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().push("row_dot", {s.rows, 1}, std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        auto x = t.values(ia);
        auto y = t.values(ib);
        // a and b may be the same node; grad_slot aliases then and both terms land.
        if (t.requires_grad(ia)) {
            auto ga = t.grad_slot(ia);
            for (std::size_t i = 0; i < s.rows; ++i)
                for (std::size_t j = 0; j < s.cols; ++j) ga[i * s.cols + j] += g[i] * y[i * s.cols + j];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_slot(ib);
            for (std::size_t i = 0; i < s.rows; ++i)
                for (std::size_t j = 0; j < s.cols; ++j) gb[i * s.cols + j] += g[i] * x[i * s.cols + j];
        }
    });
}

Var l2_norm(Var a) {
    const Shape s = a.shape();
    auto av = a.values();
    std::vector<double> out(s.rows, 0.0);
    for (std::size_t i = 0; i < s.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < s.cols; ++j) acc += av[i * s.cols + j] * av[i * s.cols + j];
        out[i] = std::sqrt(acc);
    }
    const std::size_t ia = a.id();
    return a.tape().push("l2_norm", {s.rows, 1}, std::move(out), {ia}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        auto x = t.values(ia);
        auto r = t.values(self);
        auto ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < s.rows; ++i) {
            if (r[i] == 0.0 || g[i] == 0.0) continue;
            const double f = g[i] / r[i] * t.fault_factor("l2_norm");
            for (std::size_t j = 0; j < s.cols; ++j) ga[i * s.cols + j] += f * x[i * s.cols + j];
        }
    });
}

Var concat_cols(Var a, Var b) {
    const Shape sa = a.shape(), sb = b.shape();
    require(sa.rows == sb.rows, "concat_cols: row counts differ");
    const std::size_t m = sa.rows, ca = sa.cols, cb = sb.cols, n = ca + cb;
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(&av[i * ca], ca, &out[i * n]);
        std::copy_n(&bv[i * cb], cb, &out[i * n + ca]);
    }
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().push("concat_cols", {m, n}, std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_slot(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * n + j];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_slot(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * n + ca + j];
        }
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    const Shape s = a.shape();
    auto av = a.values();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(idx.size() * s.cols);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        require(idx[r] < s.rows, "gather_rows: index out of range");
        std::copy_n(&av[idx[r] * s.cols], s.cols, &out[r * s.cols]);
    }
    const std::size_t ia = a.id();
    const std::size_t n_out = idx.size();
    return a.tape().push("gather_rows", {n_out, s.cols}, std::move(out), {ia},
                         [=, idx = std::move(idx)](Tape& t, std::size_t self) {
                             auto g = t.upstream(self);
                             auto ga = t.grad_slot(ia);
                             for (std::size_t r = 0; r < idx.size(); ++r)
                                 for (std::size_t j = 0; j < s.cols; ++j)
                                     ga[idx[r] * s.cols + j] += g[r * s.cols + j];
                         });
}

Var outer_diff(Var a, Var b) {
    const Shape sa = a.shape(), sb = b.shape();
    require(sa.cols == 1 && sb.cols == 1, "outer_diff: inputs must be column vectors");
    const std::size_t p = sa.rows, q = sb.rows;
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(q * p);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < p; ++j) out[i * p + j] = av[j] - bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().push("outer_diff", {q, p}, std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
        auto g = t.upstream(self);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_slot(ia);
            for (std::size_t i = 0; i < q; ++i)
                for (std::size_t j = 0; j < p; ++j) ga[j] += g[i * p + j];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_slot(ib);
            for (std::size_t i = 0; i < q; ++i)
                for (std::size_t j = 0; j < p; ++j) gb[i] -= g[i * p + j];
        }
    });
}

Var mask_fill(Var a, std::span<const unsigned char> mask, double fill) {
    require(mask.size() == a.shape().size(), "mask_fill: mask size mismatch");
    auto av = a.values();
    std::vector<double> out(av.begin(), av.end());
    std::vector<unsigned char> m(mask.begin(), mask.end());
    for (std::size_t k = 0; k < out.size(); ++k)
        if (m[k]) out[k] = fill;
    const std::size_t ia = a.id();
    return a.tape().push("mask_fill", a.shape(), std::move(out), {ia},
                         [ia, m = std::move(m)](Tape& t, std::size_t self) {
                             auto g = t.upstream(self);
                             auto ga = t.grad_slot(ia);
                             for (std::size_t k = 0; k < g.size(); ++k)
                                 if (!m[k]) ga[k] += g[k];
                         });
}

Var sinh(Var a) {
    return unary("sinh", a, [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

namespace {

double sinhc_value(double x) {
    if (std::abs(x) < 1e-6) return 1.0 + x * x / 6.0;
    return std::sinh(x) / x;
}

double sinhc_derivative(double x) {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return x * (1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 / 840.0));
    }
    return (x * std::cosh(x) - std::sinh(x)) / (x * x);
}

}  // namespace

Var sinhc(Var a) {
    return unary("sinhc", a, sinhc_value, [](double x, double) { return sinhc_derivative(x); });
}

Var exp(Var a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
    return unary("sqrt", a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var relu(Var a) {
    return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var hinge_max0(Var a) {
    return unary("hinge_max0", a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp_min(Var a, double floor) {
    return unary("clamp_min", a, [floor](double x) { return std::max(x, floor); },
                 [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var asin_clamped(Var a) {
    return unary("asin_clamped", a, [](double x) { return std::asin(std::clamp(x, -1.0, 1.0)); },
                 [](double x, double) { return std::abs(x) < 1.0 ? 1.0 / std::sqrt(1.0 - x * x) : 0.0; });
}

Var acos_clamped(Var a) {
    return unary("acos_clamped", a, [](double x) { return std::acos(std::clamp(x, -1.0, 1.0)); },
                 [](double x, double) { return std::abs(x) < 1.0 ? -1.0 / std::sqrt(1.0 - x * x) : 0.0; });
}

Var acosh_clamped(Var a) {
    return unary("acosh_clamped", a, [](double x) { return std::acosh(std::max(x, 1.0)); },
                 [](double x, double) { return x > 1.0 ? 1.0 / std::sqrt((x - 1.0) * (x + 1.0)) : 0.0; });
}

Var cosine_similarity(Var a, Var b) {
    const Shape sa = a.shape(), sb = b.shape();
    require(sa.cols == sb.cols, "cosine_similarity: widths differ");
    const std::size_t m = sa.rows, n = sb.rows, d = sa.cols;
    auto av = a.values();
    auto bv = b.values();
    auto norms = [d](std::span<const double> v, std::size_t rows) {
        std::vector<double> r(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) acc += v[i * d + k] * v[i * d + k];
            r[i] = std::max(std::sqrt(acc), kMinNorm);
        }
        return r;
    };
    std::vector<double> na = norms(av, m), nb = norms(bv, n);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) acc += av[i * d + k] * bv[j * d + k];
            out[i * n + j] = acc / (na[i] * nb[j]);
        }
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().push(
        "cosine_similarity", {m, n}, std::move(out), {ia, ib},
        [=, na = std::move(na), nb = std::move(nb)](Tape& t, std::size_t self) {
            auto g = t.upstream(self);
            auto x = t.values(ia);
            auto y = t.values(ib);
            auto s = t.values(self);
            // dS_ij/da_i = b_j/(|a_i||b_j|) - S_ij a_i/|a_i|^2, symmetric for b_j.
            if (t.requires_grad(ia)) {
                auto ga = t.grad_slot(ia);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = g[i * n + j];
                        if (gij == 0.0) continue;
                        const double c1 = gij / (na[i] * nb[j]);
                        const double c2 = gij * s[i * n + j] / (na[i] * na[i]);
                        for (std::size_t k = 0; k < d; ++k) ga[i * d + k] += c1 * y[j * d + k] - c2 * x[i * d + k];
                    }
            }
            if (t.requires_grad(ib)) {
                auto gb = t.grad_slot(ib);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = g[i * n + j];
                        if (gij == 0.0) continue;
                        const double c1 = gij / (na[i] * nb[j]);
                        const double c2 = gij * s[i * n + j] / (nb[j] * nb[j]);
                        for (std::size_t k = 0; k < d; ++k) gb[j * d + k] += c1 * x[i * d + k] - c2 * y[j * d + k];
                    }
            }
        });
}

Var softmax_logsumexp(Var logits) {
    const Shape s = logits.shape();
    require(s.rows == s.cols && s.rows > 0, "softmax_logsumexp: logits must be square and non-empty");
    const std::size_t n = s.rows;
    auto z = logits.values();
    std::vector<double> probs(n * n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &z[i * n];
        const double mx = *std::max_element(row, row + n);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(row[j] - mx);
        const double lse = mx + std::log(acc);
        for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = std::exp(row[j] - lse);
        loss += lse - row[i];
    }
    loss /= static_cast<double>(n);
    const std::size_t iz = logits.id();
    return logits.tape().push("softmax_logsumexp", {1, 1}, {loss}, {iz},
                              [=, probs = std::move(probs)](Tape& t, std::size_t self) {
                                  const double g = t.upstream(self)[0] / static_cast<double>(n);
                                  auto gz = t.grad_slot(iz);
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < n; ++j)
                                          gz[i * n + j] += g * (probs[i * n + j] - (i == j ? 1.0 : 0.0));
                              });
}

double relative_error(double analytic, double numeric, double floor) {
    const double den = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / den;
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                           std::span<const double> analytic, double h, double floor) {
    require(analytic.size() == x.size(), "grad_check: gradient size mismatch");
    GradCheckReport report;
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double saved = x[k];
        x[k] = saved + h;
        const double fp = f(x);
        x[k] = saved - h;
        const double fm = f(x);
        x[k] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = relative_error(analytic[k], numeric, floor);
        total += err;
        if (err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_index = k;
        }
    }
    report.count = x.size();
    report.mean_rel_error = x.empty() ? 0.0 : total / static_cast<double>(x.size());
    return report;
}

}  // namespace delst::ad
