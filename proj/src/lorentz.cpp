#include "delst/lorentz.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

namespace delst::lorentz {

namespace {

std::atomic<std::uint64_t> g_degenerate_pairs{0};

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

HyperPoint origin(std::size_t dim, Curvature c) {
    return HyperPoint{std::vector<double>(dim, 0.0), 1.0 / std::sqrt(c.value())};
}

double lorentz_inner(const HyperPoint& u, const HyperPoint& v) {
    require(u.dim() == v.dim(), "lorentz_inner: dimension mismatch");
    return dot(u.space, v.space) - u.time * v.time;
}

double lorentz_inner(const TangentVec& u, const TangentVec& v) {
    require(u.space.size() == v.space.size(), "lorentz_inner: dimension mismatch");
    return dot(u.space, v.space);
}

double time_from_space(std::span<const double> space, Curvature c) {
    return std::sqrt(1.0 / c.value() + dot(space, space));
}

double hyperboloid_residual(const HyperPoint& u, Curvature c) {
    return std::abs(c.value() * lorentz_inner(u, u) + 1.0);
}

double sinhc(double x) {
    if (std::abs(x) < 1e-6) return 1.0 + x * x / 6.0;
    return std::sinh(x) / x;
}

HyperPoint exp_map(const TangentVec& p, Curvature c) {
    for (double v : p.space) require(std::isfinite(v), "exp_map: non-finite tangent vector");
    const double sqrt_c = std::sqrt(c.value());
    const double scale = sinhc(sqrt_c * norm(p.space));
    HyperPoint u;
    u.space.resize(p.space.size());
    std::transform(p.space.begin(), p.space.end(), u.space.begin(),
                   [scale](double v) { return scale * v; });
    u.time = time_from_space(u.space, c);
    return u;
}

double half_aperture(const HyperPoint& g, ConeConstants k, Curvature c) {
    const double r = norm(g.space);
    if (r == 0.0) return std::numbers::pi / 2.0;
    const double arg = 2.0 * k.k_aper / (std::sqrt(c.value()) * r);
    return std::asin(std::clamp(arg, -1.0, 1.0));
}

double exterior_angle(const HyperPoint& g, const HyperPoint& i, Curvature c) {
    const double cv = c.value();
    const double ci = cv * lorentz_inner(g, i);
    const double g_norm = norm(g.space);
    const double d2 = ci * ci - 1.0;
    if (d2 < kExteriorEps || g_norm == 0.0) {
        g_degenerate_pairs.fetch_add(1, std::memory_order_relaxed);
        return 0.0;
    }
    const double num = i.time + g.time * ci;
    const double den = g_norm * std::sqrt(std::max(d2, kExteriorEps));
    return std::acos(std::clamp(num / den, -1.0, 1.0));
}

double cone_violation(const HyperPoint& g, const HyperPoint& i, ConeConstants k, Curvature c) {
    return std::max(0.0, exterior_angle(g, i, c) - half_aperture(g, k, c));
}

std::uint64_t degenerate_pair_count() {
    return g_degenerate_pairs.load(std::memory_order_relaxed);
}

}  // namespace delst::lorentz
