#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "delst/errors.hpp"

/// Lorentz-model hyperbolic geometry with curvature -c.
///
/// Points live on the upper sheet of the hyperboloid <u,u>_L = -1/c in
/// (n+1)-dimensional spacetime; they are stored as a spatial part plus a time
/// component. Every kernel here is a pure function of its arguments.
namespace delst::lorentz {

/// Magnitude c of the negative curvature -c. Always > 0.
class Curvature {
public:
    constexpr Curvature() = default;
    explicit Curvature(double c) : c_(c) { require(c > 0.0, "curvature must be > 0"); }
    constexpr double value() const { return c_; }

private:
    double c_ = 1.0;
};

/// Entailment-cone constants; k_aper bounds the aperture near the origin.
struct ConeConstants {
    double k_aper = 0.1;
};

/// Vector in the tangent space at the origin (time component implicitly 0).
struct TangentVec {
    std::vector<double> space;
};

struct HyperPoint {
    std::vector<double> space;
    double time = 0.0;

    std::size_t dim() const { return space.size(); }
};

/// Origin of the hyperboloid: space = 0, time = 1/sqrt(c).
HyperPoint origin(std::size_t dim, Curvature c);

double lorentz_inner(const HyperPoint& u, const HyperPoint& v);
double lorentz_inner(const TangentVec& u, const TangentVec& v);

/// Time component that puts `space` on the hyperboloid.
double time_from_space(std::span<const double> space, Curvature c);

/// Returns |c * <u,u>_L + 1|, the distance from the hyperboloid constraint.
double hyperboloid_residual(const HyperPoint& u, Curvature c);

/// sinh(x)/x, with the two-term Taylor expansion below |x| = 1e-6.
double sinhc(double x);

/// Exponential map at the origin.
HyperPoint exp_map(const TangentVec& p, Curvature c);

/// Half-aperture of the entailment cone at g, in (0, pi/2].
/// The asin argument is clamped to [-1, 1]; g at the origin gives pi/2.
double half_aperture(const HyperPoint& g, ConeConstants k, Curvature c);

/// Floor under the square root of the exterior-angle denominator.
inline constexpr double kExteriorEps = 1e-12;

/// Exterior angle of i as seen from g, in [0, pi].
///
/// Coincident pairs ((c<g,i>_L)^2 - 1 below the epsilon floor) and g at the
/// origin return 0 and bump the degenerate-pair counter.
double exterior_angle(const HyperPoint& g, const HyperPoint& i, Curvature c);

/// max(0, ext(g, i) - aper(g)); zero iff i lies in the cone of g.
double cone_violation(const HyperPoint& g, const HyperPoint& i, ConeConstants k, Curvature c);

/// Number of degenerate pairs seen by exterior_angle since process start.
std::uint64_t degenerate_pair_count();

}  // namespace delst::lorentz
