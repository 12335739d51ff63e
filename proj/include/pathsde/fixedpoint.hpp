#pragma once

// Parametric contractions y = h(u, y): Picard solution of the fixed point
// phi(u), the Neumann-series resolvent (I - D_y h)^{-1}, and derivatives of
// phi of any order through the partition recursion over direction subsets.

#include <functional>
#include <optional>
#include <span>

#include "pathsde/types.hpp"

namespace pathsde {

// d^{|xs|+|ys|} h(u, y) along parameter directions xs and state directions ys.
using MixedDerivative = std::function<Vector(const Vector& u, const Vector& y,
                                             std::span<const Vector> xs,
                                             std::span<const Vector> ys)>;

struct ContractionProblem {
    std::function<Vector(const Vector& u, const Vector& y)> h;
    // Lipschitz modulus of h in y, in [0, 1).
    double alpha = 0.5;
    MixedDerivative d_mixed;
    // Optional fast path for D_y h(u, y)[v]; falls back to d_mixed.
    std::function<Vector(const Vector& u, const Vector& y, const Vector& v)> d_state;
    // Highest total order d_mixed supports.
    int order = 1;
    // Optional increasing concave modulus of continuity of h in u.
    std::function<double(double)> modulus_w;
    // State-space norm; Euclidean when empty.
    std::function<double(const Vector&)> norm;
    // Picard starting state when phi(u) is not supplied; fixes the state dimension.
    Vector initial_state;
    // Region where the contraction estimate is claimed (local contractions).
    std::function<bool(const Vector& u, const Vector& y)> trust_region;
    // Consecutive non-decreasing Neumann terms tolerated before giving up.
    // Causal maps whose contraction holds only in a weighted norm can grow
    // for a while in the norm above before collapsing.
    int divergence_patience = 2;

    double measure(const Vector& v) const { return norm ? norm(v) : v.norm(); }
    Vector param_derivative(const Vector& u, const Vector& y, const Vector& x) const;
    Vector state_derivative(const Vector& u, const Vector& y, const Vector& v) const;
};

struct FixedPointResult {
    Vector value;
    int iterations = 0;
    double residual = 0.0;
};

// Picard iteration stopped by the a priori bound, so |value - phi(u)| <= tol.
// Throws ConvergenceError when the iteration count implied by alpha is exceeded.
FixedPointResult solve(const ContractionProblem& p, const Vector& u, const Vector& y0,
                       double tol);

// (I - D_y h(u, y))^{-1} v by the truncated Neumann series, residual <= tol.
// Throws ContractionError when term norms stop decreasing.
Vector resolvent_apply(const ContractionProblem& p, const Vector& u, const Vector& y,
                       const Vector& v, double tol);

// d_x phi(u) = (I - D_y h)^{-1} D_x h at (u, phi(u)).
Vector derivative_first(const ContractionProblem& p, const Vector& u, const Vector& x,
                        double tol);

// d^j phi(u) along xs, j = xs.size() >= 1. Lower-order derivatives over
// every subset of xs are computed once and reused. `fixed_point`, when
// given, is taken as phi(u) instead of solving for it.
Vector derivative_n(const ContractionProblem& p, const Vector& u, std::span<const Vector> xs,
                    double tol, const std::optional<Vector>& fixed_point = std::nullopt);

// Bound on |d^k phi| over unit directions when every h-derivative is
// bounded by m: the recursion above run on magnitudes, with the
// resolvent bounded by 1 / (1 - alpha).
double uniform_derivative_bound(double alpha, double m, int order);

// Largest deviation of d_mixed under permutations of xs and of ys.
double mixed_symmetry_defect(const ContractionProblem& p, const Vector& u, const Vector& y,
                             std::span<const Vector> xs, std::span<const Vector> ys);

}  // namespace pathsde
