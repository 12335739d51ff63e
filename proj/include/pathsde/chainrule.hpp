#pragma once

// Directional derivatives of smooth maps between Euclidean spaces:
// a nested central-difference oracle and the set-partition form of the
// Faa di Bruno chain rule for g(f(u)).

#include <functional>
#include <span>

#include "pathsde/types.hpp"

namespace pathsde {

inline constexpr int kMaxFdOrder = 4;

using VectorMap = std::function<Vector(const Vector&)>;
// (base point, directions) -> derivative of order dirs.size()
using DirectionalMap = std::function<Vector(const Vector&, std::span<const Vector>)>;

struct SmoothMap {
    VectorMap eval;
    // Analytic directional derivatives; empty means finite differences.
    DirectionalMap deriv;
    // Highest derivative order `deriv` supplies.
    int order = 0;
    // Optional domain predicate checked at every stencil point.
    std::function<bool(const Vector&)> domain;

    Vector operator()(const Vector& u) const { return eval(u); }

    // Derivative of order dirs.size() (the value itself for no directions).
    // Throws CapabilityError when the order is not available.
    Vector derivative(const Vector& u, std::span<const Vector> dirs) const;
};

// eps^(1/(order+2)) * (1 + |u|)
double default_fd_step(int order, const Vector& u);

// Nested central differences; O(step^2) error on C^(order+2) maps.
// Throws DomainError if a stencil point falls outside f.domain.
Vector fd_directional(const SmoothMap& f, const Vector& u, std::span<const Vector> dirs,
                      double step);
Vector fd_directional(const SmoothMap& f, const Vector& u, std::span<const Vector> dirs);

// One Richardson step on top of fd_directional: (4 D(h/2) - D(h)) / 3.
Vector fd_richardson(const SmoothMap& f, const Vector& u, std::span<const Vector> dirs,
                     double step);

// d^j/dx_1..dx_j (g o f)(u) as a sum over set partitions of the directions.
Vector faa_di_bruno(const SmoothMap& f, const SmoothMap& g, const Vector& u,
                    std::span<const Vector> dirs);

}  // namespace pathsde
