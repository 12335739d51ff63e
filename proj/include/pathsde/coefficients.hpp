#pragma once

// Built-in drift and diffusion functionals. Each part carries its own
// bounds; make_coefficients combines a drift and a diffusion part with the
// semigroup bound M' into Coefficients with the bound metadata filled in.

#include <string>
#include <vector>

#include "pathsde/hilbert.hpp"
#include "pathsde/sde.hpp"

namespace pathsde {

struct DriftPart {
    std::string kind;
    DriftFn f;  // empty: zero drift
    DriftDerivativeFn d;
    int order = 0;
    double g = 0.0;                 // growth and Lipschitz constant (constant in time)
    double derivative_bound = 0.0;  // |d^j b| along unit directions, j = 1..order
    double radius = std::numeric_limits<double>::infinity();
};

struct DiffusionPart {
    std::string kind;
    DiffusionFn f;  // empty: zero diffusion
    DiffusionDerivativeFn d;
    int order = 0;
    double growth = 0.0;  // |sigma(x)|_F <= growth (1 + |x|) and the Lipschitz analogue
    Vector column_derivative_bounds;  // |d^j sigma e_m| along unit directions
    bool path_free = false;
    double radius = std::numeric_limits<double>::infinity();
};

// Order reported by parts whose derivatives of every order are supplied.
inline constexpr int kAnyOrder = 1 << 20;

DriftPart zero_drift();
// b = b0.
DriftPart constant_drift(Vector b0);
// b = B x(s) + b0.
DriftPart linear_drift(Matrix b, Vector b0);
// b = B int_0^s x_r dr + b0, integral by the grid trapezoid rule.
DriftPart running_integral_drift(Matrix b, Vector b0, const SpaceSpec& spec);
// b = B max_{r <= s} x_r, coordinatewise maximum; not differentiable.
DriftPart running_max_drift(Matrix b);
// b = values[k] at grid index k.
DriftPart tabulated_drift(std::vector<Vector> values);
// b_i = sum_k a_k x_i(s)^k; bounds hold on paths with sup norm <= radius.
DriftPart polynomial_drift(std::vector<double> a, int dim, double radius);
// b = a .* sin(W x(s) + V int_0^s x_r dr + c).
DriftPart sine_drift(Vector a, Matrix w, Matrix v, Vector c, const SpaceSpec& spec);

DiffusionPart zero_diffusion();
// sigma = S0.
DiffusionPart constant_diffusion(Matrix s0);
// sigma = S0 + diag(x(s)) S1.
DiffusionPart linear_diffusion(Matrix s0, Matrix s1);
// sigma = S0 + diag(a .* sin(W x(s) + c)) S1.
DiffusionPart sine_diffusion(Matrix s0, Vector a, Matrix w, Vector c, Matrix s1);
// sigma = values[k] at grid index k.
DiffusionPart tabulated_diffusion(std::vector<Matrix> values);

// a + w b, with bounds added accordingly.
DriftPart add_drift(const DriftPart& a, const DriftPart& b, double w);
DiffusionPart add_diffusion(const DiffusionPart& a, const DiffusionPart& b, double w);

Coefficients make_coefficients(const DriftPart& b, const DiffusionPart& sigma, int dim_h,
                               int dim_u, double m_prime);

}  // namespace pathsde
