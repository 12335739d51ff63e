#pragma once

// Gateaux derivatives of Y -> X^{t,Y} along deterministic or per-sample
// direction paths. The first two orders solve the variational equations
// directly; any order goes through the fixed-point derivative recursion
// with psi as the parametric contraction.

#include <span>
#include <string>
#include <vector>

#include "pathsde/fixedpoint.hpp"
#include "pathsde/sde.hpp"

namespace pathsde {

class VariationSolver {
public:
    // `base` is the solved X^{t,Y}; the model must outlive the solver.
    VariationSolver(const MildModel& model, Ensemble base, int t, double tol = 1e-12,
                    int max_iter = 0);

    const MildModel& model() const { return *model_; }
    const Ensemble& base() const { return base_; }
    int initial_time() const { return t_; }
    int samples() const { return base_.size(); }

    // D psi[z] = S * d_z F_b(X) + S *^{dW} d_z F_sigma(X) for one sample.
    Path linearized(int sample, const Path& z) const;
    // S * d^j F_b(X)[zs] + S *^{dW} d^j F_sigma(X)[zs], j = zs.size() >= 1.
    Path source(int sample, std::span<const Path* const> zs) const;

    // z = id_t^S(Y1) + D psi[z].
    Ensemble first_variation(const Ensemble& y1) const;
    // z = source(z1, z2) + D psi[z] with z_i the first variations.
    Ensemble second_variation(const Ensemble& y1, const Ensemble& y2) const;
    // Same, from precomputed first variations z1, z2.
    Ensemble second_variation_from(const Ensemble& z1, const Ensemble& z2) const;
    // Generic order j = dirs.size() through derivative_n.
    Ensemble nth_variation(std::span<const Ensemble> dirs) const;

private:
    Ensemble solve_linear(const std::vector<Path>& rhs) const;
    void require_order(int order) const;

    const MildModel* model_;
    Ensemble base_;
    int t_;
    double tol_;
    int max_iter_;
};

// Terminal functionals phi(X) of the solution.
struct TerminalFunctional {
    enum class Kind { coordinate, sup_norm, energy };
    Kind kind = Kind::coordinate;
    int index = 0;

    // "coordinate", "sup_norm", "energy" (|X_T|^2 / 2).
    static TerminalFunctional parse(const std::string& name, int index = 0);
    std::string name() const;
    bool smooth() const { return kind != Kind::sup_norm; }
    double value(const Path& x) const;
    // phi'(x)[z]; throws CapabilityError for non-smooth functionals.
    double derivative(const Path& x, const Path& z) const;
};

struct MonteCarloEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

// Direction 1_{[t, T]} y, the vertical perturbation at time index t.
Path step_direction(const SpaceSpec& spec, int t, const Vector& y);

// E[phi'(X^{t,Y})[d_{Y1} X]] with Y1 = 1_{[t,T]} y.
MonteCarloEstimate vertical_derivative(const VariationSolver& v, const Vector& y,
                                       const TerminalFunctional& phi);

// Central-difference estimate of d^j X along dirs on the model's noise panel:
// nested central differences, or the 3- and 5-point stencils when every
// direction is the same path.
Ensemble central_difference(const MildModel& model, const Ensemble& y, int t,
                            std::span<const Ensemble> dirs, double eps);

struct FdLadderEntry {
    double eps = 0.0;
    double relative_error = 0.0;
};

struct FdComparison {
    std::vector<FdLadderEntry> ladder;
    double best_error = 0.0;
    double best_eps = 0.0;
    double observed_order = 0.0;  // log-log slope of error in eps over the ladder
    Ensemble best_fd;
};

// Runs central_difference for eps in {1e-2, 1e-3, 1e-4} (or `ladder`) and
// compares with `derivative` in the plain ensemble p-norm.
FdComparison compare_with_fd(const MildModel& model, const Ensemble& y, int t,
                             std::span<const Ensemble> dirs, const Ensemble& derivative,
                             std::vector<double> ladder = {1e-2, 1e-3, 1e-4});

// Bound on |d^k X| over unit directions assembled from the fixed-point
// derivative recursion with contraction factor 1/2, the declared M'', g, c,
// and the equivalence factor e^{lambda T} per direction.
double variation_bound(const MildModel& model, int order);

}  // namespace pathsde
