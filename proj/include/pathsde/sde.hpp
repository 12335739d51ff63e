#pragma once

// Path-dependent coefficients, Monte Carlo ensembles, and the mild
// solution X = psi(Y, X) with
//   psi(Y, X) = id_t^S(Y) + S *_t F_b(X) + S *^{dW}_t F_sigma(X),
// found by Picard iteration on a fixed noise panel.

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathsde/convolution.hpp"
#include "pathsde/hilbert.hpp"
#include "pathsde/noise.hpp"
#include "pathsde/types.hpp"

namespace pathsde {

// b((omega, s), x) and sigma((omega, s), x): omega is the sample index,
// s the grid index, and x is already stopped at s.
using DriftFn = std::function<void(int sample, int step, const PathView& x, Eigen::Ref<Vector> out)>;
using DiffusionFn =
    std::function<void(int sample, int step, const PathView& x, Eigen::Ref<Matrix> out)>;
// j-th Gateaux derivative in x along ys (j = ys.size() >= 1).
using DriftDerivativeFn = std::function<void(int sample, int step, const PathView& x,
                                             std::span<const PathView> ys, Eigen::Ref<Vector> out)>;
using DiffusionDerivativeFn = std::function<void(int sample, int step, const PathView& x,
                                                 std::span<const PathView> ys,
                                                 Eigen::Ref<Matrix> out)>;

struct Coefficients {
    std::string name;
    int dim_h = 1;
    int dim_u = 1;
    DriftFn drift;          // empty: b = 0
    DiffusionFn diffusion;  // empty: sigma = 0
    DriftDerivativeFn drift_derivative;
    DiffusionDerivativeFn diffusion_derivative;
    int order = 0;  // highest derivative order supplied

    // |b| <= g(s)(1 + |x|), |b(x) - b(x')| <= g(s)|x - x'|; empty means g = 0.
    std::function<double(double)> g;
    // |S_t sigma(x)|_F <= M t^{-gamma}(1 + |x|) and the Lipschitz analogue.
    double m_bound = 0.0;
    double gamma = 0.0;
    // Derivative bounds: |d^j b| <= M'' g(s), |S_t d^j(sigma e_m)| <= M'' t^{-gamma} c_m.
    double m2_bound = 0.0;
    Vector c_weights;
    // Growth and Lipschitz bounds are claimed on paths with sup norm <= this.
    double audit_radius = std::numeric_limits<double>::infinity();
    // sigma ignores x: the stochastic convolution is computed once per solve.
    bool diffusion_path_free = false;

    double g_at(double s) const { return g ? g(s) : 0.0; }
};

// Monte Carlo samples on one grid, with the noise panel that drives them.
// A single stored path is broadcast to every sample of the panel.
class Ensemble {
public:
    Ensemble() = default;
    Ensemble(std::vector<Path> samples, std::shared_ptr<const NoisePanel> panel, double p);
    static Ensemble broadcast(Path x, std::shared_ptr<const NoisePanel> panel, double p);

    int size() const;
    bool is_broadcast() const { return broadcast_; }
    const Path& operator[](int i) const { return samples_[broadcast_ ? 0 : i]; }
    const std::vector<Path>& stored() const { return samples_; }
    const std::shared_ptr<const NoisePanel>& panel() const { return panel_; }
    double p() const { return p_; }
    // Every sample as its own path (copies broadcast data).
    std::vector<Path> materialize() const;

private:
    std::vector<Path> samples_;
    std::shared_ptr<const NoisePanel> panel_;
    double p_ = 4.0;
    bool broadcast_ = false;
};

// (E[sup_k e^{-lambda p t_k} |X_k|^p])^{1/p} over the ensemble.
double weighted_norm(const Ensemble& x, double lambda, double dt);
// Ensemble norm of the difference a - b.
double difference_norm(const Ensemble& a, const Ensemble& b, double p, double lambda, double dt);

struct SolverConfig {
    double p = 4.0;
    double beta = 0.0;     // 0: midpoint of (1/p, 1/2 - gamma)
    double lambda = -1.0;  // < 0: chosen by pick_lambda
    double tol = 1e-8;
    int max_iter = 200;
};

// p > p* = 2 / (1 - 2 gamma), beta in (1/p, 1/2 - gamma), tol > 0, max_iter >= 1.
// Throws ConfigError naming the field.
void validate_config(const SolverConfig& cfg, const Coefficients& c);
double default_beta(double p, double gamma);

struct LambdaChoice {
    double lambda = 1.0;
    double drift_constant = 0.0;      // C_{lambda, g, M'}
    double diffusion_constant = 0.0;  // c''_{beta, gamma, T, p, M, lambda}
    int doublings = 0;
};

// Drift constant M' sup_{t'} int_0^{t'} e^{-lambda v} g(t' - v) dv.
double drift_contraction_constant(const std::function<double(double)>& g, double m_prime,
                                  double horizon, double lambda);
// (c')^{1/p} M (int_0^T (int_0^t v^{-2(beta+gamma)} e^{-lambda v} dv)^{p/2} dt)^{1/p}.
double diffusion_contraction_constant(double m, double gamma, double beta, double p,
                                      double horizon, double lambda);
// Doubles lambda from 1 until the two constants sum to at most 1/2.
// Throws ConfigError("solver.lambda") after 60 doublings.
LambdaChoice pick_lambda(const Coefficients& c, const Semigroup& s, double p, double beta);

struct CoefficientAudit {
    double drift_growth = 0.0;  // worst |b| / (g (1 + |x|))
    double drift_lipschitz = 0.0;
    double diffusion_growth = 0.0;
    double diffusion_lipschitz = 0.0;
};

// Spot checks of the declared g and M on random paths inside audit_radius.
// Throws ConfigError("coefficients.g" / "coefficients.M") on a violation.
CoefficientAudit audit_coefficients(const Coefficients& c, const Semigroup& s,
                                    const SpaceSpec& spec, int trials = 32,
                                    unsigned long long seed = 1);

struct MildSolution {
    Ensemble paths;
    int iterations = 0;
    double lambda = 0.0;
    std::vector<double> sup_increments;       // max over samples of sup-norm increments
    std::vector<double> weighted_increments;  // log of the lambda-weighted p-norm
    std::vector<double> ratios;               // successive weighted-norm ratios
    double max_ratio = 0.0;
};

class MildModel {
public:
    MildModel(SpaceSpec spec, Semigroup semigroup, Coefficients coefficients, SolverConfig cfg);

    const SpaceSpec& spec() const { return spec_; }
    const Semigroup& semigroup() const { return semigroup_; }
    const Coefficients& coefficients() const { return coeffs_; }
    const SolverConfig& config() const { return cfg_; }
    const SemigroupGrid& grid() const { return *grid_; }
    const FactorizedConvolver& convolver() const { return *conv_; }
    const LambdaChoice& lambda_choice() const { return lambda_; }
    double lambda() const { return lambda_.lambda; }

    // Y on [0, t], S_{t' - t} Y_t afterwards.
    Path id_t_S(const Path& y, int t) const;
    Ensemble id_t_S(const Ensemble& y, int t) const;

    // F_b(X) at grid indices >= start (zero before).
    Matrix drift_values(int sample, const Path& x, int start) const;
    // Columns sigma(t_k, X) dW_k for k >= start (zero before).
    Matrix diffusion_forcing(int sample, const Path& x, const NoisePanel& w, int start) const;

    // One sample of psi(Y, X).
    Path psi_sample(int sample, const Path& y, const Path& x, int t, const NoisePanel* w) const;
    Ensemble psi_apply(const Ensemble& y, const Ensemble& x, int t) const;

    // Picard from X0 = id_t^S(Y), or from `initial` when given, until every
    // sample's sup-norm increment is below tol or at the rounding floor.
    // Throws ModelBoundError when the weighted increment ratio reaches 1 twice
    // in a row, ConvergenceError when max_iter is exhausted.
    MildSolution solve(const Ensemble& y, int t, const Ensemble* initial = nullptr) const;

    // |X^{t,y} - X^{t,y'}| / |y - y'| in the plain ensemble p-norm.
    double lipschitz_probe(int t, const Ensemble& y, const Ensemble& y2) const;
    // 2 max(1, M') e^{lambda T}: Lipschitz bound implied by contraction factor 1/2.
    double lipschitz_bound() const;

private:
    SpaceSpec spec_;
    Semigroup semigroup_;
    Coefficients coeffs_;
    SolverConfig cfg_;
    std::unique_ptr<SemigroupGrid> grid_;
    std::unique_ptr<FactorizedConvolver> conv_;
    LambdaChoice lambda_;
};

}  // namespace pathsde
