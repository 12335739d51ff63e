#include "pathsde/sde.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "pathsde/errors.hpp"
#include "pathsde/parallel.hpp"

namespace pathsde {

Ensemble::Ensemble(std::vector<Path> samples, std::shared_ptr<const NoisePanel> panel, double p)
    : samples_(std::move(samples)), panel_(std::move(panel)), p_(p) {
    if (samples_.empty()) throw ArgumentError("empty ensemble");
    if (panel_ && static_cast<int>(samples_.size()) != panel_->samples()) {
        throw ArgumentError("ensemble size differs from its noise panel");
    }
    for (const auto& s : samples_) {
        if (s.steps() != samples_.front().steps() || s.dim() != samples_.front().dim()) {
            throw ArgumentError("ensemble samples live on different grids");
        }
    }
}

Ensemble Ensemble::broadcast(Path x, std::shared_ptr<const NoisePanel> panel, double p) {
    Ensemble e;
    e.samples_.push_back(std::move(x));
    e.panel_ = std::move(panel);
    e.p_ = p;
    e.broadcast_ = true;
    return e;
}

int Ensemble::size() const {
    if (broadcast_) return panel_ ? panel_->samples() : 1;
    return static_cast<int>(samples_.size());
}

std::vector<Path> Ensemble::materialize() const {
    std::vector<Path> out;
    out.reserve(size());
    for (int i = 0; i < size(); ++i) out.push_back((*this)[i]);
    return out;
}

double weighted_norm(const Ensemble& x, double lambda, double dt) {
    return ensemble_norm(x.stored(), x.p(), lambda, dt);
}

double difference_norm(const Ensemble& a, const Ensemble& b, double p, double lambda, double dt) {
    const int n = std::max(a.size(), b.size());
    if ((a.size() != n && a.size() != 1) || (b.size() != n && b.size() != 1)) {
        throw ArgumentError("ensembles of different sizes");
    }
    std::vector<Path> diff(n);
    for (int i = 0; i < n; ++i) diff[i] = a[a.size() == 1 ? 0 : i] - b[b.size() == 1 ? 0 : i];
    return ensemble_norm(diff, p, lambda, dt);
}

double default_beta(double p, double gamma) { return 0.5 * (1.0 / p + 0.5 - gamma); }

void validate_config(const SolverConfig& cfg, const Coefficients& c) {
    if (!(c.gamma >= 0.0 && c.gamma < 0.5)) {
        throw ConfigError("coefficients.gamma", "must lie in [0, 1/2)");
    }
    const double p_star = 2.0 / (1.0 - 2.0 * c.gamma);
    if (!(cfg.p > p_star)) {
        throw ConfigError("solver.p", "must exceed p* = " + std::to_string(p_star));
    }
    const double beta = cfg.beta > 0.0 ? cfg.beta : default_beta(cfg.p, c.gamma);
    if (!(beta > 1.0 / cfg.p && beta < 0.5 - c.gamma)) {
        throw ConfigError("solver.beta", "must lie in (1/p, 1/2 - gamma) = (" +
                                             std::to_string(1.0 / cfg.p) + ", " +
                                             std::to_string(0.5 - c.gamma) + ")");
    }
    if (!(cfg.tol > 0.0)) throw ConfigError("solver.tol", "must be positive");
    if (cfg.max_iter < 1) throw ConfigError("solver.max_iter", "must be at least 1");
    if (c.m_bound < 0.0) throw ConfigError("coefficients.M", "must be non-negative");
}

double drift_contraction_constant(const std::function<double(double)>& g, double m_prime,
                                  double horizon, double lambda) {
    if (!g) return 0.0;
    constexpr int kProbes = 64;
    double best = 0.0;
    for (int i = 1; i <= kProbes; ++i) {
        const double t = horizon * i / kProbes;
        auto f = [&](double v) { return std::exp(-lambda * v) * g(t - v); };
        const double value =
            boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, t, 15, 1e-12);
        best = std::max(best, value);
    }
    return m_prime * best;
}

double diffusion_contraction_constant(double m, double gamma, double beta, double p,
                                      double horizon, double lambda) {
    if (m == 0.0) return 0.0;
    const double a = 2.0 * (beta + gamma);
    if (!(a < 1.0)) throw ArgumentError("diffusion constant needs beta + gamma < 1/2");
    // int_0^t v^{-a} e^{-lambda v} dv = lambda^{a-1} gamma_lower(1 - a, lambda t)
    auto inner = [&](double t) {
        if (t <= 0.0) return 0.0;
        if (lambda == 0.0) return std::pow(t, 1.0 - a) / (1.0 - a);
        return std::pow(lambda, a - 1.0) * boost::math::tgamma_lower(1.0 - a, lambda * t);
    };
    auto outer = [&](double t) { return std::pow(inner(t), p / 2.0); };
    const double integral =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(outer, 0.0, horizon, 15, 1e-12);
    return std::pow(factorization_constant(beta, p, horizon), 1.0 / p) * m *
           std::pow(integral, 1.0 / p);
}

LambdaChoice pick_lambda(const Coefficients& c, const Semigroup& s, double p, double beta) {
    LambdaChoice choice;
    double lambda = 1.0;
    for (int d = 0; d <= 60; ++d) {
        const double drift = drift_contraction_constant(c.g, s.bound(), s.horizon(), lambda);
        const double diff =
            diffusion_contraction_constant(c.m_bound, c.gamma, beta, p, s.horizon(), lambda);
        if (drift + diff <= 0.5) {
            choice.lambda = lambda;
            choice.drift_constant = drift;
            choice.diffusion_constant = diff;
            choice.doublings = d;
            return choice;
        }
        lambda *= 2.0;
    }
    throw ConfigError("solver.lambda", "no lambda <= 2^60 makes psi a 1/2-contraction");
}

namespace {

Path random_walk(std::mt19937_64& rng, int dim, int steps, double radius) {
    std::normal_distribution<double> n;
    Path x(dim, steps);
    for (int i = 0; i < dim; ++i) x.values()(i, 0) = n(rng);
    for (int k = 1; k <= steps; ++k) {
        for (int i = 0; i < dim; ++i) x.values()(i, k) = x.values()(i, k - 1) + n(rng) / std::sqrt(steps);
    }
    const double sup = x.sup_norm();
    std::uniform_real_distribution<double> scale(0.0, 1.0);
    if (std::isfinite(radius)) {
        x *= radius * scale(rng) / sup;
    } else {
        x *= 3.0 * scale(rng);
    }
    return x;
}

}  // namespace

CoefficientAudit audit_coefficients(const Coefficients& c, const Semigroup& s,
                                    const SpaceSpec& spec, int trials, unsigned long long seed) {
    CoefficientAudit audit;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> step(0, spec.steps);
    std::uniform_real_distribution<double> lag(0.0, 1.0);
    Vector b1(spec.dim_h), b2(spec.dim_h);
    Matrix s1(spec.dim_h, spec.dim_u), s2(spec.dim_h, spec.dim_u);
    for (int trial = 0; trial < trials; ++trial) {
        const Path x = random_walk(rng, spec.dim_h, spec.steps, c.audit_radius);
        const Path y = random_walk(rng, spec.dim_h, spec.steps, c.audit_radius);
        const int k = step(rng);
        const PathView vx(x, k), vy(y, k);
        const double nx = stop_path(x, k).sup_norm();
        const double dxy = stop_path(x - y, k).sup_norm();
        if (c.drift) {
            c.drift(trial, k, vx, b1);
            c.drift(trial, k, vy, b2);
            const double g = c.g_at(spec.time(k));
            const double growth = b1.norm() / (g * (1.0 + nx));
            const double lip = dxy > 0 ? (b1 - b2).norm() / (g * dxy) : 0.0;
            audit.drift_growth = std::max(audit.drift_growth, b1.norm() == 0 ? 0.0 : growth);
            audit.drift_lipschitz = std::max(audit.drift_lipschitz, (b1 - b2).norm() == 0 ? 0.0 : lip);
        }
        if (c.diffusion) {
            c.diffusion(trial, k, vx, s1);
            c.diffusion(trial, k, vy, s2);
            const double t = std::max(lag(rng), 1e-3) * s.horizon();
            const Matrix st = s.at(t);
            const double weight = c.m_bound * std::pow(t, -c.gamma);
            const double g1 = (st * s1).norm(), d12 = (st * (s1 - s2)).norm();
            audit.diffusion_growth =
                std::max(audit.diffusion_growth, g1 == 0 ? 0.0 : g1 / (weight * (1.0 + nx)));
            audit.diffusion_lipschitz =
                std::max(audit.diffusion_lipschitz, d12 == 0 ? 0.0 : d12 / (weight * dxy));
        }
    }
    constexpr double slack = 1.0 + 1e-9;
    if (audit.drift_growth > slack || audit.drift_lipschitz > slack) {
        throw ConfigError("coefficients.g", "drift exceeds the declared bound g (worst ratio " +
                                                std::to_string(std::max(audit.drift_growth,
                                                                        audit.drift_lipschitz)) +
                                                ")");
    }
    if (audit.diffusion_growth > slack || audit.diffusion_lipschitz > slack) {
        throw ConfigError("coefficients.M", "diffusion exceeds the declared bound M (worst ratio " +
                                                std::to_string(std::max(audit.diffusion_growth,
                                                                        audit.diffusion_lipschitz)) +
                                                ")");
    }
    return audit;
}

MildModel::MildModel(SpaceSpec spec, Semigroup semigroup, Coefficients coefficients,
                     SolverConfig cfg)
    : spec_(spec), semigroup_(std::move(semigroup)), coeffs_(std::move(coefficients)), cfg_(cfg) {
    spec_.validate();
    if (coeffs_.dim_h != spec_.dim_h || coeffs_.dim_u != spec_.dim_u) {
        throw ConfigError("coefficients", "dimensions differ from the space spec");
    }
    validate_config(cfg_, coeffs_);
    if (cfg_.beta <= 0.0) cfg_.beta = default_beta(cfg_.p, coeffs_.gamma);
    grid_ = std::make_unique<SemigroupGrid>(semigroup_, spec_);
    conv_ = std::make_unique<FactorizedConvolver>(*grid_, FactorizationParams(cfg_.beta));
    if (cfg_.lambda < 0.0) {
        lambda_ = pick_lambda(coeffs_, semigroup_, cfg_.p, cfg_.beta);
        cfg_.lambda = lambda_.lambda;
    } else {
        lambda_.lambda = cfg_.lambda;
        lambda_.drift_constant =
            drift_contraction_constant(coeffs_.g, semigroup_.bound(), spec_.horizon, cfg_.lambda);
        lambda_.diffusion_constant = diffusion_contraction_constant(
            coeffs_.m_bound, coeffs_.gamma, cfg_.beta, cfg_.p, spec_.horizon, cfg_.lambda);
    }
}

Path MildModel::id_t_S(const Path& y, int t) const {
    if (t < 0 || t > spec_.steps) throw ArgumentError("initial time outside the grid");
    Path out = y;
    const Vector yt = y.at(t);
    for (int k = t + 1; k <= spec_.steps; ++k) grid_->apply(k - t, yt, out.at(k));
    return out;
}

Ensemble MildModel::id_t_S(const Ensemble& y, int t) const {
    if (y.is_broadcast()) return Ensemble::broadcast(id_t_S(y[0], t), y.panel(), y.p());
    std::vector<Path> out(y.size());
    parallel_for(y.size(), [&](int i) { out[i] = id_t_S(y[i], t); });
    return Ensemble(std::move(out), y.panel(), y.p());
}

Matrix MildModel::drift_values(int sample, const Path& x, int start) const {
    Matrix out = Matrix::Zero(spec_.dim_h, spec_.steps + 1);
    if (!coeffs_.drift) return out;
    for (int k = start; k <= spec_.steps; ++k) coeffs_.drift(sample, k, PathView(x, k), out.col(k));
    return out;
}

Matrix MildModel::diffusion_forcing(int sample, const Path& x, const NoisePanel& w,
                                    int start) const {
    Matrix out = Matrix::Zero(spec_.dim_h, spec_.steps);
    if (!coeffs_.diffusion) return out;
    const Matrix dw = w.increments(sample);
    Matrix sigma(spec_.dim_h, spec_.dim_u);
    for (int k = start; k < spec_.steps; ++k) {
        coeffs_.diffusion(sample, k, PathView(x, k), sigma);
        out.col(k).noalias() = sigma * dw.col(k);
    }
    return out;
}

Path MildModel::psi_sample(int sample, const Path& y, const Path& x, int t,
                           const NoisePanel* w) const {
    Path out = id_t_S(y, t);
    if (coeffs_.drift) out += det_convolve(*grid_, t, Path(drift_values(sample, x, t)));
    if (coeffs_.diffusion) {
        if (!w) throw ArgumentError("diffusion needs a noise panel");
        out += conv_->apply(t, diffusion_forcing(sample, x, *w, t));
    }
    return out;
}

Ensemble MildModel::psi_apply(const Ensemble& y, const Ensemble& x, int t) const {
    const auto& panel = x.panel() ? x.panel() : y.panel();
    const int n = panel ? panel->samples() : std::max(y.size(), x.size());
    std::vector<Path> out(n);
    parallel_for(n, [&](int i) { out[i] = psi_sample(i, y[i], x[i], t, panel.get()); });
    return Ensemble(std::move(out), panel, y.p());
}

MildSolution MildModel::solve(const Ensemble& y, int t, const Ensemble* initial) const {
    if (t < 0 || t > spec_.steps) throw ArgumentError("initial time outside the grid");
    const auto& panel = y.panel();
    if (coeffs_.diffusion && !panel) throw ArgumentError("diffusion needs a noise panel");
    const int n = panel ? panel->samples() : y.size();
    const double p = y.p();
    const double lambda = lambda_.lambda;
    const double dt = spec_.dt();

    // samples that cannot differ (no noise, broadcast data) are solved once
    const bool shared = y.is_broadcast() && !coeffs_.diffusion && (!initial || initial->is_broadcast());
    const int m = shared ? 1 : n;

    std::vector<Path> x(m);
    std::vector<Path> base(m);  // id_t^S(Y) plus the path-free stochastic term
    parallel_for(m, [&](int i) {
        base[i] = id_t_S(y[y.size() == 1 ? 0 : i], t);
        if (coeffs_.diffusion && coeffs_.diffusion_path_free) {
            base[i] += conv_->apply(t, diffusion_forcing(i, base[i], *panel, t));
        }
        x[i] = initial ? (*initial)[initial->size() == 1 ? 0 : i] : id_t_S(y[y.size() == 1 ? 0 : i], t);
    });

    MildSolution result;
    result.lambda = lambda;
    // increments below this multiple of the path size are rounding noise
    constexpr double kRoundoff = 256.0 * std::numeric_limits<double>::epsilon();
    std::vector<double> sup_inc(m), log_inc(m), floor_inc(m);
    int rising = 0;
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= cfg_.max_iter; ++iter) {
        parallel_for(m, [&](int i) {
            Path next = base[i];
            if (coeffs_.drift) next += det_convolve(*grid_, t, Path(drift_values(i, x[i], t)));
            if (coeffs_.diffusion && !coeffs_.diffusion_path_free) {
                next += conv_->apply(t, diffusion_forcing(i, x[i], *panel, t));
            }
            double sup = 0.0, best = neg_inf;
            for (int k = 0; k <= spec_.steps; ++k) {
                const double d = (next.at(k) - x[i].at(k)).norm();
                sup = std::max(sup, d);
                // with large lambda the earliest entries dominate; skip those
                // already at rounding level so the ratio measures contraction
                if (d > kRoundoff * (1.0 + next.at(k).norm())) {
                    best = std::max(best, std::log(d) - lambda * dt * k);
                }
            }
            sup_inc[i] = sup;
            log_inc[i] = p * best;
            floor_inc[i] = kRoundoff * (1.0 + next.sup_norm());
            x[i] = std::move(next);
        });
        double sup = 0.0, top = neg_inf, above_floor = 0.0;
        bool converged = true;
        for (int i = 0; i < m; ++i) {
            sup = std::max(sup, sup_inc[i]);
            top = std::max(top, log_inc[i]);
            above_floor = std::max(above_floor, sup_inc[i] / floor_inc[i]);
            converged = converged && sup_inc[i] <= std::max(cfg_.tol, floor_inc[i]);
        }
        double weighted = neg_inf;
        if (top > neg_inf) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += std::exp(log_inc[i] - top);
            weighted = (top + std::log(acc / m)) / p;
        }
        result.iterations = iter;
        result.sup_increments.push_back(sup);
        if (!result.weighted_increments.empty() && result.weighted_increments.back() > neg_inf &&
            weighted > neg_inf && above_floor > 16.0) {
            const double ratio = std::exp(weighted - result.weighted_increments.back());
            result.ratios.push_back(ratio);
            result.max_ratio = std::max(result.max_ratio, ratio);
            rising = ratio >= 1.0 ? rising + 1 : 0;
            if (rising >= 2) {
                throw ModelBoundError("Picard increments stopped shrinking (ratio " +
                                      std::to_string(ratio) +
                                      "); the declared bounds g, M do not hold");
            }
        }
        result.weighted_increments.push_back(weighted);
        if (converged) {
            if (shared) {
                result.paths = Ensemble::broadcast(std::move(x[0]), panel, p);
            } else {
                result.paths = Ensemble(std::move(x), panel, p);
            }
            return result;
        }
    }
    throw ConvergenceError("Picard iteration did not reach tol " + std::to_string(cfg_.tol) +
                           " within " + std::to_string(cfg_.max_iter) + " iterations");
}

double MildModel::lipschitz_probe(int t, const Ensemble& y, const Ensemble& y2) const {
    const double p = y.p();
    const double den = difference_norm(y, y2, p, 0.0, spec_.dt());
    if (den == 0.0) throw ArgumentError("lipschitz_probe needs distinct initial data");
    const auto a = solve(y, t);
    const auto b = solve(y2, t);
    return difference_norm(a.paths, b.paths, p, 0.0, spec_.dt()) / den;
}

double MildModel::lipschitz_bound() const {
    return 2.0 * std::max(1.0, semigroup_.bound()) * std::exp(lambda_.lambda * spec_.horizon);
}

}  // namespace pathsde
