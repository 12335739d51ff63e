#include "pathsde/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pathsde/errors.hpp"
#include "pathsde/parallel.hpp"

namespace pathsde {

namespace {

constexpr double kRoundoff = 256.0 * std::numeric_limits<double>::epsilon();

bool all_broadcast(std::span<const Ensemble> es) {
    return std::all_of(es.begin(), es.end(), [](const Ensemble& e) { return e.is_broadcast(); });
}

// sum_l coef_l dirs_l added to y, broadcast when every input is.
Ensemble shifted(const Ensemble& y, std::span<const Ensemble> dirs, std::span<const double> coef) {
    const bool shared = y.is_broadcast() && all_broadcast(dirs);
    const int n = shared ? 1 : y.size();
    std::vector<Path> out(n);
    for (int i = 0; i < n; ++i) {
        Path p = y[i];
        for (std::size_t l = 0; l < dirs.size(); ++l) {
            if (coef[l] != 0.0) p += coef[l] * dirs[l][i];
        }
        out[i] = std::move(p);
    }
    if (shared) return Ensemble::broadcast(std::move(out[0]), y.panel(), y.p());
    return Ensemble(std::move(out), y.panel(), y.p());
}

Ensemble combine(const std::vector<std::pair<double, Ensemble>>& terms) {
    const auto& first = terms.front().second;
    const bool shared = std::all_of(terms.begin(), terms.end(),
                                    [](const auto& t) { return t.second.is_broadcast(); });
    const int n = shared ? 1 : first.size();
    std::vector<Path> out(n);
    for (int i = 0; i < n; ++i) {
        Path acc = terms.front().first * terms.front().second[i];
        for (std::size_t j = 1; j < terms.size(); ++j) acc += terms[j].first * terms[j].second[i];
        out[i] = std::move(acc);
    }
    if (shared) return Ensemble::broadcast(std::move(out[0]), first.panel(), first.p());
    return Ensemble(std::move(out), first.panel(), first.p());
}

}  // namespace

VariationSolver::VariationSolver(const MildModel& model, Ensemble base, int t, double tol,
                                 int max_iter)
    : model_(&model), base_(std::move(base)), t_(t), tol_(tol), max_iter_(max_iter) {
    if (t < 0 || t > model.spec().steps) throw ArgumentError("initial time outside the grid");
    if (max_iter_ <= 0) max_iter_ = 10 * (model.spec().steps + 1) + 100;
    if (model.coefficients().diffusion && !base_.panel()) {
        throw ArgumentError("stochastic base solution without a noise panel");
    }
}

void VariationSolver::require_order(int order) const {
    const auto& c = model_->coefficients();
    if (order > c.order) {
        throw CapabilityError("derivative of order " + std::to_string(order) +
                              " requested; coefficients supply order " + std::to_string(c.order));
    }
    if ((c.drift && !c.drift_derivative) || (c.diffusion && !c.diffusion_derivative)) {
        throw CapabilityError("coefficients do not supply derivative callables");
    }
    if (order > model_->config().p) {
        throw ConfigError("solver.p", "derivative order exceeds the moment order p");
    }
}

Path VariationSolver::source(int sample, std::span<const Path* const> zs) const {
    const auto& c = model_->coefficients();
    const auto& spec = model_->spec();
    const Path& x = base_[sample];
    Path out(spec.dim_h, spec.steps);
    std::vector<PathView> views;
    views.reserve(zs.size());
    if (c.drift) {
        Matrix values = Matrix::Zero(spec.dim_h, spec.steps + 1);
        for (int k = t_; k <= spec.steps; ++k) {
            views.clear();
            for (const Path* z : zs) views.emplace_back(*z, k);
            c.drift_derivative(sample, k, PathView(x, k), views, values.col(k));
        }
        out += det_convolve(model_->grid(), t_, Path(std::move(values)));
    }
    if (c.diffusion && !c.diffusion_path_free) {
        const Matrix dw = base_.panel()->increments(sample);
        Matrix forcing = Matrix::Zero(spec.dim_h, spec.steps);
        Matrix sigma(spec.dim_h, spec.dim_u);
        for (int k = t_; k < spec.steps; ++k) {
            views.clear();
            for (const Path* z : zs) views.emplace_back(*z, k);
            c.diffusion_derivative(sample, k, PathView(x, k), views, sigma);
            forcing.col(k).noalias() = sigma * dw.col(k);
        }
        out += model_->convolver().apply(t_, forcing);
    }
    return out;
}

Path VariationSolver::linearized(int sample, const Path& z) const {
    const Path* zs[] = {&z};
    return source(sample, zs);
}

Ensemble VariationSolver::solve_linear(const std::vector<Path>& rhs) const {
    const int n = static_cast<int>(rhs.size());
    std::vector<Path> out(n);
    parallel_for(n, [&](int i) {
        Path z = rhs[i];
        for (int iter = 1;; ++iter) {
            Path next = rhs[i] + linearized(i, z);
            const double inc = (next.values() - z.values()).cwiseAbs().maxCoeff();
            const double floor = kRoundoff * (1.0 + next.values().cwiseAbs().maxCoeff());
            z = std::move(next);
            if (inc <= std::max(tol_, floor)) break;
            if (iter >= max_iter_) {
                throw ConvergenceError("variational equation did not converge within " +
                                       std::to_string(max_iter_) + " iterations");
            }
        }
        out[i] = std::move(z);
    });
    if (n == 1 && base_.is_broadcast()) {
        return Ensemble::broadcast(std::move(out[0]), base_.panel(), base_.p());
    }
    return Ensemble(std::move(out), base_.panel(), base_.p());
}

Ensemble VariationSolver::first_variation(const Ensemble& y1) const {
    require_order(1);
    const bool shared = base_.is_broadcast() && y1.is_broadcast();
    const int n = shared ? 1 : samples();
    std::vector<Path> rhs(n);
    for (int i = 0; i < n; ++i) rhs[i] = model_->id_t_S(y1[i], t_);
    return solve_linear(rhs);
}

Ensemble VariationSolver::second_variation(const Ensemble& y1, const Ensemble& y2) const {
    require_order(2);
    return second_variation_from(first_variation(y1), first_variation(y2));
}

Ensemble VariationSolver::second_variation_from(const Ensemble& z1, const Ensemble& z2) const {
    require_order(2);
    const bool shared = base_.is_broadcast() && z1.is_broadcast() && z2.is_broadcast();
    const int n = shared ? 1 : samples();
    std::vector<Path> rhs(n);
    parallel_for(n, [&](int i) {
        const Path* zs[] = {&z1[i], &z2[i]};
        rhs[i] = source(i, zs);
    });
    return solve_linear(rhs);
}

Ensemble VariationSolver::nth_variation(std::span<const Ensemble> dirs) const {
    const int order = static_cast<int>(dirs.size());
    if (order < 1) throw ArgumentError("nth_variation needs at least one direction");
    require_order(order);
    const auto& spec = model_->spec();
    const bool shared = base_.is_broadcast() && all_broadcast(dirs);
    const int n = shared ? 1 : samples();
    const Eigen::Index block = static_cast<Eigen::Index>(spec.dim_h) * (spec.steps + 1);

    auto unflatten = [&](const Vector& v, int i) {
        return Path(Matrix(Eigen::Map<const Matrix>(v.data() + i * block, spec.dim_h, spec.steps + 1)));
    };
    auto flatten = [&](auto&& sample_value) {
        Vector out(block * n);
        parallel_for(n, [&](int i) {
            const Path p = sample_value(i);
            out.segment(i * block, block) = Eigen::Map<const Vector>(p.values().data(), block);
        });
        return out;
    };

    Vector fixed_point(block * n);
    for (int i = 0; i < n; ++i) {
        fixed_point.segment(i * block, block) = Eigen::Map<const Vector>(base_[i].values().data(), block);
    }

    ContractionProblem p;
    p.alpha = 0.5;
    p.order = order;
    p.initial_state = fixed_point;
    p.norm = [](const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
    // the linearized psi is causal on the grid: terms may grow for up to one
    // pass over the grid before the series collapses
    p.divergence_patience = spec.steps + 2;
    // Y agrees with X on [0, t], and psi only reads Y there
    p.h = [&, this](const Vector& u, const Vector& x) {
        return flatten([&](int i) {
            Path y = base_[i];
            for (int l = 0; l < order; ++l) y += u[l] * dirs[l][i];
            const Path xi = unflatten(x, i);
            return model_->psi_sample(i, y, xi, t_, base_.panel().get());
        });
    };
    // Derivatives are taken at the base solution, which is the only point
    // derivative_n evaluates them at once the fixed point is supplied.
    p.d_mixed = [&, this](const Vector& u, const Vector& x, std::span<const Vector> xs,
                          std::span<const Vector> ys) -> Vector {
        if (xs.empty() && ys.empty()) return p.h(u, x);
        if (!xs.empty()) {
            if (xs.size() > 1 || !ys.empty()) return Vector::Zero(block * n);
            return flatten([&](int i) {
                Path y(spec.dim_h, spec.steps);
                for (int l = 0; l < order; ++l) {
                    if (xs[0][l] != 0.0) y += xs[0][l] * dirs[l][i];
                }
                return model_->id_t_S(y, t_);
            });
        }
        return flatten([&](int i) {
            std::vector<Path> zs;
            zs.reserve(ys.size());
            for (const auto& v : ys) zs.push_back(unflatten(v, i));
            std::vector<const Path*> ptrs;
            for (const auto& z : zs) ptrs.push_back(&z);
            return source(i, ptrs);
        });
    };
    p.d_state = [&, this](const Vector&, const Vector&, const Vector& v) {
        return flatten([&](int i) { return linearized(i, unflatten(v, i)); });
    };

    std::vector<Vector> xs(order, Vector::Zero(order));
    for (int l = 0; l < order; ++l) xs[l][l] = 1.0;
    const Vector d = derivative_n(p, Vector::Zero(order), xs, tol_, fixed_point);
    std::vector<Path> out(n);
    for (int i = 0; i < n; ++i) out[i] = unflatten(d, i);
    if (shared) return Ensemble::broadcast(std::move(out[0]), base_.panel(), base_.p());
    return Ensemble(std::move(out), base_.panel(), base_.p());
}

TerminalFunctional TerminalFunctional::parse(const std::string& name, int index) {
    TerminalFunctional f;
    f.index = index;
    if (name == "coordinate") {
        f.kind = Kind::coordinate;
    } else if (name == "sup_norm") {
        f.kind = Kind::sup_norm;
    } else if (name == "energy") {
        f.kind = Kind::energy;
    } else {
        throw ConfigError("sensitivity.functional", "unknown functional '" + name + "'");
    }
    return f;
}

std::string TerminalFunctional::name() const {
    switch (kind) {
        case Kind::coordinate: return "coordinate";
        case Kind::sup_norm: return "sup_norm";
        default: return "energy";
    }
}

double TerminalFunctional::value(const Path& x) const {
    const auto xt = x.at(x.steps());
    switch (kind) {
        case Kind::coordinate: return xt[index];
        case Kind::sup_norm: return x.sup_norm();
        default: return 0.5 * xt.squaredNorm();
    }
}

double TerminalFunctional::derivative(const Path& x, const Path& z) const {
    switch (kind) {
        case Kind::coordinate: return z.at(z.steps())[index];
        case Kind::energy: return x.at(x.steps()).dot(z.at(z.steps()));
        default: throw CapabilityError("the sup-norm functional is not differentiable");
    }
}

Path step_direction(const SpaceSpec& spec, int t, const Vector& y) {
    if (y.size() != spec.dim_h) throw ArgumentError("vertical direction has the wrong dimension");
    Path d(spec.dim_h, spec.steps);
    for (int k = t; k <= spec.steps; ++k) d.at(k) = y;
    return d;
}

MonteCarloEstimate vertical_derivative(const VariationSolver& v, const Vector& y,
                                       const TerminalFunctional& phi) {
    if (!phi.smooth()) {
        throw CapabilityError("functional '" + phi.name() + "' has no derivative");
    }
    const auto& model = v.model();
    const auto dir = Ensemble::broadcast(step_direction(model.spec(), v.initial_time(), y),
                                         v.base().panel(), v.base().p());
    const Ensemble z = v.first_variation(dir);
    const int n = z.size();
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) d[i] = phi.derivative(v.base()[i], z[i]);
    MonteCarloEstimate est;
    est.mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
    if (n > 1) {
        double ss = 0.0;
        for (double x : d) ss += (x - est.mean) * (x - est.mean);
        est.standard_error = std::sqrt(ss / (n - 1) / n);
    }
    return est;
}

Ensemble central_difference(const MildModel& model, const Ensemble& y, int t,
                            std::span<const Ensemble> dirs, double eps) {
    const int order = static_cast<int>(dirs.size());
    if (order < 1) throw ArgumentError("central_difference needs a direction");
    bool same = true;
    for (const auto& d : dirs) {
        same = same && d.is_broadcast() && dirs[0].is_broadcast() && d[0] == dirs[0][0];
    }
    auto at = [&](double c) {
        const double coef[] = {c};
        return model.solve(shifted(y, dirs.first(1), coef), t).paths;
    };
    if (order == 1 || (same && order <= 3)) {
        if (order == 1) return combine({{0.5 / eps, at(eps)}, {-0.5 / eps, at(-eps)}});
        if (order == 2) {
            const double e2 = eps * eps;
            return combine({{1.0 / e2, at(eps)}, {-2.0 / e2, at(0.0)}, {1.0 / e2, at(-eps)}});
        }
        const double e3 = 2.0 * eps * eps * eps;
        return combine({{1.0 / e3, at(2 * eps)},
                        {-2.0 / e3, at(eps)},
                        {2.0 / e3, at(-eps)},
                        {-1.0 / e3, at(-2 * eps)}});
    }
    std::vector<std::pair<double, Ensemble>> terms;
    const double scale = 1.0 / std::pow(2.0 * eps, order);
    for (unsigned mask = 0; mask < (1u << order); ++mask) {
        std::vector<double> coef(order);
        double sign = 1.0;
        for (int l = 0; l < order; ++l) {
            const bool minus = mask & (1u << l);
            coef[l] = minus ? -eps : eps;
            if (minus) sign = -sign;
        }
        terms.emplace_back(sign * scale, model.solve(shifted(y, dirs, coef), t).paths);
    }
    return combine(terms);
}

FdComparison compare_with_fd(const MildModel& model, const Ensemble& y, int t,
                             std::span<const Ensemble> dirs, const Ensemble& derivative,
                             std::vector<double> ladder) {
    if (ladder.empty()) throw ArgumentError("empty eps ladder");
    const double dt = model.spec().dt();
    const double p = y.p();
    FdComparison out;
    out.best_error = std::numeric_limits<double>::infinity();
    for (double eps : ladder) {
        Ensemble fd = central_difference(model, y, t, dirs, eps);
        const double scale = weighted_norm(fd, 0.0, dt);
        const double diff = difference_norm(derivative, fd, p, 0.0, dt);
        const double rel = scale > 0.0 ? diff / scale : diff;
        out.ladder.push_back({eps, rel});
        if (rel < out.best_error) {
            out.best_error = rel;
            out.best_eps = eps;
            out.best_fd = std::move(fd);
        }
    }
    if (ladder.size() >= 2) {
        double mx = 0, my = 0;
        for (const auto& e : out.ladder) {
            mx += std::log(e.eps);
            my += std::log(std::max(e.relative_error, 1e-300));
        }
        mx /= out.ladder.size();
        my /= out.ladder.size();
        double sxy = 0, sxx = 0;
        for (const auto& e : out.ladder) {
            const double dx = std::log(e.eps) - mx;
            sxy += dx * (std::log(std::max(e.relative_error, 1e-300)) - my);
            sxx += dx * dx;
        }
        out.observed_order = sxy / sxx;
    }
    return out;
}

double variation_bound(const MildModel& model, int order) {
    const auto& c = model.coefficients();
    const auto& spec = model.spec();
    const double m_prime = model.semigroup().bound();
    double g_integral = 0.0;
    if (c.g) {
        g_integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&](double s) { return c.g(s); }, 0.0, spec.horizon, 15, 1e-12);
    }
    const double c_norm = c.c_weights.size() ? c.c_weights.norm() : 0.0;
    const double noise = diffusion_contraction_constant(c_norm, c.gamma, model.config().beta,
                                                        model.config().p, spec.horizon, 0.0);
    const double m_psi = std::max(std::max(1.0, m_prime), c.m2_bound * (m_prime * g_integral + noise));
    return uniform_derivative_bound(0.5, m_psi, order) *
           std::exp(order * model.lambda() * spec.horizon);
}

}  // namespace pathsde
