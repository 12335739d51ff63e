#include "pathsde/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "pathsde/errors.hpp"
#include "pathsde/sensitivity.hpp"

namespace pathsde {

namespace {

constexpr double kJumpTolerance = 1e-12;

std::string member_field(int j, const std::string& rest) {
    return "family.members[" + std::to_string(j) + "]." + rest;
}

double second_difference(const Path& y, int k) {
    return (y.at(k + 1) - 2.0 * y.at(k) + y.at(k - 1)).norm();
}

Ensemble derivative(const VariationSolver& v, const std::vector<Ensemble>& dirs, int order) {
    if (static_cast<int>(dirs.size()) < std::min(order, 2) && !(order >= 2 && dirs.size() == 1)) {
        throw ConfigError("family.directions", "derivative errors need at least one direction");
    }
    auto dir = [&](int l) -> const Ensemble& { return dirs[std::min<std::size_t>(l, dirs.size() - 1)]; };
    if (order == 1) return v.first_variation(dir(0));
    if (order == 2) return v.second_variation(dir(0), dir(1));
    std::vector<Ensemble> use;
    for (int l = 0; l < order; ++l) use.push_back(dir(l));
    return v.nth_variation(use);
}

double log_log_slope(const std::vector<double>& e) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t j = 0; j < e.size(); ++j) {
        if (!(e[j] > 0.0)) continue;
        const double x = std::log(static_cast<double>(j + 1)), y = std::log(e[j]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) return 0.0;
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

double jump_at(const Ensemble& y, int t) {
    const int steps = y[0].steps();
    double worst = 0.0;
    const int n = y.is_broadcast() ? 1 : y.size();
    for (int i = 0; i < n; ++i) {
        double local = 0.0, ref = 0.0;
        for (int k = t - 1; k <= t + 1; ++k) {
            if (k >= 1 && k < steps) local = std::max(local, second_difference(y[i], k));
        }
        for (int k : {t - 3, t + 3}) {
            if (k >= 1 && k < steps) ref = std::max(ref, second_difference(y[i], k));
        }
        worst = std::max(worst, local - 4.0 * ref);
    }
    return std::max(worst, 0.0);
}

double semigroup_gap(const Semigroup& a, const Semigroup& b, int samples) {
    const double horizon = std::min(a.horizon(), b.horizon());
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const double t = horizon * s / (samples - 1);
        const Matrix diff = a.at(t) - b.at(t);
        worst = std::max(worst, diff.colwise().norm().maxCoeff());
    }
    return worst;
}

void validate_family(const PerturbationFamily& f) {
    if (!f.limit.model) throw ConfigError("family.limit", "missing limit model");
    if (f.members.empty()) throw ConfigError("family.members", "empty family");
    const auto& ls = f.limit.model->spec();
    const auto& lc = f.limit.model->coefficients();
    for (std::size_t jj = 0; jj < f.members.size(); ++jj) {
        const int j = static_cast<int>(jj) + 1;
        const auto& m = f.members[jj];
        if (!m.model) throw ConfigError(member_field(j, "model"), "missing model");
        const auto& s = m.model->spec();
        if (s.dim_h != ls.dim_h || s.dim_u != ls.dim_u || s.steps != ls.steps || s.horizon != ls.horizon) {
            throw ConfigError(member_field(j, "space"), "grid differs from the limit");
        }
        if (m.y.panel() != f.limit.y.panel()) {
            throw ConfigError(member_field(j, "noise"), "members must share the limit's noise panel");
        }
        const auto& c = m.model->coefficients();
        if (c.m_bound != lc.m_bound || c.gamma != lc.gamma) {
            throw ConfigError(member_field(j, "coefficients.M"), "bounds differ from the limit");
        }
        for (int k = 0; k <= 16; ++k) {
            const double t = ls.horizon * k / 16.0;
            if (std::abs(c.g_at(t) - lc.g_at(t)) > 1e-12 * (1.0 + lc.g_at(t))) {
                throw ConfigError(member_field(j, "coefficients.g"), "bound g differs from the limit");
            }
        }
        try {
            audit_coefficients(c, m.model->semigroup(), s, 16, 1000 + j);
        } catch (const ConfigError& e) {
            throw ConfigError(member_field(j, e.field()), e.what());
        }
    }
    if (!f.negative_control && jump_at(f.limit.y, f.limit.t) > kJumpTolerance) {
        throw ConfigError("family.limit.y", "initial data is not continuous at the limit time");
    }
}

StabilityReport stability_report(const PerturbationFamily& f, const std::vector<int>& orders) {
    validate_family(f);
    StabilityReport r;
    r.orders = orders;
    const auto& lm = *f.limit.model;
    const double p = f.limit.y.p();
    const double dt = lm.spec().dt();

    const auto limit = lm.solve(f.limit.y, f.limit.t).paths;
    // same data from a zero initial guess: the pure solver-tolerance floor
    const auto zero = Ensemble::broadcast(Path(lm.spec().dim_h, lm.spec().steps), f.limit.y.panel(), p);
    const auto resolved = lm.solve(f.limit.y, f.limit.t, &zero).paths;
    r.baseline = difference_norm(limit, resolved, p, 0.0, dt);

    std::vector<Ensemble> limit_derivs;
    if (!orders.empty()) {
        const VariationSolver v(lm, limit, f.limit.t);
        const VariationSolver v2(lm, resolved, f.limit.t);
        for (int k : orders) {
            limit_derivs.push_back(derivative(v, f.directions, k));
            r.derivative_baselines.push_back(
                difference_norm(limit_derivs.back(), derivative(v2, f.directions, k), p, 0.0, dt));
        }
    }

    for (std::size_t jj = 0; jj < f.members.size(); ++jj) {
        const auto& m = f.members[jj];
        StabilityRow row;
        row.j = static_cast<int>(jj) + 1;
        row.t_j = m.model->spec().time(m.t);
        const auto x = m.model->solve(m.y, m.t).paths;
        row.e_j = difference_norm(x, limit, p, 0.0, dt);
        row.semigroup_gap = semigroup_gap(m.model->semigroup(), lm.semigroup());
        if (!orders.empty()) {
            const VariationSolver v(*m.model, x, m.t);
            for (std::size_t o = 0; o < orders.size(); ++o) {
                row.derivative_errors.push_back(
                    difference_norm(derivative(v, f.directions, orders[o]), limit_derivs[o], p, 0.0, dt));
            }
        }
        r.rows.push_back(std::move(row));
    }

    std::vector<double> e;
    for (const auto& row : r.rows) e.push_back(row.e_j);
    r.slope = log_log_slope(e);
    for (std::size_t o = 0; o < orders.size(); ++o) {
        std::vector<double> d;
        for (const auto& row : r.rows) d.push_back(row.derivative_errors[o]);
        r.derivative_slopes.push_back(log_log_slope(d));
    }

    if (f.threshold >= 0.0) {
        r.threshold = f.threshold;
    } else {
        const double s1 = f.members.front().size, sj = f.members.back().size;
        r.threshold = s1 > 0.0 ? 2.0 * e.front() * std::pow(sj / s1, f.threshold_exponent) : 0.0;
    }
    r.pass = e.back() <= std::max(2.0 * r.baseline, r.threshold);
    r.verdict = r.pass ? "PASS" : "FAIL";
    return r;
}

}  // namespace pathsde
