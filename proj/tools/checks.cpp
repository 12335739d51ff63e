#include "checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <set>

#include "oracles.hpp"
#include "pathsde/chainrule.hpp"
#include "pathsde/coefficients.hpp"
#include "pathsde/convolution.hpp"
#include "pathsde/errors.hpp"
#include "pathsde/fixedpoint.hpp"
#include "pathsde/parallel.hpp"
#include "pathsde/partitions.hpp"
#include "pathsde/perturb.hpp"
#include "pathsde/sensitivity.hpp"

namespace pathsde::app {

namespace {

std::string fmt(const char* pattern, auto... args) {
    char buf[160];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

class Recorder {
public:
    Recorder(SuiteResult& out, double scale) : out_(out), scale_(scale) {}

    void at_most(int criterion, std::string name, double measured, double tol) {
        add(criterion, std::move(name), Relation::at_most, measured, tol * scale_,
            measured <= tol * scale_);
    }
    void below(int criterion, std::string name, double measured, double tol) {
        add(criterion, std::move(name), Relation::below, measured, tol * scale_, measured < tol * scale_);
    }
    void above(int criterion, std::string name, double measured, double threshold) {
        const double t = scale_ > 0.0 ? threshold / scale_ : INFINITY;
        add(criterion, std::move(name), Relation::above, measured, t, measured > t);
    }

private:
    void add(int criterion, std::string name, Relation r, double measured, double tol, bool pass) {
        out_.assertions.push_back({out_.suite, std::move(name), criterion, r, measured, tol,
                                   pass && std::isfinite(measured)});
    }

    SuiteResult& out_;
    double scale_;
};

Vector vec1(double v) { return Vector::Constant(1, v); }
Matrix mat1(double v) { return Matrix::Constant(1, 1, v); }

// ---- partitions ------------------------------------------------------------

std::set<std::set<std::set<int>>> as_sets(const std::vector<Partition>& parts) {
    std::set<std::set<std::set<int>>> out;
    for (const auto& p : parts) {
        std::set<std::set<int>> blocks;
        for (const auto& b : p.blocks) blocks.insert(std::set<int>(b.begin(), b.end()));
        out.insert(blocks);
    }
    return out;
}

void partitions_suite(Recorder& r) {
    for (int n = 1; n <= 9; ++n) {
        long long stirling_gap = 0, labeling_gap = 0, labeled_total = 0;
        for (int i = 1; i <= n; ++i) {
            const auto count = static_cast<long long>(enumerate_partitions(n, i).size());
            const long long labeled = oracle::partitions_by_labeling_count(n, i);
            stirling_gap = std::max(stirling_gap, std::llabs(count - oracle::stirling2(n, i)));
            labeling_gap = std::max(labeling_gap, std::llabs(count - labeled));
            labeled_total += labeled;
        }
        const auto all = static_cast<long long>(enumerate_all_partitions(n).size());
        r.at_most(1, fmt("stirling recurrence, counts for n=%d", n), static_cast<double>(stirling_gap), 0.0);
        r.at_most(1, fmt("labeling oracle, counts for n=%d", n), static_cast<double>(labeling_gap), 0.0);
        r.at_most(1, fmt("bell triangle, B(%d)", n), static_cast<double>(std::llabs(all - oracle::bell(n))), 0.0);
        r.at_most(1, fmt("labeling oracle, B(%d)", n), static_cast<double>(std::llabs(all - labeled_total)), 0.0);
    }
    int mismatched = 0;
    for (int n = 1; n <= 7; ++n) {
        for (int i = 1; i <= n; ++i) {
            if (as_sets(enumerate_partitions(n, i)) != oracle::partitions_by_assignment(n, i)) ++mismatched;
        }
    }
    r.at_most(1, "partition sets equal the assignment oracle, n<=7", mismatched, 0.0);
    int invalid = 0;
    IndexSet universe{1, 2, 3, 4, 5, 6, 7, 8};
    const auto parts = enumerate_all_partitions(8);
    for (const auto& p : parts) invalid += is_partition_of(p, universe) ? 0 : 1;
    invalid += parts == enumerate_all_partitions(8) ? 0 : 1;
    r.at_most(0, "partitions of 8 valid and in repeatable order", invalid, 0.0);
}

// ---- chainrule -------------------------------------------------------------

SmoothMap from_poly(const oracle::RidgePolynomial& p) {
    SmoothMap m;
    m.eval = [p](const Vector& u) { return p.eval(u); };
    m.deriv = [p](const Vector& u, std::span<const Vector> d) { return p.derivative(u, d); };
    m.order = 4;
    return m;
}

void chainrule_suite(Recorder& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed * 1000 + 11);
    std::uniform_int_distribution<int> dim(1, 3), order(1, 3);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    double worst[4] = {0, 0, 0, 0};
    for (int trial = 0; trial < 50; ++trial) {
        const int d0 = dim(rng), d1 = dim(rng), d2 = dim(rng);
        auto fp = oracle::RidgePolynomial::random(rng, d0, d1, 4);
        auto gp = oracle::RidgePolynomial::random(rng, d1, d2, 4);
        Vector u(d0);
        for (int i = 0; i < d0; ++i) u[i] = 0.5 * unit(rng);
        const int k = order(rng);
        std::vector<Vector> dirs(k, Vector(d0));
        for (auto& x : dirs)
            for (int i = 0; i < d0; ++i) x[i] = unit(rng);
        const Vector exact = faa_di_bruno(from_poly(fp), from_poly(gp), u, dirs);
        const Vector fd =
            oracle::richardson([&](const Vector& v) { return gp.eval(fp.eval(v)); }, u, dirs, 0.1, 3);
        worst[k] = std::max(worst[k], (exact - fd).norm() / std::max(1.0, fd.norm()));
    }
    for (int k = 1; k <= 3; ++k) {
        r.at_most(2, fmt("faa di bruno vs nested differences, order %d, relative", k), worst[k], 1e-6);
    }
    SmoothMap square, cube;
    square.eval = [](const Vector& u) { return vec1(u[0] * u[0]); };
    cube.eval = [](const Vector& u) { return vec1(u[0] * u[0] * u[0]); };
    for (auto* m : {&square, &cube}) {
        const int power = m == &square ? 2 : 3;
        m->order = 4;
        m->deriv = [power](const Vector& u, std::span<const Vector> d) {
            const int j = static_cast<int>(d.size());
            double c = 1.0;
            for (int i = 0; i < j; ++i) c *= power - i;
            double v = j > power ? 0.0 : c * std::pow(u[0], power - j);
            for (const auto& x : d) v *= x[0];
            return vec1(v);
        };
    }
    const Vector ones[] = {vec1(1), vec1(1), vec1(1)};
    // (u^2)^3 = u^6, third derivative at 1 is 120
    r.at_most(2, "third derivative of (u^2)^3 at 1 equals 120",
              std::abs(faa_di_bruno(square, cube, vec1(1.0), ones)[0] - 120.0), 1e-12);
}

// ---- fixedpoint ------------------------------------------------------------

ContractionProblem quadratic_problem() {
    ContractionProblem p;
    p.h = [](const Vector& u, const Vector& y) { return Vector(u.array() + 0.25 * y.array().square()); };
    p.alpha = 0.5;
    p.order = 4;
    p.d_mixed = [](const Vector& u, const Vector& y, std::span<const Vector> xs,
                   std::span<const Vector> ys) -> Vector {
        if (xs.size() == 1 && ys.empty()) return xs[0];
        if (!xs.empty()) return Vector::Zero(u.size());
        if (ys.size() == 1) return Vector(0.5 * y.cwiseProduct(ys[0]));
        if (ys.size() == 2) return Vector(0.5 * ys[0].cwiseProduct(ys[1]));
        return Vector::Zero(u.size());
    };
    p.trust_region = [](const Vector&, const Vector& y) { return y.norm() <= 1.0; };
    p.initial_state = Vector::Zero(1);
    return p;
}

ContractionProblem from_sine(const oracle::SineProblem& s, int dim_y) {
    ContractionProblem p;
    p.h = [s](const Vector& u, const Vector& y) { return s.h(u, y); };
    p.d_mixed = [s](const Vector& u, const Vector& y, std::span<const Vector> xs,
                    std::span<const Vector> ys) { return s.mixed(u, y, xs, ys); };
    p.alpha = 0.5;
    p.order = 3;
    p.initial_state = Vector::Zero(dim_y);
    return p;
}

void fixedpoint_suite(Recorder& r, std::uint64_t seed) {
    const auto q = quadratic_problem();
    const double expected[] = {1.0, 0.5, 0.75};
    for (int k = 1; k <= 3; ++k) {
        const std::vector<Vector> dirs(k, vec1(1.0));
        r.at_most(3, fmt("quadratic problem, order %d derivative at 0", k),
                  std::abs(derivative_n(q, vec1(0.0), dirs, 1e-13)[0] - expected[k - 1]), 1e-8);
    }
    std::mt19937_64 rng(seed * 1000 + 21);
    std::uniform_real_distribution<double> unit(-1, 1);
    double fd_gap[4] = {0, 0, 0, 0}, measured[4] = {0, 0, 0, 0}, bound_ratio[4] = {0, 0, 0, 0};
    double bound_at_worst[4] = {0, 0, 0, 0};
    for (int trial = 0; trial < 20; ++trial) {
        const int du = 1 + trial % 2, dy = 1 + trial % 3;
        auto s = oracle::SineProblem::random(rng, du, dy, 0.5);
        auto p = from_sine(s, dy);
        Vector u(du);
        for (int i = 0; i < du; ++i) u[i] = unit(rng);
        std::vector<Vector> dirs(3, Vector(du));
        for (auto& d : dirs) {
            for (int i = 0; i < du; ++i) d[i] = unit(rng);
            d.normalize();
        }
        auto phi = [&](const Vector& v) { return solve(p, v, Vector::Zero(dy), 1e-15).value; };
        for (int k = 1; k <= 3; ++k) {
            std::span<const Vector> sub(dirs.data(), k);
            const Vector exact = derivative_n(p, u, sub, 1e-14);
            const Vector fd = oracle::richardson(phi, u, sub, 0.05, 2);
            fd_gap[k] = std::max(fd_gap[k], (exact - fd).norm() / std::max(1.0, fd.norm()));
            const double bound = uniform_derivative_bound(0.5, s.derivative_bound(k), k);
            if (exact.norm() / bound >= bound_ratio[k]) {
                bound_ratio[k] = exact.norm() / bound;
                measured[k] = exact.norm();
                bound_at_worst[k] = bound;
            }
        }
    }
    for (int k = 1; k <= 3; ++k) {
        r.at_most(3, fmt("20 sine problems, order %d vs Richardson differences, relative", k), fd_gap[k], 1e-5);
    }
    for (int k = 1; k <= 3; ++k) {
        r.below(4, fmt("order %d derivative below the assembled bound (tightest case)", k), measured[k],
                bound_at_worst[k]);
    }
}

// ---- convolution -----------------------------------------------------------

double rms(const std::vector<Path>& ys) {
    double s = 0.0;
    long n = 0;
    for (const auto& y : ys) {
        s += y.values().squaredNorm();
        n += y.values().cols();
    }
    return std::sqrt(s / n);
}

// Sums over fixed chunks of samples, reduced in chunk order, so the result
// does not depend on how many workers ran the chunks.
template <class Body>
std::vector<Vector> chunked_sums(int samples, int width, Body&& body) {
    constexpr int kChunks = 64;
    std::vector<Vector> sums(kChunks, Vector::Zero(width));
    parallel_for(kChunks, [&](int c) {
        const int begin = static_cast<int>(static_cast<long long>(samples) * c / kChunks);
        const int end = static_cast<int>(static_cast<long long>(samples) * (c + 1) / kChunks);
        for (int i = begin; i < end; ++i) body(i, sums[c]);
    });
    return sums;
}

Vector reduce(const std::vector<Vector>& parts) {
    Vector total = Vector::Zero(parts.front().size());
    for (const auto& p : parts) total += p;
    return total;
}

void convolution_suite(Recorder& r, const CheckOptions& o) {
    for (double beta : {0.1, 0.2, 0.3, 0.4}) {
        r.at_most(5, fmt("c_beta identity, beta=%.1f", beta), beta_identity_defect(beta), 1e-6);
    }
    {
        SpaceSpec spec{1, 1, 1.0, 400};
        SemigroupGrid g(Semigroup::diagonal(vec1(-1.0), 1.0), spec);
        NoisePanel w(o.seed * 1000 + 5, 200, spec);
        const auto phi = OperatorPath::deterministic(std::vector<Matrix>(400, mat1(1.0)));
        const auto direct = ito_convolve(g, 0, phi, w);
        for (double beta : {0.1, 0.25, 0.4}) {
            FactorizedConvolver conv(g, FactorizationParams(beta));
            const auto fact = factorized_convolve(conv, 0, phi, w);
            double worst = 0.0;
            for (int i = 0; i < w.samples(); ++i) worst = std::max(worst, (fact[i] - direct[i]).sup_norm());
            r.at_most(5, fmt("factorized vs direct, OU K=400, beta=%.2f, sup gap / rms", beta),
                      worst / rms(direct), 0.02);
        }
    }
    {
        const int steps = 1000;
        SpaceSpec spec{2, 2, 1.0, steps};
        Vector spectrum(2);
        spectrum << -0.5, -1.5;
        const auto s = Semigroup::diagonal(spectrum, 1.0);
        SemigroupGrid g(s, spec);
        std::vector<Matrix> phi;
        for (int k = 0; k < steps; ++k) {
            Matrix m(2, 2);
            m << 1.0, 0.2 * std::cos(0.005 * k), 0.0, 0.5 + 0.3 * std::sin(0.007 * k);
            phi.push_back(m);
        }
        const Vector moments = ito_isometry_moments(s, spec, 0, phi);
        const int n = o.samples > 0 ? o.samples : 100000;
        NoisePanel w(o.seed * 1000 + 23, n, spec);
        const auto op = OperatorPath::deterministic(phi);
        // per sample: |Y(t_k)|^2 and its square at k = 100, 200, ..., 1000
        const auto sums = chunked_sums(n, 20, [&](int i, Vector& acc) {
            const Path y = ito_sum(g, 0, noise_forcing(op, w, i));
            for (int j = 0; j < 10; ++j) {
                const double q = y.at(100 * (j + 1)).squaredNorm();
                acc[j] += q;
                acc[10 + j] += q * q;
            }
        });
        const Vector total = reduce(sums);
        for (int j = 0; j < 10; ++j) {
            const double m = total[j] / n;
            const double se = std::sqrt((total[10 + j] / n - m * m) / n);
            r.at_most(6, fmt("isometry second moment at t=%.1f, |error| / standard error", 0.1 * (j + 1)),
                      std::abs(m - moments[100 * (j + 1)]) / se, 4.0);
        }
    }
}

// ---- sde -------------------------------------------------------------------

// RK4 for X' = I, I' = X with X(0) = 1, I(0) = 0.
double cosh_oracle(double horizon, int steps) {
    double x = 1.0, i = 0.0;
    const double h = horizon / steps;
    for (int k = 0; k < steps; ++k) {
        const double k1x = i, k1i = x;
        const double k2x = i + 0.5 * h * k1i, k2i = x + 0.5 * h * k1x;
        const double k3x = i + 0.5 * h * k2i, k3i = x + 0.5 * h * k2x;
        const double k4x = i + h * k3i, k4i = x + h * k3x;
        x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
        i += h / 6.0 * (k1i + 2 * k2i + 2 * k3i + k4i);
    }
    return x;
}

void sde_suite(Recorder& r, const CheckOptions& o) {
    {
        const double a = 1.0, sigma = 0.5, x0 = 1.0;
        SpaceSpec spec{1, 1, 1.0, 200};
        const int n = o.samples > 0 ? o.samples : 100000;
        auto panel = std::make_shared<NoisePanel>(o.seed * 1000 + 7, n, spec);
        const auto s = Semigroup::diagonal(vec1(-a), 1.0);
        MildModel m(spec, s, make_coefficients(zero_drift(), constant_diffusion(mat1(sigma)), 1, 1, s.bound()),
                    {});
        const auto sol = m.solve(Ensemble::broadcast(Path::constant(vec1(x0), 200), panel, 4.0), 0);
        const auto sums = chunked_sums(n, 2, [&](int i, Vector& acc) {
            const double v = sol.paths[i].at(200)[0];
            acc[0] += v;
            acc[1] += v * v;
        });
        const Vector total = reduce(sums);
        const double mean = total[0] / n, var = total[1] / n - mean * mean;
        const double var_exact = sigma * sigma * (1 - std::exp(-2 * a)) / (2 * a);
        r.at_most(7, "OU mean at T, |error| / standard error", std::abs(mean - std::exp(-a) * x0) / std::sqrt(var / n),
                  4.0);
        r.at_most(7, "OU variance at T, relative error", std::abs(var / var_exact - 1.0), 0.05);
        r.at_most(7, "OU Picard contraction ratio", sol.max_ratio, 0.6);
    }
    for (double horizon : {0.5, 1.0, 2.0}) {
        SpaceSpec spec{1, 1, horizon, 200};
        const auto s = Semigroup::diagonal(vec1(0.0), horizon);
        MildModel m(spec, s,
                    make_coefficients(running_integral_drift(mat1(1.0), vec1(0.0), spec), zero_diffusion(), 1, 1,
                                      s.bound()),
                    {.tol = 1e-12});
        const auto sol = m.solve(Ensemble::broadcast(Path::constant(vec1(1.0), 200), nullptr, 4.0), 0);
        r.at_most(7, fmt("running-integral drift vs RK4 cosh, T=%.1f", horizon),
                  std::abs(sol.paths[0].at(200)[0] - cosh_oracle(horizon, 10000)), 1e-3);
        r.at_most(7, fmt("running-integral drift Picard contraction ratio, T=%.1f", horizon), sol.max_ratio, 0.6);
    }
    {
        SpaceSpec spec{1, 1, 1.0, 60};
        auto panel = std::make_shared<NoisePanel>(o.seed * 1000 + 3, 200, spec);
        const auto s = Semigroup::diagonal(vec1(-1.0), 1.0);
        const auto c =
            make_coefficients(linear_drift(mat1(-0.5), vec1(0.2)), linear_diffusion(mat1(0.3), mat1(0.2)), 1, 1, 1.0);
        MildModel m4(spec, s, c, {.p = 4.0, .beta = 0.3, .lambda = 8.0});
        MildModel m6(spec, s, c, {.p = 6.0, .beta = 0.3, .lambda = 8.0});
        const auto a = m4.solve(Ensemble::broadcast(Path::constant(vec1(1.0), 60), panel, 4.0), 20);
        const auto b = m6.solve(Ensemble::broadcast(Path::constant(vec1(1.0), 60), panel, 6.0), 20);
        int differing = 0, moved = 0;
        for (int i = 0; i < 200; ++i) {
            differing += a.paths[i] == b.paths[i] ? 0 : 1;
            for (int k = 0; k <= 20; ++k) moved += a.paths[i].at(k)[0] == 1.0 ? 0 : 1;
        }
        r.at_most(0, "paths identical for p=4 and p=6 (count differing)", differing, 0.0);
        r.at_most(0, "solution equals the initial data on [0, t] (count differing)", moved, 0.0);
    }
}

// ---- sensitivity -----------------------------------------------------------

struct SmoothScenario {
    SpaceSpec spec{2, 2, 1.0, 50};
    std::shared_ptr<NoisePanel> panel;
    std::unique_ptr<MildModel> model;
    Ensemble y, dir1, dir2;

    SmoothScenario(std::uint64_t seed, int samples) {
        panel = std::make_shared<NoisePanel>(seed, samples, spec);
        Vector spectrum(2);
        spectrum << -0.5, -1.5;
        auto s = Semigroup::diagonal(spectrum, spec.horizon);
        Matrix w(2, 2), v(2, 2), s0(2, 2), s1(2, 2);
        w << 0.8, -0.3, 0.4, 0.6;
        v << 0.2, 0.1, -0.3, 0.2;
        s0 << 0.2, 0.05, 0.0, 0.15;
        s1 << 0.3, 0.1, -0.1, 0.25;
        Vector a(2), c(2), a2(2), c2(2);
        a << 0.9, -0.7;
        c << 0.3, -0.4;
        a2 << 0.6, 0.5;
        c2 << 0.1, 0.7;
        auto co = make_coefficients(sine_drift(a, w, v, c, spec), sine_diffusion(s0, a2, w, c2, s1), 2, 2,
                                    s.bound());
        model = std::make_unique<MildModel>(spec, s, co, SolverConfig{.tol = 1e-13});
        Vector y0(2);
        y0 << 0.5, -0.2;
        y = Ensemble::broadcast(Path::constant(y0, spec.steps), panel, 4.0);
        Path d1(2, spec.steps), d2(2, spec.steps);
        for (int k = 0; k <= spec.steps; ++k) {
            d1.values().col(k) << 1.0, 0.5 * std::sin(0.2 * k);
            d2.values().col(k) << -0.3 + 0.01 * k, 1.0;
        }
        dir1 = Ensemble::broadcast(d1, panel, 4.0);
        dir2 = Ensemble::broadcast(d2, panel, 4.0);
    }
};

// Oracle: difference quotients of independent solves on one noise panel.
using Stencil = std::vector<std::pair<double, std::vector<double>>>;

std::vector<Path> stencil(const MildModel& m, const Ensemble& y, const std::vector<const Ensemble*>& dirs,
                          int t, double eps, const Stencil& terms) {
    std::vector<Path> out;
    for (const auto& [weight, steps] : terms) {
        Path shifted = y[0];
        for (std::size_t l = 0; l < dirs.size(); ++l) shifted += (steps[l] * eps) * (*dirs[l])[0];
        const auto x = m.solve(Ensemble::broadcast(shifted, y.panel(), y.p()), t).paths.materialize();
        if (out.empty()) out.assign(x.size(), Path(x[0].dim(), x[0].steps()));
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += weight * x[i];
    }
    return out;
}

double relative(const Ensemble& a, const std::vector<Path>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        num += std::pow((a[static_cast<int>(i)] - b[i]).sup_norm(), 4);
        den += std::pow(b[i].sup_norm(), 4);
    }
    return std::pow(num / den, 0.25);
}

double max_gap(const Ensemble& a, const Ensemble& b) {
    double worst = 0.0;
    for (int i = 0; i < std::max(a.size(), b.size()); ++i) worst = std::max(worst, (a[i] - b[i]).sup_norm());
    return worst;
}

void sensitivity_suite(Recorder& r, const CheckOptions& o) {
    {
        SmoothScenario sc(o.seed * 1000 + 21, 400);
        const VariationSolver v(*sc.model, sc.model->solve(sc.y, 0).paths, 0);
        const double e = 1e-3;
        const auto fd1 = stencil(*sc.model, sc.y, {&sc.dir1}, 0, e, {{0.5 / e, {1}}, {-0.5 / e, {-1}}});
        r.at_most(8, "first variation vs central differences, relative", relative(v.first_variation(sc.dir1), fd1),
                  1e-2);
        const double w = 0.25 / (e * e);
        const auto fd2 = stencil(*sc.model, sc.y, {&sc.dir1, &sc.dir2}, 0, e,
                                 {{w, {1, 1}}, {-w, {1, -1}}, {-w, {-1, 1}}, {w, {-1, -1}}});
        const auto z12 = v.second_variation(sc.dir1, sc.dir2);
        r.at_most(8, "mixed second variation vs central differences, relative", relative(z12, fd2), 2e-2);
        r.at_most(0, "second variation symmetric in its directions", max_gap(z12, v.second_variation(sc.dir2, sc.dir1)),
                  1e-10);
        const Ensemble one[] = {sc.dir1};
        const Ensemble two[] = {sc.dir1, sc.dir2};
        r.at_most(8, "generic vs dedicated solver, order 1, sup gap", max_gap(v.nth_variation(one), v.first_variation(sc.dir1)),
                  1e-9);
        r.at_most(8, "generic vs dedicated solver, order 2, sup gap", max_gap(v.nth_variation(two), z12), 1e-9);
    }
    {
        SpaceSpec spec{1, 1, 0.5, 200};
        const auto s = Semigroup::diagonal(vec1(-0.5), spec.horizon);
        MildModel m(spec, s,
                    make_coefficients(polynomial_drift({0.0, 0.5, 0.0, 1.0}, 1, 2.0), zero_diffusion(), 1, 1, s.bound()),
                    {.tol = 1e-14});
        const auto y = Ensemble::broadcast(Path::constant(vec1(0.6), 200), nullptr, 4.0);
        const auto d = Ensemble::broadcast(Path::constant(vec1(1.0), 200), nullptr, 4.0);
        const VariationSolver v(m, m.solve(y, 0).paths, 0);
        const Ensemble dirs[] = {d, d, d};
        const double e = 1e-2, w = 0.5 / (e * e * e);
        const auto fd3 = stencil(m, y, {&d}, 0, e, {{w, {2}}, {-2 * w, {1}}, {2 * w, {-1}}, {-w, {-2}}});
        r.at_most(8, "third variation of a cubic drift vs five-point differences, relative",
                  relative(v.nth_variation(dirs), fd3), 5e-2);
    }
    {
        const double a = 1.2, sigma = 0.4;
        SpaceSpec spec{1, 1, 1.0, 100};
        auto panel = std::make_shared<NoisePanel>(o.seed * 1000 + 4, 2000, spec);
        const auto s = Semigroup::diagonal(vec1(-a), 1.0);
        MildModel m(spec, s, make_coefficients(zero_drift(), constant_diffusion(mat1(sigma)), 1, 1, 1.0), {});
        Path y(1, 100);
        for (int k = 0; k <= 100; ++k) y.values()(0, k) = 1.0 + 0.2 * std::sin(0.1 * k);
        const int t = 40;
        const VariationSolver v(m, m.solve(Ensemble::broadcast(y, panel, 4.0), t).paths, t);
        const auto est = vertical_derivative(v, vec1(0.7), TerminalFunctional::parse("coordinate", 0));
        const double expected = std::exp(-a * (1.0 - spec.time(t))) * 0.7;
        r.at_most(8, "vertical derivative of the OU terminal value, |error| (4 standard errors + 1e-12)",
                  std::abs(est.mean - expected), 4.0 * est.standard_error + 1e-12);
    }
    {
        SpaceSpec spec{1, 1, 1.0, 100};
        const auto s = Semigroup::diagonal(vec1(-0.3), 1.0);
        MildModel m(spec, s,
                    make_coefficients(sine_drift(vec1(0.8), mat1(1.2), mat1(0.4), vec1(0.1), spec), zero_diffusion(), 1,
                                      1, s.bound()),
                    {});
        const VariationSolver v(m, m.solve(Ensemble::broadcast(Path::constant(vec1(0.7), 100), nullptr, 4.0), 0).paths, 0);
        Path d(1, 100);
        for (int k = 0; k <= 100; ++k) d.values()(0, k) = std::cos(0.05 * k);
        const auto dir = Ensemble::broadcast(d, nullptr, 4.0);
        for (int k = 1; k <= 3; ++k) {
            const std::vector<Ensemble> dirs(k, dir);
            r.below(0, fmt("order %d variation below the assembled uniform bound", k), v.nth_variation(dirs)[0].sup_norm(),
                    variation_bound(m, k));
        }
    }
}

// ---- perturb ---------------------------------------------------------------

struct FamilyBase {
    SpaceSpec spec;
    std::shared_ptr<NoisePanel> panel;
    Semigroup semigroup = Semigroup::diagonal(Vector::Constant(2, -1.0), 1.0);
    DriftPart drift;
    DiffusionPart diffusion;

    FamilyBase(std::uint64_t seed, int steps, int samples) : spec{2, 2, 1.0, steps} {
        panel = std::make_shared<NoisePanel>(seed, samples, spec);
        Vector spectrum(2);
        spectrum << -0.5, -1.5;
        semigroup = Semigroup::diagonal(spectrum, 1.0);
        Matrix w(2, 2), v(2, 2), s0(2, 2), s1(2, 2);
        w << 0.8, -0.3, 0.4, 0.6;
        v << 0.2, 0.1, -0.3, 0.2;
        s0 << 0.2, 0.05, 0.0, 0.15;
        s1 << 0.3, 0.1, -0.1, 0.25;
        Vector a(2), c(2);
        a << 0.9, -0.7;
        c << 0.3, -0.4;
        drift = sine_drift(a, w, v, c, spec);
        diffusion = linear_diffusion(s0, s1);
    }

    std::shared_ptr<const MildModel> model(const DriftPart& b) const {
        return std::make_shared<MildModel>(spec, semigroup, make_coefficients(b, diffusion, 2, 2, semigroup.bound()),
                                           SolverConfig{.tol = 1e-13});
    }
    Ensemble y(double jump_after = INFINITY) const {
        Path p(2, spec.steps);
        for (int k = 0; k <= spec.steps; ++k) {
            const double s = spec.time(k);
            p.values().col(k) << std::cos(s), 0.5 * std::sin(2.0 * s);
            if (s > jump_after) p.values().col(k).array() += 1.0;
        }
        return Ensemble::broadcast(p, panel, 4.0);
    }
};

void perturb_suite(Recorder& r, const CheckOptions& o) {
    {
        FamilyBase base(o.seed * 1000 + 33, 64, 32);
        Vector shift(2);
        shift << 0.4, -0.3;
        const auto pert = constant_drift(shift);
        auto pinned = [&](DriftPart b) {
            b.g = base.drift.g + pert.g;
            b.derivative_bound = base.drift.derivative_bound;
            return b;
        };
        PerturbationFamily f;
        f.limit = {0, base.model(pinned(base.drift)), base.y(), 0.0};
        for (int j = 1; j <= 8; ++j) {
            f.members.push_back({0, base.model(pinned(add_drift(base.drift, pert, 1.0 / j))), base.y(), 1.0 / j});
        }
        Path d(2, base.spec.steps);
        d.values().setOnes();
        f.directions = {Ensemble::broadcast(d, base.panel, 4.0)};
        const auto rep = stability_report(f, {1, 2});
        const auto& first = rep.rows.front();
        const auto& last = rep.rows.back();
        r.at_most(9, "drift family b + v/j: e_8 against e_1 / 4", last.e_j, first.e_j / 4.0);
        r.below(9, "drift family: log-log slope of e_j", rep.slope, 0.0);
        for (std::size_t q = 0; q < 2; ++q) {
            r.at_most(9, fmt("drift family: order %d derivative error e_8 against e_1 / 4", rep.orders[q]),
                      last.derivative_errors[q], first.derivative_errors[q] / 4.0);
            r.below(9, fmt("drift family: order %d derivative log-log slope", rep.orders[q]), rep.derivative_slopes[q],
                    0.0);
        }
    }
    {
        FamilyBase base(o.seed * 1000 + 34, 256, 32);
        const int t = 64;
        auto family = [&](const Ensemble& y, bool control) {
            PerturbationFamily f;
            f.limit = {t, base.model(base.drift), y, 0.0};
            for (int j = 1; j <= 6; ++j) f.members.push_back({t + (256 >> j), base.model(base.drift), y, std::ldexp(1.0, -j)});
            f.threshold_exponent = 0.5;
            f.negative_control = control;
            return stability_report(f, {});
        };
        const auto smooth = family(base.y(), false);
        r.below(0, "time family t + 2^-j: log-log slope of e_j", smooth.slope, 0.0);
        r.at_most(0, "time family: e_6 against the estimated threshold", smooth.rows.back().e_j,
                  std::max(smooth.threshold, 2.0 * smooth.baseline));
        const auto control = family(base.y(base.spec.time(t)), true);
        r.above(9, "jump after t: e_6 stays above 10x the re-solve baseline", control.rows.back().e_j,
                10.0 * control.baseline);
        r.above(9, "jump after t: e_6 / e_1 does not decay", control.rows.back().e_j / control.rows.front().e_j, 0.5);
    }
}

}  // namespace

bool SuiteResult::pass() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.pass; });
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"partitions", "chainrule", "fixedpoint", "convolution",
                                                "sde",        "sensitivity", "perturb"};
    return names;
}

bool is_suite(const std::string& name) {
    const auto& n = suite_names();
    return std::find(n.begin(), n.end(), name) != n.end();
}

const char* relation_symbol(Relation r) {
    switch (r) {
        case Relation::at_most: return "<=";
        case Relation::below: return "<";
        default: return ">";
    }
}

SuiteResult run_suite(const std::string& name, const CheckOptions& options) {
    if (!is_suite(name)) throw ArgumentError("unknown suite " + name);
    SuiteResult out;
    out.suite = name;
    Recorder r(out, options.tolerance_scale);
    const auto start = std::chrono::steady_clock::now();
    try {
        if (name == "partitions") partitions_suite(r);
        if (name == "chainrule") chainrule_suite(r, options.seed);
        if (name == "fixedpoint") fixedpoint_suite(r, options.seed);
        if (name == "convolution") convolution_suite(r, options);
        if (name == "sde") sde_suite(r, options);
        if (name == "sensitivity") sensitivity_suite(r, options);
        if (name == "perturb") perturb_suite(r, options);
    } catch (const Error& e) {
        out.assertions.push_back({name, std::string("suite raised: ") + e.what(), 0, Relation::at_most, 1.0, 0.0, false});
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace pathsde::app
