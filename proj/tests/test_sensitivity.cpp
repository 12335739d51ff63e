#include <cmath>
#include <memory>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "pathsde/coefficients.hpp"
#include "pathsde/errors.hpp"
#include "pathsde/sensitivity.hpp"

using namespace pathsde;

namespace {

Matrix mat1(double v) { return Matrix::Constant(1, 1, v); }
Vector vec1(double v) { return Vector::Constant(1, v); }

// Smooth path-dependent drift and multiplicative noise, two dimensions.
struct SmoothScenario {
    SpaceSpec spec{2, 2, 1.0, 50};
    std::shared_ptr<NoisePanel> panel;
    std::unique_ptr<MildModel> model;
    Ensemble y;
    Ensemble dir1, dir2;

    explicit SmoothScenario(int samples, double tol = 1e-13) {
        panel = std::make_shared<NoisePanel>(21, samples, spec);
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
        auto co = make_coefficients(sine_drift(a, w, v, c, spec), sine_diffusion(s0, a2, w, c2, s1), 2,
                                    2, s.bound());
        model = std::make_unique<MildModel>(spec, s, co, SolverConfig{.tol = tol});
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

Ensemble shift(const Ensemble& y, std::initializer_list<std::pair<double, const Ensemble*>> terms) {
    Path p = y[0];
    for (const auto& [c, d] : terms) p += c * (*d)[0];
    return Ensemble::broadcast(p, y.panel(), y.p());
}

// Oracle: difference quotients of independent solves on the same panel.
std::vector<Path> solve_paths(const MildModel& m, const Ensemble& y, int t) {
    return m.solve(y, t).paths.materialize();
}

std::vector<Path> fd_first(const MildModel& m, const Ensemble& y, const Ensemble& d, int t, double eps) {
    auto plus = solve_paths(m, shift(y, {{eps, &d}}), t);
    auto minus = solve_paths(m, shift(y, {{-eps, &d}}), t);
    for (std::size_t i = 0; i < plus.size(); ++i) plus[i] = (0.5 / eps) * (plus[i] - minus[i]);
    return plus;
}

std::vector<Path> fd_mixed2(const MildModel& m, const Ensemble& y, const Ensemble& d1,
                            const Ensemble& d2, int t, double eps) {
    auto pp = solve_paths(m, shift(y, {{eps, &d1}, {eps, &d2}}), t);
    auto pm = solve_paths(m, shift(y, {{eps, &d1}, {-eps, &d2}}), t);
    auto mp = solve_paths(m, shift(y, {{-eps, &d1}, {eps, &d2}}), t);
    auto mm = solve_paths(m, shift(y, {{-eps, &d1}, {-eps, &d2}}), t);
    for (std::size_t i = 0; i < pp.size(); ++i) {
        pp[i] = (0.25 / (eps * eps)) * (pp[i] - pm[i] - mp[i] + mm[i]);
    }
    return pp;
}

// Five-point third derivative along a single direction.
std::vector<Path> fd_third(const MildModel& m, const Ensemble& y, const Ensemble& d, int t, double eps) {
    auto p2 = solve_paths(m, shift(y, {{2 * eps, &d}}), t);
    auto p1 = solve_paths(m, shift(y, {{eps, &d}}), t);
    auto m1 = solve_paths(m, shift(y, {{-eps, &d}}), t);
    auto m2 = solve_paths(m, shift(y, {{-2 * eps, &d}}), t);
    for (std::size_t i = 0; i < p2.size(); ++i) {
        p2[i] = (0.5 / (eps * eps * eps)) * (p2[i] - 2.0 * p1[i] + 2.0 * m1[i] - m2[i]);
    }
    return p2;
}

// (mean_i sup_k |a - b|^p)^{1/p} / (mean_i sup_k |b|^p)^{1/p}, p = 4
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

}  // namespace

TEST_CASE("first variation: constant coefficients give id_t_S") {
    SpaceSpec spec{1, 1, 1.0, 40};
    auto panel = std::make_shared<NoisePanel>(1, 20, spec);
    auto s = Semigroup::diagonal(vec1(-0.8), 1.0);
    MildModel m(spec, s, make_coefficients(constant_drift(vec1(0.3)), constant_diffusion(mat1(0.4)), 1, 1, 1.0), {});
    auto y = Ensemble::broadcast(Path::constant(vec1(1.0), 40), panel, 4.0);
    VariationSolver v(m, m.solve(y, 10).paths, 10);
    Path d(1, 40);
    for (int k = 0; k <= 40; ++k) d.values()(0, k) = std::cos(0.1 * k);
    const auto z = v.first_variation(Ensemble::broadcast(d, panel, 4.0));
    for (int i = 0; i < 20; ++i) CHECK(z[i] == m.id_t_S(d, 10));
}

TEST_CASE("first variation: linear Markovian drift follows the matrix exponential") {
    SpaceSpec spec{2, 1, 1.0, 400};
    Matrix b(2, 2);
    b << -0.4, 1.0, -0.7, 0.2;
    auto s = Semigroup::diagonal(Vector::Zero(2), 1.0);
    MildModel m(spec, s, make_coefficients(linear_drift(b, Vector::Zero(2)), zero_diffusion(), 2, 1, 1.0), {});
    auto y = Ensemble::broadcast(Path::constant(Vector::Ones(2), 400), nullptr, 4.0);
    VariationSolver v(m, m.solve(y, 0).paths, 0);
    Vector y1(2);
    y1 << 0.3, -1.2;
    const auto z = v.first_variation(Ensemble::broadcast(Path::constant(y1, 400), nullptr, 4.0));
    const Vector expected = b.exp() * y1;
    CHECK((z[0].at(400) - expected).norm() < 1e-5);
}

TEST_CASE("first variation matches common-random-number central differences") {
    SmoothScenario sc(400);
    const auto base = sc.model->solve(sc.y, 0).paths;
    VariationSolver v(*sc.model, base, 0);
    const auto z = v.first_variation(sc.dir1);
    const double err = relative(z, fd_first(*sc.model, sc.y, sc.dir1, 0, 1e-3));
    MESSAGE("first variation relative error " << err);
    CHECK(err < 1e-2);
}

TEST_CASE("first variation is linear in the direction") {
    SmoothScenario sc(100);
    VariationSolver v(*sc.model, sc.model->solve(sc.y, 0).paths, 0);
    const auto z1 = v.first_variation(sc.dir1);
    const auto z2 = v.first_variation(sc.dir2);
    const auto z12 = v.first_variation(shift(sc.dir1, {{2.0, &sc.dir2}}));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, (z12[i] - z1[i] - 2.0 * z2[i]).sup_norm());
    CHECK(worst < 1e-10);
}

TEST_CASE("second variation") {
    SUBCASE("vanishes for linear coefficients") {
        SpaceSpec spec{1, 1, 1.0, 30};
        auto panel = std::make_shared<NoisePanel>(2, 30, spec);
        auto s = Semigroup::diagonal(vec1(-1.0), 1.0);
        MildModel m(spec, s,
                    make_coefficients(linear_drift(mat1(0.5), vec1(0.1)), linear_diffusion(mat1(0.2), mat1(0.3)),
                                      1, 1, 1.0),
                    {});
        auto y = Ensemble::broadcast(Path::constant(vec1(1.0), 30), panel, 4.0);
        VariationSolver v(m, m.solve(y, 0).paths, 0);
        auto d = Ensemble::broadcast(Path::constant(vec1(1.0), 30), panel, 4.0);
        const auto z = v.second_variation(d, d);
        for (int i = 0; i < 30; ++i) CHECK(z[i].sup_norm() == 0.0);
    }
    SUBCASE("quadratic drift against second central differences") {
        SpaceSpec spec{1, 1, 0.5, 200};
        auto s = Semigroup::diagonal(vec1(0.0), spec.horizon);
        MildModel m(spec, s,
                    make_coefficients(polynomial_drift({0.0, 0.0, 1.0}, 1, 2.0), zero_diffusion(), 1, 1, 1.0),
                    {.tol = 1e-14});
        auto y = Ensemble::broadcast(Path::constant(vec1(0.5), 200), nullptr, 4.0);
        auto d = Ensemble::broadcast(Path::constant(vec1(1.0), 200), nullptr, 4.0);
        VariationSolver v(m, m.solve(y, 0).paths, 0);
        const auto z = v.second_variation(d, d);
        const double err = relative(z, fd_mixed2(m, y, d, d, 0, 1e-3));
        MESSAGE("second variation relative error " << err);
        CHECK(err < 2e-2);
        // closed form: X = x0 / (1 - x0 t), d^2 X / dx0^2 = 2t / (1 - x0 t)^3
        const double t = spec.horizon;
        CHECK(z[0].at(200)[0] == doctest::Approx(2 * t / std::pow(1 - 0.5 * t, 3)).epsilon(1e-3));
    }
    SUBCASE("symmetric and matching mixed central differences on the smooth scenario") {
        SmoothScenario sc(200);
        VariationSolver v(*sc.model, sc.model->solve(sc.y, 0).paths, 0);
        const auto a = v.second_variation(sc.dir1, sc.dir2);
        const auto b = v.second_variation(sc.dir2, sc.dir1);
        CHECK(max_gap(a, b) < 1e-10);
        const double err = relative(a, fd_mixed2(*sc.model, sc.y, sc.dir1, sc.dir2, 0, 1e-3));
        MESSAGE("mixed second variation relative error " << err);
        CHECK(err < 2e-2);
    }
}

TEST_CASE("generic recursion agrees with the variational equations") {
    SmoothScenario sc(100);
    VariationSolver v(*sc.model, sc.model->solve(sc.y, 0).paths, 0);
    const Ensemble one[] = {sc.dir1};
    const Ensemble two[] = {sc.dir1, sc.dir2};
    const double gap1 = max_gap(v.nth_variation(one), v.first_variation(sc.dir1));
    const double gap2 = max_gap(v.nth_variation(two), v.second_variation(sc.dir1, sc.dir2));
    MESSAGE("generic vs dedicated: order 1 " << gap1 << ", order 2 " << gap2);
    CHECK(gap1 < 1e-9);
    CHECK(gap2 < 1e-9);
}

TEST_CASE("third variation of a cubic drift against five-point differences") {
    SpaceSpec spec{1, 1, 0.5, 200};
    auto s = Semigroup::diagonal(vec1(-0.5), spec.horizon);
    MildModel m(spec, s,
                make_coefficients(polynomial_drift({0.0, 0.5, 0.0, 1.0}, 1, 2.0), zero_diffusion(), 1, 1,
                                  s.bound()),
                {.tol = 1e-14});
    auto y = Ensemble::broadcast(Path::constant(vec1(0.6), 200), nullptr, 4.0);
    auto d = Ensemble::broadcast(Path::constant(vec1(1.0), 200), nullptr, 4.0);
    VariationSolver v(m, m.solve(y, 0).paths, 0);
    const Ensemble dirs[] = {d, d, d};
    const auto z = v.nth_variation(dirs);
    const double err = relative(z, fd_third(m, y, d, 0, 1e-2));
    MESSAGE("third variation relative error " << err);
    CHECK(err < 5e-2);
}

TEST_CASE("vertical derivative") {
    const double a = 1.2, sigma = 0.4, horizon = 1.0;
    SpaceSpec spec{1, 1, horizon, 100};
    auto panel = std::make_shared<NoisePanel>(4, 2000, spec);
    auto s = Semigroup::diagonal(vec1(-a), horizon);
    MildModel m(spec, s, make_coefficients(zero_drift(), constant_diffusion(mat1(sigma)), 1, 1, 1.0), {});
    Path y(1, 100);
    for (int k = 0; k <= 100; ++k) y.values()(0, k) = 1.0 + 0.2 * std::sin(0.1 * k);
    const int t = 40;
    const auto base = m.solve(Ensemble::broadcast(y, panel, 4.0), t).paths;
    VariationSolver v(m, base, t);
    const auto phi = TerminalFunctional::parse("coordinate", 0);
    const auto est = v.model().spec().steps == 100 ? vertical_derivative(v, vec1(0.7), phi) : MonteCarloEstimate{};
    const double expected = std::exp(-a * (horizon - spec.time(t))) * 0.7;
    CHECK(std::abs(est.mean - expected) <= 4.0 * est.standard_error + 1e-12);
    CHECK(vertical_derivative(v, vec1(0.0), phi).mean == 0.0);
    CHECK(vertical_derivative(v, vec1(1.4), phi).mean == 2.0 * est.mean);
    CHECK_THROWS_AS(vertical_derivative(v, vec1(1.0), TerminalFunctional::parse("sup_norm")),
                    CapabilityError);
    // smooth energy functional: E[X_T z_T]
    const auto energy = vertical_derivative(v, vec1(0.7), TerminalFunctional::parse("energy"));
    double mean_xt = 0.0;
    for (int i = 0; i < 2000; ++i) mean_xt += base[i].at(100)[0] / 2000;
    CHECK(energy.mean == doctest::Approx(mean_xt * expected).epsilon(1e-10));
}

TEST_CASE("missing derivatives are a capability error") {
    SpaceSpec spec{1, 1, 1.0, 20};
    auto s = Semigroup::diagonal(vec1(0.0), 1.0);
    MildModel m(spec, s, make_coefficients(running_max_drift(mat1(0.5)), zero_diffusion(), 1, 1, 1.0), {});
    auto y = Ensemble::broadcast(Path::constant(vec1(1.0), 20), nullptr, 4.0);
    VariationSolver v(m, m.solve(y, 0).paths, 0);
    CHECK_THROWS_AS(v.first_variation(y), CapabilityError);

    MildModel sine(spec, s,
                   make_coefficients(sine_drift(vec1(0.5), mat1(1.0), mat1(0.0), vec1(0.0), spec), zero_diffusion(),
                                     1, 1, 1.0),
                   {});
    VariationSolver v2(sine, sine.solve(y, 0).paths, 0);
    const Ensemble four[] = {y, y, y, y};
    CHECK_THROWS_AS(v2.nth_variation(four), CapabilityError);
}

TEST_CASE("derivatives stay below the assembled uniform bound") {
    SpaceSpec spec{1, 1, 1.0, 100};
    auto s = Semigroup::diagonal(vec1(-0.3), 1.0);
    MildModel m(spec, s,
                make_coefficients(sine_drift(vec1(0.8), mat1(1.2), mat1(0.4), vec1(0.1), spec), zero_diffusion(), 1,
                                  1, s.bound()),
                {});
    std::vector<Path> dirs;
    for (int j = 0; j < 4; ++j) {
        Path d(1, 100);
        for (int k = 0; k <= 100; ++k) d.values()(0, k) = std::cos(0.05 * (j + 1) * k + j);
        d *= 1.0 / d.sup_norm();
        dirs.push_back(d);
    }
    for (double x0 : {-1.0, 0.0, 0.7, 2.0}) {
        auto y = Ensemble::broadcast(Path::constant(vec1(x0), 100), nullptr, 4.0);
        VariationSolver v(m, m.solve(y, 0).paths, 0);
        for (int order = 1; order <= 3; ++order) {
            for (int j = 0; j < 4; ++j) {
                std::vector<Ensemble> es;
                for (int l = 0; l < order; ++l) es.push_back(Ensemble::broadcast(dirs[(j + l) % 4], nullptr, 4.0));
                const double measured = v.nth_variation(es)[0].sup_norm();
                CHECK(measured < variation_bound(m, order));
            }
        }
    }
    MESSAGE("bounds: " << variation_bound(m, 1) << " " << variation_bound(m, 2) << " "
                       << variation_bound(m, 3) << " (lambda " << m.lambda() << ")");
}
