#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pathsde/errors.hpp"
#include "pathsde/fixedpoint.hpp"

using namespace pathsde;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

ContractionProblem linear_problem() {
    ContractionProblem p;
    p.h = [](const Vector& u, const Vector& y) { return Vector(0.5 * y + u); };
    p.alpha = 0.5;
    p.order = 4;
    p.d_mixed = [](const Vector& u, const Vector&, std::span<const Vector> xs,
                   std::span<const Vector> ys) -> Vector {
        if (xs.size() == 1 && ys.empty()) return xs[0];
        if (xs.empty() && ys.size() == 1) return 0.5 * ys[0];
        return Vector::Zero(u.size());
    };
    p.initial_state = Vector::Zero(1);
    return p;
}

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

ContractionProblem sine_scalar(double shift = 0.0) {
    ContractionProblem p;
    p.h = [shift](const Vector& u, const Vector& y) {
        return Vector((0.5 * y.array().sin() + u.array() + shift * u.array().cos()).matrix());
    };
    p.alpha = 0.5;
    p.order = 3;
    p.d_mixed = [shift](const Vector& u, const Vector& y, std::span<const Vector> xs,
                        std::span<const Vector> ys) -> Vector {
        const int kx = static_cast<int>(xs.size()), ky = static_cast<int>(ys.size());
        if (kx > 0 && ky > 0) return Vector::Zero(1);
        if (kx > 0) {
            double d[] = {std::cos(u[0]), -std::sin(u[0]), -std::cos(u[0]), std::sin(u[0])};
            double v = shift * d[kx % 4];
            for (const auto& x : xs) v *= x[0];
            if (kx == 1) v += xs[0][0];
            return scalar(v);
        }
        double d[] = {std::cos(y[0]), -std::sin(y[0]), -std::cos(y[0]), std::sin(y[0])};
        double v = 0.5 * d[(ky + 3) % 4];
        for (const auto& x : ys) v *= x[0];
        return scalar(v);
    };
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

}  // namespace

TEST_CASE("Picard solutions of scalar problems") {
    auto lin = linear_problem();
    auto r = solve(lin, scalar(3.0), scalar(0.0), 1e-12);
    CHECK(r.value[0] == doctest::Approx(6.0).epsilon(1e-11));
    CHECK(r.residual <= 1e-12);

    auto sine = sine_scalar();
    CHECK(std::abs(solve(sine, scalar(0.0), scalar(0.0), 1e-12).value[0]) < 1e-12);
    const double root =
        oracle::bisect([](double y) { return y - 0.5 * std::sin(y) - 1.0; }, 0.0, 4.0);
    CHECK(std::abs(solve(sine, scalar(1.0), scalar(0.0), 1e-12).value[0] - root) < 1e-11);
}

TEST_CASE("Picard flags a wrong modulus") {
    auto p = linear_problem();
    p.h = [](const Vector& u, const Vector& y) { return Vector(0.99 * y + u); };
    p.alpha = 0.1;
    CHECK_THROWS_AS(solve(p, scalar(1.0), scalar(0.0), 1e-10), ConvergenceError);
    p.alpha = 1.0;
    CHECK_THROWS_AS(solve(p, scalar(1.0), scalar(0.0), 1e-10), ArgumentError);
}

TEST_CASE("resolvent by Neumann series") {
    ContractionProblem p;
    p.alpha = 0.5;
    p.d_state = [](const Vector&, const Vector&, const Vector& v) { return Vector(0 * v); };
    Vector v(3);
    v << 1, -2, 0.5;
    CHECK((resolvent_apply(p, v, v, v, 1e-12) - v).norm() == 0.0);
    p.d_state = [](const Vector&, const Vector&, const Vector& w) { return Vector(0.5 * w); };
    CHECK((resolvent_apply(p, v, v, v, 1e-12) - 2 * v).norm() < 1e-11);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(-1, 1);
    Matrix d(3, 3);
    for (int i = 0; i < 9; ++i) d(i / 3, i % 3) = unit(rng);
    d *= 0.4 / d.jacobiSvd().singularValues()(0);
    p.alpha = 0.4;
    p.d_state = [d](const Vector&, const Vector&, const Vector& w) { return Vector(d * w); };
    Vector dense = (Matrix::Identity(3, 3) - d).partialPivLu().solve(v);
    CHECK((resolvent_apply(p, v, v, v, 1e-12) - dense).norm() < 1e-9);

    p.d_state = [](const Vector&, const Vector&, const Vector& w) { return Vector(1.5 * w); };
    CHECK_THROWS_AS(resolvent_apply(p, v, v, v, 1e-12), ContractionError);
}

TEST_CASE("first derivatives of fixed points") {
    CHECK(derivative_first(linear_problem(), scalar(0.3), scalar(1.0), 1e-12)[0] ==
          doctest::Approx(2.0).epsilon(1e-11));
    CHECK(derivative_first(quadratic_problem(), scalar(0.0), scalar(1.0), 1e-12)[0] ==
          doctest::Approx(1.0).epsilon(1e-11));
    auto sine = sine_scalar();
    const Vector dir[] = {scalar(1.0)};
    auto phi = [&](const Vector& u) { return solve(sine, u, scalar(0.0), 1e-14).value; };
    const double fd = oracle::richardson(phi, scalar(1.0), dir, 0.05, 2)[0];
    CHECK(std::abs(derivative_first(sine, scalar(1.0), scalar(1.0), 1e-12)[0] - fd) < 1e-6);
}

TEST_CASE("higher derivatives of the quadratic problem") {
    auto p = quadratic_problem();
    const Vector two[] = {scalar(1.0), scalar(1.0)};
    const Vector three[] = {scalar(1.0), scalar(1.0), scalar(1.0)};
    CHECK(std::abs(derivative_n(p, scalar(0.0), two, 1e-13)[0] - 0.5) < 1e-8);
    CHECK(std::abs(derivative_n(p, scalar(0.0), three, 1e-13)[0] - 0.75) < 1e-8);
    // phi(u) = 2(1 - sqrt(1 - u)) away from 0
    const double u = 0.3;
    const double third = 0.75 * std::pow(1 - u, -2.5);
    CHECK(std::abs(derivative_n(p, scalar(u), three, 1e-13)[0] - third) < 1e-8);
    const Vector lin_dirs[] = {scalar(1.0), scalar(-2.0)};
    CHECK(std::abs(derivative_n(linear_problem(), scalar(0.2), lin_dirs, 1e-12)[0]) < 1e-14);
}

TEST_CASE("derivative_n matches finite differences and is symmetric") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unit(-1, 1);
    for (int trial = 0; trial < 5; ++trial) {
        auto s = oracle::SineProblem::random(rng, 2, 3, 0.5);
        auto p = from_sine(s, 3);
        Vector u(2);
        u << unit(rng), unit(rng);
        std::vector<Vector> dirs(3, Vector(2));
        for (auto& d : dirs) d << unit(rng), unit(rng);
        auto phi = [&](const Vector& v) { return solve(p, v, Vector::Zero(3), 1e-15).value; };
        for (int j = 1; j <= 3; ++j) {
            std::span<const Vector> sub(dirs.data(), j);
            Vector exact = derivative_n(p, u, sub, 1e-14);
            Vector fd = oracle::richardson(phi, u, sub, 0.05, 2);
            CHECK((exact - fd).norm() <= 1e-5 * (1.0 + fd.norm()));
        }
        const Vector perm[] = {dirs[2], dirs[0], dirs[1]};
        CHECK((derivative_n(p, u, dirs, 1e-14) - derivative_n(p, u, perm, 1e-14)).norm() < 1e-11);
        std::vector<Vector> states(2, Vector(3));
        for (auto& v : states) v << unit(rng), unit(rng), unit(rng);
        CHECK(mixed_symmetry_defect(p, u, Vector::Zero(3), dirs, states) < 1e-12);
    }
}

TEST_CASE("uniform derivative bound dominates measured derivatives") {
    CHECK(uniform_derivative_bound(0.5, 1.0, 1) == doctest::Approx(2.0));
    // k = 2: (M + 2 M b1 + M b1^2) / (1 - alpha) with b1 = 2
    CHECK(uniform_derivative_bound(0.5, 1.0, 2) == doctest::Approx(18.0));
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unit(-1, 1);
    auto s = oracle::SineProblem::random(rng, 2, 2, 0.5);
    auto p = from_sine(s, 2);
    for (int k = 1; k <= 3; ++k) {
        const double bound = uniform_derivative_bound(0.5, s.derivative_bound(k), k);
        for (int trial = 0; trial < 5; ++trial) {
            Vector u(2);
            u << unit(rng), unit(rng);
            std::vector<Vector> dirs(k, Vector(2));
            for (auto& d : dirs) {
                d << unit(rng), unit(rng);
                d.normalize();
            }
            CHECK(derivative_n(p, u, dirs, 1e-12).norm() < bound);
        }
    }
}

TEST_CASE("Lipschitz transfer and stability under perturbation") {
    auto base = sine_scalar();
    base.modulus_w = [](double r) { return r; };
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unit(-2, 2);
    for (int i = 0; i < 20; ++i) {
        const double a = unit(rng), b = unit(rng);
        const double gap = std::abs(solve(base, scalar(a), scalar(0), 1e-13).value[0] -
                                    solve(base, scalar(b), scalar(0), 1e-13).value[0]);
        CHECK(gap <= base.modulus_w(std::abs(a - b)) / (1 - base.alpha) + 1e-12);
    }
    const Vector dirs[] = {scalar(1.0), scalar(0.5), scalar(-1.0)};
    double prev_value = 1e300, prev_deriv = 1e300;
    for (int k = 4; k <= 256; k *= 2) {
        auto pk = sine_scalar(1.0 / k);
        double value_err = 0.0, deriv_err = 0.0;
        for (double u : {-1.0, 0.0, 0.7, 1.5}) {
            value_err = std::max(value_err, std::abs(solve(pk, scalar(u), scalar(0), 1e-13).value[0] -
                                                     solve(base, scalar(u), scalar(0), 1e-13).value[0]));
            deriv_err = std::max(deriv_err, std::abs(derivative_n(pk, scalar(u), dirs, 1e-13)[0] -
                                                     derivative_n(base, scalar(u), dirs, 1e-13)[0]));
        }
        CHECK(value_err < prev_value);
        CHECK(deriv_err < prev_deriv);
        prev_value = value_err;
        prev_deriv = deriv_err;
    }
    CHECK(prev_value < 0.01);
    CHECK(prev_deriv < 0.01);
}

TEST_CASE("capability and argument errors") {
    auto p = quadratic_problem();
    p.order = 2;
    const Vector three[] = {scalar(1.0), scalar(1.0), scalar(1.0)};
    CHECK_THROWS_AS(derivative_n(p, scalar(0.0), three, 1e-10), CapabilityError);
    CHECK_THROWS_AS(derivative_n(p, scalar(0.0), std::span<const Vector>(), 1e-10), ArgumentError);
    p.initial_state = Vector();
    const Vector one[] = {scalar(1.0)};
    CHECK_THROWS_AS(derivative_n(p, scalar(0.0), one, 1e-10), ArgumentError);
    CHECK(derivative_n(p, scalar(0.0), one, 1e-10, scalar(0.0))[0] == doctest::Approx(1.0));
}
