#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "pathsde/errors.hpp"
#include "pathsde/hilbert.hpp"

using namespace pathsde;

namespace {

Path random_path(std::mt19937_64& rng, int dim, int steps) {
    std::normal_distribution<double> n;
    Matrix m(dim, steps + 1);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return Path(m);
}

}  // namespace

TEST_CASE("space spec validation and snapping") {
    SpaceSpec spec{2, 1, 2.0, 10};
    CHECK(spec.dt() == doctest::Approx(0.2));
    CHECK(spec.snap(0.31) == 2);
    CHECK(spec.snap(-1.0) == 0);
    CHECK(spec.snap(5.0) == 10);
    spec.steps = 1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    try {
        SpaceSpec{0, 1, 1.0, 4}.validate();
    } catch (const ConfigError& e) {
        CHECK(e.field() == "space.dim_h");
    }
}

TEST_CASE("stopping paths") {
    std::mt19937_64 rng(1);
    Path x = random_path(rng, 2, 20);
    CHECK(stop_path(x, 20) == x);
    Path at0 = stop_path(x, 0);
    for (int k = 0; k <= 20; ++k) CHECK(at0.at(k) == x.at(0));
    for (int t = 0; t <= 20; ++t) {
        Path s = stop_path(x, t);
        CHECK(stop_path(s, t) == s);
        CHECK(s.sup_norm() <= x.sup_norm());
        for (int k = 0; k <= t; ++k) CHECK(s.at(k) == x.at(k));
        PathView view(x, t);
        for (int k = 0; k <= 20; ++k) CHECK(view.at(k) == s.at(k));
    }
}

TEST_CASE("semigroup actions") {
    Vector v(2);
    v << 1.0, 0.0;
    auto zero = Semigroup::generator(Matrix::Zero(2, 2), 2.0);
    CHECK((zero.apply(1.3, v) - v).norm() < 1e-15);

    auto decay = Semigroup::generator(-0.7 * Matrix::Identity(2, 2), 2.0);
    CHECK((decay.apply(1.5, v) - std::exp(-0.7 * 1.5) * v).norm() < 1e-14);

    Matrix rot(2, 2);
    rot << 0, 1, -1, 0;
    auto rotation = Semigroup::generator(rot, 2.0);
    const double t = std::numbers::pi / 2;
    Vector expect(2);
    expect << std::cos(t) * v[0] + std::sin(t) * v[1], -std::sin(t) * v[0] + std::cos(t) * v[1];
    CHECK((rotation.apply(t, v) - expect).norm() < 1e-10);
    CHECK(expect[1] == doctest::Approx(-1.0));

    CHECK_THROWS_AS(rotation.apply(2.5, v), ArgumentError);
    CHECK_THROWS_AS(rotation.apply(-0.1, v), ArgumentError);
}

TEST_CASE("semigroup validation") {
    Vector spectrum(3);
    spectrum << -1.0, -0.2, 0.0;
    auto diag = Semigroup::diagonal(spectrum, 1.0);
    CHECK(diag.bound() == doctest::Approx(1.0));
    auto check = validate(diag);
    CHECK(check.identity_defect <= 1e-12);
    CHECK(check.property_defect <= 1e-10);
    CHECK(check.max_sampled_norm <= 1.0);

    Matrix a(2, 2);
    a << -1.0, 2.0, 0.0, -0.5;
    auto gen = Semigroup::generator(a, 1.0);
    CHECK_NOTHROW(validate(gen));
    CHECK_THROWS_AS(validate(gen.with_bound(0.5)), ConfigError);
}

TEST_CASE("semigroup application is linear") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    Matrix a(3, 3);
    for (int i = 0; i < 9; ++i) a.data()[i] = n(rng);
    auto s = Semigroup::generator(a, 1.0);
    Vector x(3), y(3);
    for (int i = 0; i < 3; ++i) {
        x[i] = n(rng);
        y[i] = n(rng);
    }
    Vector lhs = s.apply(0.4, Vector(2.0 * x + y));
    Vector rhs = 2.0 * s.apply(0.4, x) + s.apply(0.4, y);
    CHECK((lhs - rhs).norm() < 1e-12 * (1 + rhs.norm()));
}

TEST_CASE("grid cache and path maps") {
    SpaceSpec spec{1, 1, 1.0, 10};
    auto s = Semigroup::diagonal(Vector::Constant(1, -2.0), 1.0);
    SemigroupGrid grid(s, spec);
    Path c = Path::constant(Vector::Constant(1, 3.0), 10);
    Path mapped = path_map(grid, 0, c);
    for (int k = 0; k <= 10; ++k) CHECK(mapped.at(k)[0] == doctest::Approx(3.0 * std::exp(-2.0 * k / 10.0)));
    Path shifted = path_map(grid, 4, c);
    CHECK(shifted.at(3)[0] == 3.0);
    CHECK(shifted.at(6)[0] == doctest::Approx(3.0 * std::exp(-0.4)));

    auto zero = Semigroup::generator(Matrix::Zero(1, 1), 1.0);
    SemigroupGrid zg(zero, spec);
    CHECK(path_map(zg, 0, c) == c);
    CHECK(path_map(grid, 0, Path(1, 10)).sup_norm() == 0.0);
}

TEST_CASE("ensemble norms") {
    SpaceSpec spec{1, 1, 1.0, 10};
    std::vector<Path> constant{Path::constant(Vector::Constant(1, -2.5), 10)};
    CHECK(ensemble_norm(constant, 4.0, 3.0, spec.dt()) == doctest::Approx(2.5));
    Path grow(1, 10);
    for (int k = 0; k <= 10; ++k) grow.at(k)[0] = 1.5 * std::exp(0.8 * spec.time(k));
    std::vector<Path> g{grow};
    CHECK(ensemble_norm(g, 3.0, 0.8, spec.dt()) == doctest::Approx(1.5));
    std::vector<Path> two{Path::constant(Vector::Constant(1, 1.0), 10),
                          Path::constant(Vector::Constant(1, 2.0), 10)};
    CHECK(ensemble_norm(two, 2.0, 0.0, spec.dt()) == doctest::Approx(std::sqrt(2.5)));
    // huge rates must not underflow to a meaningless value
    CHECK(std::isfinite(log_ensemble_norm(g, 3.0, 1e6, spec.dt())));
    std::vector<Path> zeros{Path(1, 10)};
    CHECK(ensemble_norm(zeros, 2.0, 0.0, spec.dt()) == 0.0);
}
