#include <cmath>
#include <random>

#include "doctest.h"
#include "pathsde/convolution.hpp"
#include "pathsde/errors.hpp"

using namespace pathsde;

namespace {

Semigroup scalar_decay(double a, double horizon) {
    return Semigroup::diagonal(Vector::Constant(1, -a), horizon);
}

OperatorPath constant_phi(double sigma, int steps) {
    return OperatorPath::deterministic(std::vector<Matrix>(steps, Matrix::Constant(1, 1, sigma)));
}

double rms(const std::vector<Path>& ys) {
    double s = 0.0;
    long n = 0;
    for (const auto& y : ys) {
        s += y.values().squaredNorm();
        n += y.values().cols();
    }
    return std::sqrt(s / n);
}

}  // namespace

TEST_CASE("c_beta identity") {
    for (double beta : {0.1, 0.2, 0.3, 0.4}) {
        CHECK(beta_identity_defect(beta) <= 1e-6);
        CHECK(FactorizationParams(beta).c_beta == doctest::Approx(std::sin(M_PI * beta) / M_PI));
    }
    CHECK_THROWS_AS(FactorizationParams(0.6), ArgumentError);
    CHECK_THROWS_AS(FactorizationParams::for_model(0.2, 4.0, 0.1), ArgumentError);
    CHECK_THROWS_AS(FactorizationParams::for_model(0.45, 4.0, 0.1), ArgumentError);
    CHECK_NOTHROW(FactorizationParams::for_model(0.3, 4.0, 0.1));
}

TEST_CASE("deterministic convolution") {
    SpaceSpec spec{1, 1, 1.0, 100};
    auto id = Semigroup::diagonal(Vector::Zero(1), 1.0);
    SemigroupGrid gid(id, spec);
    Path c = Path::constant(Vector::Constant(1, 2.0), 100);
    Path y = det_convolve(gid, 0, c);
    for (int k = 0; k <= 100; ++k) CHECK(y.at(k)[0] == doctest::Approx(2.0 * spec.time(k)).epsilon(1e-13));
    CHECK(det_convolve(gid, 0, Path(1, 100)).sup_norm() == 0.0);

    const double a = 1.3;
    SemigroupGrid g(scalar_decay(a, 1.0), spec);
    Path d = det_convolve(g, 0, c);
    double err = 0.0;
    for (int k = 0; k <= 100; ++k) {
        err = std::max(err, std::abs(d.at(k)[0] - 2.0 * (1 - std::exp(-a * spec.time(k))) / a));
    }
    CHECK(err <= 2.0 * spec.dt() * spec.dt());

    Path late = det_convolve(g, 30, c);
    for (int k = 0; k <= 30; ++k) CHECK(late.at(k)[0] == 0.0);
    CHECK(late.sup_norm() <= 1.0 * spec.horizon * c.sup_norm());
}

TEST_CASE("Ito sums: mean and Ornstein-Uhlenbeck variance") {
    SpaceSpec spec{1, 1, 1.0, 200};
    const double a = 1.0, sigma = 0.8;
    SemigroupGrid g(scalar_decay(a, 1.0), spec);
    const int n = 100000;
    NoisePanel w(99, n, spec);
    auto zero = ito_convolve(g, 0, constant_phi(0.0, 200), NoisePanel(1, 3, spec));
    for (const auto& y : zero) CHECK(y.sup_norm() == 0.0);
    auto ys = ito_convolve(g, 0, constant_phi(sigma, 200), w);
    for (int k : {50, 100, 200}) {
        double m = 0, v = 0;
        for (const auto& y : ys) {
            m += y.at(k)[0];
            v += y.at(k)[0] * y.at(k)[0];
        }
        m /= n;
        v = v / n - m * m;
        const double exact = sigma * sigma * (1 - std::exp(-2 * a * spec.time(k))) / (2 * a);
        CHECK(std::abs(m) <= 4.0 * std::sqrt(exact / n));
        CHECK(std::abs(v / exact - 1.0) <= 0.05);
    }
}

TEST_CASE("factorized convolution agrees with direct Ito sums") {
    SpaceSpec spec{1, 1, 1.0, 400};
    SemigroupGrid g(scalar_decay(1.0, 1.0), spec);
    NoisePanel w(5, 200, spec);
    auto phi = constant_phi(1.0, 400);
    for (double beta : {0.1, 0.25, 0.4}) {
        FactorizedConvolver conv(g, FactorizationParams(beta));
        auto direct = ito_convolve(g, 0, phi, w);
        auto fact = factorized_convolve(conv, 0, phi, w);
        double worst = 0.0;
        for (int i = 0; i < w.samples(); ++i) worst = std::max(worst, (fact[i] - direct[i]).sup_norm());
        CHECK(worst <= 0.02 * rms(direct));
    }
    FactorizedConvolver conv(g, FactorizationParams(0.25));
    for (const auto& y : factorized_convolve(conv, 0, constant_phi(0.0, 400), w)) CHECK(y.sup_norm() == 0.0);
}

TEST_CASE("factorized convolution with a generator matrix and a late start") {
    SpaceSpec spec{2, 2, 1.0, 120};
    Matrix a(2, 2);
    a << -1.0, 0.5, -0.5, -0.3;
    auto s = Semigroup::generator(a, 1.0);
    SemigroupGrid g(s, spec);
    Matrix phi0(2, 2);
    phi0 << 0.7, 0.1, -0.2, 0.4;
    auto phi = OperatorPath::deterministic(std::vector<Matrix>(120, phi0));
    NoisePanel w(8, 50, spec);
    FactorizedConvolver conv(g, FactorizationParams(0.3));
    auto direct = ito_convolve(g, 30, phi, w);
    auto fact = factorized_convolve(conv, 30, phi, w);
    double worst = 0.0;
    for (int i = 0; i < w.samples(); ++i) {
        worst = std::max(worst, (fact[i] - direct[i]).sup_norm());
        for (int k = 0; k <= 30; ++k) CHECK(fact[i].at(k).norm() == 0.0);
    }
    CHECK(worst <= 0.03 * rms(direct));
}

TEST_CASE("factorized variance and linearity") {
    SpaceSpec spec{1, 1, 1.0, 100};
    const double a = 0.7, sigma = 1.2;
    SemigroupGrid g(scalar_decay(a, 1.0), spec);
    FactorizedConvolver conv(g, FactorizationParams(0.3));
    const int n = 20000;
    NoisePanel w(17, n, spec);
    auto ys = factorized_convolve(conv, 0, constant_phi(sigma, 100), w);
    double v = 0;
    for (const auto& y : ys) v += y.at(100)[0] * y.at(100)[0];
    const double exact = sigma * sigma * (1 - std::exp(-2 * a)) / (2 * a);
    CHECK(std::abs(v / n / exact - 1.0) <= 0.05);

    std::vector<Matrix> p1, p2, sum;
    for (int k = 0; k < 100; ++k) {
        p1.push_back(Matrix::Constant(1, 1, std::sin(0.1 * k)));
        p2.push_back(Matrix::Constant(1, 1, 0.3 + 0.01 * k));
        sum.push_back(2.0 * p1.back() - p2.back());
    }
    NoisePanel small(3, 10, spec);
    auto f1 = factorized_convolve(conv, 0, OperatorPath::deterministic(p1), small);
    auto f2 = factorized_convolve(conv, 0, OperatorPath::deterministic(p2), small);
    auto fs = factorized_convolve(conv, 0, OperatorPath::deterministic(sum), small);
    auto i1 = ito_convolve(g, 0, OperatorPath::deterministic(p1), small);
    auto i2 = ito_convolve(g, 0, OperatorPath::deterministic(p2), small);
    auto is = ito_convolve(g, 0, OperatorPath::deterministic(sum), small);
    for (int i = 0; i < 10; ++i) {
        CHECK((fs[i] - (2.0 * f1[i] - f2[i])).sup_norm() < 1e-12);
        CHECK((is[i] - (2.0 * i1[i] - i2[i])).sup_norm() < 1e-12);
    }
}

TEST_CASE("Ito isometry on a deterministic operator path") {
    // the left-point sum carries an O(lambda dt) bias against the integral
    SpaceSpec spec{2, 2, 1.0, 1000};
    Vector spectrum(2);
    spectrum << -0.5, -1.5;
    auto s = Semigroup::diagonal(spectrum, 1.0);
    SemigroupGrid g(s, spec);
    std::vector<Matrix> phi;
    for (int k = 0; k < 1000; ++k) {
        Matrix m(2, 2);
        m << 1.0, 0.2 * std::cos(0.005 * k), 0.0, 0.5 + 0.3 * std::sin(0.007 * k);
        phi.push_back(m);
    }
    Vector moments = ito_isometry_moments(s, spec, 0, phi);
    const int n = 100000;
    NoisePanel w(23, n, spec);
    auto ys = ito_convolve(g, 0, OperatorPath::deterministic(phi), w);
    for (int k = 100; k <= 1000; k += 100) {
        double m = 0, m2 = 0;
        for (const auto& y : ys) {
            const double q = y.at(k).squaredNorm();
            m += q;
            m2 += q * q;
        }
        m /= n;
        const double se = std::sqrt((m2 / n - m * m) / n);
        CHECK(std::abs(m - moments[k]) <= 4.0 * se);
    }
}

TEST_CASE("start-time shifts and the factorization bound") {
    SpaceSpec spec{1, 1, 1.0, 128};
    SemigroupGrid g(scalar_decay(1.0, 1.0), spec);
    FactorizedConvolver conv(g, FactorizationParams(0.3));
    auto phi = constant_phi(1.0, 128);
    NoisePanel w(31, 400, spec);
    CHECK(convolve_shift_check(conv, phi, w, 40, 40, 4.0) == 0.0);
    CHECK(convolve_shift_check(conv, constant_phi(0.0, 128), w, 40, 60, 4.0) == 0.0);
    double previous = 1e300;
    for (int gap = 64; gap >= 1; gap /= 2) {
        const double r = convolve_shift_check(conv, phi, w, 32, 32 + gap, 4.0);
        CHECK(r < previous);
        previous = r;
    }

    const double p = 4.0, beta = 0.3;
    std::vector<Matrix> det;
    for (int k = 0; k < 128; ++k) det.push_back(Matrix::Constant(1, 1, 1.0 + 0.5 * std::sin(0.1 * k)));
    auto ys = factorized_convolve(conv, 0, OperatorPath::deterministic(det), w);
    const double lhs = ensemble_norm(ys, p, 0.0, spec.dt());
    const double rhs = std::pow(factorization_constant(beta, p, 1.0), 1.0 / p) *
                       factorization_phi_norm(scalar_decay(1.0, 1.0), spec, beta, p, det);
    CHECK(lhs <= rhs);
}
