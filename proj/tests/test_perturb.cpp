#include <cmath>
#include <memory>

#include "doctest.h"
#include "pathsde/coefficients.hpp"
#include "pathsde/errors.hpp"
#include "pathsde/perturb.hpp"

using namespace pathsde;

namespace {

struct Base {
    SpaceSpec spec;
    std::shared_ptr<NoisePanel> panel;
    Semigroup semigroup = Semigroup::diagonal(Vector::Constant(2, -1.0), 1.0);
    DriftPart drift;
    DiffusionPart diffusion;

    Base(int steps, int samples) : spec{2, 2, 1.0, steps} {
        panel = std::make_shared<NoisePanel>(33, samples, spec);
        Vector spectrum(2);
        spectrum << -0.5, -1.5;
        semigroup = Semigroup::diagonal(spectrum, spec.horizon);
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

    std::shared_ptr<const MildModel> model(const DriftPart& b, const Semigroup& s) const {
        auto co = make_coefficients(b, diffusion, 2, 2, s.bound());
        return std::make_shared<MildModel>(spec, s, co, SolverConfig{.tol = 1e-13});
    }
    std::shared_ptr<const MildModel> model() const { return model(drift, semigroup); }

    Ensemble smooth_y() const {
        Path y(2, spec.steps);
        for (int k = 0; k <= spec.steps; ++k) {
            const double s = spec.time(k);
            y.values().col(k) << std::cos(s), 0.5 * std::sin(2.0 * s);
        }
        return Ensemble::broadcast(y, panel, 4.0);
    }
};

// Family members share one growth bound: the largest over the family.
DriftPart pinned(DriftPart b, double g, double db) {
    b.g = g;
    b.derivative_bound = db;
    return b;
}

}  // namespace

TEST_CASE("jump_at separates a step from smooth curvature") {
    Base base(64, 2);
    CHECK(jump_at(base.smooth_y(), 16) <= 1e-12);
    Path y = base.smooth_y()[0];
    for (int k = 17; k <= 64; ++k) y.values().col(k).array() += 1.0;
    CHECK(jump_at(Ensemble::broadcast(y, base.panel, 4.0), 16) > 0.5);
}

TEST_CASE("a constant family stays at the re-solve baseline") {
    Base base(64, 16);
    PerturbationFamily f;
    f.limit = {0, base.model(), base.smooth_y(), 0.0};
    for (int j = 1; j <= 3; ++j) f.members.push_back({0, base.model(), base.smooth_y(), 0.0});
    f.threshold = 0.0;
    const auto r = stability_report(f, {});
    for (const auto& row : r.rows) CHECK(row.e_j <= std::max(2.0 * r.baseline, 1e-14));
    CHECK(r.pass);
}

TEST_CASE("drift perturbations of size 1/j converge at rate one") {
    Base base(64, 32);
    Vector shift(2);
    shift << 0.4, -0.3;
    const auto pert = constant_drift(shift);
    const double g = base.drift.g + pert.g, db = base.drift.derivative_bound;
    PerturbationFamily f;
    f.name = "drift";
    f.limit = {0, base.model(pinned(base.drift, g, db), base.semigroup), base.smooth_y(), 0.0};
    for (int j = 1; j <= 8; ++j) {
        const auto b = pinned(add_drift(base.drift, pert, 1.0 / j), g, db);
        f.members.push_back({0, base.model(b, base.semigroup), base.smooth_y(), 1.0 / j});
    }
    Path d(2, base.spec.steps);
    d.values().setOnes();
    f.directions = {Ensemble::broadcast(d, base.panel, 4.0)};
    const auto r = stability_report(f, {1, 2});
    CHECK(r.rows.back().e_j <= r.rows.front().e_j / 4.0);
    CHECK(r.slope < -0.8);
    CHECK(r.slope > -1.2);
    for (std::size_t o = 0; o < 2; ++o) {
        CHECK(r.rows.back().derivative_errors[o] <= r.rows.front().derivative_errors[o] / 4.0);
        CHECK(r.derivative_slopes[o] < -0.8);
    }
    CHECK(r.pass);
}

TEST_CASE("initial times t + 2^-j converge at rate one half") {
    Base base(256, 32);
    const int t = 64;
    PerturbationFamily f;
    f.limit = {t, base.model(), base.smooth_y(), 0.0};
    for (int j = 1; j <= 6; ++j) {
        f.members.push_back({t + (256 >> j), base.model(), base.smooth_y(), std::ldexp(1.0, -j)});
    }
    f.threshold_exponent = 0.5;
    const auto r = stability_report(f, {});
    CHECK(r.slope < -0.3);
    CHECK(r.pass);
}

TEST_CASE("a jump right after the limit time stalls the time family") {
    Base base(256, 32);
    const int t = 64;
    Path y = base.smooth_y()[0];
    for (int k = t + 1; k <= 256; ++k) y.values().col(k).array() += 1.0;
    const auto jumpy = Ensemble::broadcast(y, base.panel, 4.0);
    PerturbationFamily f;
    f.limit = {t, base.model(), jumpy, 0.0};
    for (int j = 1; j <= 6; ++j) f.members.push_back({t + (256 >> j), base.model(), jumpy, std::ldexp(1.0, -j)});
    f.threshold_exponent = 0.5;
    CHECK_THROWS_AS(validate_family(f), ConfigError);
    f.negative_control = true;
    const auto r = stability_report(f, {});
    CHECK(r.rows.back().e_j > 0.5);
    CHECK(r.rows.back().e_j > 100.0 * r.baseline);
    CHECK_FALSE(r.pass);
}

TEST_CASE("generator perturbations converge with the semigroup gap") {
    Base base(64, 32);
    Matrix a(2, 2), a1(2, 2);
    a << -0.5, 0.2, -0.2, -1.5;
    a1 << -0.3, 0.4, -0.4, -0.2;
    const auto limit_s = Semigroup::generator(a, 1.0).with_bound(1.0);
    PerturbationFamily f;
    f.limit = {0, base.model(base.drift, limit_s), base.smooth_y(), 0.0};
    for (int j = 1; j <= 8; ++j) {
        const auto s = Semigroup::generator(a + a1 / j, 1.0).with_bound(1.0);
        f.members.push_back({0, base.model(base.drift, s), base.smooth_y(), 1.0 / j});
    }
    const auto r = stability_report(f, {});
    CHECK(r.rows.back().semigroup_gap < r.rows.front().semigroup_gap / 4.0);
    CHECK(r.rows.back().e_j <= r.rows.front().e_j / 4.0);
    CHECK(r.slope < -0.8);
    CHECK(r.pass);
}

TEST_CASE("mismatched families are rejected with the member's field") {
    Base base(32, 4);
    PerturbationFamily f;
    f.limit = {0, base.model(), base.smooth_y(), 0.0};
    auto other = std::make_shared<NoisePanel>(34, 4, base.spec);
    Ensemble y = Ensemble::broadcast(base.smooth_y()[0], other, 4.0);
    f.members.push_back({0, base.model(), y, 1.0});
    try {
        validate_family(f);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "family.members[1].noise");
    }
    f.members[0].y = base.smooth_y();
    Vector shift = Vector::Constant(2, 0.5);
    f.members[0].model = base.model(add_drift(base.drift, constant_drift(shift), 1.0), base.semigroup);
    try {
        validate_family(f);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "family.members[1].coefficients.g");
    }
}
