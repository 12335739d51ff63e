#pragma once

// Stability of X^{t,Y} under joint perturbation of (t, Y, S, b, sigma):
// solve every member of a family and its limit on one noise panel and
// tabulate the ensemble-norm errors against a re-solve baseline.

#include <memory>
#include <string>
#include <vector>

#include "pathsde/sde.hpp"

namespace pathsde {

struct FamilyMember {
    int t = 0;  // grid index of the initial time
    std::shared_ptr<const MildModel> model;
    Ensemble y;
    double size = 0.0;  // magnitude of the perturbation against the limit
};

struct PerturbationFamily {
    std::string name;
    FamilyMember limit;
    std::vector<FamilyMember> members;  // j = 1..J
    // Directions for derivative errors; order k uses the first k.
    std::vector<Ensemble> directions;
    // Declared tail threshold; < 0 estimates it from members 1 and J as
    // 2 e_1 (size_J / size_1)^exponent.
    double threshold = -1.0;
    double threshold_exponent = 1.0;
    // Documented negative control: skips the continuity-at-t check.
    bool negative_control = false;
};

struct StabilityRow {
    int j = 0;
    double t_j = 0.0;
    double e_j = 0.0;
    std::vector<double> derivative_errors;  // per requested order
    double semigroup_gap = 0.0;             // max_{t, i} |S_j(t) e_i - S(t) e_i|
};

struct StabilityReport {
    std::vector<StabilityRow> rows;
    std::vector<int> orders;
    double baseline = 0.0;
    std::vector<double> derivative_baselines;
    double threshold = 0.0;
    double slope = 0.0;  // least-squares slope of log e_j against log j
    std::vector<double> derivative_slopes;
    bool pass = false;
    std::string verdict;
};

// Second-difference jump of y around grid index t, net of the curvature
// seen a few steps away, maximized over samples.
double jump_at(const Ensemble& y, int t);

// max over sampled times and basis vectors of |a(t) e_i - b(t) e_i|.
double semigroup_gap(const Semigroup& a, const Semigroup& b, int samples = 65);

// Checks the family invariants (shared grid, panel and bounds; continuity of
// Y at the limit time unless a negative control) and throws ConfigError
// naming the offending member otherwise.
void validate_family(const PerturbationFamily& f);

StabilityReport stability_report(const PerturbationFamily& f, const std::vector<int>& orders);

}  // namespace pathsde
