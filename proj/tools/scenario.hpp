#pragma once

// Scenario files: a JSON document with an explicit schema version that
// names the grid, semigroup, coefficients from the built-in registry,
// initial data, solver settings and the requested outputs. Parsing turns
// every problem into a ConfigError carrying the JSON field path.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pathsde/coefficients.hpp"
#include "pathsde/perturb.hpp"
#include "pathsde/sensitivity.hpp"

namespace pathsde::app {

inline constexpr int kSchemaVersion = 1;

struct SensitivityRequest {
    int order = 1;
    std::vector<Path> directions;  // order k uses the first k (the last repeats)
    TerminalFunctional functional;
    std::vector<double> fd_ladder{1e-2, 1e-3, 1e-4};
    // Vertical derivative 1_{[t, T]} value, when requested.
    std::optional<Vector> vertical;
};

struct StabilityRequest {
    std::string family;  // drift, initial, semigroup, time
    int members = 8;
    nlohmann::json perturbation;
    std::vector<int> orders;
    std::vector<Path> directions;
    bool negative_control = false;
    double threshold = -1.0;
    double threshold_exponent = 1.0;
};

struct Scenario {
    std::string name;
    SpaceSpec spec;
    Semigroup semigroup = Semigroup::diagonal(Vector::Zero(1), 1.0);
    nlohmann::json drift_spec, diffusion_spec;
    DriftPart drift;
    DiffusionPart diffusion;
    SolverConfig solver;
    int t = 0;  // grid index of the initial time

    nlohmann::json initial_spec;
    std::uint64_t seed = 1;
    int samples = 1000;

    bool moments = true;
    std::optional<SensitivityRequest> sensitivity;
    std::optional<StabilityRequest> stability;

    nlohmann::json canonical;  // the parsed document after command-line overrides

    Coefficients coefficients() const;
    std::shared_ptr<const MildModel> model() const;
    std::shared_ptr<const NoisePanel> panel() const;
    Ensemble initial(const std::shared_ptr<const NoisePanel>& panel) const;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> samples;
    std::optional<int> steps;
};

Scenario parse_scenario(nlohmann::json doc, const Overrides& overrides);
Scenario load_scenario(const std::string& path, const Overrides& overrides);

DriftPart parse_drift(const nlohmann::json& j, const SpaceSpec& spec, const std::string& field);
DiffusionPart parse_diffusion(const nlohmann::json& j, const SpaceSpec& spec, const std::string& field);

// Builds the perturbation family requested by the scenario.
PerturbationFamily build_family(const Scenario& s);

}  // namespace pathsde::app
