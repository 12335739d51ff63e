#pragma once

// Oracle-backed check suites behind `check --suite`. Every assertion keeps
// its measured value and tolerance so reports show the margin, and carries
// the acceptance criterion it belongs to (0 for supporting checks).

#include <cstdint>
#include <string>
#include <vector>

namespace pathsde::app {

enum class Relation { at_most, below, above };

struct Assertion {
    std::string suite;
    std::string name;
    int criterion = 0;
    Relation relation = Relation::at_most;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct CheckOptions {
    std::uint64_t seed = 1;
    // Monte Carlo sample count for the moment checks; 0 keeps 1e5.
    int samples = 0;
    // Multiplies every upper tolerance and divides every lower threshold.
    // The harness self-test corrupts it to 0.
    double tolerance_scale = 1.0;
};

struct SuiteResult {
    std::string suite;
    std::vector<Assertion> assertions;
    double seconds = 0.0;
    bool pass() const;
};

const std::vector<std::string>& suite_names();
bool is_suite(const std::string& name);

// Runs one suite ("all" is expanded by the caller). Library errors raised
// inside a suite are recorded as a failing assertion, never thrown.
SuiteResult run_suite(const std::string& name, const CheckOptions& options);

const char* relation_symbol(Relation r);

}  // namespace pathsde::app
