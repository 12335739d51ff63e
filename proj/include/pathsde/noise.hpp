#pragma once

// Wiener increments from a counter-based generator (Philox4x32-10).
// Increment k of sample i is a pure function of (seed, i, k), so any
// subset of samples can be regenerated in any order or thread.

#include <array>
#include <cstdint>

#include "pathsde/hilbert.hpp"
#include "pathsde/types.hpp"

namespace pathsde {

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxBlock philox4x32_10(PhiloxBlock counter, PhiloxKey key);

// Standard normals number 2b and 2b+1 of the stream for (seed, sample):
// two 53-bit open-interval uniforms from one Philox block, then Box-Muller.
std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t sample, std::uint64_t block);

class NoisePanel {
public:
    NoisePanel(std::uint64_t seed, int samples, const SpaceSpec& spec);

    std::uint64_t seed() const { return seed_; }
    int samples() const { return samples_; }
    const SpaceSpec& spec() const { return spec_; }

    // Delta W over (t_k, t_{k+1}], ~ N(0, dt I_M).
    Vector increment(int sample, int k) const;
    // All K increments of one sample as columns of an M x K matrix.
    Matrix increments(int sample) const;

private:
    std::uint64_t seed_;
    int samples_;
    SpaceSpec spec_;
};

}  // namespace pathsde
