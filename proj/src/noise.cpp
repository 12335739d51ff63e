#include "pathsde/noise.hpp"

#include <cmath>
#include <numbers>

#include "pathsde/errors.hpp"

namespace pathsde {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline double open_uniform(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

PhiloxBlock philox4x32_10(PhiloxBlock c, PhiloxKey k) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, c[0], hi0, lo0);
        mulhilo(kMul1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t sample, std::uint64_t block) {
    const PhiloxBlock counter{static_cast<std::uint32_t>(block),
                              static_cast<std::uint32_t>(block >> 32),
                              static_cast<std::uint32_t>(sample),
                              static_cast<std::uint32_t>(sample >> 32)};
    const PhiloxKey key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const PhiloxBlock r = philox4x32_10(counter, key);
    const double u1 = open_uniform(r[0], r[1]);
    const double u2 = open_uniform(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

NoisePanel::NoisePanel(std::uint64_t seed, int samples, const SpaceSpec& spec)
    : seed_(seed), samples_(samples), spec_(spec) {
    if (samples < 1) throw ArgumentError("a noise panel needs at least one sample");
    spec_.validate();
}

Vector NoisePanel::increment(int sample, int k) const {
    if (sample < 0 || sample >= samples_ || k < 0 || k >= spec_.steps) {
        throw ArgumentError("noise index out of range");
    }
    const int m = spec_.dim_u;
    const double scale = std::sqrt(spec_.dt());
    Vector out(m);
    for (int c = 0; c < m; ++c) {
        const std::uint64_t n = static_cast<std::uint64_t>(k) * m + c;
        out[c] = scale * normal_pair(seed_, sample, n / 2)[n % 2];
    }
    return out;
}

Matrix NoisePanel::increments(int sample) const {
    if (sample < 0 || sample >= samples_) throw ArgumentError("noise sample out of range");
    const int m = spec_.dim_u;
    const int total = m * spec_.steps;
    const double scale = std::sqrt(spec_.dt());
    Matrix out(m, spec_.steps);
    double* data = out.data();  // column-major: entry n = k * m + c
    for (int b = 0; 2 * b < total; ++b) {
        const auto pair = normal_pair(seed_, sample, b);
        data[2 * b] = scale * pair[0];
        if (2 * b + 1 < total) data[2 * b + 1] = scale * pair[1];
    }
    return out;
}

}  // namespace pathsde
