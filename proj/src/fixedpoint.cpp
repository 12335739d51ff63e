#include "pathsde/fixedpoint.hpp"

#include <bit>
#include <cmath>
#include <string>
#include <vector>

#include "pathsde/errors.hpp"
#include "pathsde/partitions.hpp"

namespace pathsde {

namespace {

constexpr int kMaxNeumannTerms = 100000;

void require_modulus(double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) {
        throw ArgumentError("contraction modulus must lie in [0, 1)");
    }
}

void require_tolerance(double tol) {
    if (!(tol > 0.0)) throw ArgumentError("tolerance must be positive");
}

}  // namespace

Vector ContractionProblem::param_derivative(const Vector& u, const Vector& y,
                                            const Vector& x) const {
    if (!d_mixed) throw CapabilityError("problem has no parameter derivative");
    const Vector xs[] = {x};
    return d_mixed(u, y, xs, {});
}

Vector ContractionProblem::state_derivative(const Vector& u, const Vector& y,
                                            const Vector& v) const {
    if (d_state) return d_state(u, y, v);
    if (!d_mixed) throw CapabilityError("problem has no state derivative");
    const Vector ys[] = {v};
    return d_mixed(u, y, {}, ys);
}

FixedPointResult solve(const ContractionProblem& p, const Vector& u, const Vector& y0,
                       double tol) {
    require_modulus(p.alpha);
    require_tolerance(tol);

    FixedPointResult result;
    Vector y = y0;
    Vector next = p.h(u, y);
    result.iterations = 1;
    const double first_step = p.measure(next - y);

    if (p.alpha == 0.0 || first_step == 0.0) {
        result.value = std::move(next);
        result.residual = p.measure(p.h(u, result.value) - result.value);
        return result;
    }

    const double threshold = tol * (1.0 - p.alpha) / p.alpha;
    const int budget =
        std::max(1, static_cast<int>(std::ceil(std::log(tol * (1.0 - p.alpha) / first_step) /
                                               std::log(p.alpha)))) +
        2;

    double step = first_step;
    while (step > threshold) {
        if (result.iterations >= budget) {
            throw ConvergenceError("Picard iteration exceeded " + std::to_string(budget) +
                                   " steps; the declared modulus " +
                                   std::to_string(p.alpha) + " looks wrong");
        }
        y = std::move(next);
        next = p.h(u, y);
        ++result.iterations;
        step = p.measure(next - y);
    }
    result.value = std::move(next);
    result.residual = p.measure(p.h(u, result.value) - result.value);
    return result;
}

Vector resolvent_apply(const ContractionProblem& p, const Vector& u, const Vector& y,
                       const Vector& v, double tol) {
    require_modulus(p.alpha);
    require_tolerance(tol);

    const double cutoff = tol * (1.0 - p.alpha);
    Vector sum = Vector::Zero(v.size());
    Vector term = v;
    double term_norm = p.measure(term);
    int rising = 0;
    for (int n = 0; n < kMaxNeumannTerms; ++n) {
        if (term_norm < cutoff) return sum;
        sum += term;
        Vector next = p.state_derivative(u, y, term);
        const double next_norm = p.measure(next);
        if (next_norm >= term_norm) {
            if (++rising >= p.divergence_patience) {
                throw ContractionError("Neumann series terms stopped decreasing");
            }
        } else {
            rising = 0;
        }
        term = std::move(next);
        term_norm = next_norm;
    }
    throw ConvergenceError("Neumann series did not reach the tolerance");
}

Vector derivative_first(const ContractionProblem& p, const Vector& u, const Vector& x,
                        double tol) {
    const Vector xs[] = {x};
    return derivative_n(p, u, xs, tol);
}

namespace {

class DerivativeRecursion {
public:
    DerivativeRecursion(const ContractionProblem& p, const Vector& u,
                        std::span<const Vector> xs, Vector phi, double tol)
        : p_(p), u_(u), xs_(xs), phi_(std::move(phi)), tol_(tol),
          memo_(std::size_t{1} << xs.size()) {}

    const Vector& at(std::uint32_t mask) {
        auto& slot = memo_[mask];
        if (!slot) slot = compute(mask);
        return *slot;
    }

private:
    std::vector<Vector> param_dirs(std::uint32_t mask) const {
        std::vector<Vector> out;
        for (int i = 0; mask != 0; ++i, mask >>= 1) {
            if (mask & 1u) out.push_back(xs_[i]);
        }
        return out;
    }

    Vector compute(std::uint32_t mask) {
        const int j = std::popcount(mask);
        const IndexSet whole = from_mask(mask);

        Vector source = p_.d_mixed(u_, phi_, param_dirs(mask), {});
        // all non-empty sub-masks x of mask, in increasing order
        for (const IndexSet& x : power_set(whole)) {
            if (x.empty()) continue;
            const int size_x = static_cast<int>(x.size());
            const std::uint32_t x_mask = to_mask(x);
            const auto complement = param_dirs(mask & ~x_mask);
            for (int blocks = std::max(1, 2 - j + size_x); blocks <= size_x; ++blocks) {
                for (const Partition& part : partitions_of(x, blocks)) {
                    std::vector<Vector> state_dirs;
                    state_dirs.reserve(part.size());
                    for (const IndexSet& block : part.blocks) {
                        state_dirs.push_back(at(to_mask(block)));
                    }
                    source += p_.d_mixed(u_, phi_, complement, state_dirs);
                }
            }
        }
        return resolvent_apply(p_, u_, phi_, source, tol_);
    }

    const ContractionProblem& p_;
    const Vector& u_;
    std::span<const Vector> xs_;
    Vector phi_;
    double tol_;
    std::vector<std::optional<Vector>> memo_;
};

}  // namespace

Vector derivative_n(const ContractionProblem& p, const Vector& u, std::span<const Vector> xs,
                    double tol, const std::optional<Vector>& fixed_point) {
    const int j = static_cast<int>(xs.size());
    if (j < 1) throw ArgumentError("derivative_n needs at least one direction");
    if (j > kMaxPowerSetElements) throw ArgumentError("too many directions");
    if (!p.d_mixed) throw CapabilityError("problem supplies no mixed derivatives");
    if (j > p.order) {
        throw CapabilityError("problem supplies mixed derivatives up to order " +
                              std::to_string(p.order) + ", requested " + std::to_string(j));
    }
    Vector phi;
    if (fixed_point) {
        phi = *fixed_point;
    } else {
        if (p.initial_state.size() == 0) {
            throw ArgumentError("derivative_n needs a fixed point or an initial state");
        }
        phi = solve(p, u, p.initial_state, tol).value;
    }
    DerivativeRecursion recursion(p, u, xs, std::move(phi), tol);
    return recursion.at((std::uint32_t{1} << j) - 1);
}

double uniform_derivative_bound(double alpha, double m, int order) {
    require_modulus(alpha);
    if (order < 1 || order > kMaxPartitionElements) {
        throw ArgumentError("uniform_derivative_bound order out of range");
    }
    std::vector<double> bound(order + 1, 0.0);
    for (int k = 1; k <= order; ++k) {
        std::vector<int> all(k);
        for (int i = 0; i < k; ++i) all[i] = i;
        const IndexSet whole(all);
        double total = m;
        for (const IndexSet& x : power_set(whole)) {
            if (x.empty()) continue;
            const int size_x = static_cast<int>(x.size());
            for (int blocks = std::max(1, 2 - k + size_x); blocks <= size_x; ++blocks) {
                for (const Partition& part : partitions_of(x, blocks)) {
                    double term = m;
                    for (const IndexSet& block : part.blocks) term *= bound[block.size()];
                    total += term;
                }
            }
        }
        bound[k] = total / (1.0 - alpha);
    }
    return bound[order];
}

double mixed_symmetry_defect(const ContractionProblem& p, const Vector& u, const Vector& y,
                             std::span<const Vector> xs, std::span<const Vector> ys) {
    if (!p.d_mixed) throw CapabilityError("problem supplies no mixed derivatives");
    std::vector<Vector> px(xs.begin(), xs.end());
    std::vector<Vector> py(ys.begin(), ys.end());
    const Vector reference = p.d_mixed(u, y, px, py);
    double defect = 0.0;
    // reverse each list; for orders <= 3 per list this reaches a non-trivial permutation
    std::vector<Vector> rx(px.rbegin(), px.rend());
    std::vector<Vector> ry(py.rbegin(), py.rend());
    defect = std::max(defect, (p.d_mixed(u, y, rx, py) - reference).norm());
    defect = std::max(defect, (p.d_mixed(u, y, px, ry) - reference).norm());
    if (px.size() >= 2) {
        std::vector<Vector> sx = px;
        std::swap(sx[0], sx[1]);
        defect = std::max(defect, (p.d_mixed(u, y, sx, py) - reference).norm());
    }
    if (py.size() >= 2) {
        std::vector<Vector> sy = py;
        std::swap(sy[0], sy[1]);
        defect = std::max(defect, (p.d_mixed(u, y, px, sy) - reference).norm());
    }
    return defect;
}

}  // namespace pathsde
