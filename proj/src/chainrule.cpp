#include "pathsde/chainrule.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pathsde/errors.hpp"
#include "pathsde/partitions.hpp"

namespace pathsde {

namespace {

Vector eval_checked(const SmoothMap& f, const Vector& u) {
    if (f.domain && !f.domain(u)) {
        throw DomainError("finite-difference stencil left the declared domain");
    }
    return f.eval(u);
}

Vector nested_central(const SmoothMap& f, const Vector& u, std::span<const Vector> dirs,
                      double h) {
    if (dirs.empty()) return eval_checked(f, u);
    const Vector& d = dirs.front();
    auto rest = dirs.subspan(1);
    Vector plus = nested_central(f, u + h * d, rest, h);
    Vector minus = nested_central(f, u - h * d, rest, h);
    return (plus - minus) / (2.0 * h);
}

void check_fd_order(std::size_t order) {
    if (order > static_cast<std::size_t>(kMaxFdOrder)) {
        throw CapabilityError("finite differences are capped at order " +
                              std::to_string(kMaxFdOrder));
    }
}

}  // namespace

Vector SmoothMap::derivative(const Vector& u, std::span<const Vector> dirs) const {
    if (dirs.empty()) return eval(u);
    if (deriv) {
        if (static_cast<int>(dirs.size()) > order) {
            throw CapabilityError("map supplies derivatives up to order " +
                                  std::to_string(order) + ", requested " +
                                  std::to_string(dirs.size()));
        }
        return deriv(u, dirs);
    }
    return fd_directional(*this, u, dirs);
}

double default_fd_step(int order, const Vector& u) {
    const double eps = std::numeric_limits<double>::epsilon();
    return std::pow(eps, 1.0 / (order + 2)) * (1.0 + u.norm());
}

Vector fd_directional(const SmoothMap& f, const Vector& u, std::span<const Vector> dirs,
                      double step) {
    check_fd_order(dirs.size());
    if (!(step > 0.0)) throw ArgumentError("finite-difference step must be positive");
    return nested_central(f, u, dirs, step);
}

Vector fd_directional(const SmoothMap& f, const Vector& u, std::span<const Vector> dirs) {
    return fd_directional(f, u, dirs, default_fd_step(static_cast<int>(dirs.size()), u));
}

Vector fd_richardson(const SmoothMap& f, const Vector& u, std::span<const Vector> dirs,
                     double step) {
    Vector coarse = fd_directional(f, u, dirs, step);
    Vector fine = fd_directional(f, u, dirs, 0.5 * step);
    return (4.0 * fine - coarse) / 3.0;
}

Vector faa_di_bruno(const SmoothMap& f, const SmoothMap& g, const Vector& u,
                    std::span<const Vector> dirs) {
    const int j = static_cast<int>(dirs.size());
    if (j == 0) return g.eval(f.eval(u));
    if (f.deriv && f.order < j) {
        throw CapabilityError("inner map lacks derivatives of order " + std::to_string(j));
    }
    if (g.deriv && g.order < j) {
        throw CapabilityError("outer map lacks derivatives of order " + std::to_string(j));
    }

    const Vector fu = f.eval(u);
    // f-derivatives along each block, keyed by the block's bitmask
    std::map<std::uint32_t, Vector> inner;
    auto inner_derivative = [&](const IndexSet& block) -> const Vector& {
        const std::uint32_t key = to_mask(block);
        auto it = inner.find(key);
        if (it != inner.end()) return it->second;
        std::vector<Vector> sub;
        sub.reserve(block.size());
        for (int idx : block) sub.push_back(dirs[idx]);
        return inner.emplace(key, f.derivative(u, sub)).first->second;
    };

    std::vector<int> all(j);
    for (int i = 0; i < j; ++i) all[i] = i;
    const IndexSet everything(all);

    Vector total;
    for (int blocks = 1; blocks <= j; ++blocks) {
        for (const auto& p : partitions_of(everything, blocks)) {
            std::vector<Vector> outer_dirs;
            outer_dirs.reserve(p.size());
            for (const auto& block : p.blocks) outer_dirs.push_back(inner_derivative(block));
            Vector term = g.derivative(fu, outer_dirs);
            if (total.size() == 0) {
                total = std::move(term);
            } else {
                total += term;
            }
        }
    }
    return total;
}

}  // namespace pathsde
