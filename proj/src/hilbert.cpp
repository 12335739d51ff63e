#include "pathsde/hilbert.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "pathsde/errors.hpp"

namespace pathsde {

int SpaceSpec::snap(double t) const {
    const double k = std::round(t / horizon * steps);
    if (k <= 0) return 0;
    if (k >= steps) return steps;
    return static_cast<int>(k);
}

void SpaceSpec::validate() const {
    if (dim_h < 1) throw ConfigError("space.dim_h", "must be at least 1");
    if (dim_u < 1) throw ConfigError("space.dim_u", "must be at least 1");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw ConfigError("space.horizon", "must be positive and finite");
    }
    if (steps < 2) throw ConfigError("space.steps", "must be at least 2");
}

Path Path::constant(const Vector& c, int steps) {
    return Path(c.replicate(1, steps + 1));
}

double Path::sup_norm() const {
    if (values_.size() == 0) return 0.0;
    return values_.colwise().norm().maxCoeff();
}

Path& Path::operator+=(const Path& other) {
    values_ += other.values_;
    return *this;
}

Path& Path::operator-=(const Path& other) {
    values_ -= other.values_;
    return *this;
}

Path& Path::operator*=(double s) {
    values_ *= s;
    return *this;
}

Path stop_path(const Path& x, int k) {
    if (k < 0 || k > x.steps()) throw ArgumentError("stop index outside the grid");
    Path out = x;
    for (int j = k + 1; j <= x.steps(); ++j) out.at(j) = x.at(k);
    return out;
}

Semigroup Semigroup::diagonal(Vector spectrum, double horizon) {
    if (spectrum.size() < 1) throw ArgumentError("empty spectrum");
    if (!(horizon > 0.0)) throw ArgumentError("semigroup horizon must be positive");
    if (!spectrum.allFinite()) throw ArgumentError("spectrum must be finite");
    Semigroup s;
    s.diagonal_ = true;
    s.spectrum_ = std::move(spectrum);
    s.horizon_ = horizon;
    // sup over [0, T] of max_i exp(lambda_i t)
    s.bound_ = std::exp(std::max(0.0, s.spectrum_.maxCoeff()) * horizon);
    return s;
}

Semigroup Semigroup::generator(Matrix a, double horizon) {
    if (a.rows() != a.cols() || a.rows() < 1) throw ArgumentError("generator must be square");
    if (!(horizon > 0.0)) throw ArgumentError("semigroup horizon must be positive");
    if (!a.allFinite()) throw ArgumentError("generator must be finite");
    Semigroup s;
    s.diagonal_ = false;
    s.generator_ = std::move(a);
    s.spectrum_ = Vector();
    s.horizon_ = horizon;
    // a sampled estimate with a small safety margin; validate() rechecks it
    s.bound_ = s.sampled_norm_max(257) * (1.0 + 1e-6);
    return s;
}

Semigroup Semigroup::with_bound(double bound) const {
    if (!(bound > 0.0)) throw ArgumentError("semigroup bound must be positive");
    Semigroup s = *this;
    s.bound_ = bound;
    return s;
}

int Semigroup::dim() const {
    return diagonal_ ? static_cast<int>(spectrum_.size()) : static_cast<int>(generator_.rows());
}

Matrix Semigroup::generator_matrix() const {
    if (diagonal_) return spectrum_.asDiagonal();
    return generator_;
}

Matrix Semigroup::at(double t) const {
    if (!(t >= 0.0 && t <= horizon_ * (1.0 + 1e-12))) {
        throw ArgumentError("semigroup time " + std::to_string(t) + " outside [0, T]");
    }
    if (diagonal_) return (t * spectrum_).array().exp().matrix().asDiagonal();
    return (t * generator_).exp();
}

Vector Semigroup::apply(double t, const Vector& v) const {
    if (v.size() != dim()) throw ArgumentError("vector size does not match the semigroup");
    if (diagonal_) {
        if (!(t >= 0.0 && t <= horizon_ * (1.0 + 1e-12))) {
            throw ArgumentError("semigroup time " + std::to_string(t) + " outside [0, T]");
        }
        return (t * spectrum_).array().exp().matrix().cwiseProduct(v);
    }
    return at(t) * v;
}

double Semigroup::sampled_norm_max(int samples) const {
    double best = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double t = horizon_ * i / std::max(1, samples - 1);
        double n;
        if (diagonal_) {
            n = (t * spectrum_).array().exp().maxCoeff();
        } else {
            n = at(t).jacobiSvd().singularValues()(0);
        }
        best = std::max(best, n);
    }
    return best;
}

SemigroupCheck validate(const Semigroup& s, int samples, unsigned long long seed) {
    SemigroupCheck check;
    const int n = s.dim();
    check.identity_defect = (s.at(0.0) - Matrix::Identity(n, n)).norm();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < samples; ++i) {
        const double t = unit(rng) * s.horizon();
        const double r = unit(rng) * (s.horizon() - t);
        const Matrix joint = s.at(t + r);
        const double scale = std::max(1.0, joint.norm());
        check.property_defect =
            std::max(check.property_defect, (joint - s.at(t) * s.at(r)).norm() / scale);
    }
    check.max_sampled_norm = s.sampled_norm_max(std::max(samples, 2));
    check.bound_ok = check.max_sampled_norm <= s.bound() * (1.0 + 1e-12);
    if (check.identity_defect > 1e-12) throw ConfigError("semigroup", "S_0 is not the identity");
    if (check.property_defect > 1e-10) {
        throw ConfigError("semigroup", "semigroup property fails on sampled times");
    }
    if (!check.bound_ok) {
        throw ConfigError("semigroup.bound", "declared bound " + std::to_string(s.bound()) +
                                                 " is below a sampled norm " +
                                                 std::to_string(check.max_sampled_norm));
    }
    return check;
}

SemigroupGrid::SemigroupGrid(const Semigroup& s, const SpaceSpec& spec)
    : diagonal_(s.is_diagonal()), dim_(s.dim()), steps_(spec.steps), dt_(spec.dt()) {
    if (s.dim() != spec.dim_h) throw ArgumentError("semigroup dimension differs from dim_h");
    if (std::abs(s.horizon() - spec.horizon) > 1e-12 * spec.horizon) {
        throw ArgumentError("semigroup horizon differs from the grid horizon");
    }
    if (diagonal_) {
        diag_.resize(dim_, steps_ + 1);
        for (int j = 0; j <= steps_; ++j) {
            diag_.col(j) = (spec.time(j) * s.spectrum()).array().exp();
        }
    } else {
        mats_.reserve(steps_ + 1);
        for (int j = 0; j <= steps_; ++j) mats_.push_back(s.at(spec.time(j)));
    }
}

void SemigroupGrid::apply(int j, const Eigen::Ref<const Vector>& v, Eigen::Ref<Vector> out) const {
    if (diagonal_) {
        out = diag_.col(j).cwiseProduct(v);
    } else {
        out.noalias() = mats_[j] * v;
    }
}

Vector SemigroupGrid::apply(int j, const Vector& v) const {
    Vector out(dim_);
    apply(j, v, out);
    return out;
}

double log_ensemble_norm(std::span<const Path> xs, double p, double lambda, double dt) {
    if (xs.empty()) throw ArgumentError("empty ensemble");
    if (!(p >= 1.0)) throw ArgumentError("moment order must be at least 1");
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(xs.size(), neg_inf);
    double top = neg_inf;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Path& x = xs[i];
        double best = neg_inf;
        for (int k = 0; k <= x.steps(); ++k) {
            const double n = x.at(k).norm();
            if (n > 0.0) best = std::max(best, std::log(n) - lambda * dt * k);
        }
        logs[i] = p * best;
        top = std::max(top, logs[i]);
    }
    if (top == neg_inf) return neg_inf;
    double sum = 0.0;
    for (double l : logs) sum += std::exp(l - top);
    return (top + std::log(sum / static_cast<double>(xs.size()))) / p;
}

double ensemble_norm(std::span<const Path> xs, double p, double lambda, double dt) {
    return std::exp(log_ensemble_norm(xs, p, lambda, dt));
}

Path path_map(const SemigroupGrid& s, int offset, const Path& x) {
    if (offset < 0 || offset > x.steps()) throw ArgumentError("offset outside the grid");
    Path out = x;
    for (int k = offset; k <= x.steps(); ++k) s.apply(k - offset, x.at(k), out.at(k));
    return out;
}

}  // namespace pathsde
