#pragma once

// Finite-dimensional truncation of the state space: uniform time grids,
// grid-sampled paths with the sup-over-grid norm, stopping, and
// semigroups given by a diagonal spectrum or a generator matrix.

#include <span>
#include <vector>

#include "pathsde/types.hpp"

namespace pathsde {

struct SpaceSpec {
    int dim_h = 1;
    int dim_u = 1;
    double horizon = 1.0;
    int steps = 100;

    double dt() const { return horizon / steps; }
    double time(int k) const { return horizon * k / steps; }
    // Nearest grid index, clamped to [0, steps].
    int snap(double t) const;
    // Throws ConfigError naming the offending field.
    void validate() const;
};

// Values at t_0..t_K stored column-wise: values().col(k) = x(t_k).
class Path {
public:
    Path() = default;
    Path(int dim, int steps) : values_(Matrix::Zero(dim, steps + 1)) {}
    explicit Path(Matrix values) : values_(std::move(values)) {}

    static Path constant(const Vector& c, int steps);

    int dim() const { return static_cast<int>(values_.rows()); }
    int steps() const { return static_cast<int>(values_.cols()) - 1; }
    Matrix& values() { return values_; }
    const Matrix& values() const { return values_; }
    auto at(int k) { return values_.col(k); }
    auto at(int k) const { return values_.col(k); }

    double sup_norm() const;
    bool finite() const { return values_.allFinite(); }

    Path& operator+=(const Path& other);
    Path& operator-=(const Path& other);
    Path& operator*=(double s);
    friend Path operator+(Path a, const Path& b) { return a += b; }
    friend Path operator-(Path a, const Path& b) { return a -= b; }
    friend Path operator*(double s, Path a) { return a *= s; }
    friend bool operator==(const Path& a, const Path& b) {
        return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
               a.values_ == b.values_;
    }

private:
    Matrix values_;
};

// Read access to x_{stop ∧ ·}: indices past `stop` return x(t_stop).
// Coefficients only ever see paths through this view.
class PathView {
public:
    PathView(const Path& x, int stop) : x_(&x), stop_(stop) {}

    int stop() const { return stop_; }
    int dim() const { return x_->dim(); }
    auto at(int k) const { return x_->values().col(k < stop_ ? k : stop_); }
    auto current() const { return x_->values().col(stop_); }

private:
    const Path* x_;
    int stop_;
};

// Agrees with x up to index k, frozen at x(t_k) afterwards.
Path stop_path(const Path& x, int k);

class Semigroup {
public:
    static Semigroup diagonal(Vector spectrum, double horizon);
    static Semigroup generator(Matrix a, double horizon);

    // Replaces the computed bound M'; validate() checks it.
    Semigroup with_bound(double bound) const;

    bool is_diagonal() const { return diagonal_; }
    int dim() const;
    double horizon() const { return horizon_; }
    double bound() const { return bound_; }
    const Vector& spectrum() const { return spectrum_; }
    // Generator matrix; diag(spectrum) for the diagonal form.
    Matrix generator_matrix() const;

    // S_t for 0 <= t <= horizon; ArgumentError otherwise.
    Matrix at(double t) const;
    Vector apply(double t, const Vector& v) const;

    // Largest operator norm of S_t over `samples` equally spaced t in [0, T].
    double sampled_norm_max(int samples) const;

private:
    bool diagonal_ = true;
    Vector spectrum_;
    Matrix generator_;
    double horizon_ = 1.0;
    double bound_ = 1.0;
};

struct SemigroupCheck {
    double identity_defect = 0.0;  // |S_0 - I|
    double property_defect = 0.0;  // max |S_{t+s} - S_t S_s|
    double max_sampled_norm = 0.0;
    bool bound_ok = false;
};

// Spot checks S_0 = I, the semigroup property on random (t, s) and the
// declared bound. Throws ConfigError("semigroup", ...) if any fails.
SemigroupCheck validate(const Semigroup& s, int samples = 64, unsigned long long seed = 1);

// S_{j dt} for j = 0..K, computed once per grid.
class SemigroupGrid {
public:
    SemigroupGrid(const Semigroup& s, const SpaceSpec& spec);

    bool is_diagonal() const { return diagonal_; }
    int dim() const { return dim_; }
    int steps() const { return steps_; }
    double dt() const { return dt_; }
    // Diagonal form: column j holds the eigenvalues of S_{j dt}.
    const Matrix& diagonal_table() const { return diag_; }
    const Matrix& matrix(int j) const { return mats_[j]; }

    // out = S_{j dt} v (out must not alias v)
    void apply(int j, const Eigen::Ref<const Vector>& v, Eigen::Ref<Vector> out) const;
    Vector apply(int j, const Vector& v) const;

private:
    bool diagonal_;
    int dim_;
    int steps_;
    double dt_;
    Matrix diag_;
    std::vector<Matrix> mats_;
};

// Monte Carlo (E[max_k e^{-lambda p t_k} |X(t_k)|^p])^{1/p}, accumulated in
// log space so large lambda cannot underflow; log_ensemble_norm returns the log
// (-inf for the zero ensemble). Sums run in sample order.
double log_ensemble_norm(std::span<const Path> xs, double p, double lambda, double dt);
double ensemble_norm(std::span<const Path> xs, double p, double lambda, double dt);

// t_k -> S_{t_k - t_offset} x(t_k) for k >= offset, identity below.
Path path_map(const SemigroupGrid& s, int offset, const Path& x);

}  // namespace pathsde
