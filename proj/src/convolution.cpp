#include "pathsde/convolution.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "pathsde/errors.hpp"
#include "pathsde/parallel.hpp"

namespace pathsde {

double beta_identity_defect(double beta) {
    const double c = std::sin(std::numbers::pi * beta) / std::numbers::pi;
    boost::math::quadrature::tanh_sinh<double> integrator;
    // split at 1/2 so each piece has a single endpoint singularity
    auto f = [beta](double v) { return std::pow(v, beta - 1.0) * std::pow(1.0 - v, -beta); };
    const double left = integrator.integrate(f, 0.0, 0.5);
    const double right = integrator.integrate(f, 0.5, 1.0);
    return std::abs(c * (left + right) - 1.0);
}

FactorizationParams::FactorizationParams(double b) : beta(b) {
    if (!(b > 0.0 && b < 0.5)) {
        throw ArgumentError("factorization beta " + std::to_string(b) + " outside (0, 1/2)");
    }
    c_beta = std::sin(std::numbers::pi * b) / std::numbers::pi;
    if (beta_identity_defect(b) > 1e-6) {
        throw ArgumentError("c_beta failed its quadrature check");
    }
}

FactorizationParams FactorizationParams::for_model(double b, double p, double gamma) {
    if (!(b > 1.0 / p && b < 0.5 - gamma)) {
        throw ArgumentError("factorization beta " + std::to_string(b) + " outside (1/p, 1/2 - gamma) = (" +
                            std::to_string(1.0 / p) + ", " + std::to_string(0.5 - gamma) + ")");
    }
    return FactorizationParams(b);
}

OperatorPath OperatorPath::deterministic(std::vector<Matrix> per_step) {
    if (per_step.empty()) throw ArgumentError("empty operator path");
    OperatorPath op;
    op.values_.push_back(std::move(per_step));
    return op;
}

OperatorPath OperatorPath::per_sample(std::vector<std::vector<Matrix>> per_sample_steps) {
    if (per_sample_steps.empty() || per_sample_steps.front().empty()) {
        throw ArgumentError("empty operator path");
    }
    for (const auto& row : per_sample_steps) {
        if (row.size() != per_sample_steps.front().size()) {
            throw ArgumentError("operator path samples have different lengths");
        }
    }
    OperatorPath op;
    op.values_ = std::move(per_sample_steps);
    return op;
}

Matrix noise_forcing(const OperatorPath& phi, const NoisePanel& w, int sample) {
    const int steps = w.spec().steps;
    if (phi.steps() < steps) throw ArgumentError("operator path shorter than the noise grid");
    const Matrix dw = w.increments(sample);
    Matrix out(phi.at(sample, 0).rows(), steps);
    for (int k = 0; k < steps; ++k) out.col(k).noalias() = phi.at(sample, k) * dw.col(k);
    return out;
}

Path det_convolve(const SemigroupGrid& s, int start, const Path& x) {
    const int steps = x.steps();
    if (start < 0 || start > steps) throw ArgumentError("convolution start outside the grid");
    const double half = 0.5 * s.dt();
    Path y(x.dim(), steps);
    Vector buffer(x.dim());
    for (int m = start; m < steps; ++m) {
        buffer = y.at(m) + half * x.at(m);
        s.apply(1, buffer, y.at(m + 1));
        y.at(m + 1) += half * x.at(m + 1);
    }
    return y;
}

Path ito_sum(const SemigroupGrid& s, int start, const Matrix& forcing) {
    const int steps = static_cast<int>(forcing.cols());
    if (start < 0 || start > steps) throw ArgumentError("convolution start outside the grid");
    Path y(static_cast<int>(forcing.rows()), steps);
    Vector buffer(forcing.rows());
    for (int m = start; m < steps; ++m) {
        buffer = y.at(m) + forcing.col(m);
        s.apply(1, buffer, y.at(m + 1));
    }
    return y;
}

FactorizedConvolver::FactorizedConvolver(const SemigroupGrid& s, const FactorizationParams& fp)
    : grid_(&s), fp_(fp) {
    const int steps = s.steps();
    const double beta = fp.beta;
    const double dt = s.dt();
    stage1_ = Vector::Zero(steps + 1);
    stage2_ = Vector::Zero(steps + 1);
    exact_ = Vector::Zero(steps + 1);
    for (int a = 1; a <= steps; ++a) {
        stage1_[a] = std::pow(dt, -beta) * (std::pow(a, 1.0 - beta) - std::pow(a - 1.0, 1.0 - beta)) /
                     (1.0 - beta);
    }
    for (int j = 0; j <= steps; ++j) {
        stage2_[j] = std::pow(dt, beta) * (std::pow(j + 1.0, beta) - std::pow(j, beta)) / beta;
    }
    // c_beta * sum_{a <= R} int over stage-2 cell a of (D - x)^{beta-1} x^{-beta}
    // telescopes to the regularized incomplete beta I_{min(R,D)/D}(1-beta, beta).
    for (int d = 1; d <= steps; ++d) {
        const int r = std::min(kExactLags, d);
        exact_[d] = r == d ? 1.0 : boost::math::ibeta(1.0 - beta, beta, static_cast<double>(r) / d);
    }
    if (s.is_diagonal()) {
        const Matrix& e = s.diagonal_table();
        diag1_ = e;
        diag2_ = e;
        diag3_ = e;
        for (int j = 0; j <= steps; ++j) {
            diag1_.col(j) *= j > kExactLags ? stage1_[j] : 0.0;
            diag2_.col(j) *= fp.c_beta * stage2_[j];
            diag3_.col(j) *= exact_[j];
        }
    }
}

Path FactorizedConvolver::apply(int start, const Matrix& forcing) const {
    const int steps = grid_->steps();
    const int n = grid_->dim();
    if (forcing.cols() != steps || forcing.rows() != n) {
        throw ArgumentError("forcing does not match the convolution grid");
    }
    if (start < 0 || start > steps) throw ArgumentError("convolution start outside the grid");
    Path y(n, steps);
    if (grid_->is_diagonal()) {
        std::vector<double> v(steps + 1), z(steps + 1);
        for (int c = 0; c < n; ++c) {
            const double* w1 = &diag1_(c, 0);
            const double* w2 = &diag2_(c, 0);
            const double* w3 = &diag3_(c, 0);
            const Eigen::Index stride = diag1_.rows();
            for (int k = 0; k < steps; ++k) v[k] = k >= start ? forcing(c, k) : 0.0;
            for (int l = 0; l <= steps; ++l) {
                double acc = 0.0;
                for (int a = kExactLags + 1; a <= l - start; ++a) acc += w1[a * stride] * v[l - a];
                z[l] = acc;
            }
            for (int m = start + 1; m <= steps; ++m) {
                double acc = 0.0;
                for (int l = start + 1; l <= m; ++l) acc += w2[(m - l) * stride] * z[l];
                for (int k = start; k < m; ++k) acc += w3[(m - k) * stride] * v[k];
                y.values()(c, m) = acc;
            }
        }
        return y;
    }
    std::vector<Vector> z(steps + 1, Vector::Zero(n));
    Vector tmp(n);
    for (int l = start + kExactLags + 1; l <= steps; ++l) {
        for (int a = kExactLags + 1; a <= l - start; ++a) {
            grid_->apply(a, forcing.col(l - a), tmp);
            z[l] += stage1_[a] * tmp;
        }
    }
    for (int m = start + 1; m <= steps; ++m) {
        Vector acc = Vector::Zero(n);
        for (int l = start + 1; l <= m; ++l) {
            grid_->apply(m - l, z[l], tmp);
            acc += fp_.c_beta * stage2_[m - l] * tmp;
        }
        for (int k = start; k < m; ++k) {
            grid_->apply(m - k, forcing.col(k), tmp);
            acc += exact_[m - k] * tmp;
        }
        y.at(m) = acc;
    }
    return y;
}

std::vector<Path> ito_convolve(const SemigroupGrid& s, int start, const OperatorPath& phi,
                               const NoisePanel& w) {
    std::vector<Path> out(w.samples());
    parallel_for(w.samples(), [&](int i) { out[i] = ito_sum(s, start, noise_forcing(phi, w, i)); });
    return out;
}

std::vector<Path> factorized_convolve(const FactorizedConvolver& conv, int start,
                                      const OperatorPath& phi, const NoisePanel& w) {
    std::vector<Path> out(w.samples());
    parallel_for(w.samples(), [&](int i) { out[i] = conv.apply(start, noise_forcing(phi, w, i)); });
    return out;
}

double convolve_shift_check(const FactorizedConvolver& conv, const OperatorPath& phi,
                            const NoisePanel& w, int t1, int t2, double p) {
    if (t1 > t2) throw ArgumentError("convolve_shift_check needs t1 <= t2");
    if (t1 == t2) return 0.0;
    std::vector<Path> diff(w.samples());
    parallel_for(w.samples(), [&](int i) {
        const Matrix f = noise_forcing(phi, w, i);
        diff[i] = conv.apply(t1, f) - conv.apply(t2, f);
    });
    return ensemble_norm(diff, p, 0.0, w.spec().dt());
}

Vector ito_isometry_moments(const Semigroup& s, const SpaceSpec& spec, int start,
                            const std::vector<Matrix>& phi) {
    if (static_cast<int>(phi.size()) < spec.steps) throw ArgumentError("operator path too short");
    Vector out = Vector::Zero(spec.steps + 1);
    for (int m = start + 1; m <= spec.steps; ++m) {
        double total = 0.0;
        for (int k = start; k < m; ++k) {
            auto f = [&](double s_) {
                return (s.at(spec.time(m) - s_) * phi[k]).squaredNorm();
            };
            total += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
                f, spec.time(k), spec.time(k + 1), 0, 0);
        }
        out[m] = total;
    }
    return out;
}

double factorization_constant(double beta, double p, double horizon) {
    const double c_beta = std::sin(std::numbers::pi * beta) / std::numbers::pi;
    const double expo = (beta - 1.0) * p / (p - 1.0);
    if (!(expo > -1.0)) throw ArgumentError("factorization constant needs beta > 1/p");
    const double holder = std::pow(horizon, expo + 1.0) / (expo + 1.0);
    const double bdg = std::pow(p * (p - 1.0) / 2.0, p / 2.0);
    return bdg * std::pow(c_beta, p) * std::pow(holder, p - 1.0);
}

double factorization_phi_norm(const Semigroup& s, const SpaceSpec& spec, double beta,
                              double p, const std::vector<Matrix>& phi) {
    boost::math::quadrature::tanh_sinh<double> singular;
    std::vector<double> inner(spec.steps + 1, 0.0);
    for (int m = 1; m <= spec.steps; ++m) {
        const double t = spec.time(m);
        double total = 0.0;
        for (int k = 0; k < m; ++k) {
            auto f = [&](double r) {
                // r = t - s is the lag; singular at r = 0 in the last cell
                return std::pow(r, -2.0 * beta) * (s.at(r) * phi[k]).squaredNorm();
            };
            total += singular.integrate(f, t - spec.time(k + 1), t - spec.time(k));
        }
        inner[m] = std::pow(total, p / 2.0);
    }
    double outer = 0.0;
    for (int m = 1; m <= spec.steps; ++m) outer += 0.5 * spec.dt() * (inner[m - 1] + inner[m]);
    return std::pow(outer, 1.0 / p);
}

}  // namespace pathsde
