#include "pathsde/coefficients.hpp"

#include <algorithm>
#include <cmath>

#include "pathsde/errors.hpp"

namespace pathsde {

namespace {

double op_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

double max_row_norm(const Matrix& m) { return m.rowwise().norm().maxCoeff(); }

// j-th derivative of sin.
double sin_derivative(int j, double z) {
    switch (j % 4) {
        case 0: return std::sin(z);
        case 1: return std::cos(z);
        case 2: return -std::sin(z);
        default: return -std::cos(z);
    }
}

// Grid trapezoid integral of x over [0, t_s].
Vector running_integral(const PathView& x, double dt) {
    Vector acc = Vector::Zero(x.dim());
    for (int k = 0; k < x.stop(); ++k) acc += 0.5 * dt * (x.at(k) + x.at(k + 1));
    return acc;
}

void require_dims(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) throw ArgumentError(std::string(what) + ": shape mismatch");
}

}  // namespace

DriftPart zero_drift() {
    DriftPart p;
    p.kind = "zero";
    p.order = kAnyOrder;
    return p;
}

DriftPart constant_drift(Vector b0) {
    DriftPart p;
    p.kind = "constant";
    p.g = b0.norm();
    p.order = kAnyOrder;
    p.f = [b0](int, int, const PathView&, Eigen::Ref<Vector> out) { out = b0; };
    p.d = [](int, int, const PathView&, std::span<const PathView>, Eigen::Ref<Vector> out) {
        out.setZero();
    };
    return p;
}

DriftPart linear_drift(Matrix b, Vector b0) {
    require_dims(b, b0.size(), b0.size(), "linear drift");
    DriftPart p;
    p.kind = "linear";
    p.g = std::max(op_norm(b), b0.norm());
    p.derivative_bound = op_norm(b);
    p.order = kAnyOrder;
    p.f = [b, b0](int, int, const PathView& x, Eigen::Ref<Vector> out) {
        out.noalias() = b * x.current();
        out += b0;
    };
    p.d = [b](int, int, const PathView&, std::span<const PathView> ys, Eigen::Ref<Vector> out) {
        if (ys.size() == 1) {
            out.noalias() = b * ys[0].current();
        } else {
            out.setZero();
        }
    };
    return p;
}

DriftPart running_integral_drift(Matrix b, Vector b0, const SpaceSpec& spec) {
    require_dims(b, b0.size(), b0.size(), "running-integral drift");
    const double dt = spec.dt();
    DriftPart p;
    p.kind = "running_integral";
    p.g = std::max(op_norm(b) * spec.horizon, b0.norm());
    p.derivative_bound = op_norm(b) * spec.horizon;
    p.order = kAnyOrder;
    p.f = [b, b0, dt](int, int, const PathView& x, Eigen::Ref<Vector> out) {
        out.noalias() = b * running_integral(x, dt);
        out += b0;
    };
    p.d = [b, dt](int, int, const PathView&, std::span<const PathView> ys, Eigen::Ref<Vector> out) {
        if (ys.size() == 1) {
            out.noalias() = b * running_integral(ys[0], dt);
        } else {
            out.setZero();
        }
    };
    return p;
}

DriftPart running_max_drift(Matrix b) {
    if (b.rows() != b.cols()) throw ArgumentError("running-max drift: B must be square");
    DriftPart p;
    p.kind = "running_max";
    // |max x - max y| <= max |x - y| coordinatewise, so |m(x) - m(y)| <= sqrt(N)|x - y|
    p.g = op_norm(b) * std::sqrt(static_cast<double>(b.cols()));
    p.order = 0;
    p.f = [b](int, int, const PathView& x, Eigen::Ref<Vector> out) {
        Vector m = x.at(0);
        for (int k = 1; k <= x.stop(); ++k) m = m.cwiseMax(x.at(k));
        out.noalias() = b * m;
    };
    return p;
}

DriftPart tabulated_drift(std::vector<Vector> values) {
    if (values.empty()) throw ArgumentError("tabulated drift needs values");
    DriftPart p;
    p.kind = "tabulated";
    for (const auto& v : values) p.g = std::max(p.g, v.norm());
    p.order = kAnyOrder;
    auto table = std::make_shared<std::vector<Vector>>(std::move(values));
    p.f = [table](int, int k, const PathView&, Eigen::Ref<Vector> out) {
        out = (*table)[std::min<std::size_t>(k, table->size() - 1)];
    };
    p.d = [](int, int, const PathView&, std::span<const PathView>, Eigen::Ref<Vector> out) {
        out.setZero();
    };
    return p;
}

DriftPart polynomial_drift(std::vector<double> a, int dim, double radius) {
    if (a.empty()) throw ArgumentError("polynomial drift needs coefficients");
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw ConfigError("coefficients.drift.radius", "polynomial drift needs a finite radius");
    }
    DriftPart p;
    p.kind = "polynomial";
    p.radius = radius;
    // on |x| <= R: |b| <= sqrt(N)|a_0| + sum_k |a_k| R^{k-1} |x|, Lipschitz sum_k k |a_k| R^{k-1}
    const double constant = std::sqrt(static_cast<double>(dim)) * std::abs(a[0]);
    double lip = 0.0;
    for (std::size_t k = 1; k < a.size(); ++k) lip += std::abs(a[k]) * k * std::pow(radius, k - 1.0);
    p.g = std::max(constant, lip);
    for (int j = 1; j < static_cast<int>(a.size()); ++j) {
        double bound = 0.0;
        for (std::size_t k = j; k < a.size(); ++k) {
            double falling = 1.0;
            for (int i = 0; i < j; ++i) falling *= static_cast<double>(k - i);
            bound += std::abs(a[k]) * falling * std::pow(radius, static_cast<double>(k - j));
        }
        p.derivative_bound = std::max(p.derivative_bound, bound);
    }
    p.order = kAnyOrder;
    p.f = [a](int, int, const PathView& x, Eigen::Ref<Vector> out) {
        const auto xs = x.current();
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            double acc = 0.0;
            for (std::size_t k = a.size(); k-- > 0;) acc = acc * xs[i] + a[k];
            out[i] = acc;
        }
    };
    p.d = [a](int, int, const PathView& x, std::span<const PathView> ys, Eigen::Ref<Vector> out) {
        const int j = static_cast<int>(ys.size());
        const auto xs = x.current();
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            double acc = 0.0;
            for (std::size_t k = j; k < a.size(); ++k) {
                double falling = 1.0;
                for (int m = 0; m < j; ++m) falling *= static_cast<double>(k - m);
                acc += a[k] * falling * std::pow(xs[i], static_cast<double>(k - j));
            }
            for (const auto& y : ys) acc *= y.current()[i];
            out[i] = acc;
        }
    };
    return p;
}

DriftPart sine_drift(Vector a, Matrix w, Matrix v, Vector c, const SpaceSpec& spec) {
    const auto n = a.size();
    require_dims(w, n, n, "sine drift W");
    require_dims(v, n, n, "sine drift V");
    if (c.size() != n) throw ArgumentError("sine drift c: shape mismatch");
    const double dt = spec.dt();
    const double l = op_norm(w) + spec.horizon * op_norm(v);
    const double amax = a.cwiseAbs().maxCoeff();
    DriftPart p;
    p.kind = "sine";
    p.g = std::max(a.norm(), amax * l);
    // orders 1..3 cover every derivative the sensitivity checks request
    for (int j = 1; j <= 3; ++j) p.derivative_bound = std::max(p.derivative_bound, amax * std::pow(l, j));
    p.order = 3;
    auto arg = [w, v, c, dt](const PathView& x) -> Vector {
        return w * x.current() + v * running_integral(x, dt) + c;
    };
    p.f = [a, arg](int, int, const PathView& x, Eigen::Ref<Vector> out) {
        out = a.cwiseProduct(arg(x).array().sin().matrix());
    };
    p.d = [a, w, v, arg, dt](int, int, const PathView& x, std::span<const PathView> ys,
                             Eigen::Ref<Vector> out) {
        const Vector z = arg(x);
        const int j = static_cast<int>(ys.size());
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = a[i] * sin_derivative(j, z[i]);
        for (const auto& y : ys) out = out.cwiseProduct(w * y.current() + v * running_integral(y, dt));
    };
    return p;
}

DiffusionPart zero_diffusion() {
    DiffusionPart p;
    p.kind = "zero";
    p.order = kAnyOrder;
    p.path_free = true;
    return p;
}

DiffusionPart constant_diffusion(Matrix s0) {
    DiffusionPart p;
    p.kind = "constant";
    p.growth = s0.norm();
    p.column_derivative_bounds = Vector::Zero(s0.cols());
    p.order = kAnyOrder;
    p.path_free = true;
    p.f = [s0](int, int, const PathView&, Eigen::Ref<Matrix> out) { out = s0; };
    p.d = [](int, int, const PathView&, std::span<const PathView>, Eigen::Ref<Matrix> out) {
        out.setZero();
    };
    return p;
}

DiffusionPart linear_diffusion(Matrix s0, Matrix s1) {
    require_dims(s1, s0.rows(), s0.cols(), "linear diffusion S1");
    DiffusionPart p;
    p.kind = "linear";
    p.growth = std::max(s0.norm(), max_row_norm(s1));
    p.column_derivative_bounds = s1.cwiseAbs().colwise().maxCoeff().transpose();
    p.order = kAnyOrder;
    p.f = [s0, s1](int, int, const PathView& x, Eigen::Ref<Matrix> out) {
        out = s0;
        out.noalias() += x.current().asDiagonal() * s1;
    };
    p.d = [s1](int, int, const PathView&, std::span<const PathView> ys, Eigen::Ref<Matrix> out) {
        if (ys.size() == 1) {
            out.noalias() = ys[0].current().asDiagonal() * s1;
        } else {
            out.setZero();
        }
    };
    return p;
}

DiffusionPart sine_diffusion(Matrix s0, Vector a, Matrix w, Vector c, Matrix s1) {
    const auto n = s0.rows();
    require_dims(s1, n, s0.cols(), "sine diffusion S1");
    require_dims(w, n, n, "sine diffusion W");
    if (a.size() != n || c.size() != n) throw ArgumentError("sine diffusion a, c: shape mismatch");
    const double amax = a.cwiseAbs().maxCoeff();
    const double lw = op_norm(w);
    DiffusionPart p;
    p.kind = "sine";
    p.growth = std::max(s0.norm() + a.norm() * max_row_norm(s1), amax * lw * max_row_norm(s1));
    double scale = 0.0;
    for (int j = 1; j <= 3; ++j) scale = std::max(scale, amax * std::pow(lw, j));
    p.column_derivative_bounds = scale * s1.colwise().norm().transpose();
    p.order = 3;
    p.f = [s0, a, w, c, s1](int, int, const PathView& x, Eigen::Ref<Matrix> out) {
        const Vector v = a.cwiseProduct((w * x.current() + c).array().sin().matrix());
        out = s0;
        out.noalias() += v.asDiagonal() * s1;
    };
    p.d = [a, w, c, s1](int, int, const PathView& x, std::span<const PathView> ys,
                        Eigen::Ref<Matrix> out) {
        const Vector z = w * x.current() + c;
        const int j = static_cast<int>(ys.size());
        Vector v(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) v[i] = a[i] * sin_derivative(j, z[i]);
        for (const auto& y : ys) v = v.cwiseProduct(w * y.current());
        out.noalias() = v.asDiagonal() * s1;
    };
    return p;
}

DiffusionPart tabulated_diffusion(std::vector<Matrix> values) {
    if (values.empty()) throw ArgumentError("tabulated diffusion needs values");
    DiffusionPart p;
    p.kind = "tabulated";
    for (const auto& v : values) p.growth = std::max(p.growth, v.norm());
    p.column_derivative_bounds = Vector::Zero(values.front().cols());
    p.order = kAnyOrder;
    p.path_free = true;
    auto table = std::make_shared<std::vector<Matrix>>(std::move(values));
    p.f = [table](int, int k, const PathView&, Eigen::Ref<Matrix> out) {
        out = (*table)[std::min<std::size_t>(k, table->size() - 1)];
    };
    p.d = [](int, int, const PathView&, std::span<const PathView>, Eigen::Ref<Matrix> out) {
        out.setZero();
    };
    return p;
}

DriftPart add_drift(const DriftPart& a, const DriftPart& b, double w) {
    if (!b.f || w == 0.0) return a;
    if (!a.f) {
        DriftPart out = b;
        out.kind = "scaled(" + b.kind + ")";
        out.g = std::abs(w) * b.g;
        out.derivative_bound = std::abs(w) * b.derivative_bound;
        out.f = [f = b.f, w](int i, int k, const PathView& x, Eigen::Ref<Vector> o) {
            f(i, k, x, o);
            o *= w;
        };
        if (b.d) {
            out.d = [d = b.d, w](int i, int k, const PathView& x, std::span<const PathView> ys,
                                 Eigen::Ref<Vector> o) {
                d(i, k, x, ys, o);
                o *= w;
            };
        }
        return out;
    }
    DriftPart out;
    out.kind = a.kind + "+" + b.kind;
    out.g = a.g + std::abs(w) * b.g;
    out.derivative_bound = a.derivative_bound + std::abs(w) * b.derivative_bound;
    out.order = std::min(a.order, b.order);
    out.radius = std::min(a.radius, b.radius);
    out.f = [fa = a.f, fb = b.f, w](int i, int k, const PathView& x, Eigen::Ref<Vector> o) {
        Vector tmp(o.size());
        fa(i, k, x, o);
        fb(i, k, x, tmp);
        o += w * tmp;
    };
    if (a.d && b.d) {
        out.d = [da = a.d, db = b.d, w](int i, int k, const PathView& x, std::span<const PathView> ys,
                                        Eigen::Ref<Vector> o) {
            Vector tmp(o.size());
            da(i, k, x, ys, o);
            db(i, k, x, ys, tmp);
            o += w * tmp;
        };
    } else {
        out.order = 0;
    }
    return out;
}

DiffusionPart add_diffusion(const DiffusionPart& a, const DiffusionPart& b, double w) {
    if (!b.f || w == 0.0) return a;
    DiffusionPart out;
    out.kind = a.kind + "+" + b.kind;
    out.growth = a.growth + std::abs(w) * b.growth;
    out.order = a.f ? std::min(a.order, b.order) : b.order;
    out.path_free = (a.path_free || !a.f) && b.path_free;
    out.radius = std::min(a.radius, b.radius);
    Vector ca = a.column_derivative_bounds, cb = b.column_derivative_bounds;
    if (ca.size() == 0) ca = Vector::Zero(cb.size());
    if (cb.size() == 0) cb = Vector::Zero(ca.size());
    out.column_derivative_bounds = ca + std::abs(w) * cb;
    auto fa = a.f;
    out.f = [fa, fb = b.f, w](int i, int k, const PathView& x, Eigen::Ref<Matrix> o) {
        Matrix tmp(o.rows(), o.cols());
        fb(i, k, x, tmp);
        if (fa) {
            fa(i, k, x, o);
            o += w * tmp;
        } else {
            o = w * tmp;
        }
    };
    if ((a.d || !a.f) && b.d) {
        out.d = [da = a.d, db = b.d, w](int i, int k, const PathView& x, std::span<const PathView> ys,
                                        Eigen::Ref<Matrix> o) {
            Matrix tmp(o.rows(), o.cols());
            db(i, k, x, ys, tmp);
            if (da) {
                da(i, k, x, ys, o);
                o += w * tmp;
            } else {
                o = w * tmp;
            }
        };
    } else {
        out.order = 0;
    }
    return out;
}

Coefficients make_coefficients(const DriftPart& b, const DiffusionPart& sigma, int dim_h,
                               int dim_u, double m_prime) {
    Coefficients c;
    c.name = b.kind + "+" + sigma.kind;
    c.dim_h = dim_h;
    c.dim_u = dim_u;
    c.drift = b.f;
    c.drift_derivative = b.d;
    c.diffusion = sigma.f;
    c.diffusion_derivative = sigma.d;
    c.order = std::min(b.f ? b.order : kAnyOrder, sigma.f ? sigma.order : kAnyOrder);
    if (b.g > 0.0) {
        const double g = b.g;
        c.g = [g](double) { return g; };
    }
    c.m_bound = m_prime * sigma.growth;
    c.gamma = 0.0;
    c.audit_radius = std::min(b.radius, sigma.radius);
    c.diffusion_path_free = sigma.path_free;
    // |d^j b| <= M'' g and |S_t d^j sigma e_m| <= M'' c_m with M'' >= 1
    c.m2_bound = b.g > 0.0 ? std::max(1.0, b.derivative_bound / b.g) : 1.0;
    c.c_weights = Vector::Zero(dim_u);
    if (sigma.column_derivative_bounds.size() == dim_u) {
        c.c_weights = m_prime * sigma.column_derivative_bounds / c.m2_bound;
    }
    return c;
}

}  // namespace pathsde
