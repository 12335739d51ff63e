#pragma once

// Deterministic convolution S *_t x, the stochastic convolution by direct
// left-point Ito sums, and the two-stage factorization scheme
//   Z_s = int (s - r)^{-beta} S_{s-r} Phi_r dW_r,
//   Y_t' = c_beta int (t' - s)^{beta-1} S_{t'-s} Z_s ds,
// with singular weights integrated exactly over grid cells.

#include <span>
#include <vector>

#include "pathsde/hilbert.hpp"
#include "pathsde/noise.hpp"
#include "pathsde/types.hpp"

namespace pathsde {

struct FactorizationParams {
    double beta = 0.25;
    double c_beta = 0.0;

    // beta in (0, 1/2); c_beta = sin(pi beta) / pi, verified by quadrature.
    explicit FactorizationParams(double beta);
    // Additionally requires beta in (1/p, 1/2 - gamma).
    static FactorizationParams for_model(double beta, double p, double gamma);
};

// |c_beta int_0^1 v^{beta-1} (1-v)^{-beta} dv - 1| by tanh-sinh quadrature.
double beta_identity_defect(double beta);

// Per-step N x M operators; a single row of steps is shared by all samples.
class OperatorPath {
public:
    static OperatorPath deterministic(std::vector<Matrix> per_step);
    static OperatorPath per_sample(std::vector<std::vector<Matrix>> per_sample_steps);

    bool is_deterministic() const { return values_.size() == 1; }
    int steps() const { return static_cast<int>(values_.front().size()); }
    const Matrix& at(int sample, int k) const {
        return values_[values_.size() == 1 ? 0 : sample][k];
    }

private:
    std::vector<std::vector<Matrix>> values_;
};

// Columns Phi(t_k) dW_k, k = 0..K-1, for one sample.
Matrix noise_forcing(const OperatorPath& phi, const NoisePanel& w, int sample);

// Zero up to index `start`; trapezoid rule for int_t^t' S_{t'-s} x(s) ds.
Path det_convolve(const SemigroupGrid& s, int start, const Path& x);

// Left-point Ito sum sum_{start <= k < m} S_{t_m - t_k} forcing_k.
Path ito_sum(const SemigroupGrid& s, int start, const Matrix& forcing);

// Precomputed weight tables for the factorization scheme on one grid.
// Pairs (noise cell, stage-2 cell) closer than kExactLags steps use the exact
// double integral of the two singular kernels (an incomplete beta
// function); the remaining pairs use the product of the per-cell weights.
class FactorizedConvolver {
public:
    static constexpr int kExactLags = 4;

    FactorizedConvolver(const SemigroupGrid& s, const FactorizationParams& fp);

    const FactorizationParams& params() const { return fp_; }
    const SemigroupGrid& grid() const { return *grid_; }
    Path apply(int start, const Matrix& forcing) const;

private:
    const SemigroupGrid* grid_;
    FactorizationParams fp_;
    Vector stage1_;  // cell average of r^{-beta} over ((a-1)dt, a dt], a >= 1
    Vector stage2_;  // int of r^{beta-1} over (j dt, (j+1) dt], j >= 0
    Vector exact_;   // c_beta-scaled exact weight of lag D from pairs of age <= kExactLags
    Matrix diag1_, diag2_, diag3_;  // diagonal semigroup: weights times eigenvalues
};

std::vector<Path> ito_convolve(const SemigroupGrid& s, int start, const OperatorPath& phi,
                               const NoisePanel& w);
std::vector<Path> factorized_convolve(const FactorizedConvolver& conv, int start,
                                      const OperatorPath& phi, const NoisePanel& w);

// Ensemble p-norm of S *^{dW}_{t1} Phi - S *^{dW}_{t2} Phi on a shared panel.
double convolve_shift_check(const FactorizedConvolver& conv, const OperatorPath& phi,
                            const NoisePanel& w, int t1, int t2, double p);

// sum over cells of int |S_{t_m - s} Phi_k|_F^2 ds for every grid index m:
// the exact second moment of the continuous-time convolution of the
// piecewise-constant deterministic Phi.
Vector ito_isometry_moments(const Semigroup& s, const SpaceSpec& spec, int start,
                            const std::vector<Matrix>& phi);

// c' = c_BDG(p) c_beta^p (int_0^T v^{(beta-1)p/(p-1)} dv)^{p-1} with the
// Burkholder constant c_BDG(p) = (p(p-1)/2)^{p/2}.
double factorization_constant(double beta, double p, double horizon);

// |Phi|_{p,2,S,beta} for deterministic piecewise-constant Phi, the outer
// time integral by the trapezoid rule on the grid.
double factorization_phi_norm(const Semigroup& s, const SpaceSpec& spec, double beta,
                              double p, const std::vector<Matrix>& phi);

}  // namespace pathsde
