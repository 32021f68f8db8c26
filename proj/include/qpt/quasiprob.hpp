#pragma once

#include <Eigen/Dense>
#include <vector>

#include "qpt/channels.hpp"
#include "qpt/rng.hpp"

namespace qpt {

/// Signed weights q_0..q_J summing to 1 (negative entries permitted). The
/// sampling overhead is governed by gamma = Σ|q_j| ≥ 1.
struct QPDistribution {
    ChannelKind kind;            ///< which channel family the weights invert
    double param;                ///< that channel's parameter
    std::vector<double> weights; ///< signed weights; Σ = 1 exactly after renormalization
    double gamma;                ///< closed-form Σ|q_j| (1/(1−2δ), (1+η)/(1−η), 1/(1−2σ))
    double tail_bound;           ///< absolute mass of the truncated tail (deletion only)
};

/// Deletion inverse weights q_j = (1/(1−δ))·(−δ/(1−δ))^j, truncated at the
/// smallest J whose absolute tail mass is < eps_tail and renormalized
/// additively on q_0 so the weights sum to exactly 1. Requires delta < 1/2
/// (the norm diverges otherwise; split the channel first).
QPDistribution qp_deletion(double delta, double eps_tail = 1e-12);

/// Insertion inverse weights: exact two-point support, q_0 = 1/(1−η),
/// q_1 = −η/(1−η); gamma = (1+η)/(1−η).
QPDistribution qp_insertion(double eta);

/// Symmetry inverse weights: q_0 = (1−σ)/(1−2σ) on identity,
/// q_1 = −σ/(1−2σ) on flip; gamma = 1/(1−2σ).
QPDistribution qp_symmetry(double sigma);

/// Dispatch by stage kind.
QPDistribution qp_for_stage(const ChannelSpec& spec, double eps_tail = 1e-12);

struct SignedDraw {
    int index;     ///< operation index j
    double weight; ///< sign(q_j)·gamma
};

/// Normalized signed sampling: P[index = j] = |q_j|/gamma, weight =
/// sign(q_j)·gamma, so E[weight·1[index=j]] = q_j. Implemented with the
/// closed-form draws (deletion: Geom((1−2δ)/(1−δ)); insertion: Ber(η/(1+η));
/// symmetry: Ber(σ)), which coincide with |q_j|/gamma exactly.
SignedDraw qp_sample(const QPDistribution& q, Stream& stream);

// ---------------------------------------------------------------------------
// Matrix-level decomposition checks on small explicit state spaces.
// Orientation (fixed convention, asserted in tests): distributions are column
// vectors and channels act by left multiplication, so channel matrices are
// column-stochastic: entry (y, x) = P[output = y | input = x].
// ---------------------------------------------------------------------------

using Matrix = Eigen::MatrixXd;

/// The row-sup norm ‖A‖_{1,∞}: maximum over rows of the row's ℓ1 norm.
double norm_1inf(const Matrix& a);

/// True when every entry is ≥ −tol and every column sums to 1 within tol.
bool is_column_stochastic(const Matrix& a, double tol = 1e-12);

/// ‖Λ⁻¹ − Σ_j q_j·ops[j]‖_{1,∞}. Λ singular is an error. Weight count must
/// not exceed the number of ops (missing trailing weights are treated as 0).
double decomposition_residual(const Matrix& lambda, const std::vector<double>& weights,
                              const std::vector<Matrix>& ops);

struct QPSolveResult {
    std::vector<double> weights; ///< minimizer of the residual subject to Σ = 1
    double residual;             ///< decomposition_residual of those weights
};

/// Least-squares decomposition of Λ⁻¹ over the given operation set subject to
/// Σ weights = 1 (Frobenius objective; the reported residual uses the
/// ‖·‖_{1,∞} norm). A rank-deficient set is not an error: the achieved
/// residual is simply reported.
QPSolveResult qp_solve(const Matrix& lambda, const std::vector<Matrix>& ops);

} // namespace qpt
