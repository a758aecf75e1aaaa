#pragma once

#include <span>
#include <vector>

#include "fedprop/matrix.hpp"
#include "fedprop/parallel.hpp"

namespace fedprop::linalg {

// Singular values below kSvCutoffRel * s_max are treated as zero when
// inverting; this is what makes rank-deficient systems come back with the
// minimum-norm solution instead of an error.
inline constexpr double kSvCutoffRel = 1e-10;

struct Svd {
    Matrix u;                            // m x r, orthonormal columns
    std::vector<double> singular_values; // r = min(m, n), descending
    Matrix v;                            // n x r, orthonormal columns
};

// Thin SVD by one-sided Jacobi rotations.  Small and dependency-free, and
// componentwise accurate enough that the pseudo-inverse identities hold to
// well below the 1e-8 the callers check for.
Svd svd(const Matrix& a);

Matrix pseudo_inverse(const Matrix& a);

struct SolveReport {
    Matrix solution;          // one column per right-hand-side column
    double residual_norm = 0; // sqrt(sum_i w_i * ||b_i - a_i x||^2); w == 1 for OLS
    bool rank_deficient = false;
};

// Least squares min ||B - A X||_F.  Rank-deficient A yields the minimum-norm
// solution and sets the flag; it is never an error.  Columns of B are solved
// independently, so Exec::parallel and Exec::serial agree bitwise.
SolveReport ols_solve(const Matrix& a, const Matrix& b, Exec exec = Exec::parallel);

// min sum_i w_i ||b_i - a_i X||^2 + lambda ||X||_F^2, one solve per column.
// Weights multiply the squared residuals exactly as given; nothing is
// renormalized.  ridge_solve requires w in [0, 1] (the overlap-derived
// weights the pipeline produces); weighted_ridge accepts any w >= 0 and is
// what the multiplicity tests use.
SolveReport ridge_solve(const Matrix& a, const Matrix& b,
                        std::span<const double> row_weights, double lambda,
                        Exec exec = Exec::parallel);
SolveReport weighted_ridge(const Matrix& a, const Matrix& b,
                           std::span<const double> row_weights, double lambda,
                           Exec exec = Exec::parallel);

}  // namespace fedprop::linalg
