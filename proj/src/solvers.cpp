#include "fedprop/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedprop/numeric.hpp"

namespace fedprop::linalg {

namespace {

void require_solvable(const Matrix& a, const Matrix& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("solve: empty operand");
    if (a.rows() != b.rows())
        throw std::invalid_argument("solve: A and B row counts differ");
    if (!all_finite(a) || !all_finite(b))
        throw std::invalid_argument("solve: non-finite input entries");
}

// One-sided Jacobi on the columns of a tall (m >= n) matrix: rotate column
// pairs until mutually orthogonal, then read off U * diag(s) column norms.
Svd svd_tall(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix w = a;
    Matrix v = Matrix::identity(n);

    const double tol = 1e-14;
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if (app == 0.0 || aqq == 0.0) continue;
                if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = cs * wp - sn * wq;
                    w(i, q) = sn * wp + cs * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = cs * vp - sn * vq;
                    v(i, q) = sn * vp + cs * vq;
                }
            }
        }
        if (!rotated) break;
    }

    Svd out;
    out.singular_values.resize(n);
    out.u = Matrix(m, n);
    out.v = std::move(v);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
        s = std::sqrt(s);
        out.singular_values[j] = s;
        if (s > 0.0)
            for (std::size_t i = 0; i < m; ++i) out.u(i, j) = w(i, j) / s;
    }

    // descending singular values
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return out.singular_values[x] > out.singular_values[y];
    });
    Svd sorted;
    sorted.singular_values.resize(n);
    sorted.u = Matrix(m, n);
    sorted.v = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        sorted.singular_values[j] = out.singular_values[src];
        for (std::size_t i = 0; i < m; ++i) sorted.u(i, j) = out.u(i, src);
        for (std::size_t i = 0; i < n; ++i) sorted.v(i, j) = out.v(i, src);
    }
    return sorted;
}

std::size_t numerical_rank(const std::vector<double>& s) {
    if (s.empty()) return 0;
    const double cutoff = kSvCutoffRel * s.front();
    std::size_t r = 0;
    for (double x : s)
        if (x > cutoff && x > 0.0) ++r;
    return r;
}

// Solution of min ||B - A X|| from a precomputed SVD, minimum-norm in the
// rank-deficient case.  Columns are independent, hence the parallel loop.
Matrix apply_pinv(const Svd& dec, const Matrix& b, Exec exec) {
    const std::size_t n = dec.u.rows();
    const std::size_t nvals = dec.singular_values.size();
    const std::size_t cols_out = dec.v.rows();
    const double smax = nvals ? dec.singular_values.front() : 0.0;
    const double cutoff = kSvCutoffRel * smax;

    Matrix x(cols_out, b.cols());
    for_each_index(0, b.cols(), exec, [&](std::size_t j) {
        std::vector<double> y(nvals, 0.0);
        for (std::size_t k = 0; k < nvals; ++k) {
            const double s = dec.singular_values[k];
            if (s <= cutoff || s == 0.0) continue;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += dec.u(i, k) * b(i, j);
            y[k] = acc / s;
        }
        for (std::size_t i = 0; i < cols_out; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < nvals; ++k) acc += dec.v(i, k) * y[k];
            x(i, j) = acc;
        }
    });
    return x;
}

// Plain Cholesky, failing when a pivot drops below rel_tol times the largest
// initial diagonal.  With rel_tol 0 this is the solver path; with a positive
// rel_tol it doubles as the rank probe for the normal equations.
bool cholesky(Matrix& m, double rel_tol) {
    const std::size_t n = m.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, m(i, i));
    const double floor = rel_tol * max_diag;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= m(j, k) * m(j, k);
        if (d <= floor || d <= 0.0) return false;
        const double l = std::sqrt(d);
        m(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = m(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= m(i, k) * m(j, k);
            m(i, j) = v / l;
        }
    }
    return true;
}

void cholesky_solve(const Matrix& l, std::span<double> x) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double v = x[i];
        for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * x[k];
        x[i] = v / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double v = x[ii];
        for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x[k];
        x[ii] = v / l(ii, ii);
    }
}

double weighted_residual_norm(const Matrix& a, const Matrix& b, const Matrix& x,
                              std::span<const double> w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        if (wi == 0.0) continue;
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double r = b(i, j);
            for (std::size_t k = 0; k < a.cols(); ++k) r -= a(i, k) * x(k, j);
            acc += wi * r * r;
        }
    }
    return std::sqrt(acc);
}

}  // namespace

Svd svd(const Matrix& a) {
    if (a.empty()) throw std::invalid_argument("svd: empty matrix");
    if (a.rows() >= a.cols()) return svd_tall(a);
    Svd t = svd_tall(transpose(a));
    return Svd{std::move(t.v), std::move(t.singular_values), std::move(t.u)};
}

Matrix pseudo_inverse(const Matrix& a) {
    const Svd dec = svd(a);
    const double smax = dec.singular_values.empty() ? 0.0 : dec.singular_values.front();
    const double cutoff = kSvCutoffRel * smax;
    Matrix out(a.cols(), a.rows());
    for (std::size_t k = 0; k < dec.singular_values.size(); ++k) {
        const double s = dec.singular_values[k];
        if (s <= cutoff || s == 0.0) continue;
        const double inv = 1.0 / s;
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double vik = dec.v(i, k) * inv;
            if (vik == 0.0) continue;
            for (std::size_t j = 0; j < a.rows(); ++j) out(i, j) += vik * dec.u(j, k);
        }
    }
    return out;
}

SolveReport ols_solve(const Matrix& a, const Matrix& b, Exec exec) {
    require_solvable(a, b);
    const Svd dec = svd(a);
    SolveReport rep;
    rep.solution = apply_pinv(dec, b, exec);
    rep.rank_deficient = numerical_rank(dec.singular_values) < a.cols();
    rep.residual_norm = weighted_residual_norm(a, b, rep.solution, {});
    return rep;
}

SolveReport weighted_ridge(const Matrix& a, const Matrix& b,
                           std::span<const double> row_weights, double lambda,
                           Exec exec) {
    require_solvable(a, b);
    if (row_weights.size() != a.rows())
        throw std::invalid_argument("ridge: weight count != row count");
    for (double w : row_weights)
        if (!(w >= 0.0) || !std::isfinite(w))
            throw std::invalid_argument("ridge: weights must be finite and >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("ridge: lambda must be finite and >= 0");

    const std::size_t n = a.rows();
    const std::size_t cols = a.cols();

    if (lambda == 0.0) {
        // Pure weighted least squares: scale rows by sqrt(w) and reuse the
        // SVD path so rank deficiency keeps returning a minimum-norm answer.
        Matrix aw = a;
        Matrix bw = b;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = std::sqrt(row_weights[i]);
            for (std::size_t j = 0; j < cols; ++j) aw(i, j) *= s;
            for (std::size_t j = 0; j < b.cols(); ++j) bw(i, j) *= s;
        }
        const Svd dec = svd(aw);
        SolveReport rep;
        rep.solution = apply_pinv(dec, bw, exec);
        rep.rank_deficient = numerical_rank(dec.singular_values) < cols;
        rep.residual_norm = weighted_residual_norm(a, b, rep.solution, row_weights);
        return rep;
    }

    // Normal equations with a Tikhonov shift: M = A^T W A + lambda I.
    Matrix gram(cols, cols);
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = row_weights[i];
        if (wi == 0.0) continue;
        for (std::size_t p = 0; p < cols; ++p) {
            const double api = wi * a(i, p);
            if (api == 0.0) continue;
            for (std::size_t q = p; q < cols; ++q) gram(p, q) += api * a(i, q);
        }
    }
    for (std::size_t p = 0; p < cols; ++p)
        for (std::size_t q = 0; q < p; ++q) gram(p, q) = gram(q, p);

    // Rank probe on the unshifted Gram matrix; the shifted solve below is
    // positive definite regardless.
    Matrix probe = gram;
    const bool deficient = !cholesky(probe, 1e-12);

    Matrix m = gram;
    for (std::size_t p = 0; p < cols; ++p) m(p, p) += lambda;
    if (!cholesky(m, 0.0))
        throw std::runtime_error("ridge: shifted normal equations not positive definite");

    SolveReport rep;
    rep.solution = Matrix(cols, b.cols());
    rep.rank_deficient = deficient;
    for_each_index(0, b.cols(), exec, [&](std::size_t j) {
        std::vector<double> rhs(cols, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double wb = row_weights[i] * b(i, j);
            if (wb == 0.0) continue;
            for (std::size_t p = 0; p < cols; ++p) rhs[p] += a(i, p) * wb;
        }
        cholesky_solve(m, rhs);
        for (std::size_t p = 0; p < cols; ++p) rep.solution(p, j) = rhs[p];
    });
    rep.residual_norm = weighted_residual_norm(a, b, rep.solution, row_weights);
    return rep;
}

SolveReport ridge_solve(const Matrix& a, const Matrix& b,
                        std::span<const double> row_weights, double lambda,
                        Exec exec) {
    for (double w : row_weights)
        if (!(w >= 0.0 && w <= 1.0))
            throw std::invalid_argument("ridge_solve: weights must lie in [0, 1]");
    return weighted_ridge(a, b, row_weights, lambda, exec);
}

}  // namespace fedprop::linalg
