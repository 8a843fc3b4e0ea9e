#include "rmlab/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace rmlab {

namespace {

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
NumArray cholesky_factor(const NumArray& a) {
    if (a.rank() != 2 || a.shape()[0] != a.shape()[1])
        throw ShapeError("cholesky: matrix must be square, got " + shape_string(a.shape()));
    const std::size_t n = a.shape()[0];
    NumArray l({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (!(s > 0.0)) throw SingularError("cholesky: matrix not positive definite");
                l.at(i, i) = std::sqrt(s);
            } else {
                l.at(i, j) = s / l.at(j, j);
            }
        }
    }
    return l;
}

void forward_subst(const NumArray& l, std::span<double> x) {
    const std::size_t n = l.shape()[0];
    for (std::size_t i = 0; i < n; ++i) {
        double s = x[i];
        for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * x[k];
        x[i] = s / l.at(i, i);
    }
}

void backward_subst_t(const NumArray& l, std::span<double> x) {
    const std::size_t n = l.shape()[0];
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l.at(k, ii) * x[k];
        x[ii] = s / l.at(ii, ii);
    }
}

}  // namespace

std::vector<double> cholesky_solve(const NumArray& a, std::span<const double> b) {
    const NumArray l = cholesky_factor(a);
    std::vector<double> x(b.begin(), b.end());
    forward_subst(l, x);
    backward_subst_t(l, x);
    return x;
}

NumArray cholesky_inverse(const NumArray& a) {
    const NumArray l = cholesky_factor(a);
    const std::size_t n = a.shape()[0];
    NumArray inv({n, n});
    std::vector<double> e(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        std::fill(e.begin(), e.end(), 0.0);
        e[c] = 1.0;
        forward_subst(l, e);
        backward_subst_t(l, e);
        for (std::size_t r = 0; r < n; ++r) inv.at(r, c) = e[r];
    }
    return inv;
}

std::vector<double> lstsq(const NumArray& x, std::span<const double> y) {
    if (x.rank() != 2) throw ShapeError("lstsq: design must be rank 2");
    const std::size_t n = x.shape()[0];
    const std::size_t d = x.shape()[1];
    if (y.size() != n) throw ShapeError("lstsq: rhs length does not match row count");
    NumArray xtx({d, d});
    std::vector<double> xty(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = x.data() + r * d;
        for (std::size_t i = 0; i < d; ++i) {
            xty[i] += row[i] * y[r];
            for (std::size_t j = i; j < d; ++j) xtx.at(i, j) += row[i] * row[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) xtx.at(i, j) = xtx.at(j, i);
    // tiny Tikhonov jitter so rank-deficient designs resolve to a
    // near-minimum-norm solution instead of failing
    const double jitter = 1e-10 * (trace(xtx) / static_cast<double>(d) + 1.0);
    for (std::size_t i = 0; i < d; ++i) xtx.at(i, i) += jitter;
    return cholesky_solve(xtx, xty);
}

std::vector<double> symmetric_eigenvalues(const NumArray& a) {
    if (a.rank() != 2 || a.shape()[0] != a.shape()[1])
        throw ShapeError("symmetric_eigenvalues: matrix must be square");
    const std::size_t n = a.shape()[0];
    NumArray m = a;

    // Cyclic Jacobi sweeps; plenty for the small symmetric matrices here.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double app = m.at(p, p);
                const double aqq = m.at(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m.at(k, p);
                    const double mkq = m.at(k, q);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m.at(p, k);
                    const double mqk = m.at(q, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(q, k) = s * mpk + c * mqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = m.at(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

double trace(const NumArray& a) {
    double t = 0.0;
    for (std::size_t i = 0; i < a.shape()[0]; ++i) t += a.at(i, i);
    return t;
}

NumArray matmul(const NumArray& a, const NumArray& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    NumArray c({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) c.at(i, j) += av * b.at(p, j);
        }
    return c;
}

std::vector<double> matvec(const NumArray& a, std::span<const double> x) {
    if (a.rank() != 2 || a.shape()[1] != x.size())
        throw ShapeError("matvec: incompatible shapes");
    std::vector<double> y(a.shape()[0], 0.0);
    for (std::size_t i = 0; i < a.shape()[0]; ++i) y[i] = dot(a.row(i), x);
    return y;
}

}  // namespace rmlab
