#ifndef NETFDI_LINALG_HPP
#define NETFDI_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "netfdi/common.hpp"

namespace netfdi {

// Dense row-major matrix. Problem sizes here are tiny (tens of rows), so a
// flat vector with pivoted elimination covers every need of the solvers.
class Mat {
  public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    Vec mul(const Vec& x) const {
        Vec y(rows_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols_; ++c) s += data_[r * cols_ + c] * x[c];
            y[r] = s;
        }
        return y;
    }

    // y = A^T x
    Vec tmul(const Vec& x) const {
        Vec y(cols_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) y[c] += data_[r * cols_ + c] * x[r];
        return y;
    }

    Mat mul(const Mat& b) const {
        Mat out(rows_, b.cols());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = 0; k < cols_; ++k) {
                double a = data_[r * cols_ + k];
                if (a == 0.0) continue;
                for (std::size_t c = 0; c < b.cols(); ++c) out(r, c) += a * b(r, c);
            }
        return out;
    }

    Mat transposed() const {
        Mat out(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(c, r) = data_[r * cols_ + c];
        return out;
    }

  private:
    std::size_t rows_ = 0, cols_ = 0;
    Vec data_;
};

// Solves A x = b with partial pivoting. Throws SolverError on a singular pivot.
inline Vec lu_solve(Mat a, Vec b) {
    const std::size_t n = a.rows();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(a(k, k));
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(a(r, k)) > best) {
                best = std::abs(a(r, k));
                piv = r;
            }
        if (best < 1e-300) throw SolverError("lu_solve: singular matrix");
        if (piv != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
            std::swap(b[k], b[piv]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            double f = a(r, k) / a(k, k);
            if (f == 0.0) continue;
            for (std::size_t c = k; c < n; ++c) a(r, c) -= f * a(k, c);
            b[r] -= f * b[k];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a(i, c) * x[c];
        x[i] = s / a(i, i);
    }
    return x;
}

// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
inline Vec symmetric_eigenvalues(Mat a) {
    const std::size_t n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    Vec ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

inline double min_symmetric_eigenvalue(const Mat& a) {
    return symmetric_eigenvalues(a).front();
}

inline double max_symmetric_eigenvalue(const Mat& a) {
    return symmetric_eigenvalues(a).back();
}

// Spectral norm of a (rectangular) matrix: sqrt(lambda_max(A A^T)).
inline double spectral_norm(const Mat& a) {
    const Mat g = a.mul(a.transposed());
    double lam = max_symmetric_eigenvalue(g);
    return std::sqrt(std::max(0.0, lam));
}

// Numerical rank via row elimination with a relative pivot threshold.
inline std::size_t matrix_rank(Mat a, double tol = 1e-10) {
    const std::size_t rows = a.rows(), cols = a.cols();
    double scale = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) scale = std::max(scale, std::abs(a(r, c)));
    if (scale == 0.0) return 0;
    std::size_t rank = 0;
    std::size_t row = 0;
    for (std::size_t col = 0; col < cols && row < rows; ++col) {
        std::size_t piv = row;
        double best = std::abs(a(row, col));
        for (std::size_t r = row + 1; r < rows; ++r)
            if (std::abs(a(r, col)) > best) {
                best = std::abs(a(r, col));
                piv = r;
            }
        if (best <= tol * scale) continue;
        if (piv != row)
            for (std::size_t c = 0; c < cols; ++c) std::swap(a(row, c), a(piv, c));
        for (std::size_t r = row + 1; r < rows; ++r) {
            double f = a(r, col) / a(row, col);
            for (std::size_t c = col; c < cols; ++c) a(r, c) -= f * a(row, c);
        }
        ++row;
        ++rank;
    }
    return rank;
}

}  // namespace netfdi

#endif
