#pragma once

// Dense row-major matrices plus the handful of linear-algebra kernels the
// rest of the library is built on.  Everything is double precision; shapes
// are validated eagerly and mismatches throw std::invalid_argument.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef MVLAT_USE_CBLAS
#include <cblas.h>
#endif

namespace mvlat {

class Mat {
public:
    Mat() = default;

    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Mat m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& r : rows) {
            if (r.size() != m.cols_)
                throw std::invalid_argument("Mat::from_rows: ragged rows");
            std::size_t j = 0;
            for (double v : r) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Mat& operator+=(const Mat& o) {
        require_shape(o, "operator+=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }

    Mat& operator-=(const Mat& o) {
        require_shape(o, "operator-=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }

    Mat& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Mat operator+(Mat a, const Mat& b) { a += b; return a; }
    friend Mat operator-(Mat a, const Mat& b) { a -= b; return a; }
    friend Mat operator*(Mat a, double s) { a *= s; return a; }
    friend Mat operator*(double s, Mat a) { a *= s; return a; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    void require_shape(const Mat& o, const char* who) const {
        if (!same_shape(o))
            throw std::invalid_argument(std::string(who) + ": shape mismatch");
    }

    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline void ensure_finite(const Mat& m, const std::string& context) {
    if (!m.all_finite())
        throw std::runtime_error(context + ": non-finite entries");
}

inline double frobenius_norm(const Mat& m) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) s += m.data()[k] * m.data()[k];
    return std::sqrt(s);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d = std::max(d, std::abs(a.data()[k] - b.data()[k]));
    return d;
}

inline Mat hcat(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("hcat: row counts disagree");
    Mat c(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* dst = c.row(i);
        const double* ra = a.row(i);
        const double* rb = b.row(i);
        std::copy(ra, ra + a.cols(), dst);
        std::copy(rb, rb + b.cols(), dst + a.cols());
    }
    return c;
}

// Columns [from, to) as a new matrix.
inline Mat slice_cols(const Mat& a, std::size_t from, std::size_t to) {
    if (from > to || to > a.cols())
        throw std::invalid_argument("slice_cols: bad column range");
    Mat c(a.rows(), to - from);
    for (std::size_t i = 0; i < a.rows(); ++i)
        std::copy(a.row(i) + from, a.row(i) + to, c.row(i));
    return c;
}

// Rows picked by index as a new matrix.
inline Mat take_rows(const Mat& a, const std::vector<std::size_t>& idx) {
    Mat c(idx.size(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows())
            throw std::invalid_argument("take_rows: index out of range");
        std::copy(a.row(idx[i]), a.row(idx[i]) + a.cols(), c.row(i));
    }
    return c;
}

inline Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            t(j, i) = a(i, j);
    return t;
}

namespace detail {

inline void gemm_fallback(bool trans_a, bool trans_b,
                          std::size_t m, std::size_t n, std::size_t k,
                          const Mat& a, const Mat& b, Mat& c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.row(i);
        std::fill(ci, ci + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = trans_a ? a(p, i) : a(i, p);
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * b(j, p);
            } else {
                const double* bp = b.row(p);
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    }
}

inline Mat gemm(bool trans_a, bool trans_b, const Mat& a, const Mat& b) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t ka = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (ka != kb)
        throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                    std::to_string(ka) + " vs " + std::to_string(kb) + ")");
    Mat c(m, n);
    if (m == 0 || n == 0 || ka == 0) return c;
#ifdef MVLAT_USE_CBLAS
    cblas_dgemm(CblasRowMajor,
                trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(ka),
                1.0, a.data(), static_cast<int>(a.cols()),
                b.data(), static_cast<int>(b.cols()),
                0.0, c.data(), static_cast<int>(c.cols()));
#else
    gemm_fallback(trans_a, trans_b, m, n, ka, a, b, c);
#endif
    return c;
}

} // namespace detail

// c = a * b
inline Mat matmul(const Mat& a, const Mat& b) { return detail::gemm(false, false, a, b); }

// c = a * b^T
inline Mat matmul_nt(const Mat& a, const Mat& b) { return detail::gemm(false, true, a, b); }

// c = a^T * b
inline Mat matmul_tn(const Mat& a, const Mat& b) { return detail::gemm(true, false, a, b); }

inline void set_blas_threads(int n) {
#ifdef MVLAT_USE_CBLAS
    openblas_set_num_threads(n > 0 ? n : 1);
#else
    (void)n;
#endif
}

// Subtracts from every row its mean, i.e. multiplies on the right by
// W = I - (1/N) 1 1^T.  Each row of the result sums to zero.
inline Mat center_columns(const Mat& a) {
    Mat c = a;
    const std::size_t n = a.cols();
    if (n == 0) return c;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double mean = 0.0;
        const double* src = a.row(i);
        for (std::size_t j = 0; j < n; ++j) mean += src[j];
        mean /= static_cast<double>(n);
        double* dst = c.row(i);
        for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] - mean;
    }
    return c;
}

struct Svd {
    Mat s;                     // rows x rows, orthogonal, left singular vectors as columns
    std::vector<double> sigma; // descending, non-negative
    Mat t;                     // cols x rows, orthonormal columns
};

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix b (overwritten with
// the diagonalised form).  v accumulates the rotations: b_in = v diag v^T.
inline void jacobi_eigen(Mat& b, Mat& v) {
    const std::size_t d = b.rows();
    v = Mat::identity(d);
    if (d < 2) return;
    double scale = 0.0;
    for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, std::abs(b(i, i)));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            scale = std::max(scale, std::abs(b(i, j)));
    if (scale == 0.0) return;
    const double stop = 1e-15 * scale;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j)
                off = std::max(off, std::abs(b(i, j)));
        if (off <= stop) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double bpq = b(p, q);
                if (std::abs(bpq) <= stop * 1e-2) continue;
                const double tau = (b(q, q) - b(p, p)) / (2.0 * bpq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double bkp = b(k, p), bkq = b(k, q);
                    b(k, p) = c * bkp - s * bkq;
                    b(k, q) = s * bkp + c * bkq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double bpk = b(p, k), bqk = b(q, k);
                    b(p, k) = c * bpk - s * bqk;
                    b(q, k) = s * bpk + c * bqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
}

} // namespace detail

// Thin SVD of a wide matrix a (rows <= cols): a = s * diag(sigma) * t^T.
// Works on a * a^T, which is small by assumption, with a Jacobi
// eigendecomposition; right vectors are recovered as t_i = a^T s_i / sigma_i
// and re-orthogonalised.  Directions whose singular value is negligible
// (below 1e-12 of the largest) are completed from canonical basis vectors so
// t always has orthonormal columns.
inline Svd small_svd(const Mat& a) {
    const std::size_t d = a.rows();
    const std::size_t n = a.cols();
    if (d == 0 || n == 0)
        throw std::invalid_argument("small_svd: empty input");
    if (d > n)
        throw std::invalid_argument("small_svd: expected rows <= cols, got " +
                                    std::to_string(d) + "x" + std::to_string(n));
    ensure_finite(a, "small_svd");

    Mat b = matmul_nt(a, a);
    Mat v;
    detail::jacobi_eigen(b, v);

    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return b(x, x) > b(y, y); });

    Svd out;
    out.s = Mat(d, d);
    out.sigma.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        const std::size_t src = order[i];
        out.sigma[i] = std::sqrt(std::max(b(src, src), 0.0));
        for (std::size_t k = 0; k < d; ++k) out.s(k, i) = v(k, src);
    }

    const double sigma_max = out.sigma.empty() ? 0.0 : out.sigma[0];
    const double rank_tol = 1e-12 * sigma_max;

    out.t = Mat(n, d);
    std::size_t next_canonical = 0;
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> col(n, 0.0);
        if (out.sigma[i] > rank_tol && out.sigma[i] > 0.0) {
            const double inv = 1.0 / out.sigma[i];
            for (std::size_t r = 0; r < d; ++r) {
                const double w = out.s(r, i) * inv;
                const double* arow = a.row(r);
                for (std::size_t j = 0; j < n; ++j) col[j] += w * arow[j];
            }
        } else {
            // Degenerate direction: fill in with the first canonical basis
            // vector that survives orthogonalisation against earlier columns.
            col[next_canonical < n ? next_canonical++ : 0] = 1.0;
        }
        // Modified Gram-Schmidt against earlier columns (two passes, which is
        // enough for full orthogonality), retried from fresh canonical
        // vectors if the candidate collapses.
        for (int attempt = 0; attempt < static_cast<int>(n) + 2; ++attempt) {
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t prev = 0; prev < i; ++prev) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += col[j] * out.t(j, prev);
                    for (std::size_t j = 0; j < n; ++j) col[j] -= dot * out.t(j, prev);
                }
            }
            double norm = 0.0;
            for (double x : col) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (std::size_t j = 0; j < n; ++j) out.t(j, i) = col[j] / norm;
                break;
            }
            std::fill(col.begin(), col.end(), 0.0);
            if (next_canonical >= n)
                throw std::runtime_error("small_svd: failed to complete orthonormal basis");
            col[next_canonical++] = 1.0;
        }
    }
    return out;
}

} // namespace mvlat
