#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "flame/algebra.hpp"

namespace flame {

struct SingularMatrix : FlameError {
    explicit SingularMatrix(const std::string& w) : FlameError("SingularMatrix", w) {}
};

struct NumericBreakdown : FlameError {
    explicit NumericBreakdown(const std::string& w) : FlameError("NumericBreakdown", w) {}
};

// 0/0 from a converged lookahead step is benign and yields 0; a denominator
// more than 1e14 times smaller than the numerator is a genuine breakdown.
inline double safe_div(double num, double den) {
    if (den == 0.0) {
        if (num == 0.0) return 0.0;
        throw NumericBreakdown("zero denominator");
    }
    if (std::fabs(den) < 1e-14 * std::fabs(num)) throw NumericBreakdown("denominator underflow");
    return num / den;
}

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[size_t(i) * cols + j]; }
    double operator()(int i, int j) const { return a[size_t(i) * cols + j]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    Mat transposed() const {
        Mat t(cols, rows);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Mat col(int j) const {
        Mat c(rows, 1);
        for (int i = 0; i < rows; ++i) c(i, 0) = (*this)(i, j);
        return c;
    }

    Mat slice(int r0, int r1, int c0, int c1) const {
        Mat s(r1 - r0, c1 - c0);
        for (int i = r0; i < r1; ++i)
            for (int j = c0; j < c1; ++j) s(i - r0, j - c0) = (*this)(i, j);
        return s;
    }

    friend Mat operator*(const Mat& x, const Mat& y) {
        if (x.cols != y.rows) throw DimensionMismatch("numeric product");
        Mat z(x.rows, y.cols);
        for (int i = 0; i < x.rows; ++i)
            for (int k = 0; k < x.cols; ++k) {
                double v = x(i, k);
                if (v == 0.0) continue;
                for (int j = 0; j < y.cols; ++j) z(i, j) += v * y(k, j);
            }
        return z;
    }
    friend Mat operator+(const Mat& x, const Mat& y) {
        if (x.rows != y.rows || x.cols != y.cols) throw DimensionMismatch("numeric sum");
        Mat z = x;
        for (size_t i = 0; i < z.a.size(); ++i) z.a[i] += y.a[i];
        return z;
    }
    friend Mat operator-(const Mat& x, const Mat& y) {
        if (x.rows != y.rows || x.cols != y.cols) throw DimensionMismatch("numeric difference");
        Mat z = x;
        for (size_t i = 0; i < z.a.size(); ++i) z.a[i] -= y.a[i];
        return z;
    }
    friend Mat operator*(double s, const Mat& x) {
        Mat z = x;
        for (auto& v : z.a) v *= s;
        return z;
    }

    double fro() const {
        double s = 0;
        for (double v : a) s += v * v;
        return std::sqrt(s);
    }
    double max_abs() const {
        double s = 0;
        for (double v : a) s = std::max(s, std::fabs(v));
        return s;
    }
    double norm2_vec() const {  // Euclidean norm of a column vector
        double s = 0;
        for (double v : a) s += v * v;
        return std::sqrt(s);
    }
    double inf_norm() const {
        double best = 0;
        for (int i = 0; i < rows; ++i) {
            double s = 0;
            for (int j = 0; j < cols; ++j) s += std::fabs((*this)(i, j));
            best = std::max(best, s);
        }
        return best;
    }
};

// Deterministic uniform(-1, 1) from raw mt19937_64 bits; the standard pins the
// generator, so traces are reproducible across platforms.
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform() {
        std::uint64_t bits = gen();
        double u = double(bits >> 11) * 0x1.0p-53;  // [0,1)
        return 2.0 * u - 1.0;
    }
    Mat matrix(int r, int c) {
        Mat m(r, c);
        for (auto& v : m.a) v = uniform();
        return m;
    }
};

// ---- factorizations -------------------------------------------------------------

struct Lu {
    Mat lu;
    std::vector<int> piv;
};

inline Lu lu_factor(Mat m) {
    if (m.rows != m.cols) throw DimensionMismatch("LU of non-square matrix");
    int n = m.rows;
    Lu f{std::move(m), std::vector<int>(n)};
    for (int i = 0; i < n; ++i) f.piv[i] = i;
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int i = k + 1; i < n; ++i)
            if (std::fabs(f.lu(i, k)) > std::fabs(f.lu(p, k))) p = i;
        if (std::fabs(f.lu(p, k)) < 1e-300) throw SingularMatrix("zero pivot");
        if (p != k) {
            for (int j = 0; j < n; ++j) std::swap(f.lu(p, j), f.lu(k, j));
            std::swap(f.piv[p], f.piv[k]);
        }
        for (int i = k + 1; i < n; ++i) {
            f.lu(i, k) /= f.lu(k, k);
            double m2 = f.lu(i, k);
            for (int j = k + 1; j < n; ++j) f.lu(i, j) -= m2 * f.lu(k, j);
        }
    }
    return f;
}

inline Mat lu_solve(const Lu& f, const Mat& b) {
    int n = f.lu.rows;
    Mat x(n, b.cols);
    for (int c = 0; c < b.cols; ++c) {
        std::vector<double> y(n);
        for (int i = 0; i < n; ++i) {
            double s = b(f.piv[i], c);
            for (int j = 0; j < i; ++j) s -= f.lu(i, j) * y[j];
            y[i] = s;
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = y[i];
            for (int j = i + 1; j < n; ++j) s -= f.lu(i, j) * x(j, c);
            x(i, c) = s / f.lu(i, i);
        }
    }
    return x;
}

inline Mat solve_dense(const Mat& a, const Mat& b) { return lu_solve(lu_factor(a), b); }

inline bool cholesky_ok(const Mat& m) {
    if (m.rows != m.cols) return false;
    int n = m.rows;
    Mat l(n, n);
    for (int j = 0; j < n; ++j) {
        double d = m(j, j);
        for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= 0) return false;
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return true;
}

// forward/back substitution with a breakdown floor on the diagonal
inline Mat tri_solve(const Mat& m, const Mat& b, bool lower) {
    int n = m.rows;
    Mat x(n, b.cols);
    for (int c = 0; c < b.cols; ++c) {
        if (lower) {
            for (int i = 0; i < n; ++i) {
                double s = b(i, c);
                for (int j = 0; j < i; ++j) s -= m(i, j) * x(j, c);
                x(i, c) = safe_div(s, m(i, i));
            }
        } else {
            for (int i = n - 1; i >= 0; --i) {
                double s = b(i, c);
                for (int j = i + 1; j < n; ++j) s -= m(i, j) * x(j, c);
                x(i, c) = safe_div(s, m(i, i));
            }
        }
    }
    return x;
}

inline double cond1_estimate(const Mat& a) {
    Lu f = lu_factor(a);
    Mat inv = lu_solve(f, Mat::identity(a.rows));
    auto norm1 = [](const Mat& m) {
        double best = 0;
        for (int j = 0; j < m.cols; ++j) {
            double s = 0;
            for (int i = 0; i < m.rows; ++i) s += std::fabs(m(i, j));
            best = std::max(best, s);
        }
        return best;
    };
    return norm1(a) * norm1(inv);
}

} // namespace flame
