#ifndef FERMIVOL_VEC_HPP
#define FERMIVOL_VEC_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace fermivol {

// Momentum-space dimension is small (2..4); fixed-size storage with a
// runtime dimension keeps the Monte Carlo inner loops allocation-free.
inline constexpr int kMaxDim = 4;

using Vec = std::array<double, kMaxDim>;
using Mat = std::array<std::array<double, kMaxDim>, kMaxDim>;

inline Vec zero_vec() { return Vec{0.0, 0.0, 0.0, 0.0}; }

inline Mat zero_mat() {
    Mat m{};
    for (auto& row : m) row.fill(0.0);
    return m;
}

inline double dot(const Vec& a, const Vec& b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a, int d) { return std::sqrt(dot(a, a, d)); }

inline Vec sub(const Vec& a, const Vec& b, int d) {
    Vec r = zero_vec();
    for (int i = 0; i < d; ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec add(const Vec& a, const Vec& b, int d) {
    Vec r = zero_vec();
    for (int i = 0; i < d; ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec scale(const Vec& a, double s, int d) {
    Vec r = zero_vec();
    for (int i = 0; i < d; ++i) r[i] = a[i] * s;
    return r;
}

// y = A x
inline Vec matvec(const Mat& A, const Vec& x, int d) {
    Vec y = zero_vec();
    for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += A[i][j] * x[j];
        y[i] = s;
    }
    return y;
}

// y = A^T x
inline Vec matTvec(const Mat& A, const Vec& x, int d) {
    Vec y = zero_vec();
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += A[i][j] * x[i];
        y[j] = s;
    }
    return y;
}

// B = A M A^T (used to push a Hessian through an orthogonal change of frame)
inline Mat congruence(const Mat& A, const Mat& M, int d) {
    Mat tmp = zero_mat();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += A[i][k] * M[k][j];
            tmp[i][j] = s;
        }
    Mat out = zero_mat();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += tmp[i][k] * A[j][k];
            out[i][j] = s;
        }
    return out;
}

// Solve A x = b for small d by Gaussian elimination with partial pivoting.
// Returns false if A is numerically singular.
inline bool solve_linear(Mat A, Vec b, int d, Vec& x) {
    for (int col = 0; col < d; ++col) {
        int piv = col;
        for (int r = col + 1; r < d; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        if (std::fabs(A[piv][col]) < 1e-14) return false;
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < d; ++r) {
            double f = A[r][col] / A[col][col];
            for (int c = col; c < d; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    x = zero_vec();
    for (int r = d - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < d; ++c) s -= A[r][c] * x[c];
        x[r] = s / A[r][r];
    }
    return true;
}

// Eigenvalues of a symmetric d x d matrix by cyclic Jacobi rotations,
// returned sorted ascending. Plenty for d <= 4.
inline std::array<double, kMaxDim> sym_eigenvalues(Mat A, int d) {
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += A[p][q] * A[p][q];
        if (off < 1e-30) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                if (std::fabs(A[p][q]) < 1e-300) continue;
                double theta = (A[q][q] - A[p][p]) / (2.0 * A[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < d; ++k) {
                    double akp = A[k][p], akq = A[k][q];
                    A[k][p] = c * akp - s * akq;
                    A[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    double apk = A[p][k], aqk = A[q][k];
                    A[p][k] = c * apk - s * aqk;
                    A[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::array<double, kMaxDim> ev{};
    for (int i = 0; i < d; ++i) ev[i] = A[i][i];
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            if (ev[j] < ev[i]) std::swap(ev[i], ev[j]);
    return ev;
}

// sin of the angle between a and b, computed from the half-angle chords
// sin(t) = |u-v| |u+v| / 2 for unit u, v. Stable at both t ~ 0 and t ~ pi.
inline double sin_angle(const Vec& a, const Vec& b, int d) {
    double na = norm2(a, d), nb = norm2(b, d);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("sin_angle: zero vector");
    double dm = 0.0, dp = 0.0;
    for (int i = 0; i < d; ++i) {
        double u = a[i] / na, v = b[i] / nb;
        dm += (u - v) * (u - v);
        dp += (u + v) * (u + v);
    }
    double s = 0.5 * std::sqrt(dm) * std::sqrt(dp);
    return s > 1.0 ? 1.0 : s;
}

}  // namespace fermivol

#endif
