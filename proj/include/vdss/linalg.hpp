#pragma once

// Fixed-size dense algebra for the per-arm ridge systems. N is small (12), so
// everything is stack-allocated and row-major.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

namespace vdss::linalg {

template <std::size_t N>
using Vec = std::array<double, N>;

template <std::size_t N>
struct Mat {
    std::array<double, N * N> a{};

    double& operator()(std::size_t r, std::size_t c) { return a[r * N + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * N + c]; }

    static Mat identity(double scale = 1.0) {
        Mat m;
        for (std::size_t i = 0; i < N; ++i) m(i, i) = scale;
        return m;
    }

    bool operator==(const Mat&) const = default;
};

template <std::size_t N>
double dot(std::span<const double, N> x, const Vec<N>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += x[i] * y[i];
    return s;
}

/// A += x x^T
template <std::size_t N>
void add_outer(Mat<N>& m, std::span<const double, N> x) {
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = 0; c < N; ++c) m(r, c) += x[r] * x[c];
}

template <std::size_t N>
bool is_symmetric(const Mat<N>& m, double tol = 0.0) {
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = r + 1; c < N; ++c)
            if (std::abs(m(r, c) - m(c, r)) > tol) return false;
    return true;
}

/// Lower-triangular Cholesky factor; nullopt when the matrix is not SPD.
template <std::size_t N>
std::optional<Mat<N>> cholesky(const Mat<N>& m) {
    Mat<N> l;
    for (std::size_t j = 0; j < N; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < N; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

/// Solves L y = b (forward substitution).
template <std::size_t N>
Vec<N> forward_solve(const Mat<N>& l, std::span<const double, N> b) {
    Vec<N> y{};
    for (std::size_t i = 0; i < N; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    return y;
}

/// Solves (L L^T) x = b given the Cholesky factor L.
template <std::size_t N>
Vec<N> cholesky_solve(const Mat<N>& l, std::span<const double, N> b) {
    Vec<N> y = forward_solve<N>(l, b);
    Vec<N> x{};
    for (std::size_t ii = N; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < N; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

}  // namespace vdss::linalg
