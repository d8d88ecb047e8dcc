#pragma once

// Test-only reference implementations. Nothing here may call into the
// library code path it is used to check.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace oracle {

/// Runs a zero-padded direct convolution on explicit buffers and counts the
/// multiplies it executes (padded taps included, as frameworks do).
inline std::uint64_t conv_multiplies(int batch, int c_in, int side, int c_out, int k, int stride,
                                     int pad) {
    const int padded = side + 2 * pad;
    std::vector<double> input(static_cast<std::size_t>(batch * c_in * padded * padded), 1.0);
    std::vector<double> weight(static_cast<std::size_t>(c_out * c_in * k * k), 0.5);
    std::uint64_t multiplies = 0;
    double sink = 0.0;
    for (int b = 0; b < batch; ++b)
        for (int co = 0; co < c_out; ++co)
            for (int oy = 0; oy + k <= padded; oy += stride)
                for (int ox = 0; ox + k <= padded; ox += stride) {
                    double acc = 0.0;
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const auto in_idx = ((b * c_in + ci) * padded + oy + ky) * padded + ox + kx;
                                const auto w_idx = ((co * c_in + ci) * k + ky) * k + kx;
                                acc += input[static_cast<std::size_t>(in_idx)] *
                                       weight[static_cast<std::size_t>(w_idx)];
                                ++multiplies;
                            }
                    sink += acc;
                }
    (void)sink;
    return multiplies;
}

/// Multiplies in a naive matrix-vector product per sample.
inline std::uint64_t linear_multiplies(int batch, int in, int out) {
    std::uint64_t multiplies = 0;
    for (int b = 0; b < batch; ++b)
        for (int o = 0; o < out; ++o)
            for (int i = 0; i < in; ++i) ++multiplies;
    return multiplies;
}

/// Comparisons made by a naive max-pool (every window element visited),
/// halved to MACs.
inline std::uint64_t pool_macs(int batch, int channels, int side, int k, int stride, int pad) {
    const int padded = side + 2 * pad;
    std::uint64_t visits = 0;
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            for (int oy = 0; oy + k <= padded; oy += stride)
                for (int ox = 0; ox + k <= padded; ox += stride)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) ++visits;
    return visits / 2;
}

/// Least squares with intercept via the normal equations (AᵀA)b = Aᵀy on
/// A = [1 | X], solved by Gaussian elimination with partial pivoting.
/// Returns {intercept, b_1, ..., b_p}. Row-major x: n rows of p values.
inline std::vector<double> normal_equations(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    const std::size_t m = x.front().size() + 1;
    std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<double> row{1.0};
        row.insert(row.end(), x[r].begin(), x[r].end());
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) a[i][j] += row[i] * row[j];
            a[i][m] += row[i] * y[r];
        }
    }
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < m; ++r) {
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        }
        std::swap(a[c], a[piv]);
        for (std::size_t r = c + 1; r < m; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t j = c; j <= m; ++j) a[r][j] -= f * a[c][j];
        }
    }
    std::vector<double> b(m, 0.0);
    for (std::size_t i = m; i-- > 0;) {
        double acc = a[i][m];
        for (std::size_t j = i + 1; j < m; ++j) acc -= a[i][j] * b[j];
        b[i] = acc / a[i][i];
    }
    return b;
}

/// Univariate lasso with intercept under (1/2n)SS + lambda|b|.
inline double univariate_lasso(const std::vector<double>& x, const std::vector<double>& y, double lambda) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double z = sxy / n;
    const double shrunk = z > lambda ? z - lambda : (z < -lambda ? z + lambda : 0.0);
    return shrunk / (sxx / n);
}

}  // namespace oracle
