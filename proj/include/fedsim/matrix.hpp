#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

/// Dense row-major matrix of 64-bit floats. All arithmetic runs in plain
/// index order, so results are bit-reproducible for a fixed input order.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    /// y = A x
    std::vector<double> matvec(const std::vector<double>& x) const {
        if (x.size() != cols) throw std::invalid_argument("Matrix::matvec: dimension mismatch");
        std::vector<double> y(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            const double* row = data.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
            y[r] = acc;
        }
        return y;
    }

    /// y = A^T x
    std::vector<double> matvec_t(const std::vector<double>& x) const {
        if (x.size() != rows) throw std::invalid_argument("Matrix::matvec_t: dimension mismatch");
        std::vector<double> y(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = data.data() + r * cols;
            const double xr = x[r];
            for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
        }
        return y;
    }
};

/// Fills a rows x cols matrix with i.i.d. N(0, scale^2) entries, consuming the
/// rng in row-major order. Zero rows or cols gives an empty matrix.
inline Matrix gaussian_fill(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("gaussian_fill: scale must be > 0");
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.next_gaussian();
    return m;
}

}  // namespace fedsim
