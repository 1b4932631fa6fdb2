#ifndef COCKTAIL_MATRIX_HPP
#define COCKTAIL_MATRIX_HPP

#include <cstddef>
#include <vector>

namespace cocktail {

// Dense row-major matrix of 64-bit floats. All linear algebra in this
// project runs through the routines below with fixed summation order, so
// results are reproducible bit for bit across runs.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

    double* row(size_t r) { return data.data() + r * cols; }
    const double* row(size_t r) const { return data.data() + r * cols; }

    bool empty() const { return rows == 0 || cols == 0; }
    bool all_finite() const;
};

// a (m x k) times b (k x n). Summation runs over ascending k for every cell.
Matrix matmul(const Matrix& a, const Matrix& b);

// transpose(a) * b without materializing the transpose; a is (k x m), b is (k x n).
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

// a * transpose(b); a is (m x k), b is (n x k).
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

// Row-wise softmax with max subtraction. Rejects non-finite input.
Matrix softmax_rows(const Matrix& m);

} // namespace cocktail

#endif
