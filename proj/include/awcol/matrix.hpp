#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace awcol {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Throws ShapeError naming `what` when the shapes differ.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

/// Selects rows of `m` in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

/// Stacks `top` over `bottom`; both must have the same column count.
Matrix vstack(const Matrix& top, const Matrix& bottom);

/// Row-wise numerically stable softmax (max subtraction).
Matrix softmax_rows(const Matrix& logits);

/// Index of the largest entry in each row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& m);

}  // namespace awcol
