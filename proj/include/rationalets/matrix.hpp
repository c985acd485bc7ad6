#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace rationalets {

// Dense row-major matrix. Rows are time steps, columns are variables.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        assert(data_.size() == rows_ * cols_);
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double> column(std::size_t c) const {
        std::vector<double> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    // Rows [first, first + count).
    Matrix slice_rows(std::size_t first, std::size_t count) const {
        assert(first + count <= rows_);
        return Matrix(count, cols_,
                      std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                                          data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_)));
    }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace rationalets
