#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rmlab/common.hpp"

namespace rmlab {

// Dense row-major array of 64-bit floats. All numeric state in the project
// lives in these; shapes are checked at operation boundaries.
class NumArray {
public:
    NumArray() = default;

    explicit NumArray(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    NumArray(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size())
            throw ShapeError("NumArray: shape does not match data length");
    }

    static NumArray zeros(std::vector<std::size_t> shape) { return NumArray(std::move(shape)); }

    static NumArray vec(std::vector<double> values) {
        std::vector<std::size_t> shape{values.size()};
        return NumArray(std::move(shape), std::move(values));
    }

    static NumArray matrix(std::size_t rows, std::size_t cols) {
        return NumArray({rows, cols});
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const { return rank() >= 1 ? shape_[0] : 0; }
    std::size_t cols() const { return rank() >= 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    // View of row r of a rank-2 array.
    std::span<double> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * shape_[1], shape_[1]};
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return {data_.data(), data_.size()}; }
    std::span<const double> values() const { return {data_.data(), data_.size()}; }
    const std::vector<double>& storage() const { return data_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool all_finite() const;
    bool same_shape(const NumArray& other) const { return shape_ == other.shape_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace rmlab
