#include "oodseg/diffmath/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "oodseg/errors.hpp"

namespace oodseg::diffmath {

std::size_t shape_size(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor: shape " + shape_to_string(shape_) + " holds " +
                         std::to_string(shape_size(shape_)) + " values, got " + std::to_string(data_.size()));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw NumericError("tensor: non-finite value at index " + std::to_string(i));
        }
    }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() == 2) return shape_[0];
    if (rank() == 1) return shape_[0];
    throw ShapeError("tensor: rows() on shape " + shape_to_string(shape_));
}

std::size_t Tensor::cols() const {
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return 1;
    throw ShapeError("tensor: cols() on shape " + shape_to_string(shape_));
}

double Tensor::at(std::size_t row, std::size_t col) const { return data_[row * cols() + col]; }

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("tensor: item() on shape " + shape_to_string(shape_));
    }
    return data_[0];
}

std::vector<double> Tensor::release() && {
    std::vector<double> out = std::move(data_);
    shape_.clear();
    data_.assign(1, 0.0);
    return out;
}

}  // namespace oodseg::diffmath
