#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace oodseg::diffmath {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of 64-bit reals.
///
/// Immutable after construction: every operation that "changes" a tensor
/// produces a new one. Construction rejects non-finite values and a data
/// length that disagrees with the shape. Rank 0 (`{}`) is a scalar.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::span<const double> data() const noexcept { return data_; }

    // Rank-2 accessors; rank-1 tensors act as column vectors.
    std::size_t rows() const;
    std::size_t cols() const;

    double operator[](std::size_t i) const { return data_[i]; }
    double at(std::size_t row, std::size_t col) const;
    /// Value of a single-element tensor of any rank.
    double item() const;

    /// Moves the payload out; the tensor is left empty-scalar.
    std::vector<double> release() &&;

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace oodseg::diffmath
