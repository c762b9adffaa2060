#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace largebatch {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. data().size() == element_count(shape())
// holds after every public operation.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor from(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // Row-major 2-D access.
    double& at(std::size_t row, std::size_t col) noexcept { return data_[row * shape_[1] + col]; }
    double at(std::size_t row, std::size_t col) const noexcept { return data_[row * shape_[1] + col]; }

    void fill(double value);

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

enum class ElementwiseOp { add, sub, mul, div, square, sqrt };

// Pure elementwise arithmetic. Binary ops require `b` with the same shape as
// `a`; unary ops (square, sqrt) reject a second operand.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);

void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

// Throws NonFiniteError naming `where` and the first offending element.
void require_finite(std::span<const double> values, const std::string& where);

double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(std::span<const double> values);

}  // namespace largebatch
