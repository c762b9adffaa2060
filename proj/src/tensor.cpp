#include "largebatch/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "largebatch/error.hpp"

namespace largebatch {

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto d : shape_)
        if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
    data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_)
        if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
    if (data_.size() != element_count(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(context) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

void require_finite(std::span<const double> values, const std::string& where) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i])) throw NonFiniteError(where, i);
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b) {
    const bool binary = op != ElementwiseOp::square && op != ElementwiseOp::sqrt;
    if (binary && !b) throw ShapeError("elementwise: binary op requires a second operand");
    if (!binary && b) throw ShapeError("elementwise: unary op takes a single operand");
    if (binary) require_same_shape(a, *b, "elementwise");

    Tensor out(a.shape());
    auto x = a.data();
    auto y = out.data();
    switch (op) {
        case ElementwiseOp::add:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + (*b)[i];
            break;
        case ElementwiseOp::sub:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - (*b)[i];
            break;
        case ElementwiseOp::mul:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * (*b)[i];
            break;
        case ElementwiseOp::div:
            for (std::size_t i = 0; i < x.size(); ++i) {
                if ((*b)[i] == 0.0) throw DivisionByZeroError(i);
                y[i] = x[i] / (*b)[i];
            }
            break;
        case ElementwiseOp::square:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i];
            break;
        case ElementwiseOp::sqrt:
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (x[i] < 0.0) throw DomainError("sqrt of negative value at element " + std::to_string(i));
                y[i] = std::sqrt(x[i]);
            }
            break;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::div, a, b); }
Tensor square(const Tensor& a) { return elementwise(ElementwiseOp::square, a); }
Tensor sqrt(const Tensor& a) { return elementwise(ElementwiseOp::sqrt, a); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_norm(std::span<const double> values) {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

}  // namespace largebatch
