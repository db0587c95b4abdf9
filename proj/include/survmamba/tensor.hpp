#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace survmamba {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// The gradient buffer is absent until first requested through grad() or
/// zero_grad(); once present it always matches the data shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Product of every dimension except the last.
    std::size_t rows() const;
    // Last dimension (1 for scalars).
    std::size_t cols() const;

    bool has_grad() const { return !grad_.empty(); }
    std::span<double> grad();
    std::span<const double> grad() const { return grad_; }
    void zero_grad();
    void drop_grad() { grad_.clear(); }

    // Same data under a new shape of equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
};

}  // namespace survmamba
