#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace pnp {

struct Shape
{
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return height * width; }
    bool operator==(const Shape&) const = default;
};

/// A real vector, optionally interpreted as a height x width image (row-major).
/// Unknowns, iterates and denoiser inputs all share this representation.
class Signal
{
public:
    Signal() = default;
    explicit Signal(std::size_t n, double fill = 0.0);
    explicit Signal(std::vector<double> data);
    Signal(std::vector<double> data, Shape shape);
    Signal(Shape shape, double fill = 0.0);

    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    const std::optional<Shape>& shape() const { return shape_; }
    /// Shape if present, otherwise 1 x n.
    Shape shape_or_row() const;
    void set_shape(std::optional<Shape> shape);

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool all_finite() const;

    double norm() const;
    double squared_norm() const;

    Signal& operator+=(const Signal& other);
    Signal& operator-=(const Signal& other);
    Signal& operator*=(double alpha);

    /// Same dimension and shape metadata, zero-filled.
    Signal zeros_like() const;

private:
    std::vector<double> data_;
    std::optional<Shape> shape_;
};

Signal operator+(Signal a, const Signal& b);
Signal operator-(Signal a, const Signal& b);
Signal operator*(double alpha, Signal a);

/// alpha * a + beta * b, keeping the shape of `a`.
Signal linear_combination(double alpha, const Signal& a, double beta, const Signal& b);

double dot(const Signal& a, const Signal& b);
double distance(const Signal& a, const Signal& b);
double max_abs_diff(const Signal& a, const Signal& b);

/// Throws ShapeError unless both vectors have `n` entries.
void require_size(std::size_t actual, std::size_t expected, const char* what);

} // namespace pnp
