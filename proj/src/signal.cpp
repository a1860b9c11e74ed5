#include "pnp/signal.hpp"

#include "pnp/errors.hpp"
#include "pnp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pnp {

Signal::Signal(std::size_t n, double fill) : data_(n, fill) {}

Signal::Signal(std::vector<double> data) : data_(std::move(data)) {}

Signal::Signal(std::vector<double> data, Shape shape) : data_(std::move(data))
{
    set_shape(shape);
}

Signal::Signal(Shape shape, double fill) : data_(shape.size(), fill), shape_(shape) {}

Shape Signal::shape_or_row() const { return shape_ ? *shape_ : Shape{1, data_.size()}; }

void Signal::set_shape(std::optional<Shape> shape)
{
    if (shape && shape->size() != data_.size())
        throw ShapeError("signal shape " + std::to_string(shape->height) + "x" + std::to_string(shape->width) +
                         " does not match length " + std::to_string(data_.size()));
    shape_ = shape;
}

bool Signal::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Signal::squared_norm() const { return kernels::squared_norm(data_); }

double Signal::norm() const { return std::sqrt(squared_norm()); }

Signal& Signal::operator+=(const Signal& other)
{
    require_size(other.size(), size(), "signal addition");
    kernels::axpy(1.0, other.data_, data_);
    return *this;
}

Signal& Signal::operator-=(const Signal& other)
{
    require_size(other.size(), size(), "signal subtraction");
    kernels::axpy(-1.0, other.data_, data_);
    return *this;
}

Signal& Signal::operator*=(double alpha)
{
    kernels::scale(alpha, data_);
    return *this;
}

Signal Signal::zeros_like() const
{
    Signal out(data_.size());
    out.shape_ = shape_;
    return out;
}

Signal operator+(Signal a, const Signal& b) { return a += b; }
Signal operator-(Signal a, const Signal& b) { return a -= b; }
Signal operator*(double alpha, Signal a) { return a *= alpha; }

Signal linear_combination(double alpha, const Signal& a, double beta, const Signal& b)
{
    require_size(b.size(), a.size(), "linear combination");
    Signal out = b;
    out.set_shape(a.shape());
    kernels::axpby(alpha, a.span(), beta, out.span());
    return out;
}

double dot(const Signal& a, const Signal& b)
{
    require_size(b.size(), a.size(), "dot product");
    return kernels::dot(a.span(), b.span());
}

double distance(const Signal& a, const Signal& b)
{
    require_size(b.size(), a.size(), "distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double max_abs_diff(const Signal& a, const Signal& b)
{
    require_size(b.size(), a.size(), "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void require_size(std::size_t actual, std::size_t expected, const char* what)
{
    if (actual != expected)
        throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(expected) + ", got " +
                         std::to_string(actual));
}

} // namespace pnp
