#pragma once

// Dense vector/matrix kernels used on every solver hot path.
//
// Two implementations live side by side: `serial` is the straight-line
// reference kept for testing, `omp` is the OpenMP-parallel version the
// library dispatches to. Reductions in `omp` use fixed-size chunks whose
// partial sums are combined in chunk order, so results do not depend on the
// thread count. For inputs shorter than one chunk both versions are
// bit-identical.

#include <cstddef>
#include <span>

namespace pnp::kernels {

/// Row-major dense matrix view.
struct MatrixView
{
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    const double* row(std::size_t i) const { return data + i * cols; }
};

inline constexpr std::size_t kReductionChunk = 2048;

namespace serial {

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// y = alpha * x + beta * y
void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y);
void scale(double alpha, std::span<double> x);
/// y = A x
void gemv(const MatrixView& a, std::span<const double> x, std::span<double> y);
/// y = A^T x
void gemv_t(const MatrixView& a, std::span<const double> x, std::span<double> y);

} // namespace serial

namespace omp {

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y);
void scale(double alpha, std::span<double> x);
void gemv(const MatrixView& a, std::span<const double> x, std::span<double> y);
void gemv_t(const MatrixView& a, std::span<const double> x, std::span<double> y);

} // namespace omp

inline double dot(std::span<const double> a, std::span<const double> b) { return omp::dot(a, b); }
inline double squared_norm(std::span<const double> a) { return omp::squared_norm(a); }
double norm(std::span<const double> a);
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) { omp::axpy(alpha, x, y); }
inline void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y)
{
    omp::axpby(alpha, x, beta, y);
}
inline void scale(double alpha, std::span<double> x) { omp::scale(alpha, x); }
inline void gemv(const MatrixView& a, std::span<const double> x, std::span<double> y) { omp::gemv(a, x, y); }
inline void gemv_t(const MatrixView& a, std::span<const double> x, std::span<double> y) { omp::gemv_t(a, x, y); }

/// Number of OpenMP threads the library will use (honours PNP_THREADS).
int thread_count();
/// Applies the PNP_THREADS environment cap, if set. Returns the resulting count.
int apply_thread_env();

} // namespace pnp::kernels
