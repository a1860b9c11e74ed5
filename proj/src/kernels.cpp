#include "pnp/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

namespace pnp::kernels {

namespace {

// Four independent accumulators break the add dependency chain and let the
// compiler vectorize without reassociating. Both implementations share this,
// so their results stay bit-identical.
double dot_block(const double* a, const double* b, std::size_t n)
{
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i)
        s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

} // namespace

namespace serial {

double dot(std::span<const double> a, std::span<const double> b)
{
    assert(a.size() == b.size());
    return dot_block(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] += alpha * x[i];
}

void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y)
{
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = alpha * x[i] + beta * y[i];
}

void scale(double alpha, std::span<double> x)
{
    for (double& v : x)
        v *= alpha;
}

void gemv(const MatrixView& a, std::span<const double> x, std::span<double> y)
{
    assert(x.size() == a.cols && y.size() == a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        y[i] = dot_block(a.row(i), x.data(), a.cols);
}

void gemv_t(const MatrixView& a, std::span<const double> x, std::span<double> y)
{
    assert(x.size() == a.rows && y.size() == a.cols);
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols; ++j)
            y[j] += row[j] * xi;
    }
}

} // namespace serial

namespace omp {

namespace {

std::size_t chunk_count(std::size_t n) { return (n + kReductionChunk - 1) / kReductionChunk; }

// Below this many flops the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 15;

} // namespace

double dot(std::span<const double> a, std::span<const double> b)
{
    assert(a.size() == b.size());
    const std::size_t n = a.size();
    const std::size_t chunks = chunk_count(n);
    if (chunks <= 1)
        return serial::dot(a, b);

    std::vector<double> partial(chunks, 0.0);
    const auto nchunks = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
    for (std::ptrdiff_t c = 0; c < nchunks; ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kReductionChunk;
        const std::size_t hi = std::min(n, lo + kReductionChunk);
        partial[static_cast<std::size_t>(c)] = dot_block(a.data() + lo, b.data() + lo, hi - lo);
    }
    double total = 0.0;
    for (double p : partial)
        total += p;
    return total;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    assert(x.size() == y.size());
    const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        y[i] += alpha * x[i];
}

void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y)
{
    assert(x.size() == y.size());
    const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        y[i] = alpha * x[i] + beta * y[i];
}

void scale(double alpha, std::span<double> x)
{
    const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        x[i] *= alpha;
}

void gemv(const MatrixView& a, std::span<const double> x, std::span<double> y)
{
    assert(x.size() == a.cols && y.size() == a.rows);
    const auto rows = static_cast<std::ptrdiff_t>(a.rows);
    // Rows are reduced exactly as in serial::gemv, so the results match bitwise.
#pragma omp parallel for schedule(static) if (a.rows * a.cols >= kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i)
        y[i] = dot_block(a.row(static_cast<std::size_t>(i)), x.data(), a.cols);
}

void gemv_t(const MatrixView& a, std::span<const double> x, std::span<double> y)
{
    assert(x.size() == a.rows && y.size() == a.cols);
    // Partition the output columns; every thread walks all rows in order, so
    // the accumulation order per output entry matches serial::gemv_t.
    constexpr std::size_t kColumnBlock = 256;
    const std::size_t blocks = (a.cols + kColumnBlock - 1) / kColumnBlock;
    const auto nblocks = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static) if (a.rows * a.cols >= kParallelThreshold)
    for (std::ptrdiff_t blk = 0; blk < nblocks; ++blk) {
        const std::size_t lo = static_cast<std::size_t>(blk) * kColumnBlock;
        const std::size_t hi = std::min(a.cols, lo + kColumnBlock);
        for (std::size_t j = lo; j < hi; ++j)
            y[j] = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) {
            const double* row = a.row(i);
            const double xi = x[i];
            for (std::size_t j = lo; j < hi; ++j)
                y[j] += row[j] * xi;
        }
    }
}

} // namespace omp

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

int thread_count() { return omp_get_max_threads(); }

int apply_thread_env()
{
    if (const char* env = std::getenv("PNP_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1)
                omp_set_num_threads(cap);
        } catch (const std::exception&) {
            // ignore malformed values
        }
    }
    return omp_get_max_threads();
}

} // namespace pnp::kernels
