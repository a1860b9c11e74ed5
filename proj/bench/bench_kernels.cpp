// Serial reference kernels against their OpenMP counterparts.

#include "pnp/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace k = pnp::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (auto& x : v)
        x = dist(rng);
    return v;
}

template <double (*Dot)(std::span<const double>, std::span<const double>)>
void bm_dot(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vector(n, 1), b = random_vector(n, 2);
    for (auto _ : state)
        benchmark::DoNotOptimize(Dot(a, b));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * sizeof(double)));
}

template <void (*Axpy)(double, std::span<const double>, std::span<double>)>
void bm_axpy(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = random_vector(n, 1);
    auto y = random_vector(n, 2);
    for (auto _ : state) {
        Axpy(1e-9, x, y);
        benchmark::ClobberMemory();
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * 3 * n * sizeof(double)));
}

template <void (*Gemv)(const k::MatrixView&, std::span<const double>, std::span<double>), bool Transposed>
void bm_gemv(benchmark::State& state)
{
    const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{4096};
    const auto a = random_vector(rows * cols, 1);
    const auto x = random_vector(Transposed ? rows : cols, 2);
    std::vector<double> y(Transposed ? cols : rows);
    const k::MatrixView view{a.data(), rows, cols};
    for (auto _ : state) {
        Gemv(view, x, y);
        benchmark::ClobberMemory();
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * rows * cols * sizeof(double)));
}

} // namespace

BENCHMARK(bm_dot<k::serial::dot>)->Name("dot/serial")->RangeMultiplier(16)->Range(1 << 12, 1 << 22);
BENCHMARK(bm_dot<k::omp::dot>)->Name("dot/omp")->RangeMultiplier(16)->Range(1 << 12, 1 << 22);
BENCHMARK(bm_axpy<k::serial::axpy>)->Name("axpy/serial")->RangeMultiplier(16)->Range(1 << 12, 1 << 22);
BENCHMARK(bm_axpy<k::omp::axpy>)->Name("axpy/omp")->RangeMultiplier(16)->Range(1 << 12, 1 << 22);
BENCHMARK(bm_gemv<k::serial::gemv, false>)->Name("gemv/serial")->Arg(256)->Arg(2048);
BENCHMARK(bm_gemv<k::omp::gemv, false>)->Name("gemv/omp")->Arg(256)->Arg(2048);
BENCHMARK(bm_gemv<k::serial::gemv_t, true>)->Name("gemv_t/serial")->Arg(256)->Arg(2048);
BENCHMARK(bm_gemv<k::omp::gemv_t, true>)->Name("gemv_t/omp")->Arg(256)->Arg(2048);

int main(int argc, char** argv)
{
    k::apply_thread_env();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv))
        return 1;
    benchmark::AddCustomContext("threads", std::to_string(k::thread_count()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
