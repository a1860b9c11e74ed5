#include "pnp/fft.hpp"

#include "pnp/errors.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <utility>

namespace pnp::fft {

namespace {

// FFTW's planner is not thread-safe but executing a plan on new arrays is.
// Plans are created once per (shape, direction) and kept for the process
// lifetime.
class PlanCache
{
public:
    fftw_plan get(Shape shape, int sign)
    {
        std::lock_guard lock(mutex_);
        const auto key = std::make_tuple(shape.height, shape.width, sign);
        if (auto it = plans_.find(key); it != plans_.end())
            return it->second;
        std::vector<Complex> scratch(shape.size());
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(shape.height), static_cast<int>(shape.width), buf, buf,
                                          sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& cache()
{
    static PlanCache instance;
    return instance;
}

void run(Shape shape, std::span<Complex> data, int sign)
{
    if (data.size() != shape.size() || shape.size() == 0)
        throw ShapeError("fft: buffer length does not match shape");
    fftw_plan plan = cache().get(shape, sign);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, buf, buf);
    const double norm = 1.0 / std::sqrt(static_cast<double>(shape.size()));
    for (auto& v : data)
        v *= norm;
}

} // namespace

void forward(Shape shape, std::span<Complex> data) { run(shape, data, FFTW_FORWARD); }

void inverse(Shape shape, std::span<Complex> data) { run(shape, data, FFTW_BACKWARD); }

std::size_t mirror_index(Shape shape, std::size_t index)
{
    const std::size_t r = index / shape.width;
    const std::size_t c = index % shape.width;
    const std::size_t mr = (shape.height - r) % shape.height;
    const std::size_t mc = (shape.width - c) % shape.width;
    return mr * shape.width + mc;
}

double signed_frequency(std::size_t k, std::size_t n)
{
    const auto kk = static_cast<double>(k);
    const auto nn = static_cast<double>(n);
    return (2 * k < n) ? kk / nn : (kk - nn) / nn;
}

} // namespace pnp::fft
