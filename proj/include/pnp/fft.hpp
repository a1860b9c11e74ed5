#pragma once

#include "pnp/signal.hpp"

#include <complex>
#include <span>
#include <vector>

namespace pnp::fft {

using Complex = std::complex<double>;

/// Unitary 2-D DFT (scaled by 1/sqrt(height*width)) in place, row-major.
void forward(Shape shape, std::span<Complex> data);
/// Inverse of `forward`; also unitary.
void inverse(Shape shape, std::span<Complex> data);

/// Index of the frequency -k for the row-major 2-D grid.
std::size_t mirror_index(Shape shape, std::size_t index);

/// Signed frequency of a DFT bin along an axis of length n, in cycles/sample.
double signed_frequency(std::size_t k, std::size_t n);

} // namespace pnp::fft
