#pragma once

#include "pnp/signal.hpp"

namespace pnp {

/// max over scalars a, b of 20 log10(||x|| / ||x - a*xhat + b*1||), solved as
/// a two-variable least-squares problem. Returns +infinity when the affine fit
/// is exact to rounding.
double snr_affine(const Signal& estimate, const Signal& truth);

/// Plain 20 log10(||x|| / ||x - xhat||).
double snr_plain(const Signal& estimate, const Signal& truth);

} // namespace pnp
