#include "pnp/metrics.hpp"

#include "pnp/errors.hpp"

#include <cmath>
#include <limits>

namespace pnp {

namespace {

// Residual norms below this fraction of ||x|| count as exact recovery.
constexpr double kExactFit = 1e-13;

} // namespace

double snr_affine(const Signal& estimate, const Signal& truth)
{
    require_size(estimate.size(), truth.size(), "snr_affine");
    const double xnorm = truth.norm();
    if (!(xnorm > 0.0))
        throw ValidationError("snr_affine: truth must be nonzero");
    const std::size_t n = truth.size();
    double mx = 0.0, me = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += truth[i];
        me += estimate[i];
    }
    mx /= static_cast<double>(n);
    me /= static_cast<double>(n);
    double cross = 0.0, ee = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xc = truth[i] - mx;
        const double ec = estimate[i] - me;
        cross += xc * ec;
        ee += ec * ec;
    }
    const double a = ee > 0.0 ? cross / ee : 0.0;
    double rr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = (truth[i] - mx) - a * (estimate[i] - me);
        rr += r * r;
    }
    const double rnorm = std::sqrt(rr);
    if (rnorm <= kExactFit * xnorm)
        return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(xnorm / rnorm);
}

double snr_plain(const Signal& estimate, const Signal& truth)
{
    require_size(estimate.size(), truth.size(), "snr_plain");
    const double err = distance(estimate, truth);
    if (err == 0.0)
        return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(truth.norm() / err);
}

} // namespace pnp
