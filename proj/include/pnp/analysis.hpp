#pragma once

// Fixed-point operators S and S_i, residual diagnostics, convergence-bound
// evaluators and memory accounting.
//
//   S   = D - G (2D - I),      G   = prox_{gamma g}
//   S_i = D - G_i (2D - I),    G_i = prox_{gamma g_i}

#include "pnp/denoisers.hpp"
#include "pnp/fidelity.hpp"
#include "pnp/solvers.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace pnp {

struct TheoryParams
{
    double R = 1.0;
    double L = 1.0;
    double gamma = 1.0;
    std::optional<double> epsilon;
    std::optional<double> M;
};

void validate(const TheoryParams& tp);

Signal apply_S(const FidelitySet& fs, const Denoiser& d, double gamma, const Signal& v, double tol = 0.0,
               ProxWorkspace* ws = nullptr);
Signal apply_S_i(const FidelitySet& fs, std::size_t i, const Denoiser& d, double gamma, const Signal& v,
                 double tol = 0.0, ProxWorkspace* ws = nullptr);

/// ||S(v)||^2 / ||v||^2; throws UndefinedMetricError for v = 0.
double normalized_residual(const FidelitySet& fs, const Denoiser& d, double gamma, const Signal& v, double tol = 0.0);

/// (R + 2 gamma L)^2 / t + max(gamma, gamma^2) (4 L R + 12 L^2)
double theorem1_bound(const TheoryParams& tp, std::size_t t);
/// (R + 2 gamma L)^2 / t
double theorem2_bound(const TheoryParams& tp, std::size_t t);

struct EtaResult
{
    double eta = 0.0;
    /// epsilon / (gamma M (1 + epsilon - 2 epsilon^2)); contraction requires < 1.
    double condition = 0.0;
    bool contraction = false;
};

EtaResult theorem3_eta(double epsilon, double gamma, double M);
/// eta^k (2R + 4 gamma L) + 4 gamma L / (1 - eta)
double theorem3_envelope(const TheoryParams& tp, double eta, std::size_t k);

struct BoundReport
{
    std::size_t t = 0;
    double empirical_mean_residual = 0.0;
    double theorem1_bound = 0.0;
    double slack = 0.0;
};

/// Running means (1/t) sum_{k<=t} values[k-1].
std::vector<double> running_mean(std::span<const double> values);

/// One report per t, comparing running means of ||S(v^k)||^2 against `bound(t)`.
std::vector<BoundReport> bound_reports(std::span<const double> s_norm_sq, const TheoryParams& tp, bool incremental);
/// As bound_reports from cumulative sums: cumulative[j] = sum_{k<=t[j]} ||S(v^k)||^2.
std::vector<BoundReport> bound_reports(std::span<const std::size_t> t, std::span<const double> cumulative,
                                       const TheoryParams& tp, bool incremental);

/// max_k ||v^k - v*||
double lemma_iterate_radius(std::span<const Signal> v_trace, const Signal& v_star);

struct FixedPointResiduals
{
    /// ||x - G(x)|| / gamma
    double fidelity_crit = 0.0;
    /// ||x - D(x)||
    double denoiser_fix = 0.0;
};

FixedPointResiduals fixed_point_residuals(const Signal& x, const FidelitySet& fs, const Denoiser& d, double gamma,
                                          double tol = 0.0);

/// Approximate zero of S from a long PnP-ADMM run (horizon iterations) at
/// tight prox tolerance. Returns the final v.
Signal reference_fixed_point(const FidelitySet& fs, const Denoiser& d, double gamma, std::size_t horizon,
                             double prox_tol = 1e-12, const Signal* v0 = nullptr);

struct MemoryReport
{
    std::uint64_t a_real = 0;
    std::uint64_t a_imag = 0;
    std::uint64_t y = 0;
    std::uint64_t others = 0;
    std::uint64_t total() const { return a_real + a_imag + y + others; }
};

/// Per-variable-group storage. Batch algorithms hold all b blocks, the
/// incremental ones hold p. Convolution blocks count 16 bytes per pixel for
/// each of the real and imaginary operator parts and 32 bytes per pixel of
/// measurements; dense blocks count 8 bytes per matrix entry and per
/// measurement. The per-image state ("others") is 128 bytes per pixel.
MemoryReport memory_report(const ForwardModel& model, Algorithm algorithm, std::size_t p = 1);

inline double to_gib(std::uint64_t bytes) { return static_cast<double>(bytes) / (1024.0 * 1024.0 * 1024.0); }

} // namespace pnp
