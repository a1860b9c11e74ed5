#pragma once

// Denoisers D_sigma with declared structure, their residuals R = I - D, and
// sampling-based certification of firm nonexpansiveness.

#include "pnp/signal.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pnp {

enum class DenoiserKind
{
    TvChambolle,
    DctSoftThreshold,
    ScaledSmoothing,
    AveragedWrap,
};

enum class StructuralClass
{
    FirmlyNonexpansive,
    ContractiveResidual, ///< firmly nonexpansive and R = I - D is an epsilon-contraction
    Unverified,
};

const char* to_string(DenoiserKind kind);
const char* to_string(StructuralClass cls);

struct Box
{
    double lo = 0.0;
    double hi = 1.0;
};

class Denoiser
{
public:
    /// prox of sigma^2 * TV (isotropic, Neumann boundary). Stops once the
    /// primal-dual gap falls below dual_tol * max(1, ||v||^2 / 2).
    static Denoiser tv(double sigma, int max_iters = 200, double dual_tol = 1e-8);
    /// Orthonormal 2-D DCT, soft-threshold at sigma, inverse DCT. The DC
    /// coefficient is never shrunk.
    static Denoiser dct(double sigma);
    /// D = I - epsilon * H with H = I - K and K the separable circular
    /// [1/4 1/2 1/4] smoother, so that the eigenvalues of H lie in [0, 1].
    static Denoiser scaled_smoothing(double sigma, double epsilon);
    /// D = (I + N) / 2 for a nonexpansive base N.
    static Denoiser averaged(Denoiser base);

    DenoiserKind kind() const { return kind_; }
    double sigma() const { return sigma_; }
    int max_iters() const { return max_iters_; }
    double dual_tol() const { return dual_tol_; }
    double epsilon() const { return epsilon_; }
    const Denoiser* base() const { return base_.get(); }
    const std::optional<Box>& box() const { return box_; }
    StructuralClass declared_class() const;
    std::string label() const;

    /// Optional projection onto [lo, hi] applied after denoising.
    Denoiser with_box(Box box) const;
    /// Same denoiser with a different sigma (bases are rescaled too).
    Denoiser with_sigma(double sigma) const;

private:
    Denoiser() = default;

    DenoiserKind kind_ = DenoiserKind::DctSoftThreshold;
    double sigma_ = 1.0;
    int max_iters_ = 200;
    double dual_tol_ = 1e-8;
    double epsilon_ = 0.0;
    std::shared_ptr<const Denoiser> base_;
    std::optional<Box> box_;
};

/// Signals without a shape are treated as a single row.
Signal denoise(const Denoiser& d, const Signal& v);
/// v - denoise(d, v)
Signal residual(const Denoiser& d, const Signal& v);

/// Statistics from a TV solve, for diagnostics and tests.
struct TvSolveInfo
{
    int iterations = 0;
    double gap = 0.0;
};
Signal tv_denoise(const Signal& v, double tau, int max_iters, double tol, TvSolveInfo* info = nullptr);

/// Orthonormal 2-D DCT-II and its inverse.
std::vector<double> dct2(Shape shape, std::span<const double> x);
std::vector<double> idct2(Shape shape, std::span<const double> c);

using Operator = std::function<Signal(const Signal&)>;

struct CertificationReport
{
    std::string op_label;
    std::size_t sampled_pairs = 0;
    double max_cocoercivity_violation = 0.0;
    double max_lipschitz_ratio = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct SamplingOptions
{
    std::optional<Shape> shape;
    /// Inputs are drawn from [lo, hi]^n, from N((lo+hi)/2, ((hi-lo)/4)^2), and
    /// from the supplied patches plus Gaussian noise, in rotation.
    double lo = 0.0;
    double hi = 1.0;
    std::vector<Signal> patches;
    std::string label = "op";
};

/// Falsification test for <Tu - Tv, u - v> >= ||Tu - Tv||^2. The violation
/// is normalized by ||u - v||^2. Pairs are drawn with per-pair seeds and may
/// be evaluated concurrently; `op` must be safe to call from several threads.
CertificationReport certify_firm_nonexpansive(const Operator& op, std::size_t n, std::size_t samples,
                                              std::uint64_t seed, double tolerance,
                                              const SamplingOptions& options = {});

/// Largest sampled ||op(u) - op(v)|| / ||u - v||.
double certify_contraction(const Operator& op, std::size_t n, std::size_t samples, std::uint64_t seed,
                           const SamplingOptions& options = {});

} // namespace pnp
