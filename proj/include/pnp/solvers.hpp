#pragma once

// PnP-ADMM, incremental PnP-ADMM (single block and minibatch), the DRS form
// of the same iteration, and the PnP-FISTA / PnP-SGD baselines.

#include "pnp/denoisers.hpp"
#include "pnp/fidelity.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace pnp {

enum class Algorithm
{
    PnpAdmm,
    Ipa,
    MinibatchIpa,
    PnpFista,
    PnpSgd,
};

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

struct IidUniform
{
};
struct EpochShuffle
{
};
struct FixedSchedule
{
    /// Entry k is the index list used at iteration k (each of length p).
    std::vector<std::vector<std::size_t>> steps;
};
using SelectionRule = std::variant<IidUniform, EpochShuffle, FixedSchedule>;

struct SolverConfig
{
    double gamma = 1.0;
    double sigma = 1.0;
    std::size_t minibatch_p = 1;
    std::size_t max_iters = 100;
    SelectionRule selection = EpochShuffle{};
    std::uint64_t seed = 0;
    /// <= 0 selects the fidelity's default inner tolerance.
    double prox_tol = 0.0;
    std::optional<double> step_size;
    /// Stop once ||x^k - z^k|| falls below this value.
    std::optional<double> residual_threshold;
};

void validate(const SolverConfig& cfg, std::size_t block_count);

struct SolverState
{
    Signal x, z, s, v;
    std::size_t k = 0;
};

/// x = x0, s = s0 (zero when omitted), z = x, v = x - s.
SolverState initial_state(std::size_t n, std::optional<Shape> shape, const Signal* x0 = nullptr,
                          const Signal* s0 = nullptr);
/// State matching a DRS start v0: x = D(v0), s = x - v0, z = x.
SolverState state_from_v(const Signal& v0, const Denoiser& d);

/// Deterministic block-index generator.
class Selector
{
public:
    Selector(SelectionRule rule, std::size_t b, std::size_t p, std::uint64_t seed);
    /// Next p indices. Throws ScheduleExhaustedError past the end of a fixed schedule.
    std::vector<std::size_t> next();

private:
    SelectionRule rule_;
    std::size_t b_, p_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> perm_;
    std::size_t pos_ = 0;
    std::size_t step_ = 0;
};

/// Stateless wrapper over a Selector, for single draws.
std::vector<std::size_t> select_block(Selector& selector);

/// z = G_indices(x + s); x = D(z - s); s = s + x - z; v = z - s_prev.
void ipa_step(SolverState& state, const FidelitySet& fs, const Denoiser& d, const SolverConfig& cfg,
              std::span<const std::size_t> indices, ProxWorkspace* ws = nullptr);
/// As ipa_step with the full prox.
void pnp_admm_step(SolverState& state, const FidelitySet& fs, const Denoiser& d, const SolverConfig& cfg,
                   ProxWorkspace* ws = nullptr);
/// x = D(v); z = G_indices(2x - v); v = v + z - x. Empty indices selects the full prox.
Signal drs_step(const Signal& v, const FidelitySet& fs, const Denoiser& d, const SolverConfig& cfg,
                std::span<const std::size_t> indices, ProxWorkspace* ws = nullptr);

struct IterateRecord
{
    std::size_t k = 0;
    /// ||S(v^k)||^2 / ||v^k||^2; NaN when analysis is off or for gradient baselines.
    double normalized_residual = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> snr_db;
    double elapsed_s = 0.0;
    std::uint64_t memory_bytes = 0;
    /// ||S(v^k)||^2
    double s_norm_sq = std::numeric_limits<double>::quiet_NaN();
    double v_norm_sq = std::numeric_limits<double>::quiet_NaN();
    /// Upper estimate of sum_{j<=k} ||S(v^j)||^2: exact at analysed iterations,
    /// (||S(v^a)|| + ||v^j - v^a||)^2 in between, a being the last analysed
    /// iteration. Valid because S is nonexpansive.
    double s_norm_sq_sum_upper = std::numeric_limits<double>::quiet_NaN();
    /// ||x^k - z^k||
    double xz_gap = 0.0;
    /// Cumulative number of single-block prox (or gradient) evaluations.
    std::uint64_t block_evals = 0;
};

enum class Termination
{
    MaxIters,
    ResidualBelow,
    Error,
};

const char* to_string(Termination t);

struct RunTrace
{
    std::vector<IterateRecord> records;
    SolverConfig config;
    Algorithm algorithm = Algorithm::Ipa;
    Termination terminated = Termination::MaxIters;
    std::string error;
    SolverState final_state;
};

struct Problem
{
    const FidelitySet* fidelity = nullptr;
    const Denoiser* denoiser = nullptr;
    const Signal* truth = nullptr;
};

using IterateCallback = std::function<void(std::size_t k, const SolverState& state, const IterateRecord& record)>;

struct RunOptions
{
    /// Evaluate ||S(v^k)|| at every recorded iteration (costs one full prox).
    bool analysis = false;
    /// Affine-fit SNR against the ground truth each iteration.
    bool snr = true;
    std::optional<SolverState> initial;
    IterateCallback callback;
    /// Bytes reported in every record (see memory_report).
    std::uint64_t memory_bytes = 0;
    /// Record the first, every k-th and the last iteration.
    std::size_t record_every = 1;
};

/// Runs `algorithm` for cfg.max_iters iterations or until early stopping.
/// Non-convergence of an inner solver ends the run with Termination::Error
/// and the records gathered so far.
RunTrace run(Algorithm algorithm, const Problem& problem, const SolverConfig& cfg, const RunOptions& options = {});

} // namespace pnp
