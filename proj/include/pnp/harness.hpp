#pragma once

// Experiment front end: synthetic problems, configuration, image and trace
// I/O, and the multi-seed experiment driver.

#include "pnp/analysis.hpp"
#include "pnp/denoisers.hpp"
#include "pnp/fidelity.hpp"
#include "pnp/metrics.hpp"
#include "pnp/operators.hpp"
#include "pnp/solvers.hpp"

#include <json.hpp>

#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pnp {

enum class ProblemKind
{
    CsL1,
    TomoL2,
};

struct NoiseConfig
{
    /// In 8-bit intensity units; scaled by image_scale like the image.
    double awgn_std = 0.0;
    std::optional<double> sparse_ratio;
    std::optional<double> input_snr_db;
};

struct DenoiserConfig
{
    DenoiserKind kind = DenoiserKind::DctSoftThreshold;
    double epsilon = 0.5;
    int max_iters = 200;
    double dual_tol = 1e-8;
    /// Base kind for AveragedWrap.
    std::optional<DenoiserKind> base;
    std::optional<Box> box;
};

struct ExperimentConfig
{
    ProblemKind problem = ProblemKind::CsL1;
    /// "synthetic:<name or index>" or a path to a binary PGM.
    std::vector<std::string> images{"synthetic:0"};
    std::size_t size = 64;
    /// Total measurement rows (CS); defaults to round(measurement_ratio * n).
    std::optional<std::size_t> m;
    double measurement_ratio = 0.7;
    std::size_t b = 2;
    NoiseConfig noise;
    double image_scale = 1.0 / 255.0;
    std::optional<double> domain_radius;
    DenoiserConfig denoiser;
    Algorithm algorithm = Algorithm::Ipa;
    SolverConfig solver;
    /// Optional sweep; replaces solver.gamma run by run.
    std::vector<double> gammas;
    std::vector<std::uint64_t> seeds;
    /// Fixed operator/noise seed shared by all runs. When absent each seed
    /// draws its own problem.
    std::optional<std::uint64_t> problem_seed;
    bool analysis = true;
    std::size_t record_every = 1;
    std::filesystem::path outputs = "out";
};

ProblemKind problem_kind_from_string(const std::string& s);
const char* to_string(ProblemKind k);
DenoiserKind denoiser_kind_from_string(const std::string& s);

/// Throws ValidationError on inconsistent settings.
void validate(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

Denoiser make_denoiser(const DenoiserConfig& dc, double sigma);

struct GeneratedProblem
{
    std::shared_ptr<ForwardModel> model;
    std::shared_ptr<FidelitySet> fidelity;
    Signal truth;
    /// Stacked measurements y = A x + e over all blocks.
    std::vector<double> measurements;
    /// Stacked noise-free A x.
    std::vector<double> clean;
};

/// Ground truth for the image named by `image`, scaled by cfg.image_scale.
Signal load_image(const ExperimentConfig& cfg, const std::string& image);

GeneratedProblem generate_cs_problem(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const std::optional<Signal>& truth = std::nullopt);
GeneratedProblem generate_tomo_problem(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const std::optional<Signal>& truth = std::nullopt);
GeneratedProblem generate_problem(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const std::optional<Signal>& truth = std::nullopt);

// --- images -----------------------------------------------------------------

const std::vector<std::string>& synthetic_names();
/// Pattern by name or decimal index, values in [0, 255].
Signal synthetic_image(const std::string& id, std::size_t size);

/// Binary PGM (P5, maxval 255). Values are divided by `scale`, rounded and
/// clamped to [0, 255].
void write_pgm(const std::filesystem::path& path, const Signal& image, double scale = 1.0);
/// Pixel values in [0, 255] with the image shape.
Signal read_pgm(const std::filesystem::path& path);

// --- traces and reports -----------------------------------------------------

/// 17 significant digits; "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double v);

void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace);
/// k, s_norm_sq, v_norm_sq, s_norm_sq_sum_upper, xz_gap, block_evals
void write_residual_csv(const std::filesystem::path& path, const RunTrace& trace);

nlohmann::json to_json(const CertificationReport& r);
nlohmann::json to_json(const BoundReport& r);
nlohmann::json to_json(const MemoryReport& r);

struct RunSummary
{
    std::string image;
    std::uint64_t seed = 0;
    double gamma = 0.0;
    std::size_t iterations = 0;
    std::optional<double> final_snr_db;
    double plateau_residual = std::numeric_limits<double>::quiet_NaN();
    Termination terminated = Termination::MaxIters;
    std::string error;
    std::filesystem::path csv;
};

struct ExperimentResult
{
    std::vector<RunSummary> runs;
    nlohmann::json summary;
};

/// Mean normalized residual over the last fifth of the recorded iterations.
double plateau_residual(const RunTrace& trace);

/// Runs every (image, gamma, seed) combination, writing one CSV and one PGM
/// per run and a summary.json. Runs execute concurrently; per-run failures
/// are recorded and do not stop the others.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

} // namespace pnp
