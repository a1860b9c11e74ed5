#include "pnp/solvers.hpp"

#include "pnp/errors.hpp"
#include "pnp/kernels.hpp"
#include "pnp/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace pnp {

const char* to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::PnpAdmm:
        return "pnp-admm";
    case Algorithm::Ipa:
        return "ipa";
    case Algorithm::MinibatchIpa:
        return "minibatch-ipa";
    case Algorithm::PnpFista:
        return "pnp-fista";
    case Algorithm::PnpSgd:
        return "pnp-sgd";
    }
    return "unknown";
}

Algorithm algorithm_from_string(const std::string& name)
{
    for (auto a : {Algorithm::PnpAdmm, Algorithm::Ipa, Algorithm::MinibatchIpa, Algorithm::PnpFista,
                   Algorithm::PnpSgd})
        if (name == to_string(a))
            return a;
    throw ValidationError("unknown algorithm '" + name + "'");
}

const char* to_string(Termination t)
{
    switch (t) {
    case Termination::MaxIters:
        return "max_iters";
    case Termination::ResidualBelow:
        return "residual_below";
    case Termination::Error:
        return "error";
    }
    return "unknown";
}

void validate(const SolverConfig& cfg, std::size_t block_count)
{
    if (!(cfg.gamma > 0.0) || !std::isfinite(cfg.gamma))
        throw ValidationError("gamma must be positive and finite");
    if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma))
        throw ValidationError("sigma must be positive and finite");
    if (cfg.minibatch_p < 1 || cfg.minibatch_p > block_count)
        throw ValidationError("minibatch size must lie in [1, b]");
    if (cfg.step_size && !(*cfg.step_size > 0.0))
        throw ValidationError("step size must be positive");
    if (const auto* fixed = std::get_if<FixedSchedule>(&cfg.selection))
        for (const auto& step : fixed->steps) {
            if (step.empty())
                throw ValidationError("fixed schedule entries must be nonempty");
            for (auto i : step)
                if (i >= block_count)
                    throw ValidationError("fixed schedule index out of range");
        }
}

SolverState initial_state(std::size_t n, std::optional<Shape> shape, const Signal* x0, const Signal* s0)
{
    SolverState st;
    st.x = x0 ? *x0 : Signal(n);
    st.s = s0 ? *s0 : Signal(n);
    require_size(st.x.size(), n, "initial x");
    require_size(st.s.size(), n, "initial s");
    st.x.set_shape(shape);
    st.s.set_shape(shape);
    st.z = st.x;
    st.v = st.x - st.s;
    return st;
}

SolverState state_from_v(const Signal& v0, const Denoiser& d)
{
    SolverState st;
    st.x = denoise(d, v0);
    st.s = st.x - v0;
    st.z = st.x;
    st.v = v0;
    return st;
}

// --- selection --------------------------------------------------------------

Selector::Selector(SelectionRule rule, std::size_t b, std::size_t p, std::uint64_t seed)
    : rule_(std::move(rule)), b_(b), p_(p), rng_(seed)
{
    if (b_ < 1)
        throw ValidationError("selector needs b >= 1");
    if (p_ < 1)
        throw ValidationError("selector needs p >= 1");
    perm_.resize(b_);
    pos_ = b_;
}

std::vector<std::size_t> Selector::next()
{
    std::vector<std::size_t> out;
    if (const auto* fixed = std::get_if<FixedSchedule>(&rule_)) {
        if (step_ >= fixed->steps.size())
            throw ScheduleExhaustedError("fixed schedule exhausted at step " + std::to_string(step_));
        return fixed->steps[step_++];
    }
    out.reserve(p_);
    if (std::holds_alternative<IidUniform>(rule_)) {
        std::uniform_int_distribution<std::size_t> dist(0, b_ - 1);
        for (std::size_t j = 0; j < p_; ++j)
            out.push_back(dist(rng_));
    } else {
        for (std::size_t j = 0; j < p_; ++j) {
            if (pos_ == b_) {
                std::iota(perm_.begin(), perm_.end(), std::size_t{0});
                std::shuffle(perm_.begin(), perm_.end(), rng_);
                pos_ = 0;
            }
            out.push_back(perm_[pos_++]);
        }
    }
    ++step_;
    return out;
}

std::vector<std::size_t> select_block(Selector& selector) { return selector.next(); }

// --- steps ------------------------------------------------------------------

namespace {

void finish_step(SolverState& st, Signal z, const Denoiser& d)
{
    Signal v = z - st.s;
    Signal x = denoise(d, v);
    for (std::size_t i = 0; i < x.size(); ++i)
        st.s[i] += x[i] - z[i];
    st.x = std::move(x);
    st.z = std::move(z);
    st.v = std::move(v);
    ++st.k;
}

} // namespace

void ipa_step(SolverState& state, const FidelitySet& fs, const Denoiser& d, const SolverConfig& cfg,
              std::span<const std::size_t> indices, ProxWorkspace* ws)
{
    require_size(state.x.size(), fs.signal_dim(), "ipa_step state");
    Signal z = minibatch_prox(fs, cfg.gamma, state.x + state.s, indices, cfg.prox_tol, ws);
    finish_step(state, std::move(z), d);
}

void pnp_admm_step(SolverState& state, const FidelitySet& fs, const Denoiser& d, const SolverConfig& cfg,
                   ProxWorkspace* ws)
{
    require_size(state.x.size(), fs.signal_dim(), "pnp_admm_step state");
    Signal z = prox_full(fs, cfg.gamma, state.x + state.s, cfg.prox_tol, ws);
    finish_step(state, std::move(z), d);
}

Signal drs_step(const Signal& v, const FidelitySet& fs, const Denoiser& d, const SolverConfig& cfg,
                std::span<const std::size_t> indices, ProxWorkspace* ws)
{
    require_size(v.size(), fs.signal_dim(), "drs_step");
    const Signal x = denoise(d, v);
    const Signal reflected = linear_combination(2.0, x, -1.0, v);
    const Signal z = indices.empty() ? prox_full(fs, cfg.gamma, reflected, cfg.prox_tol, ws)
                                     : minibatch_prox(fs, cfg.gamma, reflected, indices, cfg.prox_tol, ws);
    Signal out = v;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += z[i] - x[i];
    return out;
}

// --- run --------------------------------------------------------------------

namespace {

Signal averaged_gradient(const FidelitySet& fs, const Signal& x, std::span<const std::size_t> indices)
{
    Signal g = x.zeros_like();
    for (auto i : indices)
        g += block_gradient(fs.block(i), x);
    g *= 1.0 / static_cast<double>(indices.size());
    return g;
}

double default_step(const FidelitySet& fs)
{
    double worst = 0.0;
    for (const auto& fb : fs.blocks())
        worst = std::max(worst, fb.cache->norm);
    return 1.0 / (worst * worst);
}

} // namespace

RunTrace run(Algorithm algorithm, const Problem& problem, const SolverConfig& cfg, const RunOptions& options)
{
    if (!problem.fidelity || !problem.denoiser)
        throw ValidationError("problem needs a fidelity set and a denoiser");
    const FidelitySet& fs = *problem.fidelity;
    const Denoiser& d = *problem.denoiser;
    const std::size_t b = fs.block_count();
    validate(cfg, b);
    const bool gradient_based = algorithm == Algorithm::PnpFista || algorithm == Algorithm::PnpSgd;
    if (gradient_based && fs.loss() != Loss::L2Square)
        throw UnsupportedCombinationError(std::string(to_string(algorithm)) +
                                          " needs a smooth fidelity; the l1 loss is nonsmooth");
    if (problem.truth)
        require_size(problem.truth->size(), fs.signal_dim(), "ground truth");

    RunTrace trace;
    trace.config = cfg;
    trace.algorithm = algorithm;
    SolverState st = options.initial ? *options.initial : initial_state(fs.signal_dim(), fs.model().shape());
    require_size(st.x.size(), fs.signal_dim(), "initial state");

    const std::size_t p = algorithm == Algorithm::Ipa ? 1 : cfg.minibatch_p;
    Selector selector(cfg.selection, b, p, cfg.seed);
    ProxWorkspace ws, analysis_ws;
    const double step = cfg.step_size.value_or(gradient_based ? default_step(fs) : 0.0);
    Signal fista_q = st.x;
    double fista_t = 1.0;
    std::uint64_t evals = 0;
    double solver_seconds = 0.0;
    const std::size_t every = std::max<std::size_t>(1, options.record_every);
    const bool analysis = options.analysis && !gradient_based;
    Signal v_analysed;
    double s_norm_analysed = 0.0;
    double s_sum_upper = 0.0;
    trace.records.reserve(cfg.max_iters / every + 1);

    for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (algorithm) {
            case Algorithm::PnpAdmm:
                pnp_admm_step(st, fs, d, cfg, &ws);
                evals += b;
                break;
            case Algorithm::Ipa:
            case Algorithm::MinibatchIpa: {
                const auto idx = selector.next();
                ipa_step(st, fs, d, cfg, idx, &ws);
                evals += idx.size();
                break;
            }
            case Algorithm::PnpSgd: {
                const auto idx = selector.next();
                Signal z = st.x - step * averaged_gradient(fs, st.x, idx);
                st.x = denoise(d, z);
                st.v = z;
                st.z = std::move(z);
                ++st.k;
                evals += idx.size();
                break;
            }
            case Algorithm::PnpFista: {
                std::vector<std::size_t> all(b);
                std::iota(all.begin(), all.end(), std::size_t{0});
                Signal z = fista_q - step * averaged_gradient(fs, fista_q, all);
                Signal x = denoise(d, z);
                const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * fista_t * fista_t));
                fista_q = linear_combination(1.0 + (fista_t - 1.0) / t_next, x, -(fista_t - 1.0) / t_next, st.x);
                fista_t = t_next;
                st.x = std::move(x);
                st.v = z;
                st.z = std::move(z);
                ++st.k;
                evals += b;
                break;
            }
            }
        } catch (const NonConvergenceError& e) {
            trace.terminated = Termination::Error;
            trace.error = e.what();
            break;
        } catch (const ScheduleExhaustedError& e) {
            trace.terminated = Termination::Error;
            trace.error = e.what();
            break;
        }
        solver_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const double xz = distance(st.x, st.z);
        const bool stop = cfg.residual_threshold && xz < *cfg.residual_threshold;
        if (k != 1 && k % every != 0 && k != cfg.max_iters && !stop) {
            if (analysis) {
                const double bound = s_norm_analysed + distance(st.v, v_analysed);
                s_sum_upper += bound * bound;
            }
            continue;
        }

        IterateRecord rec;
        rec.k = k;
        rec.elapsed_s = solver_seconds;
        rec.memory_bytes = options.memory_bytes;
        rec.xz_gap = xz;
        rec.block_evals = evals;
        if (analysis) {
            // x^k = D(v^k), so S(v^k) = x^k - G(2 x^k - v^k).
            try {
                const Signal g = prox_full(fs, cfg.gamma, linear_combination(2.0, st.x, -1.0, st.v), cfg.prox_tol,
                                           &analysis_ws);
                rec.s_norm_sq = (st.x - g).squared_norm();
                rec.v_norm_sq = st.v.squared_norm();
                s_norm_analysed = std::sqrt(rec.s_norm_sq);
                v_analysed = st.v;
                s_sum_upper += rec.s_norm_sq;
                rec.s_norm_sq_sum_upper = s_sum_upper;
                if (rec.v_norm_sq > 0.0)
                    rec.normalized_residual = rec.s_norm_sq / rec.v_norm_sq;
            } catch (const NonConvergenceError& e) {
                trace.terminated = Termination::Error;
                trace.error = e.what();
                break;
            }
        }
        if (options.snr && problem.truth)
            rec.snr_db = snr_affine(st.x, *problem.truth);
        trace.records.push_back(rec);
        if (options.callback)
            options.callback(k, st, rec);
        if (stop) {
            trace.terminated = Termination::ResidualBelow;
            break;
        }
    }
    trace.final_state = std::move(st);
    return trace;
}

} // namespace pnp
