#include "pnp/analysis.hpp"

#include "pnp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pnp {

void validate(const TheoryParams& tp)
{
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(tp.R) || !positive(tp.L) || !positive(tp.gamma))
        throw ValidationError("R, L and gamma must be positive and finite");
    if (tp.epsilon && !(*tp.epsilon > 0.0 && *tp.epsilon < 1.0))
        throw ValidationError("epsilon must lie in (0, 1)");
    if (tp.M && !positive(*tp.M))
        throw ValidationError("M must be positive and finite");
}

Signal apply_S(const FidelitySet& fs, const Denoiser& d, double gamma, const Signal& v, double tol, ProxWorkspace* ws)
{
    const Signal x = denoise(d, v);
    return x - prox_full(fs, gamma, linear_combination(2.0, x, -1.0, v), tol, ws);
}

Signal apply_S_i(const FidelitySet& fs, std::size_t i, const Denoiser& d, double gamma, const Signal& v, double tol,
                 ProxWorkspace* ws)
{
    if (i >= fs.block_count())
        throw ValidationError("block index out of range");
    const Signal x = denoise(d, v);
    return x - prox_block(fs.block(i), gamma, linear_combination(2.0, x, -1.0, v), tol, ws);
}

double normalized_residual(const FidelitySet& fs, const Denoiser& d, double gamma, const Signal& v, double tol)
{
    const double vv = v.squared_norm();
    if (!(vv > 0.0))
        throw UndefinedMetricError("normalized residual is undefined at v = 0");
    return apply_S(fs, d, gamma, v, tol).squared_norm() / vv;
}

double theorem2_bound(const TheoryParams& tp, std::size_t t)
{
    if (t < 1)
        throw ValidationError("t must be at least 1");
    const double r = tp.R + 2.0 * tp.gamma * tp.L;
    return r * r / static_cast<double>(t);
}

double theorem1_bound(const TheoryParams& tp, std::size_t t)
{
    const double c = 4.0 * tp.L * tp.R + 12.0 * tp.L * tp.L;
    return theorem2_bound(tp, t) + std::max(tp.gamma, tp.gamma * tp.gamma) * c;
}

EtaResult theorem3_eta(double epsilon, double gamma, double M)
{
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ValidationError("epsilon must lie in (0, 1)");
    if (!(gamma > 0.0) || !(M > 0.0))
        throw ValidationError("gamma and M must be positive");
    const double gm = gamma * M;
    EtaResult r;
    r.eta = (1.0 + epsilon + epsilon * gm + 2.0 * epsilon * epsilon * gm) / (1.0 + gm + 2.0 * epsilon * gm);
    r.condition = epsilon / (gm * (1.0 + epsilon - 2.0 * epsilon * epsilon));
    r.contraction = r.condition < 1.0;
    return r;
}

double theorem3_envelope(const TheoryParams& tp, double eta, std::size_t k)
{
    if (!(eta > 0.0 && eta < 1.0))
        throw ValidationError("eta must lie in (0, 1)");
    return std::pow(eta, static_cast<double>(k)) * (2.0 * tp.R + 4.0 * tp.gamma * tp.L) +
           4.0 * tp.gamma * tp.L / (1.0 - eta);
}

std::vector<double> running_mean(std::span<const double> values)
{
    std::vector<double> out(values.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < values.size(); ++t) {
        acc += values[t];
        out[t] = acc / static_cast<double>(t + 1);
    }
    return out;
}

std::vector<BoundReport> bound_reports(std::span<const double> s_norm_sq, const TheoryParams& tp, bool incremental)
{
    const auto means = running_mean(s_norm_sq);
    std::vector<BoundReport> out(means.size());
    for (std::size_t t = 1; t <= means.size(); ++t) {
        auto& r = out[t - 1];
        r.t = t;
        r.empirical_mean_residual = means[t - 1];
        r.theorem1_bound = incremental ? theorem1_bound(tp, t) : theorem2_bound(tp, t);
        r.slack = r.theorem1_bound - r.empirical_mean_residual;
    }
    return out;
}

std::vector<BoundReport> bound_reports(std::span<const std::size_t> t, std::span<const double> cumulative,
                                       const TheoryParams& tp, bool incremental)
{
    if (t.size() != cumulative.size())
        throw ShapeError("t and cumulative sums differ in length");
    std::vector<BoundReport> out(t.size());
    for (std::size_t j = 0; j < t.size(); ++j) {
        auto& r = out[j];
        r.t = t[j];
        r.empirical_mean_residual = cumulative[j] / static_cast<double>(t[j]);
        r.theorem1_bound = incremental ? theorem1_bound(tp, t[j]) : theorem2_bound(tp, t[j]);
        r.slack = r.theorem1_bound - r.empirical_mean_residual;
    }
    return out;
}

double lemma_iterate_radius(std::span<const Signal> v_trace, const Signal& v_star)
{
    double worst = 0.0;
    for (const auto& v : v_trace)
        worst = std::max(worst, distance(v, v_star));
    return worst;
}

FixedPointResiduals fixed_point_residuals(const Signal& x, const FidelitySet& fs, const Denoiser& d, double gamma,
                                          double tol)
{
    if (!(gamma > 0.0))
        throw ValidationError("gamma must be positive");
    FixedPointResiduals r;
    r.fidelity_crit = distance(x, prox_full(fs, gamma, x, tol)) / gamma;
    r.denoiser_fix = distance(x, denoise(d, x));
    return r;
}

Signal reference_fixed_point(const FidelitySet& fs, const Denoiser& d, double gamma, std::size_t horizon,
                             double prox_tol, const Signal* v0)
{
    SolverConfig cfg;
    cfg.gamma = gamma;
    cfg.sigma = d.sigma();
    cfg.prox_tol = prox_tol;
    SolverState st = v0 ? state_from_v(*v0, d) : initial_state(fs.signal_dim(), fs.model().shape());
    ProxWorkspace ws;
    for (std::size_t k = 0; k < horizon; ++k)
        pnp_admm_step(st, fs, d, cfg, &ws);
    // st.v is the DRS variable of the last step: x = D(v).
    return st.v;
}

MemoryReport memory_report(const ForwardModel& model, Algorithm algorithm, std::size_t p)
{
    const std::size_t b = model.block_count();
    std::size_t held = b;
    switch (algorithm) {
    case Algorithm::PnpAdmm:
    case Algorithm::PnpFista:
        held = b;
        break;
    case Algorithm::Ipa:
    case Algorithm::MinibatchIpa:
    case Algorithm::PnpSgd:
        if (p < 1 || p > b)
            throw ValidationError("minibatch size must lie in [1, b]");
        held = p;
        break;
    }
    const std::uint64_t n = model.signal_dim();
    const auto& recipe = model.recipe();
    MemoryReport r;
    for (std::size_t i = 0; i < held; ++i) {
        const bool conv = model.is_lazy() ? recipe.kind == ModelKind::Convolution : !model.block(i).is_dense();
        if (conv) {
            r.a_real += 16 * n;
            r.a_imag += 16 * n;
            r.y += 32 * n;
        } else {
            const std::uint64_t rows = model.block_rows(i);
            r.a_real += 8 * rows * n;
            r.y += 8 * rows;
        }
    }
    r.others = 128 * n;
    return r;
}

} // namespace pnp
