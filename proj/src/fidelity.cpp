#include "pnp/fidelity.hpp"

#include "pnp/errors.hpp"
#include "pnp/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace pnp {

const char* to_string(Loss loss) { return loss == Loss::L1 ? "l1" : "l2"; }

double default_tolerance(Loss loss) { return loss == Loss::L1 ? kDefaultGapTolerance : kDefaultCgTolerance; }

double default_domain_radius(std::size_t n, double intensity_scale)
{
    return 255.0 * intensity_scale * std::sqrt(static_cast<double>(n));
}

namespace {

// Gram matrices are only formed for stacked dense operators up to this many
// rows; beyond it the inner solver applies A and A^T directly.
constexpr std::size_t kMaxGramRows = 4096;
constexpr int kNormIterations = 500;
// Power iteration approaches lambda_max from below; pad the estimate so the
// dual gradient step stays below 1/lambda_max.
constexpr double kStepSafety = 1.05;

double resolve_tol(Loss loss, double tol) { return tol > 0.0 ? tol : default_tolerance(loss); }

void check_gamma(double gamma)
{
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw ValidationError("gamma must be positive and finite");
}

// A set of blocks whose weighted sum w * sum_i g_i is being proxed.
struct Group
{
    std::vector<const FidelityBlock*> members;
    double weight = 1.0;
    detail::GramCache* gram = nullptr;
    std::string key;
    Loss loss = Loss::L2Square;
    std::size_t n = 0;

    std::size_t rows() const
    {
        std::size_t m = 0;
        for (const auto* fb : members)
            m += fb->block->output_dim();
        return m;
    }

    bool all_dense() const
    {
        return std::all_of(members.begin(), members.end(), [](const auto* fb) { return fb->block->is_dense(); });
    }

    bool all_conv() const
    {
        return std::none_of(members.begin(), members.end(), [](const auto* fb) { return fb->block->is_dense(); });
    }

    std::vector<double> apply(std::span<const double> x) const
    {
        std::vector<double> out;
        out.reserve(rows());
        for (const auto* fb : members) {
            auto part = fb->block->apply(x);
            out.insert(out.end(), part.begin(), part.end());
        }
        return out;
    }

    std::vector<double> adjoint(std::span<const double> u) const
    {
        std::vector<double> out(n, 0.0);
        std::size_t offset = 0;
        for (const auto* fb : members) {
            const std::size_t mi = fb->block->output_dim();
            auto part = fb->block->adjoint(u.subspan(offset, mi));
            kernels::axpy(1.0, part, out);
            offset += mi;
        }
        return out;
    }

    std::vector<double> measurements() const
    {
        std::vector<double> y;
        y.reserve(rows());
        for (const auto* fb : members) {
            if (!fb->block->has_measurements())
                throw ValidationError("fidelity block " + std::to_string(fb->index) + " has no measurements");
            y.insert(y.end(), fb->block->y().begin(), fb->block->y().end());
        }
        return y;
    }
};

Group single_group(const FidelityBlock& fb)
{
    Group g;
    g.members = {&fb};
    g.weight = 1.0;
    g.gram = &fb.cache->gram;
    g.key = std::to_string(fb.index);
    g.loss = fb.loss;
    g.n = fb.block->input_dim();
    return g;
}

Group full_group(const FidelitySet& fs)
{
    if (fs.block_count() == 1)
        return single_group(fs.block(0));
    Group g;
    for (const auto& fb : fs.blocks())
        g.members.push_back(&fb);
    g.weight = 1.0 / static_cast<double>(fs.block_count());
    g.gram = &fs.full_gram();
    g.key = "full";
    g.loss = fs.loss();
    g.n = fs.signal_dim();
    return g;
}

double power_lambda_max(const std::vector<double>& gram, std::size_t m)
{
    std::vector<double> v(m), w(m);
    for (std::size_t i = 0; i < m; ++i)
        v[i] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
    kernels::scale(1.0 / kernels::norm(v), v);
    const kernels::MatrixView view{gram.data(), m, m};
    double estimate = 0.0;
    for (int it = 0; it < kNormIterations; ++it) {
        kernels::gemv(view, v, w);
        const double rq = kernels::dot(v, w);
        const double previous = estimate;
        estimate = std::max(estimate, rq);
        const double wn = kernels::norm(w);
        if (wn == 0.0)
            break;
        for (std::size_t i = 0; i < m; ++i)
            v[i] = w[i] / wn;
        if (it > 0 && std::abs(estimate - previous) <= 1e-10 * estimate)
            break;
    }
    return estimate;
}

void ensure_gram(const Group& g)
{
    if (!g.gram)
        return;
    std::call_once(g.gram->once, [&] {
        const std::size_t m = g.rows();
        if (!g.all_dense() || m > kMaxGramRows)
            return;
        Eigen::MatrixXd stacked(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(g.n));
        Eigen::Index row = 0;
        for (const auto* fb : g.members) {
            const auto& d = *fb->block->dense_op();
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(
                d.values.data(), static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
            stacked.middleRows(row, static_cast<Eigen::Index>(d.rows)) = a;
            row += static_cast<Eigen::Index>(d.rows);
        }
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        gram.selfadjointView<Eigen::Lower>().rankUpdate(stacked);
        gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
        g.gram->gram.resize(m * m);
        // Symmetric, so column-major storage doubles as row-major.
        std::copy(gram.data(), gram.data() + m * m, g.gram->gram.begin());
        g.gram->lipschitz = kStepSafety * power_lambda_max(g.gram->gram, m);
        g.gram->available = true;
    });
}

// Upper estimate of lambda_max(A_S A_S^T) when no Gram matrix is available.
double group_lipschitz(const Group& g)
{
    if (g.all_conv()) {
        std::vector<double> total(g.n, 0.0);
        for (const auto* fb : g.members) {
            const auto& sym = fb->block->conv_op()->normal_symbol;
            for (std::size_t k = 0; k < g.n; ++k)
                total[k] += sym[k];
        }
        return (1.0 + 1e-12) * *std::max_element(total.begin(), total.end());
    }
    double sum = 0.0;
    for (const auto* fb : g.members)
        sum += fb->cache->norm * fb->cache->norm;
    return kStepSafety * sum;
}

// --- L2Square ---------------------------------------------------------------

std::vector<double> l2_rhs(const Group& g, double gamma, const Signal& z)
{
    std::vector<double> rhs(z.begin(), z.end());
    const double scale = gamma * g.weight;
    for (const auto* fb : g.members) {
        if (!fb->block->has_measurements())
            throw ValidationError("fidelity block " + std::to_string(fb->index) + " has no measurements");
        kernels::axpy(scale, fb->cache->aty, rhs);
    }
    return rhs;
}

std::vector<double> l2_fourier(const Group& g, double gamma, std::vector<double> rhs)
{
    const Shape shape = g.members.front()->block->conv_op()->shape;
    std::vector<double> denom(g.n, 1.0);
    const double scale = gamma * g.weight;
    for (const auto* fb : g.members) {
        const auto& sym = fb->block->conv_op()->normal_symbol;
        for (std::size_t k = 0; k < g.n; ++k)
            denom[k] += scale * sym[k];
    }
    std::vector<std::complex<double>> buf(rhs.begin(), rhs.end());
    fft::forward(shape, buf);
    for (std::size_t k = 0; k < g.n; ++k)
        buf[k] /= denom[k];
    fft::inverse(shape, buf);
    for (std::size_t k = 0; k < g.n; ++k)
        rhs[k] = buf[k].real();
    return rhs;
}

std::vector<double> l2_cg(const Group& g, double gamma, const Signal& z, std::vector<double> rhs, double tol)
{
    const double scale = gamma * g.weight;
    auto apply_system = [&](std::span<const double> p) {
        std::vector<double> out(p.begin(), p.end());
        for (const auto* fb : g.members) {
            auto part = fb->block->normal(p);
            kernels::axpy(scale, part, out);
        }
        return out;
    };

    std::vector<double> x(z.begin(), z.end());
    std::vector<double> r = rhs;
    {
        auto mx = apply_system(x);
        kernels::axpy(-1.0, mx, r);
    }
    const double threshold = tol * std::max(1.0, kernels::norm(rhs));
    std::vector<double> p = r;
    double rs = kernels::squared_norm(r);
    int it = 0;
    while (std::sqrt(rs) > threshold) {
        if (it++ >= kMaxInnerIterations)
            throw NonConvergenceError("conjugate gradient did not reach tolerance", x, std::sqrt(rs));
        auto ap = apply_system(p);
        const double curvature = kernels::dot(p, ap);
        if (!(curvature > 0.0))
            break;
        const double alpha = rs / curvature;
        kernels::axpy(alpha, p, x);
        kernels::axpy(-alpha, ap, r);
        const double rs_new = kernels::squared_norm(r);
        kernels::axpby(1.0, r, rs_new / rs, p);
        rs = rs_new;
    }
    return x;
}

std::vector<double> prox_l2(const Group& g, double gamma, const Signal& z, double tol)
{
    auto rhs = l2_rhs(g, gamma, z);
    if (g.all_conv())
        return l2_fourier(g, gamma, std::move(rhs));
    if (g.members.size() == 1) {
        const auto& d = *g.members.front()->block->dense_op();
        const double scale = gamma * g.weight;
        if (d.structure == DenseStructure::Orthogonal) {
            kernels::scale(1.0 / (1.0 + scale), rhs);
            return rhs;
        }
        if (d.structure == DenseStructure::Diagonal) {
            for (std::size_t j = 0; j < d.cols; ++j) {
                const double a = d.at(j, j);
                rhs[j] /= 1.0 + scale * a * a;
            }
            return rhs;
        }
    }
    return l2_cg(g, gamma, z, std::move(rhs), tol);
}

// --- L1 ---------------------------------------------------------------------

double soft(double v, double t) { return std::copysign(std::max(std::abs(v) - t, 0.0), v); }

std::vector<double> prox_l1_closed_form(const DenseReal& d, const std::vector<double>& y, double rho,
                                        const Signal& z)
{
    const std::size_t n = d.cols;
    std::vector<double> x(n);
    if (d.structure == DenseStructure::Diagonal) {
        for (std::size_t j = 0; j < n; ++j) {
            const double a = d.at(j, j);
            if (a == 0.0) {
                x[j] = z[j];
                continue;
            }
            const double target = y[j] / a;
            x[j] = target + soft(z[j] - target, rho * std::abs(a));
        }
        return x;
    }
    // Orthogonal: substitute w = A x, then x = A^T w.
    std::vector<double> az(n);
    kernels::gemv(d.view(), z.span(), az);
    for (std::size_t i = 0; i < n; ++i)
        az[i] = y[i] + soft(az[i] - y[i], rho);
    kernels::gemv_t(d.view(), az, x);
    return x;
}

// Accelerated projected gradient on the dual of
//   min_x 1/2 ||x - z||^2 + rho ||y - A x||_1,
// i.e. max_{|u|_inf <= rho} <u, A z - y> - 1/2 ||A^T u||^2 with x = z - A^T u.
// The duality gap
//   u^T G u - <u, c> + rho ||G u - c||_1,  G = A A^T, c = A z - y
// bounds 1/2 ||x - x*||^2 and is the stopping criterion.
std::vector<double> prox_l1_dual(const Group& g, double gamma, const Signal& z, double tol, ProxWorkspace* ws)
{
    ensure_gram(g);
    const bool use_gram = g.gram && g.gram->available;
    const std::size_t m = g.rows();
    const double rho = gamma * g.weight;
    const double lip = use_gram ? g.gram->lipschitz : group_lipschitz(g);

    auto gram_apply = [&](std::span<const double> u) {
        if (use_gram) {
            std::vector<double> out(m);
            const auto mi = static_cast<Eigen::Index>(m);
            Eigen::Map<Eigen::VectorXd>(out.data(), mi).noalias() =
                Eigen::Map<const Eigen::MatrixXd>(g.gram->gram.data(), mi, mi) *
                Eigen::Map<const Eigen::VectorXd>(u.data(), mi);
            return out;
        }
        return g.apply(g.adjoint(u));
    };

    const auto y = g.measurements();
    std::vector<double> c = g.apply(z.span());
    kernels::axpy(-1.0, y, c);

    std::vector<double> u(m, 0.0);
    if (ws) {
        auto it = ws->duals.find(g.key);
        if (it != ws->duals.end() && it->second.size() == m)
            for (std::size_t i = 0; i < m; ++i)
                u[i] = std::clamp(it->second[i], -rho, rho);
    }

    auto gap_of = [&](const std::vector<double>& uu, const std::vector<double>& gu) {
        double quad = 0.0, lin = 0.0, l1 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            quad += uu[i] * gu[i];
            lin += uu[i] * c[i];
            l1 += std::abs(gu[i] - c[i]);
        }
        return quad - lin + rho * l1;
    };

    std::vector<double> gu = gram_apply(u);
    double gap = gap_of(u, gu);
    std::vector<double> w = u, gw = gu, u_next(m), grad(m);
    double t = 1.0;
    int it = 0;
    while (gap > tol) {
        if (it++ >= kMaxInnerIterations) {
            auto x = z.values();
            kernels::axpy(-1.0, g.adjoint(u), x);
            throw NonConvergenceError("L1 proximal inner solver did not reach duality-gap tolerance", std::move(x),
                                      gap);
        }
        for (std::size_t i = 0; i < m; ++i) {
            grad[i] = c[i] - gw[i];
            u_next[i] = std::clamp(w[i] + grad[i] / lip, -rho, rho);
        }
        auto gu_next = gram_apply(u_next);
        double progress = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            progress += grad[i] * (u_next[i] - u[i]);
        double beta = 0.0;
        if (progress < 0.0) {
            t = 1.0; // momentum restart
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            beta = (t - 1.0) / t_next;
            t = t_next;
        }
        for (std::size_t i = 0; i < m; ++i) {
            w[i] = u_next[i] + beta * (u_next[i] - u[i]);
            gw[i] = gu_next[i] + beta * (gu_next[i] - gu[i]);
        }
        u.swap(u_next);
        gu.swap(gu_next);
        gap = gap_of(u, gu);
    }
    if (ws) {
        ws->duals[g.key] = u;
        ws->inner_iterations += static_cast<std::size_t>(it);
    }
    auto x = z.values();
    kernels::axpy(-1.0, g.adjoint(u), x);
    return x;
}

std::vector<double> prox_l1(const Group& g, double gamma, const Signal& z, double tol, ProxWorkspace* ws)
{
    if (g.members.size() == 1) {
        const auto* fb = g.members.front();
        if (const auto* d = fb->block->dense_op(); d && d->structure != DenseStructure::General) {
            if (!fb->block->has_measurements())
                throw ValidationError("fidelity block " + std::to_string(fb->index) + " has no measurements");
            return prox_l1_closed_form(*d, fb->block->y(), gamma * g.weight, z);
        }
    }
    return prox_l1_dual(g, gamma, z, tol, ws);
}

Signal prox_group(const Group& g, double gamma, const Signal& z, double tol, ProxWorkspace* ws)
{
    check_gamma(gamma);
    require_size(z.size(), g.n, "prox");
    tol = resolve_tol(g.loss, tol);
    auto x = g.loss == Loss::L2Square ? prox_l2(g, gamma, z, tol) : prox_l1(g, gamma, z, tol, ws);
    Signal out(std::move(x));
    out.set_shape(z.shape());
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

FidelitySet::FidelitySet(std::shared_ptr<const ForwardModel> model, Loss loss, double domain_radius,
                         std::optional<std::vector<double>> lipschitz)
    : model_(std::move(model)), loss_(loss), domain_radius_(domain_radius), full_cache_(std::make_shared<FullCache>())
{
    if (!model_)
        throw ValidationError("fidelity set needs a forward model");
    if (model_->is_lazy())
        throw ValidationError("fidelity set needs a materialized forward model");
    if (!(domain_radius > 0.0) || !std::isfinite(domain_radius))
        throw ValidationError("domain radius must be positive and finite");
    const std::size_t b = model_->block_count();
    if (lipschitz && lipschitz->size() != b)
        throw ValidationError("one Lipschitz constant per block is required");

    blocks_.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        auto& fb = blocks_[i];
        fb.index = i;
        fb.block = &model_->block(i);
        fb.loss = loss;
        fb.cache = std::make_shared<detail::BlockCache>();
        fb.cache->norm = operator_norm(*fb.block, kNormIterations, 1e-10);
        if (fb.block->has_measurements())
            fb.cache->aty = fb.block->adjoint(fb.block->y());
        fb.lipschitz = lipschitz ? (*lipschitz)[i] : lipschitz_bound(fb, domain_radius);
        if (!(fb.lipschitz > 0.0) || !std::isfinite(fb.lipschitz))
            throw ValidationError("block Lipschitz constants must be positive and finite");
        lipschitz_ = std::max(lipschitz_, fb.lipschitz);
    }
}

double FidelitySet::full_operator_norm() const
{
    std::call_once(full_cache_->norm_once, [&] {
        Group g = full_group(*this);
        // sqrt(lambda_max(A A^T)) by power iteration on the stacked operator.
        std::vector<double> v(signal_dim());
        for (std::size_t j = 0; j < v.size(); ++j)
            v[j] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(j));
        kernels::scale(1.0 / kernels::norm(v), v);
        double estimate = 0.0;
        for (int it = 0; it < kNormIterations; ++it) {
            auto w = g.adjoint(g.apply(v));
            const double rq = kernels::dot(v, w);
            const double previous = estimate;
            estimate = std::max(estimate, rq);
            const double wn = kernels::norm(w);
            if (wn == 0.0)
                break;
            kernels::scale(1.0 / wn, w);
            v = std::move(w);
            if (it > 0 && std::abs(estimate - previous) <= 1e-10 * estimate)
                break;
        }
        full_cache_->norm = std::sqrt(estimate);
    });
    return full_cache_->norm;
}

Signal prox_block(const FidelityBlock& fb, double gamma, const Signal& z, double tol, ProxWorkspace* ws)
{
    return prox_group(single_group(fb), gamma, z, tol, ws);
}

Signal prox_full(const FidelitySet& fs, double gamma, const Signal& z, double tol, ProxWorkspace* ws)
{
    return prox_group(full_group(fs), gamma, z, tol, ws);
}

Signal prox_average(const FidelitySet& fs, double gamma, const Signal& z, double tol, ProxWorkspace* ws)
{
    std::vector<std::size_t> all(fs.block_count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return minibatch_prox(fs, gamma, z, all, tol, ws);
}

Signal minibatch_prox(const FidelitySet& fs, double gamma, const Signal& z, std::span<const std::size_t> indices,
                      double tol, ProxWorkspace* ws)
{
    if (indices.empty())
        throw ValidationError("minibatch needs at least one index");
    std::vector<std::size_t> sorted(indices.begin(), indices.end());
    std::sort(sorted.begin(), sorted.end());
    for (auto i : sorted)
        if (i >= fs.block_count())
            throw ValidationError("minibatch index " + std::to_string(i) + " out of range");

    // Distinct blocks are evaluated once; repeated indices reuse the result.
    std::vector<std::size_t> unique = sorted;
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    if (ws)
        for (auto i : unique)
            ws->duals.try_emplace(std::to_string(i));

    std::vector<Signal> results(unique.size());
    const auto count = static_cast<std::ptrdiff_t>(unique.size());
    std::vector<std::exception_ptr> errors(unique.size());
    std::vector<std::size_t> inner(unique.size(), 0);
#pragma omp parallel for schedule(dynamic) if (count > 1)
    for (std::ptrdiff_t j = 0; j < count; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        try {
            if (ws) {
                // Each block owns its own dual slot; merge iteration counts afterwards.
                ProxWorkspace local;
                local.duals[std::to_string(unique[idx])] = ws->duals[std::to_string(unique[idx])];
                results[idx] = prox_block(fs.block(unique[idx]), gamma, z, tol, &local);
                ws->duals[std::to_string(unique[idx])] = std::move(local.duals[std::to_string(unique[idx])]);
                inner[idx] = local.inner_iterations;
            } else {
                results[idx] = prox_block(fs.block(unique[idx]), gamma, z, tol, nullptr);
            }
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    if (ws)
        for (auto c : inner)
            ws->inner_iterations += c;

    if (sorted.size() == 1)
        return results.front();
    Signal sum = z.zeros_like();
    std::size_t u = 0;
    for (auto i : sorted) {
        while (unique[u] != i)
            ++u;
        sum += results[u];
    }
    sum *= 1.0 / static_cast<double>(sorted.size());
    return sum;
}

double lipschitz_bound(const MeasurementBlock& block, Loss loss, double domain_radius, double operator_norm)
{
    if (!(domain_radius > 0.0))
        throw ValidationError("domain radius must be positive");
    if (loss == Loss::L1)
        return operator_norm * std::sqrt(static_cast<double>(block.output_dim()));
    const double ynorm = block.has_measurements() ? kernels::norm(block.y()) : 0.0;
    return operator_norm * (operator_norm * domain_radius + ynorm);
}

double lipschitz_bound(const FidelityBlock& fb, double domain_radius)
{
    const double norm = fb.cache ? fb.cache->norm : operator_norm(*fb.block, kNormIterations, 1e-10);
    return lipschitz_bound(*fb.block, fb.loss, domain_radius, norm);
}

Signal block_gradient(const FidelityBlock& fb, const Signal& x)
{
    if (fb.loss != Loss::L2Square)
        throw UnsupportedCombinationError("gradient requested for a nonsmooth fidelity");
    auto g = fb.block->normal(x.span());
    kernels::axpy(-1.0, fb.cache->aty, g);
    Signal out(std::move(g));
    out.set_shape(x.shape());
    return out;
}

double block_value(const FidelityBlock& fb, const Signal& x)
{
    auto r = fb.block->apply(x.span());
    kernels::axpy(-1.0, fb.block->y(), r);
    if (fb.loss == Loss::L2Square)
        return 0.5 * kernels::squared_norm(r);
    double acc = 0.0;
    for (double v : r)
        acc += std::abs(v);
    return acc;
}

} // namespace pnp
