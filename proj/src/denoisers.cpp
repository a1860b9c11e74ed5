#include "pnp/denoisers.hpp"

#include "pnp/errors.hpp"
#include "pnp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

namespace pnp {

const char* to_string(DenoiserKind kind)
{
    switch (kind) {
    case DenoiserKind::TvChambolle:
        return "tv";
    case DenoiserKind::DctSoftThreshold:
        return "dct";
    case DenoiserKind::ScaledSmoothing:
        return "smoothing";
    case DenoiserKind::AveragedWrap:
        return "averaged";
    }
    return "unknown";
}

const char* to_string(StructuralClass cls)
{
    switch (cls) {
    case StructuralClass::FirmlyNonexpansive:
        return "firmly-nonexpansive";
    case StructuralClass::ContractiveResidual:
        return "contractive-residual";
    case StructuralClass::Unverified:
        return "unverified";
    }
    return "unknown";
}

namespace {

void check_sigma(double sigma)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw ValidationError("denoiser sigma must be positive and finite");
}

} // namespace

Denoiser Denoiser::tv(double sigma, int max_iters, double dual_tol)
{
    check_sigma(sigma);
    if (max_iters < 1)
        throw ValidationError("TV max_iters must be at least 1");
    if (!(dual_tol > 0.0))
        throw ValidationError("TV dual tolerance must be positive");
    Denoiser d;
    d.kind_ = DenoiserKind::TvChambolle;
    d.sigma_ = sigma;
    d.max_iters_ = max_iters;
    d.dual_tol_ = dual_tol;
    return d;
}

Denoiser Denoiser::dct(double sigma)
{
    check_sigma(sigma);
    Denoiser d;
    d.kind_ = DenoiserKind::DctSoftThreshold;
    d.sigma_ = sigma;
    return d;
}

Denoiser Denoiser::scaled_smoothing(double sigma, double epsilon)
{
    check_sigma(sigma);
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ValidationError("smoothing epsilon must lie in (0, 1)");
    Denoiser d;
    d.kind_ = DenoiserKind::ScaledSmoothing;
    d.sigma_ = sigma;
    d.epsilon_ = epsilon;
    return d;
}

Denoiser Denoiser::averaged(Denoiser base)
{
    Denoiser d;
    d.kind_ = DenoiserKind::AveragedWrap;
    d.sigma_ = base.sigma_;
    d.base_ = std::make_shared<const Denoiser>(std::move(base));
    return d;
}

StructuralClass Denoiser::declared_class() const
{
    if (box_)
        return StructuralClass::Unverified;
    return kind_ == DenoiserKind::ScaledSmoothing ? StructuralClass::ContractiveResidual
                                                  : StructuralClass::FirmlyNonexpansive;
}

std::string Denoiser::label() const
{
    std::ostringstream os;
    os << to_string(kind_);
    if (kind_ == DenoiserKind::AveragedWrap)
        os << "(" << base_->label() << ")";
    else
        os << "(sigma=" << sigma_;
    if (kind_ == DenoiserKind::ScaledSmoothing)
        os << ", epsilon=" << epsilon_;
    if (kind_ != DenoiserKind::AveragedWrap)
        os << ")";
    if (box_)
        os << "+box[" << box_->lo << ", " << box_->hi << "]";
    return os.str();
}

Denoiser Denoiser::with_box(Box box) const
{
    if (!(box.lo < box.hi))
        throw ValidationError("box needs lo < hi");
    Denoiser d = *this;
    d.box_ = box;
    return d;
}

Denoiser Denoiser::with_sigma(double sigma) const
{
    check_sigma(sigma);
    Denoiser d = *this;
    d.sigma_ = sigma;
    if (base_)
        d.base_ = std::make_shared<const Denoiser>(base_->with_sigma(sigma));
    return d;
}

// --- TV ---------------------------------------------------------------------

namespace {

struct Grid
{
    std::size_t h, w;
};

// Forward differences with Neumann boundary; px/py are zero on the last
// column/row.
void gradient(Grid g, const double* x, double* px, double* py)
{
    for (std::size_t i = 0; i < g.h; ++i) {
        const double* row = x + i * g.w;
        double* gx = px + i * g.w;
        double* gy = py + i * g.w;
        for (std::size_t j = 0; j + 1 < g.w; ++j)
            gx[j] = row[j + 1] - row[j];
        gx[g.w - 1] = 0.0;
        if (i + 1 < g.h) {
            const double* next = row + g.w;
            for (std::size_t j = 0; j < g.w; ++j)
                gy[j] = next[j] - row[j];
        } else {
            std::fill(gy, gy + g.w, 0.0);
        }
    }
}

// out = v - tau * grad^T p
void primal_from_dual(Grid g, const double* v, double tau, const double* px, const double* py, double* out)
{
    for (std::size_t i = 0; i < g.h; ++i) {
        for (std::size_t j = 0; j < g.w; ++j) {
            const std::size_t k = i * g.w + j;
            double gt = 0.0;
            if (j + 1 < g.w)
                gt -= px[k];
            if (j > 0)
                gt += px[k - 1];
            if (i + 1 < g.h)
                gt -= py[k];
            if (i > 0)
                gt += py[k - g.w];
            out[k] = v[k] - tau * gt;
        }
    }
}

} // namespace

Signal tv_denoise(const Signal& v, double tau, int max_iters, double tol, TvSolveInfo* info)
{
    const Shape shape = v.shape_or_row();
    const Grid g{shape.height, shape.width};
    const std::size_t n = v.size();
    if (!(tau > 0.0))
        throw ValidationError("TV weight must be positive");

    std::vector<double> px(n, 0.0), py(n, 0.0), qx(n, 0.0), qy(n, 0.0);
    std::vector<double> nx(n), ny(n), gx(n), gy(n), x(n);
    const double step = 1.0 / (8.0 * tau);
    const double threshold = tol * std::max(1.0, 0.5 * v.squared_norm());

    // gap(p) = tau * (TV(x) - <grad x, p>) with x = v - tau grad^T p
    auto gap_at = [&](const std::vector<double>& ax, const std::vector<double>& ay) {
        primal_from_dual(g, v.values().data(), tau, ax.data(), ay.data(), x.data());
        gradient(g, x.data(), gx.data(), gy.data());
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            acc += std::hypot(gx[k], gy[k]) - gx[k] * ax[k] - gy[k] * ay[k];
        return tau * acc;
    };

    double gap = gap_at(px, py);
    double t = 1.0;
    int it = 0;
    while (gap > threshold) {
        if (it >= max_iters) {
            if (info)
                *info = {it, gap};
            throw NonConvergenceError("TV denoiser did not reach dual-gap tolerance", x, gap);
        }
        ++it;
        primal_from_dual(g, v.values().data(), tau, qx.data(), qy.data(), x.data());
        gradient(g, x.data(), gx.data(), gy.data());
        double restart = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double ax = qx[k] + step * gx[k];
            double ay = qy[k] + step * gy[k];
            const double mag = std::hypot(ax, ay);
            if (mag > 1.0) {
                ax /= mag;
                ay /= mag;
            }
            nx[k] = ax;
            ny[k] = ay;
            restart += (qx[k] - ax) * (ax - px[k]) + (qy[k] - ay) * (ay - py[k]);
        }
        double beta = 0.0;
        if (restart > 0.0) {
            t = 1.0;
        } else {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            beta = (t - 1.0) / t_next;
            t = t_next;
        }
        for (std::size_t k = 0; k < n; ++k) {
            qx[k] = nx[k] + beta * (nx[k] - px[k]);
            qy[k] = ny[k] + beta * (ny[k] - py[k]);
        }
        px.swap(nx);
        py.swap(ny);
        gap = gap_at(px, py);
    }
    if (info)
        *info = {it, gap};
    primal_from_dual(g, v.values().data(), tau, px.data(), py.data(), x.data());
    Signal out(std::move(x));
    out.set_shape(v.shape());
    return out;
}

// --- DCT --------------------------------------------------------------------

namespace {

// Row k holds the k-th orthonormal DCT-II basis vector.
const std::vector<double>& dct_matrix(std::size_t n)
{
    static std::mutex mutex;
    static std::map<std::size_t, std::shared_ptr<const std::vector<double>>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) {
        auto c = std::make_shared<std::vector<double>>(n * n);
        const double nn = static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double alpha = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
            for (std::size_t j = 0; j < n; ++j)
                (*c)[k * n + j] = alpha * std::cos(std::numbers::pi * (2.0 * static_cast<double>(j) + 1.0) *
                                                   static_cast<double>(k) / (2.0 * nn));
        }
        slot = std::move(c);
    }
    return *slot;
}

// out = Ch * x * Cw^T when forward, Ch^T * x * Cw otherwise.
std::vector<double> separable(Shape shape, std::span<const double> x, bool forward)
{
    const std::size_t h = shape.height, w = shape.width;
    if (x.size() != h * w)
        throw ShapeError("dct: length does not match shape");
    const auto& ch = dct_matrix(h);
    const auto& cw = dct_matrix(w);
    std::vector<double> tmp(h * w, 0.0), out(h * w, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        const double* row = x.data() + i * w;
        double* trow = tmp.data() + i * w;
        for (std::size_t k = 0; k < w; ++k) {
            double acc = 0.0;
            if (forward)
                for (std::size_t j = 0; j < w; ++j)
                    acc += cw[k * w + j] * row[j];
            else
                for (std::size_t j = 0; j < w; ++j)
                    acc += cw[j * w + k] * row[j];
            trow[k] = acc;
        }
    }
    for (std::size_t k = 0; k < h; ++k) {
        double* orow = out.data() + k * w;
        for (std::size_t i = 0; i < h; ++i) {
            const double c = forward ? ch[k * h + i] : ch[i * h + k];
            const double* trow = tmp.data() + i * w;
            for (std::size_t j = 0; j < w; ++j)
                orow[j] += c * trow[j];
        }
    }
    return out;
}

} // namespace

std::vector<double> dct2(Shape shape, std::span<const double> x) { return separable(shape, x, true); }

std::vector<double> idct2(Shape shape, std::span<const double> c) { return separable(shape, c, false); }

// --- dispatch ---------------------------------------------------------------

namespace {

Signal smooth(const Signal& v, double epsilon)
{
    const Shape shape = v.shape_or_row();
    const std::size_t h = shape.height, w = shape.width;
    std::vector<double> rows(v.size()), k(v.size());
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t l = (j + w - 1) % w, r = (j + 1) % w;
            rows[i * w + j] = 0.25 * v[i * w + l] + 0.5 * v[i * w + j] + 0.25 * v[i * w + r];
        }
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t u = (i + h - 1) % h, d = (i + 1) % h;
        for (std::size_t j = 0; j < w; ++j)
            k[i * w + j] = 0.25 * rows[u * w + j] + 0.5 * rows[i * w + j] + 0.25 * rows[d * w + j];
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = v[i] - epsilon * (v[i] - k[i]);
    return Signal(std::move(out));
}

Signal dct_shrink(const Signal& v, double sigma)
{
    const Shape shape = v.shape_or_row();
    auto c = dct2(shape, v.span());
    for (std::size_t k = 1; k < c.size(); ++k)
        c[k] = std::copysign(std::max(std::abs(c[k]) - sigma, 0.0), c[k]);
    return Signal(idct2(shape, c));
}

} // namespace

Signal denoise(const Denoiser& d, const Signal& v)
{
    if (!v.all_finite())
        throw ValidationError("denoiser input contains non-finite entries");
    if (v.empty())
        throw ShapeError("denoiser input is empty");
    Signal out;
    switch (d.kind()) {
    case DenoiserKind::TvChambolle:
        out = tv_denoise(v, d.sigma() * d.sigma(), d.max_iters(), d.dual_tol());
        break;
    case DenoiserKind::DctSoftThreshold:
        out = dct_shrink(v, d.sigma());
        break;
    case DenoiserKind::ScaledSmoothing:
        out = smooth(v, d.epsilon());
        break;
    case DenoiserKind::AveragedWrap: {
        out = denoise(*d.base(), v);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = 0.5 * (v[i] + out[i]);
        break;
    }
    }
    if (d.box())
        for (auto& x : out)
            x = std::clamp(x, d.box()->lo, d.box()->hi);
    out.set_shape(v.shape());
    return out;
}

Signal residual(const Denoiser& d, const Signal& v) { return v - denoise(d, v); }

// --- certification ----------------------------------------------------------

namespace {

std::mt19937_64 pair_rng(std::uint64_t seed, std::size_t pair)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32)};
    return std::mt19937_64(seq);
}

std::pair<Signal, Signal> draw_pair(std::size_t n, std::size_t pair, std::uint64_t seed, const SamplingOptions& opt)
{
    auto rng = pair_rng(seed, pair);
    const std::size_t kinds = opt.patches.empty() ? 2 : 3;
    Signal a(n), b(n);
    switch (pair % kinds) {
    case 0: {
        std::uniform_real_distribution<double> dist(opt.lo, opt.hi);
        for (std::size_t i = 0; i < n; ++i)
            a[i] = dist(rng);
        for (std::size_t i = 0; i < n; ++i)
            b[i] = dist(rng);
        break;
    }
    case 1: {
        std::normal_distribution<double> dist(0.5 * (opt.lo + opt.hi), 0.25 * (opt.hi - opt.lo));
        for (std::size_t i = 0; i < n; ++i)
            a[i] = dist(rng);
        for (std::size_t i = 0; i < n; ++i)
            b[i] = dist(rng);
        break;
    }
    default: {
        const auto& patch = opt.patches[std::uniform_int_distribution<std::size_t>(0, opt.patches.size() - 1)(rng)];
        require_size(patch.size(), n, "certification patch");
        std::normal_distribution<double> noise(0.0, 0.05 * (opt.hi - opt.lo));
        for (std::size_t i = 0; i < n; ++i)
            a[i] = patch[i] + noise(rng);
        for (std::size_t i = 0; i < n; ++i)
            b[i] = patch[i] + noise(rng);
        break;
    }
    }
    a.set_shape(opt.shape);
    b.set_shape(opt.shape);
    return {std::move(a), std::move(b)};
}

struct PairStats
{
    double violation = -INFINITY;
    double ratio = 0.0;
};

std::vector<PairStats> sample_pairs(const Operator& op, std::size_t n, std::size_t samples, std::uint64_t seed,
                                    const SamplingOptions& opt)
{
    if (samples < 1)
        throw ValidationError("certification needs at least one sample");
    if (opt.shape && opt.shape->size() != n)
        throw ShapeError("certification shape does not match n");
    std::vector<PairStats> stats(samples);
    std::vector<std::exception_ptr> errors(samples);
    const auto count = static_cast<std::ptrdiff_t>(samples);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < count; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        try {
            auto [a, b] = draw_pair(n, idx, seed, opt);
            const Signal ta = op(a);
            const Signal tb = op(b);
            const Signal dt = ta - tb;
            const Signal dv = a - b;
            const double dv2 = dv.squared_norm();
            if (dv2 == 0.0)
                continue;
            stats[idx].violation = (dt.squared_norm() - dot(dt, dv)) / dv2;
            stats[idx].ratio = std::sqrt(dt.squared_norm() / dv2);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return stats;
}

} // namespace

CertificationReport certify_firm_nonexpansive(const Operator& op, std::size_t n, std::size_t samples,
                                              std::uint64_t seed, double tolerance, const SamplingOptions& options)
{
    const auto stats = sample_pairs(op, n, samples, seed, options);
    CertificationReport report;
    report.op_label = options.label;
    report.sampled_pairs = samples;
    report.tolerance = tolerance;
    report.max_cocoercivity_violation = -INFINITY;
    for (const auto& s : stats) {
        report.max_cocoercivity_violation = std::max(report.max_cocoercivity_violation, s.violation);
        report.max_lipschitz_ratio = std::max(report.max_lipschitz_ratio, s.ratio);
    }
    report.pass = report.max_cocoercivity_violation <= tolerance && report.max_lipschitz_ratio <= 1.0 + tolerance;
    return report;
}

double certify_contraction(const Operator& op, std::size_t n, std::size_t samples, std::uint64_t seed,
                           const SamplingOptions& options)
{
    double worst = 0.0;
    for (const auto& s : sample_pairs(op, n, samples, seed, options))
        worst = std::max(worst, s.ratio);
    return worst;
}

} // namespace pnp
