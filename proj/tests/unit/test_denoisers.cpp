#include "pnp/denoisers.hpp"
#include "pnp/errors.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace pnp;

namespace {

// Isotropic TV prox by Chambolle-Pock primal-dual iterations, written
// independently of the library's dual FISTA.
std::vector<double> tv_primal_dual_oracle(const Signal& v, double tau, int iterations)
{
    const Shape s = v.shape_or_row();
    const std::size_t h = s.height, w = s.width, n = v.size();
    auto grad = [&](const std::vector<double>& x, std::vector<double>& gx, std::vector<double>& gy) {
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t k = i * w + j;
                gx[k] = j + 1 < w ? x[k + 1] - x[k] : 0.0;
                gy[k] = i + 1 < h ? x[k + w] - x[k] : 0.0;
            }
    };
    // Negative divergence is the adjoint of grad.
    auto grad_t = [&](const std::vector<double>& px, const std::vector<double>& py, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t k = i * w + j;
                if (j + 1 < w) {
                    out[k + 1] += px[k];
                    out[k] -= px[k];
                }
                if (i + 1 < h) {
                    out[k + w] += py[k];
                    out[k] -= py[k];
                }
            }
    };
    std::vector<double> x(v.begin(), v.end()), xbar = x, px(n, 0.0), py(n, 0.0), gx(n), gy(n), div(n);
    const double sigma = 1.0 / std::sqrt(8.0), t = 1.0 / std::sqrt(8.0);
    for (int it = 0; it < iterations; ++it) {
        grad(xbar, gx, gy);
        for (std::size_t k = 0; k < n; ++k) {
            const double ax = px[k] + sigma * gx[k], ay = py[k] + sigma * gy[k];
            const double scale = std::max(1.0, std::hypot(ax, ay) / tau);
            px[k] = ax / scale;
            py[k] = ay / scale;
        }
        grad_t(px, py, div);
        for (std::size_t k = 0; k < n; ++k) {
            const double prev = x[k];
            x[k] = (x[k] - t * div[k] + t * v[k]) / (1.0 + t);
            xbar[k] = 2.0 * x[k] - prev;
        }
    }
    return x;
}

// Orthonormal DCT-II coefficient by direct summation.
double dct_coefficient(const Signal& x, Shape s, std::size_t p, std::size_t q)
{
    const double pi = std::numbers::pi;
    const double ap = p == 0 ? std::sqrt(1.0 / s.height) : std::sqrt(2.0 / s.height);
    const double aq = q == 0 ? std::sqrt(1.0 / s.width) : std::sqrt(2.0 / s.width);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.height; ++i)
        for (std::size_t j = 0; j < s.width; ++j)
            acc += x[i * s.width + j] * std::cos(pi * (2.0 * i + 1.0) * p / (2.0 * s.height)) *
                   std::cos(pi * (2.0 * j + 1.0) * q / (2.0 * s.width));
    return ap * aq * acc;
}

SamplingOptions image_sampling(Shape s)
{
    SamplingOptions o;
    o.shape = s;
    return o;
}

} // namespace

TEST(Tv, MatchesPrimalDualOracle)
{
    const Shape s{12, 10};
    const Signal v = test::random_image(s, 1, 0.3);
    const double tau = 0.05;
    const Signal x = tv_denoise(v, tau, 200000, 1e-15);
    const auto ref = tv_primal_dual_oracle(v, tau, 200000);
    double worst = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k)
        worst = std::max(worst, std::abs(x[k] - ref[k]));
    EXPECT_LT(worst, 1e-5);
}

TEST(Tv, PreservesConstantsAndMean)
{
    const Shape s{16, 16};
    const Signal c(s, 0.37);
    EXPECT_LT(max_abs_diff(denoise(Denoiser::tv(0.3), c), c), 1e-12);
    const Signal v = test::random_image(s, 2);
    const Signal x = denoise(Denoiser::tv(0.2, 5000), v);
    double mv = 0, mx = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        mv += v[k];
        mx += x[k];
    }
    EXPECT_NEAR(mv, mx, 1e-9);
}

TEST(Tv, WeightIsSigmaSquared)
{
    const Signal v = test::random_image(Shape{8, 8}, 3);
    const Signal a = denoise(Denoiser::tv(0.3, 20000, 1e-14), v);
    const Signal b = tv_denoise(v, 0.09, 20000, 1e-14);
    EXPECT_LT(max_abs_diff(a, b), 1e-12);
}

TEST(Tv, ReportsNonConvergence)
{
    const Signal v = test::random_image(Shape{32, 32}, 4);
    EXPECT_THROW(denoise(Denoiser::tv(0.5, 2, 1e-14), v), NonConvergenceError);
    TvSolveInfo info;
    tv_denoise(v, 0.25, 50000, 1e-10, &info);
    EXPECT_GT(info.iterations, 0);
    EXPECT_LE(info.gap, 1e-10 * std::max(1.0, 0.5 * v.squared_norm()));
}

TEST(Dct, MatchesDirectSummationAndIsOrthonormal)
{
    const Shape s{5, 7};
    const Signal x = test::random_image(s, 5);
    const auto c = dct2(s, x.span());
    for (std::size_t p = 0; p < s.height; ++p)
        for (std::size_t q = 0; q < s.width; ++q)
            EXPECT_NEAR(c[p * s.width + q], dct_coefficient(x, s, p, q), 1e-12);
    EXPECT_NEAR(test::to_eigen(c).norm(), x.norm(), 1e-12);
    const auto back = idct2(s, c);
    for (std::size_t k = 0; k < x.size(); ++k)
        EXPECT_NEAR(back[k], x[k], 1e-12);
}

TEST(Dct, DenoiserShrinksAllButDc)
{
    const Shape s{8, 8};
    const Signal x = test::random_image(s, 6);
    const Signal d = denoise(Denoiser::dct(0.4), x);
    const auto cx = dct2(s, x.span()), cd = dct2(s, d.span());
    EXPECT_NEAR(cd[0], cx[0], 1e-12);
    for (std::size_t k = 1; k < cx.size(); ++k)
        EXPECT_NEAR(cd[k], test::soft_threshold(cx[k], 0.4), 1e-12);
    EXPECT_LT(max_abs_diff(denoise(Denoiser::dct(0.4), Signal(s, 2.0)), Signal(s, 2.0)), 1e-12);
}

TEST(Smoothing, ResidualIsEpsilonScaledHighPass)
{
    const Shape s{6, 9};
    const Signal v = test::random_image(s, 7);
    const double eps = 0.3;
    const Signal d = denoise(Denoiser::scaled_smoothing(1.0, eps), v);
    for (std::size_t i = 0; i < s.height; ++i)
        for (std::size_t j = 0; j < s.width; ++j) {
            double kv = 0.0;
            const double wts[3] = {0.25, 0.5, 0.25};
            for (int a = -1; a <= 1; ++a)
                for (int b = -1; b <= 1; ++b) {
                    const std::size_t ii = (i + s.height + a) % s.height, jj = (j + s.width + b) % s.width;
                    kv += wts[a + 1] * wts[b + 1] * v[ii * s.width + jj];
                }
            const std::size_t k = i * s.width + j;
            EXPECT_NEAR(d[k], v[k] - eps * (v[k] - kv), 1e-12);
        }
    const auto r = [&](const Signal& x) { return residual(Denoiser::scaled_smoothing(1.0, eps), x); };
    EXPECT_LE(certify_contraction(r, s.size(), 300, 1, image_sampling(s)), eps + 1e-12);
}

TEST(Averaged, IsMidpointOfInputAndBase)
{
    const Signal v = test::random_image(Shape{8, 8}, 8);
    const Denoiser base = Denoiser::dct(0.2);
    const Signal a = denoise(Denoiser::averaged(base), v);
    const Signal n = denoise(base, v);
    for (std::size_t k = 0; k < v.size(); ++k)
        EXPECT_NEAR(a[k], 0.5 * (v[k] + n[k]), 1e-15);
    EXPECT_EQ(Denoiser::averaged(base).with_sigma(0.5).base()->sigma(), 0.5);
}

TEST(Denoisers, BoxProjectionAndDeclaredClass)
{
    const Signal v = test::random_image(Shape{4, 4}, 9, 3.0);
    const Denoiser d = Denoiser::dct(0.1).with_box({0.0, 1.0});
    for (double x : denoise(d, v))
        EXPECT_TRUE(x >= 0.0 && x <= 1.0);
    EXPECT_EQ(d.declared_class(), StructuralClass::Unverified);
    EXPECT_EQ(Denoiser::tv(0.1).declared_class(), StructuralClass::FirmlyNonexpansive);
    EXPECT_EQ(Denoiser::scaled_smoothing(0.1, 0.3).declared_class(), StructuralClass::ContractiveResidual);
    EXPECT_THROW(Denoiser::dct(0.1).with_box({1.0, 0.0}), ValidationError);
    EXPECT_THROW(Denoiser::scaled_smoothing(0.1, 1.0), ValidationError);
    EXPECT_THROW(Denoiser::tv(-1.0), ValidationError);
    Signal bad(4, 0.0);
    bad[1] = std::nan("");
    EXPECT_THROW(denoise(Denoiser::dct(0.1), bad), ValidationError);
}

TEST(Certification, BuiltinDenoisersPass)
{
    const Shape s{16, 16};
    const auto opts = image_sampling(s);
    for (const Denoiser& d : {Denoiser::tv(0.1, 5000), Denoiser::dct(0.1), Denoiser::scaled_smoothing(0.1, 0.5),
                              Denoiser::averaged(Denoiser::dct(0.1))}) {
        const auto op = [&](const Signal& x) { return denoise(d, x); };
        const auto r = certify_firm_nonexpansive(op, s.size(), 200, 3, 1e-6, opts);
        EXPECT_TRUE(r.pass) << d.label() << " violation " << r.max_cocoercivity_violation;
        EXPECT_LE(r.max_lipschitz_ratio, 1.0 + 1e-6);
    }
}

TEST(Certification, RejectsExpansiveAndReflectionOperators)
{
    const auto twice = [](const Signal& x) { return 2.0 * x; };
    const auto negate = [](const Signal& x) { return -1.0 * x; };
    EXPECT_FALSE(certify_firm_nonexpansive(twice, 32, 20, 1, 1e-6).pass);
    const auto r = certify_firm_nonexpansive(negate, 32, 20, 1, 1e-6);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.max_cocoercivity_violation, 2.0, 1e-12);
    EXPECT_NEAR(r.max_lipschitz_ratio, 1.0, 1e-12);
}

TEST(Certification, DeterministicPerSeed)
{
    const auto op = [](const Signal& x) { return denoise(Denoiser::dct(0.2), x); };
    SamplingOptions o;
    o.shape = Shape{8, 8};
    o.patches = {test::random_image(Shape{8, 8}, 1)};
    const auto a = certify_firm_nonexpansive(op, 64, 50, 7, 1e-6, o);
    const auto b = certify_firm_nonexpansive(op, 64, 50, 7, 1e-6, o);
    EXPECT_EQ(a.max_cocoercivity_violation, b.max_cocoercivity_violation);
    EXPECT_EQ(a.max_lipschitz_ratio, b.max_lipschitz_ratio);
}
