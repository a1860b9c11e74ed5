// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "pnp/errors.hpp"
#include "pnp/harness.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

using namespace pnp;
using test::Mat;
using test::Vec;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Shape square(std::size_t side) { return Shape{side, side}; }

Denoiser tight_tv(double sigma) { return Denoiser::tv(sigma, 200000, 1e-13); }

// Largest norm among the points where block subgradients are evaluated, used
// as the domain radius for the L2Square Lipschitz constant.
double measured_L(const FidelitySet& fs, Loss loss, double radius)
{
    if (loss == Loss::L1)
        return fs.lipschitz();
    double l = 0.0;
    for (std::size_t i = 0; i < fs.block_count(); ++i)
        l = std::max(l, lipschitz_bound(fs.block(i), radius));
    return l;
}

struct Triple
{
    test::Toy toy;
    Loss loss;
    Shape shape;
    double gamma;
    Signal v;
};

// Random (v, gamma, problem) with n <= 64 and b <= 8.
Triple random_triple(std::uint64_t seed)
{
    std::mt19937_64 rng(1000 + seed);
    const std::size_t side = std::uniform_int_distribution<std::size_t>(3, 8)(rng);
    const std::size_t b = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    std::vector<std::size_t> rows(b);
    for (auto& r : rows)
        r = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const Loss loss = seed % 2 ? Loss::L1 : Loss::L2Square;
    const double gamma = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, 0.0)(rng));
    const Shape s = square(side);
    return {test::dense_toy(s.size(), rows, loss, 2000 + seed, s), loss, s, gamma,
            test::random_image(s, 3000 + seed)};
}

// --- 1 ----------------------------------------------------------------------

Outcome prox_correctness()
{
    double err_l2 = 0.0, err_l1 = 0.0, err_dense = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t n = 16 + 4 * seed;
        const auto y = test::gaussian(n, seed);
        const Signal z = test::random_signal(n, 100 + seed, 2.0);
        const double gamma = 0.05 + 0.3 * static_cast<double>(seed);
        auto l2 = test::identity_toy(y, Loss::L2Square);
        auto l1 = test::identity_toy(y, Loss::L1);
        const Signal p2 = prox_block(l2.fidelity->block(0), gamma, z, 1e-13);
        const Signal p1 = prox_block(l1.fidelity->block(0), gamma, z, 1e-13);
        for (std::size_t j = 0; j < n; ++j) {
            err_l2 = std::max(err_l2, std::abs(p2[j] - (z[j] + gamma * y[j]) / (1.0 + gamma)));
            err_l1 = std::max(err_l1, std::abs(p1[j] - (y[j] + test::soft_threshold(z[j] - y[j], gamma))));
        }

        const std::size_t m = 3 + seed % 6;
        auto toy = test::dense_toy(n, {m}, Loss::L1, 200 + seed);
        const auto& fb = toy.fidelity->block(0);
        const Vec ref = test::l1_prox_enumerated(test::dense_matrix(*fb.block), test::to_eigen(fb.block->y()),
                                                 gamma, test::to_eigen(z));
        const Vec got = test::to_eigen(prox_block(fb, gamma, z, 1e-13));
        err_dense = std::max(err_dense, (got - ref).cwiseAbs().maxCoeff());
    }
    return {err_l2 <= 1e-12 && err_l1 <= 1e-12 && err_dense <= 1e-6,
            fmt("L2 identity %.2e, L1 identity %.2e, dense L1 vs enumeration %.2e", err_l2, err_l1, err_dense)};
}

// --- 2 ----------------------------------------------------------------------

Outcome firm_nonexpansiveness()
{
    constexpr std::size_t n = 1024, samples = 1000;
    constexpr double tol = 1e-6;
    const Shape s = square(32);
    SamplingOptions image;
    image.shape = s;

    std::vector<std::pair<std::string, Operator>> ops;
    for (const Denoiser& d : {Denoiser::tv(0.1, 20000), Denoiser::dct(0.1), Denoiser::scaled_smoothing(0.1, 0.5),
                              Denoiser::averaged(Denoiser::tv(0.1, 20000)), Denoiser::averaged(Denoiser::dct(0.1))})
        ops.emplace_back(d.label(), [d](const Signal& v) { return denoise(d, v); });

    std::vector<test::Toy> toys;
    for (Loss loss : {Loss::L1, Loss::L2Square}) {
        auto dense = std::make_shared<ForwardModel>(make_gaussian_model(n, n / 2, 2, 5));
        auto conv = std::make_shared<ForwardModel>(make_conv_model(s, 2, 5));
        for (auto& model : {dense, conv}) {
            if (loss == Loss::L1 && model == conv)
                continue;
            for (std::size_t i = 0; i < model->block_count(); ++i)
                model->block(i).set_measurements(test::gaussian(model->block_rows(i), 7 + i));
            toys.push_back({model, std::make_shared<FidelitySet>(model, loss, default_domain_radius(n))});
        }
    }
    for (const auto& toy : toys) {
        const std::string tag = std::string(to_string(toy.fidelity->loss())) +
                                (toy.model->block(0).is_dense() ? "/dense" : "/conv");
        const auto fs = toy.fidelity;
        ops.emplace_back("prox_full " + tag, [fs](const Signal& z) { return prox_full(*fs, 0.1, z, 1e-12); });
        ops.emplace_back("prox_block " + tag,
                         [fs](const Signal& z) { return prox_block(fs->block(0), 0.1, z, 1e-12); });
    }

    bool pass = true;
    double worst = -1e300;
    std::string failed;
    for (std::size_t j = 0; j < ops.size(); ++j) {
        image.label = ops[j].first;
        const auto r = certify_firm_nonexpansive(ops[j].second, n, samples, 11 + j, tol, image);
        worst = std::max(worst, r.max_cocoercivity_violation);
        if (!r.pass) {
            pass = false;
            failed += " " + ops[j].first;
        }
    }
    return {pass, fmt("%zu operators, %zu pairs each, worst normalized violation %.3e%s", ops.size(), samples, worst,
                      failed.empty() ? "" : (", failing:" + failed).c_str())};
}

// --- 3 and 4 ----------------------------------------------------------------

Outcome block_deviation()
{
    double worst_ratio = 0.0;
    bool pass = true;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto t = random_triple(seed);
        const Denoiser d = tight_tv(0.2);
        const Signal x = denoise(d, t.v);
        const Signal w = linear_combination(2.0, x, -1.0, t.v);
        const Signal g = prox_full(*t.toy.fidelity, t.gamma, w, 1e-14);
        double radius = g.norm(), dev = 0.0;
        for (std::size_t i = 0; i < t.toy.fidelity->block_count(); ++i) {
            const Signal gi = prox_block(t.toy.fidelity->block(i), t.gamma, w, 1e-14);
            radius = std::max(radius, gi.norm());
            // S_i v - S v = G(w) - G_i(w)
            dev = std::max(dev, distance(gi, g));
        }
        const double bound = 2.0 * t.gamma * measured_L(*t.toy.fidelity, t.loss, radius);
        pass = pass && dev <= bound + 1e-8;
        worst_ratio = std::max(worst_ratio, dev / bound);
    }
    return {pass, fmt("50 triples, max deviation / 2gammaL = %.4f", worst_ratio)};
}

Outcome proximal_average()
{
    double worst_ratio = 0.0;
    bool pass = true;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto t = random_triple(seed);
        const Signal full = prox_full(*t.toy.fidelity, t.gamma, t.v, 1e-14);
        double radius = full.norm();
        for (std::size_t i = 0; i < t.toy.fidelity->block_count(); ++i)
            radius = std::max(radius, prox_block(t.toy.fidelity->block(i), t.gamma, t.v, 1e-14).norm());
        const Signal avg = prox_average(*t.toy.fidelity, t.gamma, t.v, 1e-14);
        const double dev = distance(full, avg);
        const double bound = 2.0 * t.gamma * measured_L(*t.toy.fidelity, t.loss, radius);
        pass = pass && dev <= bound + 1e-8;
        worst_ratio = std::max(worst_ratio, dev / bound);
    }
    return {pass, fmt("50 triples, max ||prox - prox_average|| / 2gammaL = %.4f", worst_ratio)};
}

// --- 5 and 6 ----------------------------------------------------------------

Outcome admm_drs_equivalence()
{
    const Shape s = square(8);
    double worst = 0.0;
    for (Loss loss : {Loss::L2Square, Loss::L1})
        for (std::size_t p : {1, 2}) {
            auto toy = test::dense_toy(s.size(), {12, 12, 12, 12}, loss, 50 + p, s);
            const Denoiser d = tight_tv(0.1);
            SolverConfig cfg;
            cfg.gamma = 0.3;
            cfg.prox_tol = 1e-15;
            SolverState st = state_from_v(test::random_image(s, 60 + p), d);
            Signal v = st.v;
            Selector a(EpochShuffle{}, 4, p, 70 + p), b(EpochShuffle{}, 4, p, 70 + p);
            for (int k = 0; k < 100; ++k) {
                const auto ia = a.next(), ib = b.next();
                ipa_step(st, *toy.fidelity, d, cfg, ia);
                v = drs_step(v, *toy.fidelity, d, cfg, ib);
                worst = std::max(worst, max_abs_diff(st.v, v));
            }
        }
    return {worst <= 1e-12, fmt("max |v_admm - v_drs| over 100 iterations = %.2e", worst)};
}

Outcome collapse_identity()
{
    const Shape s = square(8);
    double worst = 0.0;
    for (Loss loss : {Loss::L2Square, Loss::L1}) {
        auto toy = test::dense_toy(s.size(), {40}, loss, 80, s);
        const Denoiser d = tight_tv(0.1);
        SolverConfig cfg;
        cfg.gamma = 0.4;
        cfg.max_iters = 100;
        cfg.minibatch_p = 1;
        RunOptions opts;
        opts.snr = false;
        auto collect = [&](Algorithm alg) {
            std::vector<Signal> xs;
            RunOptions o = opts;
            o.callback = [&](std::size_t, const SolverState& st, const IterateRecord&) { xs.push_back(st.x); };
            run(alg, {toy.fidelity.get(), &d, nullptr}, cfg, o);
            return xs;
        };
        const auto ref = collect(Algorithm::PnpAdmm);
        for (Algorithm alg : {Algorithm::Ipa, Algorithm::MinibatchIpa}) {
            const auto xs = collect(alg);
            if (xs.size() != ref.size())
                return {false, "iteration counts differ"};
            for (std::size_t k = 0; k < xs.size(); ++k)
                worst = std::max(worst, max_abs_diff(xs[k], ref[k]));
        }
    }
    return {worst <= 1e-12, fmt("max |x_ipa - x_admm| over 100 iterations = %.2e", worst)};
}

// --- 7 ----------------------------------------------------------------------

Outcome theorem2_dominance()
{
    constexpr std::size_t horizon = 500;
    const Shape s = square(16);
    const std::size_t n = s.size();
    auto model = std::make_shared<ForwardModel>(make_gaussian_model(n, 180, 2, 21));
    model->set_shape(s);
    Signal truth = synthetic_image("phantom", 16);
    truth *= 1.0 / 255.0;
    const auto noise = test::gaussian(180, 22, 0.02);
    std::size_t off = 0;
    for (std::size_t i = 0; i < model->block_count(); ++i) {
        auto y = model->apply_block(i, truth.span());
        for (auto& v : y)
            v += noise[off++];
        model->block(i).set_measurements(std::move(y));
    }
    const double radius = default_domain_radius(n, 1.0 / 255.0);
    const FidelitySet fs(model, Loss::L2Square, radius);
    const Denoiser d = tight_tv(0.1);
    const double gamma = 0.5;

    SolverConfig cfg;
    cfg.gamma = gamma;
    cfg.max_iters = horizon;
    cfg.prox_tol = 1e-14;
    RunOptions opts;
    opts.analysis = true;
    opts.snr = false;
    std::vector<Signal> xs{Signal(s)}, vs;
    opts.callback = [&](std::size_t, const SolverState& st, const IterateRecord&) {
        xs.push_back(st.x);
        vs.push_back(st.v);
    };
    const auto trace = run(Algorithm::PnpAdmm, {&fs, &d, nullptr}, cfg, opts);

    const Signal v_star = reference_fixed_point(fs, d, gamma, 10 * horizon, 1e-14);
    const Signal x_star = denoise(d, v_star);
    double r = 0.0, max_x = 0.0;
    for (const auto& x : xs) {
        r = std::max(r, distance(x, x_star));
        max_x = std::max(max_x, x.norm());
    }
    const TheoryParams tp{r, fs.lipschitz(), gamma, std::nullopt, std::nullopt};
    std::vector<double> s_sq;
    for (const auto& rec : trace.records)
        s_sq.push_back(rec.s_norm_sq);
    const auto reports = bound_reports(s_sq, tp, false);
    double min_slack_ratio = 1e300;
    bool pass = reports.size() == horizon && max_x <= radius;
    for (const auto& rep : reports) {
        pass = pass && rep.empirical_mean_residual <= rep.theorem1_bound;
        min_slack_ratio = std::min(min_slack_ratio, rep.empirical_mean_residual / rep.theorem1_bound);
        (void)min_slack_ratio;
    }
    double max_ratio = 0.0;
    for (const auto& rep : reports)
        max_ratio = std::max(max_ratio, rep.empirical_mean_residual / rep.theorem1_bound);
    const double v_radius = lemma_iterate_radius(vs, v_star);
    return {pass, fmt("R=%.4g L=%.4g, max over t<=%zu of mean/bound = %.3e, ||S v*||=%.1e, "
                      "max ||v^k - v*|| = %.4g vs R+2gammaL = %.4g, max ||x^k|| = %.3g <= radius %.3g",
                      r, fs.lipschitz(), horizon, max_ratio, apply_S(fs, d, gamma, v_star, 1e-14).norm(), v_radius,
                      r + 2 * gamma * fs.lipschitz(), max_x, radius)};
}

// --- 8 ----------------------------------------------------------------------

Outcome theorem1_dominance()
{
    constexpr std::size_t horizon = 250, stride = 50, seeds = 20;
    const std::vector<double> gammas{0.02, 0.01, 0.005};
    ExperimentConfig ec;
    ec.problem = ProblemKind::CsL1;
    ec.images = {"synthetic:texture"};
    ec.size = 64;
    ec.m = 2867;
    ec.b = 2;
    ec.noise.awgn_std = 5.0;
    ec.noise.sparse_ratio = 0.1;
    ec.image_scale = 1.0 / 1020.0;
    const auto gp = generate_cs_problem(ec, 7);
    DenoiserConfig dc;
    dc.kind = DenoiserKind::TvChambolle;
    dc.max_iters = 5000;
    const Denoiser d = make_denoiser(dc, 0.02);
    const double L = gp.fidelity->lipschitz();

    struct Result
    {
        std::vector<std::size_t> t;
        std::vector<double> mean_upper, residual;
        std::vector<Signal> xs;
        double final_snr = 0.0;
        std::string error;
    };
    std::vector<Result> results(gammas.size() * seeds);
    const auto count = static_cast<std::ptrdiff_t>(results.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < count; ++j) {
        const std::size_t g = static_cast<std::size_t>(j) / seeds, seed = static_cast<std::size_t>(j) % seeds + 1;
        auto& res = results[static_cast<std::size_t>(j)];
        SolverConfig cfg;
        cfg.gamma = gammas[g];
        cfg.sigma = 0.02;
        cfg.max_iters = horizon;
        cfg.prox_tol = 1e-7;
        cfg.seed = seed;
        RunOptions opts;
        opts.analysis = true;
        opts.record_every = stride;
        opts.callback = [&](std::size_t, const SolverState& st, const IterateRecord&) { res.xs.push_back(st.x); };
        const auto trace = run(Algorithm::Ipa, {gp.fidelity.get(), &d, &gp.truth}, cfg, opts);
        res.error = trace.error;
        for (const auto& r : trace.records) {
            res.t.push_back(r.k);
            res.mean_upper.push_back(r.s_norm_sq_sum_upper / static_cast<double>(r.k));
            res.residual.push_back(r.normalized_residual);
        }
        res.final_snr = trace.records.empty() ? -1e300 : *trace.records.back().snr_db;
    }
    for (const auto& res : results)
        if (!res.error.empty())
            return {false, "run failed: " + res.error};

    // x* is estimated by the seed mean of the final iterates; R is the largest
    // distance to it over x^0 = 0 and every recorded iterate.
    double r_max = 0.0;
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        Signal x_star = results[g * seeds].xs.back().zeros_like();
        for (std::size_t s = 0; s < seeds; ++s)
            x_star += results[g * seeds + s].xs.back();
        x_star *= 1.0 / seeds;
        r_max = std::max(r_max, x_star.norm());
        for (std::size_t s = 0; s < seeds; ++s)
            for (const auto& x : results[g * seeds + s].xs)
                r_max = std::max(r_max, distance(x, x_star));
    }
    bool bound_ok = true;
    double worst_ratio = 0.0;
    std::vector<double> plateau(gammas.size()), snr(gammas.size());
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        const TheoryParams tp{r_max, L, gammas[g], std::nullopt, std::nullopt};
        const auto& t = results[g * seeds].t;
        for (std::size_t i = 0; i < t.size(); ++i) {
            double sum = 0.0, sq = 0.0;
            for (std::size_t s = 0; s < seeds; ++s) {
                const double m = results[g * seeds + s].mean_upper[i];
                sum += m;
                sq += m * m;
            }
            const double mean = sum / seeds;
            const double se = std::sqrt(std::max(0.0, sq / seeds - mean * mean) / (seeds - 1));
            const double bound = theorem1_bound(tp, t[i]);
            bound_ok = bound_ok && mean <= bound + 2.0 * se;
            worst_ratio = std::max(worst_ratio, mean / bound);
        }
        double acc = 0.0, snr_acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t s = 0; s < seeds; ++s) {
            const auto& res = results[g * seeds + s];
            for (std::size_t i = 0; i < res.t.size(); ++i)
                if (5 * res.t[i] >= 4 * horizon) {
                    acc += res.residual[i];
                    ++cnt;
                }
            snr_acc += res.final_snr;
        }
        plateau[g] = acc / static_cast<double>(cnt);
        snr[g] = snr_acc / seeds;
    }
    const bool decreasing = plateau[0] > plateau[1] && plateau[1] > plateau[2];
    const double ratio = plateau[0] / plateau[2], target_ratio = 1.07e-5 / 3.59e-6;
    const bool ratio_ok = ratio >= target_ratio / 3.0 && ratio <= target_ratio * 3.0;
    const double spread = *std::max_element(snr.begin(), snr.end()) - *std::min_element(snr.begin(), snr.end());
    return {bound_ok && decreasing && ratio_ok && spread <= 0.5,
            fmt("(a) R=%.4g L=%.4g, max mean/bound %.3e; (b) plateau %.3e > %.3e > %.3e, ratio %.2f vs %.2f; "
                "(c) SNR %.2f/%.2f/%.2f dB, spread %.2f dB",
                r_max, L, worst_ratio, plateau[0], plateau[1], plateau[2], ratio, target_ratio, snr[0], snr[1], snr[2],
                spread)};
}

// --- 9 ----------------------------------------------------------------------

Outcome theorem3_envelope_check()
{
    constexpr std::size_t horizon = 200, seeds = 20, rows = 256;
    constexpr double eps = 0.3;
    const Shape s = square(8);
    const std::size_t n = s.size();
    auto model = std::make_shared<ForwardModel>(make_gaussian_model(n, 4 * rows, 4, 31));
    model->set_shape(s);
    Signal truth = synthetic_image("disks", 8);
    truth *= 1.0 / 255.0;
    double m_conv = 1e300;
    for (std::size_t i = 0; i < model->block_count(); ++i) {
        auto y = model->apply_block(i, truth.span());
        const auto e = test::gaussian(y.size(), 40 + i, 0.01);
        for (std::size_t j = 0; j < y.size(); ++j)
            y[j] += e[j];
        model->block(i).set_measurements(std::move(y));
        const Mat a = test::dense_matrix(model->block(i));
        const Eigen::SelfAdjointEigenSolver<Mat> eig(a.transpose() * a);
        m_conv = std::min(m_conv, eig.eigenvalues().minCoeff());
    }
    // gamma such that the contraction condition of theorem3_eta equals 1/4.
    const double gamma = 4.0 * eps / (m_conv * (1.0 + eps - 2.0 * eps * eps));
    const double radius = default_domain_radius(n, 1.0 / 255.0);
    const FidelitySet fs(model, Loss::L2Square, radius);
    const Denoiser d = Denoiser::scaled_smoothing(1.0, eps);
    const auto eta = theorem3_eta(eps, gamma, m_conv);
    const Signal x_star = denoise(d, reference_fixed_point(fs, d, gamma, 5000, 1e-14));

    std::vector<std::vector<double>> dist(seeds, std::vector<double>(horizon + 1));
    double max_x = 0.0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
        SolverConfig cfg;
        cfg.gamma = gamma;
        cfg.max_iters = horizon;
        cfg.prox_tol = 1e-14;
        cfg.seed = seed + 1;
        cfg.selection = IidUniform{};
        RunOptions opts;
        opts.snr = false;
        dist[seed][0] = x_star.norm();
        opts.callback = [&](std::size_t k, const SolverState& st, const IterateRecord&) {
            dist[seed][k] = distance(st.x, x_star);
            max_x = std::max(max_x, st.x.norm());
        };
        run(Algorithm::Ipa, {&fs, &d, nullptr}, cfg, opts);
    }
    double r = 0.0;
    for (const auto& row : dist)
        for (double v : row)
            r = std::max(r, v);
    const TheoryParams tp{r, fs.lipschitz(), gamma, std::nullopt, std::nullopt};
    bool pass = eta.contraction && max_x <= radius;
    double worst = 0.0, final_mean = 0.0;
    for (std::size_t k = 1; k <= horizon; ++k) {
        double mean = 0.0;
        for (const auto& row : dist)
            mean += row[k] / seeds;
        const double env = theorem3_envelope(tp, eta.eta, k);
        pass = pass && mean <= env;
        worst = std::max(worst, mean / env);
        final_mean = mean;
    }
    return {pass, fmt("M=%.4f gamma=%.4g eta=%.4f (condition %.3f), R=%.4g L=%.4g, max mean/envelope %.3e, "
                      "E||x^%zu - x*|| = %.3e",
                      m_conv, gamma, eta.eta, eta.condition, r, fs.lipschitz(), worst, horizon, final_mean)};
}

// --- 10 ---------------------------------------------------------------------

Outcome memory_accounting()
{
    const auto big = make_conv_model(Shape{1024, 1024}, 600, 1, true);
    const auto mid = make_conv_model(Shape{512, 512}, 600, 1, true);
    const double b1 = to_gib(memory_report(big, Algorithm::PnpAdmm).total());
    const double i1 = to_gib(memory_report(big, Algorithm::MinibatchIpa, 60).total());
    const double b2 = to_gib(memory_report(mid, Algorithm::PnpAdmm).total());
    const double i2 = to_gib(memory_report(mid, Algorithm::MinibatchIpa, 60).total());
    const double e1 = std::abs((b1 / i1) / (37.63 / 3.88) - 1.0);
    const double e2 = std::abs((b2 / i2) / (9.41 / 0.97) - 1.0);
    return {e1 <= 0.02 && e2 <= 0.02,
            fmt("1024^2: %.2f/%.2f GiB (ratio error %.2f%%); 512^2: %.2f/%.2f GiB (ratio error %.2f%%)", b1, i1,
                100 * e1, b2, i2, 100 * e2)};
}

// --- 11 ---------------------------------------------------------------------

Outcome snr_metric()
{
    double worst_grid = 0.0, worst_affine = 0.0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Shape s{4 + seed % 7, 5 + seed % 5};
        const Signal truth = test::random_image(s, 500 + seed, 1.0);
        Signal est = linear_combination(1.5 * unit(rng), truth, 0.2 + std::abs(unit(rng)),
                                        test::random_image(s, 700 + seed));
        est += Signal(s, 3.0 * unit(rng));
        const double snr = snr_affine(est, truth);
        worst_grid = std::max(worst_grid, std::abs(snr - test::snr_grid_oracle(est, truth)));
        double a = 5.0 * unit(rng);
        if (std::abs(a) < 0.1)
            a = 0.5;
        Signal mapped = linear_combination(a, est, 0.0, est);
        mapped += Signal(s, 10.0 * unit(rng));
        worst_affine = std::max(worst_affine, std::abs(snr_affine(mapped, truth) - snr));
    }
    return {worst_grid <= 0.01 && worst_affine <= 1e-9,
            fmt("100 cases, max |snr - grid| = %.2e dB, max affine change = %.2e dB", worst_grid, worst_affine)};
}

// --- 12 ---------------------------------------------------------------------

Outcome baseline_ordering()
{
    ExperimentConfig ec;
    ec.problem = ProblemKind::TomoL2;
    ec.images = {"synthetic:phantom"};
    ec.size = 128;
    ec.b = 60;
    ec.noise.input_snr_db = 20.0;
    const auto gp = generate_tomo_problem(ec, 7);
    DenoiserConfig dc;
    dc.kind = DenoiserKind::TvChambolle;
    dc.max_iters = 20000;
    const Denoiser d = make_denoiser(dc, 0.05);

    SolverConfig cfg;
    cfg.gamma = 1.0;
    cfg.sigma = 0.05;
    cfg.seed = 3;
    cfg.max_iters = 300;
    const Problem pb{gp.fidelity.get(), &d, &gp.truth};
    const auto admm = run(Algorithm::PnpAdmm, pb, cfg);
    cfg.max_iters = 600;
    cfg.minibatch_p = 6;
    const auto ipa = run(Algorithm::MinibatchIpa, pb, cfg);
    if (!admm.error.empty() || !ipa.error.empty())
        return {false, "run failed: " + admm.error + ipa.error};

    const std::size_t tail = std::max<std::size_t>(1, admm.records.size() / 5);
    double plateau = 0.0;
    for (std::size_t i = admm.records.size() - tail; i < admm.records.size(); ++i)
        plateau += *admm.records[i].snr_db / static_cast<double>(tail);
    const double target = plateau - 0.8;
    auto first_reach = [&](const RunTrace& tr) -> std::optional<std::uint64_t> {
        for (const auto& r : tr.records)
            if (*r.snr_db >= target)
                return r.block_evals;
        return std::nullopt;
    };
    const auto ea = first_reach(admm), ei = first_reach(ipa);
    const bool pass = ea && ei && *ei < *ea;
    auto show = [](const std::optional<std::uint64_t>& e) { return e ? std::to_string(*e) : std::string("never"); };
    return {pass, fmt("ADMM plateau %.2f dB, target %.2f dB; block evaluations to target: IPA(p=6) %s, ADMM %s; "
                      "final SNR IPA %.2f dB",
                      plateau, target, show(ei).c_str(), show(ea).c_str(), *ipa.records.back().snr_db)};
}

struct Criterion
{
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
};

} // namespace

int main(int argc, char** argv)
{
    kernels::apply_thread_env();
    const std::vector<Criterion> criteria{
        {1, "prox correctness", 10, prox_correctness},
        {2, "firm nonexpansiveness", 120, firm_nonexpansiveness},
        {3, "block deviation lemma", 60, block_deviation},
        {4, "proximal average bound", 60, proximal_average},
        {5, "ADMM/DRS equivalence", 30, admm_drs_equivalence},
        {6, "single-block collapse", 30, collapse_identity},
        {7, "batch bound dominance", 300, theorem2_dominance},
        {8, "incremental bound and gamma trend", 1200, theorem1_dominance},
        {9, "strongly convex envelope", 300, theorem3_envelope_check},
        {10, "memory accounting", 1, memory_accounting},
        {11, "SNR metric", 60, snr_metric},
        {12, "IPA vs PnP-ADMM evaluations", 900, baseline_ordering},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i)
        only.insert(std::stoi(argv[i]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = sec < c.budget_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("[%s] %d %s: %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), sec,
                    in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
