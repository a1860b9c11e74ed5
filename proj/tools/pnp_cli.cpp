#include "pnp/errors.hpp"
#include "pnp/harness.hpp"
#include "pnp/kernels.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNonConvergence = 2;

std::string shortest(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

pnp::ExperimentConfig config_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                            const std::string& out)
{
    pnp::ExperimentConfig cfg = pnp::load_config(path);
    if (seed)
        cfg.seeds = {*seed};
    if (!out.empty())
        cfg.outputs = out;
    pnp::validate(cfg);
    return cfg;
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const std::string& config, const std::optional<std::uint64_t>& seed, const std::string& out)
{
    const auto cfg = config_with_overrides(config, seed, out);
    std::filesystem::create_directories(cfg.outputs);
    const std::uint64_t s = cfg.problem_seed.value_or(cfg.seeds.front());
    json index = json::array();
    for (const auto& image : cfg.images) {
        const auto gp = pnp::generate_problem(cfg, s, pnp::load_image(cfg, image));
        std::string stem;
        for (char c : image)
            stem.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
        stem += "_s" + std::to_string(s);

        pnp::write_pgm(cfg.outputs / (stem + "_truth.pgm"), gp.truth, cfg.image_scale);
        std::ofstream csv(cfg.outputs / (stem + "_measurements.csv"));
        if (!csv)
            throw pnp::IoError("cannot write measurements for " + image);
        csv << "block,row,y,clean\n";
        std::size_t offset = 0;
        for (std::size_t i = 0; i < gp.model->block_count(); ++i)
            for (std::size_t r = 0; r < gp.model->block_rows(i); ++r, ++offset)
                csv << i << ',' << r << ',' << pnp::format_double(gp.measurements[offset]) << ','
                    << pnp::format_double(gp.clean[offset]) << '\n';

        double signal = 0.0, noise = 0.0;
        std::size_t contaminated = 0;
        for (std::size_t k = 0; k < gp.clean.size(); ++k) {
            const double e = gp.measurements[k] - gp.clean[k];
            signal += gp.clean[k] * gp.clean[k];
            noise += e * e;
            contaminated += e != 0.0;
        }
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < gp.model->block_count(); ++i)
            rows.push_back(gp.model->block_rows(i));
        json meta = {{"image", image},
                     {"seed", s},
                     {"problem", pnp::to_string(cfg.problem)},
                     {"n", gp.truth.size()},
                     {"m", gp.clean.size()},
                     {"b", gp.model->block_count()},
                     {"block_rows", rows},
                     {"loss", pnp::to_string(gp.fidelity->loss())},
                     {"lipschitz", gp.fidelity->lipschitz()},
                     {"contaminated_fraction",
                      static_cast<double>(contaminated) / static_cast<double>(gp.clean.size())}};
        meta["input_snr_db"] = noise > 0.0 ? json(10.0 * std::log10(signal / noise)) : json(nullptr);
        std::ofstream(cfg.outputs / (stem + "_problem.json")) << meta.dump(2) << '\n';
        index.push_back(stem);
    }
    std::cout << json{{"outputs", cfg.outputs.string()}, {"problems", index}}.dump() << '\n';
    return kExitOk;
}

// --- solve ------------------------------------------------------------------

int cmd_solve(const std::string& config, const std::optional<std::uint64_t>& seed, const std::string& out)
{
    const auto cfg = config_with_overrides(config, seed, out);
    const auto result = pnp::run_experiment(cfg);
    bool failed = false;
    for (const auto& rs : result.runs)
        if (rs.terminated == pnp::Termination::Error) {
            failed = true;
            std::cerr << "run " << rs.image << " gamma=" << shortest(rs.gamma) << " seed=" << rs.seed
                      << " failed: " << rs.error << '\n';
        }
    std::cout << (cfg.outputs / "summary.json").string() << '\n';
    return failed ? kExitNonConvergence : kExitOk;
}

// --- bounds -----------------------------------------------------------------

std::vector<std::string> read_header(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw pnp::IoError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line))
        throw pnp::ValidationError(path + " is empty");
    std::vector<std::string> header;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        header.push_back(cell);
    return header;
}

bool has_column(const std::string& path, const std::string& column)
{
    const auto header = read_header(path);
    return std::find(header.begin(), header.end(), column) != header.end();
}

std::vector<double> read_column(const std::string& path, const std::string& column)
{
    std::ifstream in(path);
    if (!in)
        throw pnp::IoError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line))
        throw pnp::ValidationError(path + " is empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            header.push_back(cell);
    }
    const auto it = std::find(header.begin(), header.end(), column);
    if (it == header.end())
        throw pnp::ValidationError(path + " has no '" + column + "' column");
    const auto col = static_cast<std::size_t>(it - header.begin());
    std::vector<double> values;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t c = 0; c <= col && std::getline(ss, cell, ','); ++c) {
        }
        try {
            values.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw pnp::ValidationError(path + ": malformed value '" + cell + "'");
        }
    }
    return values;
}

struct BoundsArgs
{
    pnp::TheoryParams tp;
    std::size_t t = 1;
    std::string trace;
    bool batch = false;
    bool as_json = false;
};

int cmd_bounds(const BoundsArgs& a)
{
    pnp::validate(a.tp);
    if (!a.trace.empty()) {
        // Sampled traces carry a cumulative upper sum; dense ones are summed here.
        std::vector<pnp::BoundReport> rows;
        if (has_column(a.trace, "s_norm_sq_sum_upper")) {
            const auto k = read_column(a.trace, "k");
            const auto sum = read_column(a.trace, "s_norm_sq_sum_upper");
            std::vector<std::size_t> t(k.size());
            std::transform(k.begin(), k.end(), t.begin(), [](double v) { return static_cast<std::size_t>(v); });
            rows = pnp::bound_reports(t, sum, a.tp, !a.batch);
        } else {
            rows = pnp::bound_reports(read_column(a.trace, "s_norm_sq"), a.tp, !a.batch);
        }
        json reports = json::array();
        for (const auto& r : rows)
            reports.push_back(pnp::to_json(r));
        std::cout << reports.dump(2) << '\n';
        return kExitOk;
    }
    const double b1 = pnp::theorem1_bound(a.tp, a.t);
    const double b2 = pnp::theorem2_bound(a.tp, a.t);
    const bool has_eta = a.tp.epsilon && a.tp.M;
    if (!a.as_json && !has_eta) {
        std::cout << shortest(a.batch ? b2 : b1) << '\n';
        return kExitOk;
    }
    json j = {{"t", a.t}, {"theorem1_bound", b1}, {"theorem2_bound", b2}};
    if (has_eta) {
        const auto eta = pnp::theorem3_eta(*a.tp.epsilon, a.tp.gamma, *a.tp.M);
        j["eta"] = eta.eta;
        j["contraction_condition"] = eta.condition;
        j["contraction"] = eta.contraction;
        if (eta.eta > 0.0 && eta.eta < 1.0)
            j["theorem3_envelope"] = pnp::theorem3_envelope(a.tp, eta.eta, a.t);
    }
    std::cout << j.dump(2) << '\n';
    return kExitOk;
}

// --- check ------------------------------------------------------------------

struct CheckArgs
{
    std::string denoiser;
    std::string prox;
    double sigma = 0.1;
    double epsilon = 0.5;
    double gamma = 0.1;
    std::size_t samples = 1000;
    std::size_t n = 1024;
    double tol = 1e-6;
    std::uint64_t seed = 0;
};

int cmd_check(const CheckArgs& a)
{
    if (a.denoiser.empty() == a.prox.empty())
        throw pnp::ValidationError("check needs exactly one of --denoiser or --prox");
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(a.n))));
    pnp::SamplingOptions opts;
    if (side * side == a.n)
        opts.shape = pnp::Shape{side, side};

    pnp::CertificationReport report;
    if (!a.denoiser.empty()) {
        pnp::DenoiserConfig dc;
        if (a.denoiser == "tv")
            dc.kind = pnp::DenoiserKind::TvChambolle;
        else if (a.denoiser == "dct")
            dc.kind = pnp::DenoiserKind::DctSoftThreshold;
        else if (a.denoiser == "smoothing")
            dc.kind = pnp::DenoiserKind::ScaledSmoothing;
        else if (a.denoiser == "averaged")
            dc.kind = pnp::DenoiserKind::AveragedWrap;
        else
            throw pnp::ValidationError("unknown denoiser '" + a.denoiser + "'");
        dc.epsilon = a.epsilon;
        dc.max_iters = 20000;
        const pnp::Denoiser d = pnp::make_denoiser(dc, a.sigma);
        opts.label = d.label();
        report = pnp::certify_firm_nonexpansive([&](const pnp::Signal& v) { return pnp::denoise(d, v); }, a.n,
                                                a.samples, a.seed, a.tol, opts);
    } else {
        pnp::Loss loss;
        if (a.prox == "l1")
            loss = pnp::Loss::L1;
        else if (a.prox == "l2")
            loss = pnp::Loss::L2Square;
        else
            throw pnp::ValidationError("unknown prox '" + a.prox + "'");
        const std::size_t m = std::max<std::size_t>(2, a.n / 2);
        auto model = std::make_shared<pnp::ForwardModel>(pnp::make_gaussian_model(a.n, m, 2, a.seed));
        std::mt19937_64 rng(a.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t i = 0; i < model->block_count(); ++i) {
            std::vector<double> y(model->block_rows(i));
            for (double& v : y)
                v = gauss(rng);
            model->block(i).set_measurements(std::move(y));
        }
        const pnp::FidelitySet fs(model, loss, pnp::default_domain_radius(a.n));
        opts.label = std::string("prox_full(") + pnp::to_string(loss) + ", gamma=" + shortest(a.gamma) + ")";
        // Tight inner tolerance so that inexactness stays below the check tolerance.
        report = pnp::certify_firm_nonexpansive(
            [&](const pnp::Signal& z) { return pnp::prox_full(fs, a.gamma, z, 1e-12); }, a.n, a.samples, a.seed,
            a.tol, opts);
    }
    std::cout << pnp::to_json(report).dump(2) << '\n';
    return report.pass ? kExitOk : kExitInvalid;
}

} // namespace

int main(int argc, char** argv)
{
    pnp::kernels::apply_thread_env();

    CLI::App app{"Incremental plug-and-play ADMM reconstruction toolkit"};
    app.require_subcommand(1);

    std::string config, out;
    std::optional<std::uint64_t> seed;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "run a single seed instead of the configured list");
        sub->add_option("--out", out, "output directory (overrides the config)");
    };
    auto* gen = app.add_subcommand("generate", "write ground truth, measurements and problem metadata");
    add_common(gen);
    auto* solve = app.add_subcommand("solve", "run the configured experiment");
    add_common(solve);

    BoundsArgs ba;
    double epsilon = 0.0, big_m = 0.0;
    auto* bounds = app.add_subcommand("bounds", "evaluate the convergence bounds");
    bounds->add_option("--R", ba.tp.R, "iterate radius R")->required();
    bounds->add_option("--L", ba.tp.L, "Lipschitz constant L")->required();
    bounds->add_option("--gamma", ba.tp.gamma, "penalty parameter")->required();
    auto* t_opt = bounds->add_option("--t", ba.t, "iteration count t");
    auto* eps_opt = bounds->add_option("--epsilon", epsilon, "denoiser contraction parameter");
    auto* m_opt = bounds->add_option("--M", big_m, "strong convexity constant");
    bounds->add_option("--trace", ba.trace, "residual CSV with an s_norm_sq column");
    bounds->add_flag("--batch", ba.batch, "use the batch (PnP-ADMM) bound");
    bounds->add_flag("--json", ba.as_json, "print all quantities as JSON");
    eps_opt->needs(m_opt);
    m_opt->needs(eps_opt);

    CheckArgs ca;
    auto* check = app.add_subcommand("check", "certify firm nonexpansiveness of a denoiser or prox");
    check->add_option("--denoiser", ca.denoiser, "tv, dct, smoothing or averaged");
    check->add_option("--prox", ca.prox, "l1 or l2");
    check->add_option("--sigma", ca.sigma, "denoiser strength");
    check->add_option("--epsilon", ca.epsilon, "smoothing contraction parameter");
    check->add_option("--gamma", ca.gamma, "prox penalty parameter");
    check->add_option("--samples", ca.samples, "sampled pairs");
    check->add_option("--n", ca.n, "signal dimension");
    check->add_option("--tol", ca.tol, "violation tolerance");
    check->add_option("--seed", ca.seed, "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitInvalid;
    }

    try {
        if (*gen)
            return cmd_generate(config, seed, out);
        if (*solve)
            return cmd_solve(config, seed, out);
        if (*bounds) {
            if (*eps_opt) {
                ba.tp.epsilon = epsilon;
                ba.tp.M = big_m;
            }
            if (ba.trace.empty() && !*t_opt)
                throw pnp::ValidationError("bounds needs --t or --trace");
            return cmd_bounds(ba);
        }
        if (*check)
            return cmd_check(ca);
    } catch (const pnp::NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNonConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitInvalid;
}
