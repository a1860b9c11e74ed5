#include "pnp/harness.hpp"

#include "pnp/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace pnp {

using nlohmann::json;

ProblemKind problem_kind_from_string(const std::string& s)
{
    if (s == "cs_l1")
        return ProblemKind::CsL1;
    if (s == "tomo_l2")
        return ProblemKind::TomoL2;
    throw ValidationError("unknown problem '" + s + "' (expected cs_l1 or tomo_l2)");
}

const char* to_string(ProblemKind k) { return k == ProblemKind::CsL1 ? "cs_l1" : "tomo_l2"; }

DenoiserKind denoiser_kind_from_string(const std::string& s)
{
    for (auto k : {DenoiserKind::TvChambolle, DenoiserKind::DctSoftThreshold, DenoiserKind::ScaledSmoothing,
                   DenoiserKind::AveragedWrap})
        if (s == to_string(k))
            return k;
    throw ValidationError("unknown denoiser '" + s + "'");
}

// --- config -----------------------------------------------------------------

void validate(const ExperimentConfig& cfg)
{
    if (cfg.seeds.empty())
        throw ValidationError("config: seeds must be a nonempty list");
    if (cfg.images.empty())
        throw ValidationError("config: at least one image is required");
    if (cfg.size < 2)
        throw ValidationError("config: size must be at least 2");
    if (cfg.b < 1)
        throw ValidationError("config: b must be at least 1");
    if (!(cfg.image_scale > 0.0))
        throw ValidationError("config: image_scale must be positive");
    if (cfg.record_every < 1)
        throw ValidationError("config: record_every must be at least 1");
    if (!(cfg.noise.awgn_std >= 0.0))
        throw ValidationError("config: awgn_std must be nonnegative");
    if (cfg.problem == ProblemKind::CsL1) {
        if (cfg.noise.input_snr_db)
            throw ValidationError("config: cs_l1 noise is given by awgn_std and sparse_ratio, not input_snr_db");
        if (cfg.noise.sparse_ratio && !(*cfg.noise.sparse_ratio >= 0.0 && *cfg.noise.sparse_ratio <= 1.0))
            throw ValidationError("config: sparse_ratio must lie in [0, 1]");
        const std::size_t n = cfg.size * cfg.size;
        const std::size_t m = cfg.m.value_or(static_cast<std::size_t>(std::lround(cfg.measurement_ratio * n)));
        if (m < cfg.b)
            throw ValidationError("config: need at least one measurement row per block");
    } else {
        if (cfg.noise.sparse_ratio || cfg.noise.awgn_std > 0.0)
            throw ValidationError("config: tomo_l2 noise is given by input_snr_db only");
    }
    for (double g : cfg.gammas)
        if (!(g > 0.0))
            throw ValidationError("config: gammas must be positive");
    SolverConfig probe = cfg.solver;
    if (!cfg.gammas.empty())
        probe.gamma = cfg.gammas.front();
    validate(probe, cfg.b);
}

namespace {

SelectionRule parse_selection(const json& j)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "epoch_shuffle")
            return EpochShuffle{};
        if (s == "iid_uniform")
            return IidUniform{};
        throw ValidationError("unknown selection rule '" + s + "'");
    }
    if (j.is_object() && j.contains("fixed"))
        return FixedSchedule{j.at("fixed").get<std::vector<std::vector<std::size_t>>>()};
    throw ValidationError("selection must be a string or {\"fixed\": [[...], ...]}");
}

json selection_json(const SelectionRule& rule)
{
    if (std::holds_alternative<IidUniform>(rule))
        return "iid_uniform";
    if (std::holds_alternative<EpochShuffle>(rule))
        return "epoch_shuffle";
    return json{{"fixed", std::get<FixedSchedule>(rule).steps}};
}

template <typename T>
void read_opt(const json& j, const char* key, T& out)
{
    if (j.contains(key))
        out = j.at(key).get<T>();
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out)
{
    if (j.contains(key) && !j.at(key).is_null())
        out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
        if (!ok)
            throw ValidationError(std::string("config: unknown key '") + it.key() + "' in " + where);
    }
}

} // namespace

ExperimentConfig parse_config(const json& j)
{
    try {
        if (!j.is_object())
            throw ValidationError("config must be a JSON object");
        reject_unknown(j,
                       {"problem", "image", "images", "size", "m", "measurement_ratio", "b", "noise", "image_scale",
                        "domain_radius", "denoiser", "algorithm", "solver", "gammas", "seeds", "problem_seed",
                        "analysis", "record_every", "outputs"},
                       "top level");
        ExperimentConfig cfg;
        if (j.contains("problem"))
            cfg.problem = problem_kind_from_string(j.at("problem").get<std::string>());
        if (j.contains("image"))
            cfg.images = {j.at("image").get<std::string>()};
        read_opt(j, "images", cfg.images);
        read_opt(j, "size", cfg.size);
        read_opt(j, "m", cfg.m);
        read_opt(j, "measurement_ratio", cfg.measurement_ratio);
        read_opt(j, "b", cfg.b);
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            reject_unknown(n, {"awgn_std", "sparse_ratio", "input_snr_db"}, "noise");
            read_opt(n, "awgn_std", cfg.noise.awgn_std);
            read_opt(n, "sparse_ratio", cfg.noise.sparse_ratio);
            read_opt(n, "input_snr_db", cfg.noise.input_snr_db);
        }
        read_opt(j, "image_scale", cfg.image_scale);
        read_opt(j, "domain_radius", cfg.domain_radius);
        if (j.contains("denoiser")) {
            const auto& d = j.at("denoiser");
            reject_unknown(d, {"kind", "epsilon", "max_iters", "dual_tol", "base", "box"}, "denoiser");
            if (d.contains("kind"))
                cfg.denoiser.kind = denoiser_kind_from_string(d.at("kind").get<std::string>());
            read_opt(d, "epsilon", cfg.denoiser.epsilon);
            read_opt(d, "max_iters", cfg.denoiser.max_iters);
            read_opt(d, "dual_tol", cfg.denoiser.dual_tol);
            if (d.contains("base"))
                cfg.denoiser.base = denoiser_kind_from_string(d.at("base").get<std::string>());
            if (d.contains("box")) {
                const auto box = d.at("box").get<std::vector<double>>();
                if (box.size() != 2)
                    throw ValidationError("denoiser box must be [lo, hi]");
                cfg.denoiser.box = Box{box[0], box[1]};
            }
        }
        if (j.contains("algorithm"))
            cfg.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            reject_unknown(s,
                           {"gamma", "sigma", "minibatch_p", "max_iters", "selection", "seed", "prox_tol",
                            "step_size", "residual_threshold"},
                           "solver");
            read_opt(s, "gamma", cfg.solver.gamma);
            read_opt(s, "sigma", cfg.solver.sigma);
            read_opt(s, "minibatch_p", cfg.solver.minibatch_p);
            read_opt(s, "max_iters", cfg.solver.max_iters);
            if (s.contains("selection"))
                cfg.solver.selection = parse_selection(s.at("selection"));
            read_opt(s, "seed", cfg.solver.seed);
            read_opt(s, "prox_tol", cfg.solver.prox_tol);
            read_opt(s, "step_size", cfg.solver.step_size);
            read_opt(s, "residual_threshold", cfg.solver.residual_threshold);
        }
        read_opt(j, "gammas", cfg.gammas);
        read_opt(j, "seeds", cfg.seeds);
        read_opt(j, "problem_seed", cfg.problem_seed);
        read_opt(j, "analysis", cfg.analysis);
        read_opt(j, "record_every", cfg.record_every);
        if (j.contains("outputs"))
            cfg.outputs = j.at("outputs").get<std::string>();
        validate(cfg);
        return cfg;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

json to_json(const ExperimentConfig& cfg)
{
    json noise = {{"awgn_std", cfg.noise.awgn_std}};
    if (cfg.noise.sparse_ratio)
        noise["sparse_ratio"] = *cfg.noise.sparse_ratio;
    if (cfg.noise.input_snr_db)
        noise["input_snr_db"] = *cfg.noise.input_snr_db;
    json den = {{"kind", to_string(cfg.denoiser.kind)},
                {"epsilon", cfg.denoiser.epsilon},
                {"max_iters", cfg.denoiser.max_iters},
                {"dual_tol", cfg.denoiser.dual_tol}};
    if (cfg.denoiser.base)
        den["base"] = to_string(*cfg.denoiser.base);
    if (cfg.denoiser.box)
        den["box"] = {cfg.denoiser.box->lo, cfg.denoiser.box->hi};
    json solver = {{"gamma", cfg.solver.gamma},
                   {"sigma", cfg.solver.sigma},
                   {"minibatch_p", cfg.solver.minibatch_p},
                   {"max_iters", cfg.solver.max_iters},
                   {"selection", selection_json(cfg.solver.selection)},
                   {"seed", cfg.solver.seed},
                   {"prox_tol", cfg.solver.prox_tol}};
    if (cfg.solver.step_size)
        solver["step_size"] = *cfg.solver.step_size;
    if (cfg.solver.residual_threshold)
        solver["residual_threshold"] = *cfg.solver.residual_threshold;
    json j = {{"problem", to_string(cfg.problem)},
              {"images", cfg.images},
              {"size", cfg.size},
              {"measurement_ratio", cfg.measurement_ratio},
              {"b", cfg.b},
              {"noise", noise},
              {"image_scale", cfg.image_scale},
              {"denoiser", den},
              {"algorithm", to_string(cfg.algorithm)},
              {"solver", solver},
              {"gammas", cfg.gammas},
              {"seeds", cfg.seeds},
              {"analysis", cfg.analysis},
              {"record_every", cfg.record_every},
              {"outputs", cfg.outputs.string()}};
    if (cfg.m)
        j["m"] = *cfg.m;
    if (cfg.domain_radius)
        j["domain_radius"] = *cfg.domain_radius;
    if (cfg.problem_seed)
        j["problem_seed"] = *cfg.problem_seed;
    return j;
}

Denoiser make_denoiser(const DenoiserConfig& dc, double sigma)
{
    auto simple = [&](DenoiserKind kind) {
        switch (kind) {
        case DenoiserKind::TvChambolle:
            return Denoiser::tv(sigma, dc.max_iters, dc.dual_tol);
        case DenoiserKind::DctSoftThreshold:
            return Denoiser::dct(sigma);
        case DenoiserKind::ScaledSmoothing:
            return Denoiser::scaled_smoothing(sigma, dc.epsilon);
        case DenoiserKind::AveragedWrap:
            break;
        }
        throw ValidationError("averaged denoiser cannot wrap another averaged denoiser");
    };
    Denoiser d = dc.kind == DenoiserKind::AveragedWrap
                     ? Denoiser::averaged(simple(dc.base.value_or(DenoiserKind::DctSoftThreshold)))
                     : simple(dc.kind);
    if (dc.box)
        d = d.with_box(*dc.box);
    return d;
}

// --- synthetic images -------------------------------------------------------

const std::vector<std::string>& synthetic_names()
{
    static const std::vector<std::string> names{"edges",   "disks",   "blobs",    "checker",
                                                "stripes", "ramp",    "rings",    "squares",
                                                "texture", "triangle", "cross",   "phantom"};
    return names;
}

namespace {

struct Ellipse
{
    double value, a, b, x0, y0, phi;
};

double pattern(std::size_t id, double u, double w)
{
    const double pi = std::numbers::pi;
    auto inside = [&](double cx, double cy, double r) { return (u - cx) * (u - cx) + (w - cy) * (w - cy) < r * r; };
    switch (id) {
    case 0:
        return 40.0 + 120.0 * (u > 0.5) + 80.0 * (w > 0.35);
    case 1:
        return inside(0.35, 0.4, 0.2) ? 200.0 : inside(0.7, 0.7, 0.15) ? 140.0 : 30.0;
    case 2: {
        auto g = [&](double cx, double cy, double s) {
            return std::exp(-((u - cx) * (u - cx) + (w - cy) * (w - cy)) / (2.0 * s * s));
        };
        return 20.0 + 200.0 * g(0.3, 0.3, 0.1) + 150.0 * g(0.7, 0.4, 0.15) + 120.0 * g(0.45, 0.75, 0.08);
    }
    case 3:
        return ((static_cast<int>(u * 8.0) + static_cast<int>(w * 8.0)) % 2) ? 190.0 : 60.0;
    case 4:
        return 128.0 + 100.0 * std::sin(2.0 * pi * (6.0 * u + 2.0 * w));
    case 5:
        return 255.0 * (0.6 * u + 0.4 * w);
    case 6:
        return 128.0 + 100.0 * std::cos(2.0 * pi * 8.0 * std::hypot(u - 0.5, w - 0.5));
    case 7: {
        const int level = static_cast<int>(std::max(std::abs(u - 0.5), std::abs(w - 0.5)) * 8.0);
        return 40.0 + 50.0 * (level % 4);
    }
    case 8: {
        double acc = 0.0;
        const double freq[5] = {3.0, 5.0, 7.0, 11.0, 13.0};
        const double angle[5] = {0.3, 1.1, 2.0, 2.7, 0.8};
        const double phase[5] = {0.0, 1.3, 2.1, 0.4, 3.0};
        for (int k = 0; k < 5; ++k)
            acc += std::sin(2.0 * pi * freq[k] * (u * std::cos(angle[k]) + w * std::sin(angle[k])) + phase[k]);
        return 128.0 + 22.0 * acc;
    }
    case 9: {
        // Vertices (0.5, 0.15), (0.15, 0.85), (0.85, 0.85).
        const bool in = w > 0.15 && w < 0.85 && std::abs(u - 0.5) < 0.5 * (w - 0.15);
        return in ? 210.0 : 45.0;
    }
    case 10:
        return (std::abs(u - 0.5) < 0.1 || std::abs(w - 0.5) < 0.1) ? 220.0 : 50.0;
    case 11: {
        static const Ellipse ellipses[] = {
            {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
            {-0.2, 0.11, 0.31, 0.22, 0.0, -0.3142},  {-0.2, 0.16, 0.41, -0.22, 0.0, 0.3142},
            {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
            {0.1, 0.046, 0.023, -0.08, -0.605, 0.0}, {0.1, 0.046, 0.023, 0.06, -0.605, 0.0},
        };
        const double x = 2.0 * u - 1.0, y = 1.0 - 2.0 * w;
        double acc = 0.0;
        for (const auto& e : ellipses) {
            const double c = std::cos(e.phi), s = std::sin(e.phi);
            const double xr = (x - e.x0) * c + (y - e.y0) * s;
            const double yr = -(x - e.x0) * s + (y - e.y0) * c;
            if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0)
                acc += e.value;
        }
        return 20.0 + 200.0 * acc;
    }
    default:
        return 0.0;
    }
}

std::size_t synthetic_index(const std::string& id)
{
    const auto& names = synthetic_names();
    if (auto it = std::find(names.begin(), names.end(), id); it != names.end())
        return static_cast<std::size_t>(it - names.begin());
    if (!id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isdigit(c); })) {
        const auto idx = std::stoul(id);
        if (idx < names.size())
            return idx;
    }
    throw ValidationError("unknown synthetic image '" + id + "'");
}

} // namespace

Signal synthetic_image(const std::string& id, std::size_t size)
{
    const std::size_t idx = synthetic_index(id);
    Signal img(Shape{size, size});
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
            const double u = (static_cast<double>(j) + 0.5) / static_cast<double>(size);
            const double w = (static_cast<double>(i) + 0.5) / static_cast<double>(size);
            img[i * size + j] = std::clamp(pattern(idx, u, w), 0.0, 255.0);
        }
    return img;
}

// --- PGM --------------------------------------------------------------------

void write_pgm(const std::filesystem::path& path, const Signal& image, double scale)
{
    const Shape shape = image.shape_or_row();
    if (!(scale > 0.0))
        throw ValidationError("pgm scale must be positive");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "P5\n" << shape.width << " " << shape.height << "\n255\n";
    std::vector<unsigned char> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        bytes[i] = static_cast<unsigned char>(std::clamp(std::lround(image[i] / scale), 0L, 255L));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("failed writing " + path.string());
}

Signal read_pgm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    auto token = [&]() {
        std::string t;
        while (in) {
            int c = in.get();
            if (c == '#') {
                while (in && c != '\n')
                    c = in.get();
                continue;
            }
            if (std::isspace(c)) {
                if (!t.empty())
                    return t;
                continue;
            }
            if (c == EOF)
                break;
            t.push_back(static_cast<char>(c));
        }
        return t;
    };
    if (token() != "P5")
        throw IoError(path.string() + ": not a binary PGM");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    if (w == 0 || h == 0 || maxval != 255)
        throw IoError(path.string() + ": only 8-bit PGM images are supported");
    std::vector<unsigned char> bytes(w * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError(path.string() + ": truncated pixel data");
    Signal img(Shape{h, w});
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img[i] = bytes[i];
    return img;
}

// --- problems ---------------------------------------------------------------

Signal load_image(const ExperimentConfig& cfg, const std::string& image)
{
    Signal img;
    const std::string prefix = "synthetic:";
    if (image.rfind(prefix, 0) == 0)
        img = synthetic_image(image.substr(prefix.size()), cfg.size);
    else
        img = read_pgm(image);
    img *= cfg.image_scale;
    return img;
}

namespace {

std::mt19937_64 noise_rng(std::uint64_t seed)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

void attach(GeneratedProblem& gp, const ExperimentConfig& cfg, Loss loss)
{
    std::size_t offset = 0;
    for (std::size_t i = 0; i < gp.model->block_count(); ++i) {
        const std::size_t mi = gp.model->block_rows(i);
        gp.model->block(i).set_measurements(
            std::vector<double>(gp.measurements.begin() + static_cast<std::ptrdiff_t>(offset),
                                gp.measurements.begin() + static_cast<std::ptrdiff_t>(offset + mi)));
        offset += mi;
    }
    const double radius = cfg.domain_radius.value_or(default_domain_radius(gp.truth.size(), cfg.image_scale));
    gp.fidelity = std::make_shared<FidelitySet>(gp.model, loss, radius);
}

void forward_all(GeneratedProblem& gp)
{
    gp.clean.clear();
    for (std::size_t i = 0; i < gp.model->block_count(); ++i) {
        auto part = gp.model->apply_block(i, gp.truth.span());
        gp.clean.insert(gp.clean.end(), part.begin(), part.end());
    }
}

} // namespace

GeneratedProblem generate_cs_problem(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const std::optional<Signal>& truth)
{
    if (cfg.problem != ProblemKind::CsL1)
        throw ValidationError("generate_cs_problem needs a cs_l1 config");
    GeneratedProblem gp;
    gp.truth = truth ? *truth : load_image(cfg, cfg.images.front());
    const std::size_t n = gp.truth.size();
    const std::size_t m = cfg.m.value_or(static_cast<std::size_t>(std::lround(cfg.measurement_ratio * n)));
    gp.model = std::make_shared<ForwardModel>(make_gaussian_model(n, m, cfg.b, seed));
    gp.model->set_shape(gp.truth.shape());
    forward_all(gp);

    auto rng = noise_rng(seed);
    const double ratio = cfg.noise.sparse_ratio.value_or(1.0);
    const double std_dev = cfg.noise.awgn_std * cfg.image_scale;
    std::bernoulli_distribution hit(ratio);
    std::normal_distribution<double> gauss(0.0, 1.0);
    gp.measurements = gp.clean;
    for (auto& y : gp.measurements) {
        const bool contaminated = hit(rng);
        const double e = gauss(rng);
        if (contaminated && std_dev > 0.0)
            y += std_dev * e;
    }
    attach(gp, cfg, Loss::L1);
    return gp;
}

GeneratedProblem generate_tomo_problem(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const std::optional<Signal>& truth)
{
    if (cfg.problem != ProblemKind::TomoL2)
        throw ValidationError("generate_tomo_problem needs a tomo_l2 config");
    GeneratedProblem gp;
    gp.truth = truth ? *truth : load_image(cfg, cfg.images.front());
    const Shape shape = gp.truth.shape_or_row();
    gp.model = std::make_shared<ForwardModel>(make_conv_model(shape, cfg.b, seed));
    forward_all(gp);

    gp.measurements = gp.clean;
    if (cfg.noise.input_snr_db) {
        auto rng = noise_rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> e(gp.clean.size());
        for (auto& v : e)
            v = gauss(rng);
        // Rescale so that 10 log10(||Ax||^2 / ||e||^2) hits the target exactly.
        const double target = kernels::norm(gp.clean) * std::pow(10.0, -*cfg.noise.input_snr_db / 20.0);
        const double scale = target / kernels::norm(e);
        for (std::size_t i = 0; i < e.size(); ++i)
            gp.measurements[i] += scale * e[i];
    }
    attach(gp, cfg, Loss::L2Square);
    return gp;
}

GeneratedProblem generate_problem(const ExperimentConfig& cfg, std::uint64_t seed, const std::optional<Signal>& truth)
{
    return cfg.problem == ProblemKind::CsL1 ? generate_cs_problem(cfg, seed, truth)
                                            : generate_tomo_problem(cfg, seed, truth);
}

// --- traces -----------------------------------------------------------------

std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "k,normalized_residual,snr_db,elapsed_s,memory_bytes\n";
    for (const auto& r : trace.records)
        out << r.k << ',' << format_double(r.normalized_residual) << ','
            << (r.snr_db ? format_double(*r.snr_db) : std::string()) << ',' << format_double(r.elapsed_s) << ','
            << r.memory_bytes << '\n';
    if (!out)
        throw IoError("failed writing " + path.string());
}

void write_residual_csv(const std::filesystem::path& path, const RunTrace& trace)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "k,s_norm_sq,v_norm_sq,s_norm_sq_sum_upper,xz_gap,block_evals\n";
    for (const auto& r : trace.records)
        out << r.k << ',' << format_double(r.s_norm_sq) << ',' << format_double(r.v_norm_sq) << ','
            << format_double(r.s_norm_sq_sum_upper) << ',' << format_double(r.xz_gap) << ',' << r.block_evals
            << '\n';
}

json to_json(const CertificationReport& r)
{
    return {{"op_label", r.op_label},
            {"sampled_pairs", r.sampled_pairs},
            {"max_cocoercivity_violation", r.max_cocoercivity_violation},
            {"max_lipschitz_ratio", r.max_lipschitz_ratio},
            {"tolerance", r.tolerance},
            {"verdict", r.pass ? "pass" : "fail"}};
}

json to_json(const BoundReport& r)
{
    return {{"t", r.t},
            {"empirical_mean_residual", r.empirical_mean_residual},
            {"theorem1_bound", r.theorem1_bound},
            {"slack", r.slack}};
}

json to_json(const MemoryReport& r)
{
    return {{"a_real_bytes", r.a_real},
            {"a_imag_bytes", r.a_imag},
            {"y_bytes", r.y},
            {"others_bytes", r.others},
            {"total_bytes", r.total()},
            {"total_gib", to_gib(r.total())}};
}

double plateau_residual(const RunTrace& trace)
{
    std::vector<double> values;
    for (const auto& r : trace.records)
        if (std::isfinite(r.normalized_residual))
            values.push_back(r.normalized_residual);
    if (values.empty())
        return std::numeric_limits<double>::quiet_NaN();
    const std::size_t tail = std::max<std::size_t>(1, values.size() / 5);
    double acc = 0.0;
    for (std::size_t i = values.size() - tail; i < values.size(); ++i)
        acc += values[i];
    return acc / static_cast<double>(tail);
}

// --- experiment driver ------------------------------------------------------

namespace {

std::string sanitize(const std::string& s)
{
    std::string out;
    for (char c : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

json stats_json(const std::vector<double>& v)
{
    if (v.empty())
        return nullptr;
    double sum = 0.0;
    for (double x : v)
        sum += x;
    return {{"mean", sum / static_cast<double>(v.size())},
            {"min", *std::min_element(v.begin(), v.end())},
            {"max", *std::max_element(v.begin(), v.end())}};
}

struct Task
{
    std::size_t image, gamma, seed;
};

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    validate(cfg);
    std::filesystem::create_directories(cfg.outputs);
    const std::vector<double> gammas = cfg.gammas.empty() ? std::vector<double>{cfg.solver.gamma} : cfg.gammas;

    std::vector<Signal> truths;
    for (const auto& img : cfg.images)
        truths.push_back(load_image(cfg, img));
    std::vector<std::optional<GeneratedProblem>> shared(cfg.images.size());
    if (cfg.problem_seed)
        for (std::size_t i = 0; i < truths.size(); ++i)
            shared[i] = generate_problem(cfg, *cfg.problem_seed, truths[i]);

    std::vector<Task> tasks;
    for (std::size_t i = 0; i < cfg.images.size(); ++i)
        for (std::size_t g = 0; g < gammas.size(); ++g)
            for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
                tasks.push_back({i, g, s});

    std::vector<RunSummary> runs(tasks.size());
    std::optional<MemoryReport> memory, memory_batch;
    const auto count = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < count; ++t) {
        const Task task = tasks[static_cast<std::size_t>(t)];
        RunSummary& rs = runs[static_cast<std::size_t>(t)];
        rs.image = cfg.images[task.image];
        rs.seed = cfg.seeds[task.seed];
        rs.gamma = gammas[task.gamma];
        try {
            const GeneratedProblem local =
                shared[task.image] ? GeneratedProblem{} : generate_problem(cfg, rs.seed, truths[task.image]);
            const GeneratedProblem& gp = shared[task.image] ? *shared[task.image] : local;
            SolverConfig sc = cfg.solver;
            sc.gamma = rs.gamma;
            sc.seed = rs.seed;
            const Denoiser den = make_denoiser(cfg.denoiser, sc.sigma);
            const std::size_t p = cfg.algorithm == Algorithm::Ipa ? 1 : sc.minibatch_p;
            const MemoryReport mem = memory_report(*gp.model, cfg.algorithm, p);
            RunOptions opts;
            opts.analysis = cfg.analysis;
            opts.memory_bytes = mem.total();
            opts.record_every = cfg.record_every;
            const RunTrace trace = run(cfg.algorithm, {gp.fidelity.get(), &den, &gp.truth}, sc, opts);

            const std::string stem = sanitize(rs.image) + "_" + to_string(cfg.algorithm) + "_g" +
                                     std::to_string(task.gamma) + "_s" + std::to_string(rs.seed);
            rs.csv = cfg.outputs / (stem + ".csv");
            write_trace_csv(rs.csv, trace);
            if (cfg.analysis)
                write_residual_csv(cfg.outputs / (stem + "_residual.csv"), trace);
            write_pgm(cfg.outputs / (stem + ".pgm"), trace.final_state.x, cfg.image_scale);
            rs.iterations = trace.records.empty() ? 0 : trace.records.back().k;
            if (!trace.records.empty())
                rs.final_snr_db = trace.records.back().snr_db;
            rs.plateau_residual = plateau_residual(trace);
            rs.terminated = trace.terminated;
            rs.error = trace.error;
#pragma omp critical(pnp_memory)
            if (!memory) {
                memory = mem;
                memory_batch = memory_report(*gp.model, Algorithm::PnpAdmm, 1);
            }
        } catch (const std::exception& e) {
            rs.terminated = Termination::Error;
            rs.error = e.what();
        }
    }

    json per_gamma = json::array();
    for (std::size_t g = 0; g < gammas.size(); ++g) {
        std::vector<double> snr, plateau;
        std::size_t errors = 0, total = 0;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (tasks[t].gamma != g)
                continue;
            ++total;
            const auto& rs = runs[t];
            if (rs.terminated == Termination::Error)
                ++errors;
            if (rs.final_snr_db && std::isfinite(*rs.final_snr_db))
                snr.push_back(*rs.final_snr_db);
            if (std::isfinite(rs.plateau_residual))
                plateau.push_back(rs.plateau_residual);
        }
        per_gamma.push_back({{"gamma", gammas[g]},
                             {"runs", total},
                             {"errors", errors},
                             {"final_snr_db", stats_json(snr)},
                             {"plateau_residual", stats_json(plateau)}});
    }
    json run_list = json::array();
    for (const auto& rs : runs) {
        json r = {{"image", rs.image},
                  {"seed", rs.seed},
                  {"gamma", rs.gamma},
                  {"iterations", rs.iterations},
                  {"terminated", to_string(rs.terminated)},
                  {"csv", rs.csv.filename().string()}};
        r["final_snr_db"] = rs.final_snr_db ? json(*rs.final_snr_db) : json(nullptr);
        r["plateau_residual"] = std::isfinite(rs.plateau_residual) ? json(rs.plateau_residual) : json(nullptr);
        if (!rs.error.empty())
            r["error"] = rs.error;
        run_list.push_back(std::move(r));
    }
    ExperimentResult result;
    result.runs = std::move(runs);
    result.summary = {{"config", to_json(cfg)}, {"gammas", per_gamma}, {"runs", run_list}};
    if (memory) {
        result.summary["memory"] = {{to_string(cfg.algorithm), to_json(*memory)},
                                    {to_string(Algorithm::PnpAdmm), to_json(*memory_batch)}};
    }
    std::ofstream out(cfg.outputs / "summary.json");
    if (!out)
        throw IoError("cannot write summary.json");
    out << result.summary.dump(2) << '\n';
    return result;
}

} // namespace pnp
