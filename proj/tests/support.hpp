#pragma once

// Shared fixtures: small random models and independent reference routines.

#include "pnp/analysis.hpp"
#include "pnp/denoisers.hpp"
#include "pnp/fidelity.hpp"
#include "pnp/operators.hpp"

#include <Eigen/Dense>

#include <memory>
#include <random>
#include <vector>

namespace pnp::test {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double sd = 1.0, double mean = 0.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(mean, sd);
    std::vector<double> v(n);
    for (auto& x : v)
        x = dist(rng);
    return v;
}

inline Signal random_signal(std::size_t n, std::uint64_t seed, double sd = 1.0)
{
    return Signal(gaussian(n, seed, sd));
}

inline Signal random_image(Shape shape, std::uint64_t seed, double sd = 1.0)
{
    return Signal(gaussian(shape.size(), seed, sd), shape);
}

inline Vec to_eigen(const Signal& s) { return Eigen::Map<const Vec>(s.values().data(), static_cast<Eigen::Index>(s.size())); }
inline Vec to_eigen(const std::vector<double>& s)
{
    return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
}

/// Row-major entries of a dense block as an Eigen matrix.
inline Mat dense_matrix(const MeasurementBlock& block)
{
    const auto& d = *block.dense_op();
    Mat a(static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d.at(i, j);
    return a;
}

/// Matrix of any block, assembled column by column from apply().
inline Mat assembled_matrix(const MeasurementBlock& block)
{
    const std::size_t n = block.input_dim();
    Mat a(static_cast<Eigen::Index>(block.output_dim()), static_cast<Eigen::Index>(n));
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        a.col(static_cast<Eigen::Index>(j)) = to_eigen(block.apply(e));
        e[j] = 0.0;
    }
    return a;
}

struct Toy
{
    std::shared_ptr<ForwardModel> model;
    std::shared_ptr<FidelitySet> fidelity;
};

/// b dense Gaussian blocks with the given row counts and random measurements.
inline Toy dense_toy(std::size_t n, const std::vector<std::size_t>& rows, Loss loss, std::uint64_t seed,
                     std::optional<Shape> shape = std::nullopt, double radius = 10.0)
{
    std::vector<std::vector<double>> mats;
    for (std::size_t i = 0; i < rows.size(); ++i)
        mats.push_back(gaussian(rows[i] * n, seed * 131 + i, 1.0 / std::sqrt(static_cast<double>(rows[i]))));
    auto model = std::make_shared<ForwardModel>(make_dense_model(n, mats));
    if (shape)
        model->set_shape(shape);
    for (std::size_t i = 0; i < rows.size(); ++i)
        model->block(i).set_measurements(gaussian(rows[i], seed * 977 + i));
    return {model, std::make_shared<FidelitySet>(model, loss, radius)};
}

/// Identity forward model with measurements y (one block).
inline Toy identity_toy(const std::vector<double>& y, Loss loss)
{
    const std::size_t n = y.size();
    std::vector<double> eye(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        eye[i * n + i] = 1.0;
    auto model = std::make_shared<ForwardModel>(make_dense_model(n, {eye}));
    model->block(0).set_measurements(y);
    return {model, std::make_shared<FidelitySet>(model, loss, 10.0)};
}

inline double soft_threshold(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

/// Exact prox of rho ||y - A x||_1 by enumerating every active set of the
/// dual box QP  min 1/2 ||A^T u||^2 - <u, A z - y>,  |u_i| <= rho,
/// keeping the candidate that satisfies the KKT conditions. x = z - A^T u.
inline Vec l1_prox_enumerated(const Mat& a, const Vec& y, double rho, const Vec& z)
{
    const Eigen::Index m = a.rows();
    const Mat g = a * a.transpose();
    const Vec c = a * z - y;
    std::vector<int> state(static_cast<std::size_t>(m), 0); // 0 free, 1 upper, 2 lower
    const double tol = 1e-11 * (1.0 + c.cwiseAbs().maxCoeff());
    for (;;) {
        std::vector<Eigen::Index> free;
        Vec u = Vec::Zero(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            if (state[static_cast<std::size_t>(i)] == 0)
                free.push_back(i);
            else
                u(i) = state[static_cast<std::size_t>(i)] == 1 ? rho : -rho;
        }
        bool ok = true;
        if (!free.empty()) {
            const auto f = static_cast<Eigen::Index>(free.size());
            Mat gff(f, f);
            Vec rhs(f);
            for (Eigen::Index p = 0; p < f; ++p) {
                rhs(p) = c(free[static_cast<std::size_t>(p)]);
                for (Eigen::Index i = 0; i < m; ++i)
                    if (state[static_cast<std::size_t>(i)] != 0)
                        rhs(p) -= g(free[static_cast<std::size_t>(p)], i) * u(i);
                for (Eigen::Index q = 0; q < f; ++q)
                    gff(p, q) = g(free[static_cast<std::size_t>(p)], free[static_cast<std::size_t>(q)]);
            }
            const Vec uf = gff.ldlt().solve(rhs);
            for (Eigen::Index p = 0; p < f; ++p) {
                if (std::abs(uf(p)) > rho + tol)
                    ok = false;
                u(free[static_cast<std::size_t>(p)]) = uf(p);
            }
        }
        if (ok) {
            // Gradient of the dual objective must push clamped entries outward.
            const Vec grad = g * u - c;
            for (Eigen::Index i = 0; i < m && ok; ++i) {
                const int s = state[static_cast<std::size_t>(i)];
                if (s == 1 && grad(i) > tol)
                    ok = false;
                if (s == 2 && grad(i) < -tol)
                    ok = false;
            }
        }
        if (ok)
            return z - a.transpose() * u;
        std::size_t i = 0;
        while (i < state.size() && state[i] == 2)
            state[i++] = 0;
        if (i == state.size())
            throw std::runtime_error("no KKT point found");
        ++state[i];
    }
}

/// Affine-fit SNR by zooming 2-D grid search over (a, c) with offset
/// b = mean(truth) - a mean(est) + c, which decouples the two variables. The
/// initial window follows from Cauchy-Schwarz: |a| <= std(truth) / std(est).
inline double snr_grid_oracle(const Signal& est, const Signal& truth)
{
    const std::size_t n = truth.size();
    double mx = 0, mt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += est[i];
        mt += truth[i];
    }
    mx /= static_cast<double>(n);
    mt /= static_cast<double>(n);
    double vx = 0, vt = 0;
    for (std::size_t i = 0; i < n; ++i) {
        vx += (est[i] - mx) * (est[i] - mx);
        vt += (truth[i] - mt) * (truth[i] - mt);
    }
    const double amax = vx > 0 ? std::sqrt(vt / vx) : 0.0;
    double ca = 0.0, cb = 0.0;
    double wa = 1.2 * amax + 1e-12, wb = 1.0 + std::abs(mt) + amax * std::abs(mx);
    const double tnorm = truth.norm();
    double best = -std::numeric_limits<double>::infinity();
    for (int level = 0; level < 16; ++level) {
        double ba = ca, bb = cb;
        for (int i = -20; i <= 20; ++i)
            for (int j = -20; j <= 20; ++j) {
                const double a = ca + wa * i / 20.0;
                const double b = mt - a * mx + cb + wb * j / 20.0;
                double err = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double r = truth[k] - a * est[k] - b;
                    err += r * r;
                }
                const double snr = 20.0 * std::log10(tnorm / std::sqrt(err));
                if (snr > best) {
                    best = snr;
                    ba = a;
                    bb = b - (mt - a * mx);
                }
            }
        ca = ba;
        cb = bb;
        wa /= 4.0;
        wb /= 4.0;
    }
    return best;
}

} // namespace pnp::test
