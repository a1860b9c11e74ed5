#include "pnp/errors.hpp"
#include "pnp/fft.hpp"
#include "pnp/operators.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <complex>
#include <filesystem>
#include <numbers>

using namespace pnp;

namespace {

using cd = std::complex<double>;

// Unitary 2-D DFT by direct summation.
std::vector<cd> naive_dft(Shape s, const std::vector<cd>& x, int sign)
{
    std::vector<cd> out(x.size());
    const double pi = std::numbers::pi;
    for (std::size_t p = 0; p < s.height; ++p)
        for (std::size_t q = 0; q < s.width; ++q) {
            cd acc = 0.0;
            for (std::size_t i = 0; i < s.height; ++i)
                for (std::size_t j = 0; j < s.width; ++j) {
                    const double ph = 2.0 * pi *
                                      (static_cast<double>(p * i) / static_cast<double>(s.height) +
                                       static_cast<double>(q * j) / static_cast<double>(s.width));
                    acc += x[i * s.width + j] * std::polar(1.0, sign * ph);
                }
            out[p * s.width + q] = acc / std::sqrt(static_cast<double>(s.size()));
        }
    return out;
}

std::vector<cd> random_complex(std::size_t n, std::uint64_t seed)
{
    const auto re = test::gaussian(n, seed), im = test::gaussian(n, seed + 1);
    std::vector<cd> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = {re[i], im[i]};
    return out;
}

double max_abs(const std::vector<cd>& a, const std::vector<cd>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(Fft, ForwardAndInverseMatchDirectSummation)
{
    const Shape s{5, 6};
    const auto x = random_complex(s.size(), 1);
    auto f = x;
    fft::forward(s, f);
    EXPECT_LT(max_abs(f, naive_dft(s, x, -1)), 1e-12);
    auto g = x;
    fft::inverse(s, g);
    EXPECT_LT(max_abs(g, naive_dft(s, x, +1)), 1e-12);
    fft::inverse(s, f);
    EXPECT_LT(max_abs(f, x), 1e-12);
}

TEST(Fft, MirrorIndexIsNegatedFrequency)
{
    const Shape s{4, 7};
    for (std::size_t k = 0; k < s.size(); ++k) {
        const std::size_t m = fft::mirror_index(s, k);
        EXPECT_EQ((k / s.width + m / s.width) % s.height, 0u);
        EXPECT_EQ((k % s.width + m % s.width) % s.width, 0u);
    }
    EXPECT_DOUBLE_EQ(fft::signed_frequency(3, 8), 3.0 / 8.0);
    EXPECT_DOUBLE_EQ(fft::signed_frequency(5, 8), -3.0 / 8.0);
}

TEST(Operators, ConvBlockIsCircularFilterInFourierDomain)
{
    const Shape s{4, 6};
    const auto h = random_complex(s.size(), 3);
    auto model = make_conv_model(s, {h});
    const auto x = test::gaussian(s.size(), 5);
    const auto out = model.apply_block(0, x);
    ASSERT_EQ(out.size(), 2 * s.size());

    std::vector<cd> xc(x.begin(), x.end());
    auto fx = naive_dft(s, xc, -1);
    for (std::size_t k = 0; k < fx.size(); ++k)
        fx[k] *= h[k];
    const auto ref = naive_dft(s, fx, +1);
    for (std::size_t k = 0; k < s.size(); ++k) {
        EXPECT_NEAR(out[k], ref[k].real(), 1e-12);
        EXPECT_NEAR(out[s.size() + k], ref[k].imag(), 1e-12);
    }
}

TEST(Operators, AdjointIdentityHolds)
{
    auto conv = make_conv_model(Shape{8, 8}, 3, 11);
    auto dense = make_gaussian_model(40, 30, 3, 12);
    for (const ForwardModel* m : {&conv, &dense})
        for (std::size_t i = 0; i < m->block_count(); ++i) {
            const auto x = test::gaussian(m->signal_dim(), 20 + i);
            const auto r = test::gaussian(m->block_rows(i), 30 + i);
            const auto ax = m->apply_block(i, x);
            const auto atr = m->adjoint_block(i, r);
            const double lhs = test::to_eigen(ax).dot(test::to_eigen(r));
            const double rhs = test::to_eigen(x).dot(test::to_eigen(atr));
            EXPECT_NEAR(lhs, rhs, 1e-11 * (1.0 + std::abs(lhs)));
        }
}

TEST(Operators, NormalEqualsAdjointOfApply)
{
    auto conv = make_conv_model(Shape{6, 10}, 2, 4);
    const auto& b = conv.block(1);
    const auto x = test::gaussian(60, 9);
    const auto lhs = b.normal(x);
    const auto rhs = b.adjoint(b.apply(x));
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
}

TEST(Operators, OperatorNormMatchesSvd)
{
    auto dense = make_gaussian_model(50, 40, 2, 21);
    auto conv = make_conv_model(Shape{6, 6}, 1, 22);
    for (const MeasurementBlock* b : {&dense.block(0), &dense.block(1), &conv.block(0)}) {
        const Eigen::JacobiSVD<test::Mat> svd(test::assembled_matrix(*b));
        const double sigma = svd.singularValues()(0);
        EXPECT_NEAR(operator_norm(*b, 2000, 1e-14), sigma, 1e-6 * sigma);
    }
}

TEST(Operators, OperatorNormMonotoneInIterations)
{
    auto model = make_gaussian_model(60, 50, 1, 31);
    double previous = 0.0;
    for (int it : {1, 2, 4, 8, 16, 64}) {
        const double est = block_operator_norm(model, 0, it, 0.0);
        EXPECT_GE(est, previous);
        previous = est;
    }
}

TEST(Operators, GaussianModelPartitionAndVariance)
{
    const std::size_t n = 64, m = 1003, b = 4;
    auto model = make_gaussian_model(n, m, b, 41);
    std::size_t total = 0;
    for (std::size_t i = 0; i < b; ++i)
        total += model.block_rows(i);
    EXPECT_EQ(total, m);
    EXPECT_EQ(model.total_rows(), m);
    EXPECT_EQ(model.block_rows(b - 1), m - 3 * (m / b));
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < b; ++i)
        for (double v : model.block(i).dense_op()->values) {
            sum += v;
            sq += v * v;
            ++count;
        }
    const double var = sq / static_cast<double>(count);
    EXPECT_NEAR(sum / static_cast<double>(count), 0.0, 5.0 / std::sqrt(static_cast<double>(count) * m));
    EXPECT_NEAR(var * static_cast<double>(m), 1.0, 0.02);
}

TEST(Operators, LazyBlocksMatchMaterialized)
{
    auto eager = make_gaussian_model(32, 20, 2, 51);
    auto lazy = make_gaussian_model(32, 20, 2, 51, true);
    EXPECT_TRUE(lazy.is_lazy());
    EXPECT_THROW(lazy.block(0), ValidationError);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto x = test::gaussian(32, 60 + i);
        EXPECT_EQ(eager.apply_block(i, x), lazy.apply_block(i, x));
        EXPECT_EQ(lazy.materialize_block(i).dense_op()->values, eager.block(i).dense_op()->values);
    }
    auto conv_eager = make_conv_model(Shape{4, 4}, 3, 52);
    auto conv_lazy = make_conv_model(Shape{4, 4}, 3, 52, true);
    const auto x = test::gaussian(16, 61);
    EXPECT_EQ(conv_eager.apply_block(2, x), conv_lazy.apply_block(2, x));
}

TEST(Operators, SaveLoadRoundTrip)
{
    const auto dir = std::filesystem::temp_directory_path() / "pnp_model_io";
    std::filesystem::create_directories(dir);
    auto eager = make_gaussian_model(16, 12, 3, 71);
    save_model(eager, dir / "eager.pnpm");
    auto back = load_model(dir / "eager.pnpm");
    ASSERT_EQ(back.block_count(), 3u);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_EQ(back.block(i).dense_op()->values, eager.block(i).dense_op()->values);

    auto lazy = make_conv_model(Shape{4, 8}, 2, 72, true);
    save_model(lazy, dir / "lazy.pnpm");
    const auto size = std::filesystem::file_size(dir / "lazy.pnpm");
    auto lazy_back = load_model(dir / "lazy.pnpm");
    EXPECT_TRUE(lazy_back.is_lazy());
    EXPECT_LT(size, 128u);
    const auto x = test::gaussian(32, 73);
    EXPECT_EQ(lazy_back.apply_block(1, x), lazy.apply_block(1, x));
    std::filesystem::remove_all(dir);
}

TEST(Operators, ErrorsOnBadInput)
{
    auto model = make_gaussian_model(10, 8, 2, 81);
    EXPECT_THROW(model.apply_block(0, std::vector<double>(9)), ShapeError);
    EXPECT_THROW(model.apply_block(2, std::vector<double>(10)), std::exception);
    EXPECT_THROW(model.set_shape(Shape{3, 3}), ShapeError);
    model.set_shape(Shape{2, 5});
    EXPECT_EQ(model.shape(), (Shape{2, 5}));
    EXPECT_THROW(load_model("/nonexistent/model.pnpm"), IoError);
}

TEST(Operators, DenseStructureDetection)
{
    std::vector<double> diag{2, 0, 0, 0, 3, 0, 0, 0, 4};
    std::vector<double> rot{0, 1, 0, 0, 0, 1, 1, 0, 0};
    auto model = make_dense_model(3, {diag, rot, test::gaussian(9, 3)});
    EXPECT_EQ(model.block(0).dense_op()->structure, DenseStructure::Diagonal);
    EXPECT_EQ(model.block(1).dense_op()->structure, DenseStructure::Orthogonal);
    EXPECT_EQ(model.block(2).dense_op()->structure, DenseStructure::General);
}
