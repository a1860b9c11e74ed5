#include "pnp/operators.hpp"

#include "pnp/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

namespace pnp {

namespace {

DenseStructure classify_dense(std::size_t rows, std::size_t cols, const std::vector<double>& a)
{
    if (rows != cols)
        return DenseStructure::General;
    const std::size_t n = rows;
    bool diagonal = true;
    for (std::size_t i = 0; i < n && diagonal; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && a[i * n + j] != 0.0) {
                diagonal = false;
                break;
            }
    if (diagonal)
        return DenseStructure::Diagonal;
    if (n > 256)
        return DenseStructure::General;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p; q < n; ++q) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                acc += a[i * n + p] * a[i * n + q];
            if (std::abs(acc - (p == q ? 1.0 : 0.0)) > 1e-12)
                return DenseStructure::General;
        }
    return DenseStructure::Orthogonal;
}

std::vector<double> normal_symbol(Shape shape, const std::vector<std::complex<double>>& h)
{
    std::vector<double> sym(h.size());
    for (std::size_t k = 0; k < h.size(); ++k)
        sym[k] = 0.5 * (std::norm(h[k]) + std::norm(h[fft::mirror_index(shape, k)]));
    return sym;
}

std::mt19937_64 block_rng(std::uint64_t seed, std::size_t block, std::uint64_t salt)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(salt)};
    return std::mt19937_64(seq);
}

std::size_t gaussian_block_rows(std::size_t m, std::size_t b, std::size_t i)
{
    const std::size_t base = m / b;
    return i + 1 == b ? m - base * (b - 1) : base;
}

MeasurementBlock generate_gaussian_block(const ModelRecipe& r, std::size_t i)
{
    const std::size_t rows = gaussian_block_rows(r.m, r.b, i);
    auto rng = block_rng(r.seed, i, 0x6a05);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(r.m)));
    std::vector<double> values(rows * r.n);
    for (double& v : values)
        v = dist(rng);
    return MeasurementBlock::dense(rows, r.n, std::move(values), {}, i);
}

// Smooth low-pass pupil with a random centre offset and a random
// smooth (linear + quadratic) phase.
std::vector<std::complex<double>> random_response(Shape shape, std::uint64_t seed, std::size_t i)
{
    auto rng = block_rng(seed, i, 0xc0de);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double radius = 0.2 * std::sqrt(unit(rng));
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double cx = radius * std::cos(angle);
    const double cy = radius * std::sin(angle);
    const double width = 0.12 + 0.08 * unit(rng);
    const double curvature = 2.0 * unit(rng) - 1.0;
    const double shift_x = 4.0 * unit(rng) - 2.0;
    const double shift_y = 4.0 * unit(rng) - 2.0;

    std::vector<std::complex<double>> h(shape.size());
    for (std::size_t r = 0; r < shape.height; ++r) {
        const double fy = fft::signed_frequency(r, shape.height);
        for (std::size_t c = 0; c < shape.width; ++c) {
            const double fx = fft::signed_frequency(c, shape.width);
            const double d2 = (fx - cx) * (fx - cx) + (fy - cy) * (fy - cy);
            const double magnitude = std::exp(-d2 / (2.0 * width * width));
            const double phase =
                2.0 * std::numbers::pi * (4.0 * curvature * (fx * fx + fy * fy) + shift_x * fx + shift_y * fy);
            h[r * shape.width + c] = std::polar(magnitude, phase);
        }
    }
    return h;
}

MeasurementBlock generate_conv_block(const ModelRecipe& r, std::size_t i)
{
    return MeasurementBlock::conv(*r.shape, random_response(*r.shape, r.seed, i), {}, i);
}

} // namespace

// ---------------------------------------------------------------------------
// MeasurementBlock

MeasurementBlock::MeasurementBlock(BlockOperator op, std::vector<double> y, std::size_t block_id)
    : op_(std::move(op)), block_id_(block_id)
{
    set_measurements(std::move(y));
}

MeasurementBlock MeasurementBlock::dense(std::size_t rows, std::size_t cols, std::vector<double> values,
                                         std::vector<double> y, std::size_t block_id)
{
    if (rows == 0 || cols == 0)
        throw ValidationError("dense block needs at least one row and one column");
    if (values.size() != rows * cols)
        throw ShapeError("dense block: " + std::to_string(values.size()) + " values for a " + std::to_string(rows) +
                         "x" + std::to_string(cols) + " matrix");
    if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); }))
        throw ValidationError("dense block has non-finite entries");
    DenseReal op{rows, cols, std::move(values), DenseStructure::General};
    op.structure = classify_dense(rows, cols, op.values);
    return MeasurementBlock(std::move(op), std::move(y), block_id);
}

MeasurementBlock MeasurementBlock::conv(Shape shape, std::vector<std::complex<double>> response, std::vector<double> y,
                                        std::size_t block_id)
{
    if (shape.size() == 0)
        throw ValidationError("convolution block needs a non-empty shape");
    if (response.size() != shape.size())
        throw ShapeError("convolution response length does not match shape");
    for (const auto& v : response)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw ValidationError("convolution response has non-finite entries");
    auto sym = normal_symbol(shape, response);
    return MeasurementBlock(ConvComplex{shape, std::move(response), std::move(sym)}, std::move(y), block_id);
}

std::size_t MeasurementBlock::input_dim() const
{
    return std::visit(
        [](const auto& op) -> std::size_t {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, DenseReal>)
                return op.cols;
            else
                return op.shape.size();
        },
        op_);
}

std::size_t MeasurementBlock::output_dim() const
{
    return std::visit(
        [](const auto& op) -> std::size_t {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, DenseReal>)
                return op.rows;
            else
                return 2 * op.shape.size();
        },
        op_);
}

void MeasurementBlock::set_measurements(std::vector<double> y)
{
    if (!y.empty() && y.size() != output_dim())
        throw ShapeError("measurement vector has length " + std::to_string(y.size()) + ", block expects " +
                         std::to_string(output_dim()));
    y_ = std::move(y);
}

std::vector<double> MeasurementBlock::apply(std::span<const double> x) const
{
    require_size(x.size(), input_dim(), "apply_block");
    if (const auto* d = dense_op()) {
        std::vector<double> out(d->rows);
        kernels::gemv(d->view(), x, out);
        return out;
    }
    const auto& c = *conv_op();
    const std::size_t n = c.shape.size();
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft::forward(c.shape, buf);
    for (std::size_t k = 0; k < n; ++k)
        buf[k] *= c.response[k];
    fft::inverse(c.shape, buf);
    std::vector<double> out(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = buf[k].real();
        out[n + k] = buf[k].imag();
    }
    return out;
}

std::vector<double> MeasurementBlock::adjoint(std::span<const double> r) const
{
    require_size(r.size(), output_dim(), "adjoint_block");
    if (const auto* d = dense_op()) {
        std::vector<double> out(d->cols);
        kernels::gemv_t(d->view(), r, out);
        return out;
    }
    const auto& c = *conv_op();
    const std::size_t n = c.shape.size();
    std::vector<std::complex<double>> buf(n);
    for (std::size_t k = 0; k < n; ++k)
        buf[k] = {r[k], r[n + k]};
    fft::forward(c.shape, buf);
    for (std::size_t k = 0; k < n; ++k)
        buf[k] *= std::conj(c.response[k]);
    fft::inverse(c.shape, buf);
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = buf[k].real();
    return out;
}

std::vector<double> MeasurementBlock::normal(std::span<const double> x) const
{
    if (dense_op())
        return adjoint(apply(x));
    require_size(x.size(), input_dim(), "normal operator");
    const auto& c = *conv_op();
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft::forward(c.shape, buf);
    for (std::size_t k = 0; k < buf.size(); ++k)
        buf[k] *= c.normal_symbol[k];
    fft::inverse(c.shape, buf);
    std::vector<double> out(buf.size());
    for (std::size_t k = 0; k < buf.size(); ++k)
        out[k] = buf[k].real();
    return out;
}

// ---------------------------------------------------------------------------
// ForwardModel

void ForwardModel::set_shape(std::optional<Shape> shape)
{
    if (shape && shape->size() != n_)
        throw ShapeError("model shape does not match the signal dimension");
    shape_ = shape;
    recipe_.shape = shape;
}

ForwardModel::ForwardModel(std::vector<MeasurementBlock> blocks, std::optional<Shape> shape)
    : blocks_(std::move(blocks)), shape_(shape)
{
    if (blocks_.empty())
        throw ValidationError("forward model needs at least one block");
    b_ = blocks_.size();
    n_ = blocks_.front().input_dim();
    for (std::size_t i = 0; i < b_; ++i) {
        if (blocks_[i].block_id() != i)
            throw ValidationError("block ids must be exactly 0..b-1 in order");
        if (blocks_[i].input_dim() != n_)
            throw ShapeError("all blocks must share the signal dimension");
    }
    if (!shape_)
        if (const auto* c = blocks_.front().conv_op())
            shape_ = c->shape;
    if (shape_ && shape_->size() != n_)
        throw ShapeError("model shape does not match signal dimension");
    recipe_.n = n_;
    recipe_.b = b_;
    recipe_.m = total_rows();
    recipe_.shape = shape_;
}

ForwardModel ForwardModel::lazy(ModelRecipe recipe)
{
    if (recipe.kind == ModelKind::Custom)
        throw ValidationError("lazy models need a generator recipe");
    ForwardModel model;
    model.lazy_ = true;
    model.recipe_ = recipe;
    model.n_ = recipe.n;
    model.b_ = recipe.b;
    model.shape_ = recipe.shape;
    return model;
}

void ForwardModel::check_index(std::size_t i) const
{
    if (i >= b_)
        throw ShapeError("block index " + std::to_string(i) + " out of range for b=" + std::to_string(b_));
}

std::size_t ForwardModel::block_rows(std::size_t i) const
{
    check_index(i);
    if (!lazy_)
        return blocks_[i].output_dim();
    if (recipe_.kind == ModelKind::Gaussian)
        return gaussian_block_rows(recipe_.m, recipe_.b, i);
    return 2 * n_;
}

std::size_t ForwardModel::total_rows() const
{
    std::size_t m = 0;
    for (std::size_t i = 0; i < b_; ++i)
        m += block_rows(i);
    return m;
}

bool ForwardModel::all_dense() const
{
    if (lazy_)
        return recipe_.kind == ModelKind::Gaussian;
    return std::all_of(blocks_.begin(), blocks_.end(), [](const auto& blk) { return blk.is_dense(); });
}

bool ForwardModel::all_conv() const
{
    if (lazy_)
        return recipe_.kind == ModelKind::Convolution;
    return std::none_of(blocks_.begin(), blocks_.end(), [](const auto& blk) { return blk.is_dense(); });
}

const MeasurementBlock& ForwardModel::block(std::size_t i) const
{
    check_index(i);
    if (lazy_)
        throw ValidationError("lazy model: use materialize_block()");
    return blocks_[i];
}

MeasurementBlock& ForwardModel::block(std::size_t i)
{
    check_index(i);
    if (lazy_)
        throw ValidationError("lazy model: use materialize_block()");
    return blocks_[i];
}

MeasurementBlock ForwardModel::materialize_block(std::size_t i) const
{
    check_index(i);
    if (!lazy_)
        return blocks_[i];
    if (recipe_.kind == ModelKind::Gaussian)
        return generate_gaussian_block(recipe_, i);
    return generate_conv_block(recipe_, i);
}

std::vector<double> ForwardModel::apply_block(std::size_t i, std::span<const double> x) const
{
    check_index(i);
    if (lazy_)
        return materialize_block(i).apply(x);
    return blocks_[i].apply(x);
}

std::vector<double> ForwardModel::adjoint_block(std::size_t i, std::span<const double> r) const
{
    check_index(i);
    if (lazy_)
        return materialize_block(i).adjoint(r);
    return blocks_[i].adjoint(r);
}

std::vector<double> apply_block(const ForwardModel& model, std::size_t i, const Signal& x)
{
    return model.apply_block(i, x.span());
}

Signal adjoint_block(const ForwardModel& model, std::size_t i, std::span<const double> r)
{
    Signal out(model.adjoint_block(i, r));
    if (model.shape())
        out.set_shape(model.shape());
    return out;
}

// ---------------------------------------------------------------------------
// Factories

ForwardModel make_gaussian_model(std::size_t n, std::size_t m, std::size_t b, std::uint64_t seed, bool lazy)
{
    if (n == 0 || m == 0 || b == 0)
        throw ValidationError("make_gaussian_model: n, m and b must be positive");
    if (b > m)
        throw ValidationError("make_gaussian_model: more blocks than rows");
    ModelRecipe recipe{ModelKind::Gaussian, seed, n, m, b, std::nullopt};
    if (lazy)
        return ForwardModel::lazy(recipe);
    std::vector<MeasurementBlock> blocks;
    blocks.reserve(b);
    for (std::size_t i = 0; i < b; ++i)
        blocks.push_back(generate_gaussian_block(recipe, i));
    ForwardModel model(std::move(blocks));
    model.set_recipe(recipe);
    return model;
}

ForwardModel make_conv_model(Shape shape, std::size_t b, std::uint64_t seed, bool lazy)
{
    if (b == 0 || shape.size() == 0)
        throw ValidationError("make_conv_model: b and shape must be positive");
    ModelRecipe recipe{ModelKind::Convolution, seed, shape.size(), 2 * shape.size() * b, b, shape};
    if (lazy)
        return ForwardModel::lazy(recipe);
    std::vector<MeasurementBlock> blocks;
    blocks.reserve(b);
    for (std::size_t i = 0; i < b; ++i)
        blocks.push_back(generate_conv_block(recipe, i));
    ForwardModel model(std::move(blocks), shape);
    model.set_recipe(recipe);
    return model;
}

ForwardModel make_conv_model(Shape shape, std::vector<std::vector<std::complex<double>>> responses)
{
    std::vector<MeasurementBlock> blocks;
    for (std::size_t i = 0; i < responses.size(); ++i)
        blocks.push_back(MeasurementBlock::conv(shape, std::move(responses[i]), {}, i));
    return ForwardModel(std::move(blocks), shape);
}

ForwardModel make_dense_model(std::size_t n, const std::vector<std::vector<double>>& matrices)
{
    std::vector<MeasurementBlock> blocks;
    for (std::size_t i = 0; i < matrices.size(); ++i) {
        if (matrices[i].size() % n != 0)
            throw ShapeError("make_dense_model: matrix size is not a multiple of n");
        blocks.push_back(MeasurementBlock::dense(matrices[i].size() / n, n, matrices[i], {}, i));
    }
    return ForwardModel(std::move(blocks));
}

// ---------------------------------------------------------------------------
// Norm estimation

double operator_norm(const MeasurementBlock& block, int iterations, double tolerance)
{
    if (iterations < 1)
        throw ValidationError("operator norm needs at least one iteration");
    const std::size_t n = block.input_dim();
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j)
        v[j] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(j));
    double vnorm = kernels::norm(v);
    kernels::scale(1.0 / vnorm, v);

    // Rayleigh quotient ||A v|| / ||v|| is nondecreasing along the power
    // iteration on A^T A.
    double estimate = 0.0;
    for (int it = 0; it < iterations; ++it) {
        auto w = block.normal(v);
        const double rayleigh = std::sqrt(std::max(0.0, kernels::dot(v, w)));
        const double previous = estimate;
        estimate = std::max(estimate, rayleigh);
        const double wnorm = kernels::norm(w);
        if (wnorm == 0.0)
            break;
        kernels::scale(1.0 / wnorm, w);
        v = std::move(w);
        if (it > 0 && std::abs(estimate - previous) <= tolerance * estimate)
            break;
    }
    return estimate;
}

double block_operator_norm(const ForwardModel& model, std::size_t i, int iterations, double tolerance)
{
    if (model.is_lazy())
        return operator_norm(model.materialize_block(i), iterations, tolerance);
    return operator_norm(model.block(i), iterations, tolerance);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'P', 'N', 'P', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagLazy = 1;
constexpr std::uint32_t kFlagShape = 2;
constexpr std::uint32_t kTagDense = 1;
constexpr std::uint32_t kTagConv = 2;

class Writer
{
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void u32(std::uint32_t v) { raw(v, 4); }
    void u64(std::uint64_t v) { raw(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

private:
    void raw(std::uint64_t v, int bytes)
    {
        char buf[8];
        for (int i = 0; i < bytes; ++i)
            buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        os_.write(buf, bytes);
    }
    std::ostream& os_;
};

class Reader
{
public:
    explicit Reader(std::istream& is) : is_(is) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
    std::uint64_t u64() { return raw(8); }
    double f64() { return std::bit_cast<double>(u64()); }

private:
    std::uint64_t raw(int bytes)
    {
        unsigned char buf[8];
        is_.read(reinterpret_cast<char*>(buf), bytes);
        if (!is_)
            throw IoError("model file truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i)
            v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return v;
    }
    std::istream& is_;
};

} // namespace

void save_model(const ForwardModel& model, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    Writer w(os);
    os.write(kMagic, 4);
    w.u32(kVersion);
    const auto& recipe = model.recipe();
    w.u32(static_cast<std::uint32_t>(recipe.kind));
    std::uint32_t flags = 0;
    if (model.is_lazy())
        flags |= kFlagLazy;
    if (model.shape())
        flags |= kFlagShape;
    w.u32(flags);
    w.u64(model.signal_dim());
    w.u64(model.total_rows());
    w.u64(model.block_count());
    w.u64(model.shape() ? model.shape()->height : 0);
    w.u64(model.shape() ? model.shape()->width : 0);
    w.u64(recipe.seed);
    if (!model.is_lazy()) {
        for (std::size_t i = 0; i < model.block_count(); ++i) {
            const auto& blk = model.block(i);
            if (const auto* d = blk.dense_op()) {
                w.u32(kTagDense);
                w.u64(d->rows);
                w.u64(d->cols);
                for (double v : d->values)
                    w.f64(v);
            } else {
                const auto& c = *blk.conv_op();
                w.u32(kTagConv);
                w.u64(c.shape.height);
                w.u64(c.shape.width);
                for (const auto& v : c.response) {
                    w.f64(v.real());
                    w.f64(v.imag());
                }
            }
            w.u64(blk.y().size());
            for (double v : blk.y())
                w.f64(v);
        }
    }
    if (!os)
        throw IoError("write failed for " + path.string());
}

ForwardModel load_model(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(path.string() + " is not a PNPM model file");
    Reader r(is);
    const auto version = r.u32();
    if (version != kVersion)
        throw IoError("unsupported PNPM version " + std::to_string(version));
    ModelRecipe recipe;
    recipe.kind = static_cast<ModelKind>(r.u32());
    const auto flags = r.u32();
    recipe.n = r.u64();
    recipe.m = r.u64();
    recipe.b = r.u64();
    const auto height = r.u64();
    const auto width = r.u64();
    recipe.seed = r.u64();
    if (flags & kFlagShape)
        recipe.shape = Shape{height, width};
    if (flags & kFlagLazy)
        return ForwardModel::lazy(recipe);

    std::vector<MeasurementBlock> blocks;
    for (std::size_t i = 0; i < recipe.b; ++i) {
        const auto tag = r.u32();
        std::optional<MeasurementBlock> blk;
        if (tag == kTagDense) {
            const auto rows = r.u64();
            const auto cols = r.u64();
            std::vector<double> values(rows * cols);
            for (double& v : values)
                v = r.f64();
            blk = MeasurementBlock::dense(rows, cols, std::move(values), {}, i);
        } else if (tag == kTagConv) {
            Shape shape{r.u64(), r.u64()};
            std::vector<std::complex<double>> response(shape.size());
            for (auto& v : response) {
                const double re = r.f64();
                const double im = r.f64();
                v = {re, im};
            }
            blk = MeasurementBlock::conv(shape, std::move(response), {}, i);
        } else {
            throw IoError("unknown block tag in " + path.string());
        }
        std::vector<double> y(r.u64());
        for (double& v : y)
            v = r.f64();
        blk->set_measurements(std::move(y));
        blocks.push_back(std::move(*blk));
    }
    ForwardModel model(std::move(blocks), recipe.shape);
    model.set_recipe(recipe);
    return model;
}

} // namespace pnp
