#pragma once

// Block-decomposed linear forward models.
//
// A ForwardModel stacks b measurement blocks (A_i, y_i). Two operator kinds
// exist: dense real matrices and circular complex convolutions. Complex
// measurements are kept as stacked [real; imaginary] real vectors so every
// downstream routine works on real vectors only.

#include "pnp/fft.hpp"
#include "pnp/kernels.hpp"
#include "pnp/signal.hpp"

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace pnp {

enum class DenseStructure
{
    General,
    Diagonal,   ///< square with zero off-diagonal entries
    Orthogonal, ///< square with A^T A = I
};

struct DenseReal
{
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; ///< row-major rows x cols
    DenseStructure structure = DenseStructure::General;

    kernels::MatrixView view() const { return {values.data(), rows, cols}; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

/// Circular convolution x -> F^{-1}(h .* F x) with unitary F. Output length
/// is 2n: real parts followed by imaginary parts.
struct ConvComplex
{
    Shape shape;
    std::vector<std::complex<double>> response;
    /// Real symbol of A^T A: (|h(k)|^2 + |h(-k)|^2) / 2.
    std::vector<double> normal_symbol;
};

using BlockOperator = std::variant<DenseReal, ConvComplex>;

class MeasurementBlock
{
public:
    static MeasurementBlock dense(std::size_t rows, std::size_t cols, std::vector<double> values,
                                  std::vector<double> y, std::size_t block_id);
    static MeasurementBlock conv(Shape shape, std::vector<std::complex<double>> response, std::vector<double> y,
                                 std::size_t block_id);

    std::size_t block_id() const { return block_id_; }
    std::size_t input_dim() const;
    /// m_i: length of A_i x (2n for convolution blocks).
    std::size_t output_dim() const;

    const BlockOperator& op() const { return op_; }
    bool is_dense() const { return std::holds_alternative<DenseReal>(op_); }
    const DenseReal* dense_op() const { return std::get_if<DenseReal>(&op_); }
    const ConvComplex* conv_op() const { return std::get_if<ConvComplex>(&op_); }

    const std::vector<double>& y() const { return y_; }
    bool has_measurements() const { return !y_.empty(); }
    void set_measurements(std::vector<double> y);

    std::vector<double> apply(std::span<const double> x) const;
    std::vector<double> adjoint(std::span<const double> r) const;
    /// A^T A x
    std::vector<double> normal(std::span<const double> x) const;

private:
    MeasurementBlock(BlockOperator op, std::vector<double> y, std::size_t block_id);

    BlockOperator op_;
    std::vector<double> y_;
    std::size_t block_id_ = 0;
};

enum class ModelKind : std::uint32_t
{
    Custom = 0,
    Gaussian = 1,
    Convolution = 2,
};

/// Generator parameters that allow blocks to be rebuilt on demand.
struct ModelRecipe
{
    ModelKind kind = ModelKind::Custom;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::size_t m = 0; ///< total rows (Gaussian only)
    std::size_t b = 0;
    std::optional<Shape> shape;
};

class ForwardModel
{
public:
    /// Materialized model from explicit blocks; ids must be 0..b-1 in order.
    ForwardModel(std::vector<MeasurementBlock> blocks, std::optional<Shape> shape = std::nullopt);
    /// Lazy model: only metadata is held, blocks are generated on request.
    static ForwardModel lazy(ModelRecipe recipe);

    std::size_t signal_dim() const { return n_; }
    std::size_t block_count() const { return b_; }
    const std::optional<Shape>& shape() const { return shape_; }
    std::size_t block_rows(std::size_t i) const;
    std::size_t total_rows() const;
    bool is_lazy() const { return lazy_; }
    bool all_dense() const;
    bool all_conv() const;
    const ModelRecipe& recipe() const { return recipe_; }
    void set_recipe(ModelRecipe recipe) { recipe_ = recipe; }
    /// Attach an image shape to a model whose blocks do not carry one.
    void set_shape(std::optional<Shape> shape);

    /// Materialized block; throws for lazy models.
    const MeasurementBlock& block(std::size_t i) const;
    MeasurementBlock& block(std::size_t i);
    /// Materialized block or, for lazy models, a freshly generated copy.
    MeasurementBlock materialize_block(std::size_t i) const;

    std::vector<double> apply_block(std::size_t i, std::span<const double> x) const;
    std::vector<double> adjoint_block(std::size_t i, std::span<const double> r) const;

private:
    ForwardModel() = default;
    void check_index(std::size_t i) const;

    std::vector<MeasurementBlock> blocks_;
    std::size_t n_ = 0;
    std::size_t b_ = 0;
    std::optional<Shape> shape_;
    bool lazy_ = false;
    ModelRecipe recipe_;
};

std::vector<double> apply_block(const ForwardModel& model, std::size_t i, const Signal& x);
Signal adjoint_block(const ForwardModel& model, std::size_t i, std::span<const double> r);

/// Gaussian entries N(0, 1/m), rows partitioned contiguously into b blocks
/// (the last block takes the remainder). Measurements are left empty.
ForwardModel make_gaussian_model(std::size_t n, std::size_t m, std::size_t b, std::uint64_t seed, bool lazy = false);

/// b random smooth complex frequency responses over `shape`.
ForwardModel make_conv_model(Shape shape, std::size_t b, std::uint64_t seed, bool lazy = false);

/// Convolution model with caller-supplied responses (one per block).
ForwardModel make_conv_model(Shape shape, std::vector<std::vector<std::complex<double>>> responses);

/// Dense model from explicit row-major matrices, one per block.
ForwardModel make_dense_model(std::size_t n, const std::vector<std::vector<double>>& matrices);

/// Power-iteration estimate of ||A_i||_2. Monotone nondecreasing in
/// `iterations`; stops early once the relative change drops below `tolerance`.
double block_operator_norm(const ForwardModel& model, std::size_t i, int iterations, double tolerance = 1e-6);
double operator_norm(const MeasurementBlock& block, int iterations, double tolerance = 1e-6);

/// Binary container: magic "PNPM", u32 version, u32 kind, u64 dims, u64 seed,
/// then little-endian f64 payload (omitted for lazy models).
void save_model(const ForwardModel& model, const std::filesystem::path& path);
ForwardModel load_model(const std::filesystem::path& path);

} // namespace pnp
