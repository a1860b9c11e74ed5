#pragma once

// Data-fidelity terms g_i and their proximal operators.
//
// The full fidelity is g = (1/b) sum_i g_i, so prox_full uses block weights
// 1/b while prox_block applies prox of the unweighted g_i.
//
//   L2Square: g_i(x) = 1/2 ||y_i - A_i x||^2
//   L1:       g_i(x) = ||y_i - A_i x||_1

#include "pnp/operators.hpp"
#include "pnp/signal.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pnp {

enum class Loss
{
    L2Square,
    L1,
};

const char* to_string(Loss loss);

/// Relative CG residual used for L2Square proxes when no tolerance is given.
inline constexpr double kDefaultCgTolerance = 1e-10;
/// Duality-gap target for the L1 inner solver when no tolerance is given.
inline constexpr double kDefaultGapTolerance = 1e-8;
inline constexpr int kMaxInnerIterations = 5000;

double default_tolerance(Loss loss);

namespace detail {

struct GramCache
{
    std::once_flag once;
    std::vector<double> gram; ///< row-major m x m, A A^T
    double lipschitz = 0.0;   ///< upper estimate of lambda_max(A A^T)
    bool available = false;
};

struct BlockCache
{
    std::vector<double> aty; ///< A_i^T y_i
    double norm = 0.0;       ///< ||A_i||_2 estimate
    GramCache gram;
};

} // namespace detail

struct FidelityBlock
{
    std::size_t index = 0;
    const MeasurementBlock* block = nullptr;
    Loss loss = Loss::L2Square;
    double lipschitz = 0.0;
    std::shared_ptr<detail::BlockCache> cache;
};

/// Warm-start storage for the iterative L1 inner solver, keyed by the set of
/// blocks a prox was evaluated on. Results stay deterministic for a fixed
/// call sequence.
struct ProxWorkspace
{
    std::map<std::string, std::vector<double>> duals;
    std::size_t inner_iterations = 0;
};

class FidelitySet
{
public:
    /// Builds one block per model block with the given loss. Lipschitz
    /// constants come from lipschitz_bound unless supplied explicitly.
    FidelitySet(std::shared_ptr<const ForwardModel> model, Loss loss, double domain_radius,
                std::optional<std::vector<double>> lipschitz = std::nullopt);

    const ForwardModel& model() const { return *model_; }
    std::shared_ptr<const ForwardModel> model_ptr() const { return model_; }
    std::size_t block_count() const { return blocks_.size(); }
    const FidelityBlock& block(std::size_t i) const { return blocks_.at(i); }
    const std::vector<FidelityBlock>& blocks() const { return blocks_; }
    Loss loss() const { return loss_; }
    /// L = max_i L_i
    double lipschitz() const { return lipschitz_; }
    double domain_radius() const { return domain_radius_; }
    std::size_t signal_dim() const { return model_->signal_dim(); }

    /// Cache for the stacked operator of all blocks (used by prox_full).
    detail::GramCache& full_gram() const { return full_cache_->gram; }
    double full_operator_norm() const;

private:
    std::shared_ptr<const ForwardModel> model_;
    std::vector<FidelityBlock> blocks_;
    Loss loss_;
    double lipschitz_ = 0.0;
    double domain_radius_ = 0.0;
    struct FullCache
    {
        detail::GramCache gram;
        std::once_flag norm_once;
        double norm = 0.0;
    };
    std::shared_ptr<FullCache> full_cache_;
};

/// Default domain radius for L2Square Lipschitz accounting: 255 sqrt(n),
/// scaled by the image intensity scale.
double default_domain_radius(std::size_t n, double intensity_scale = 1.0);

/// prox_{gamma g_i}(z). `tol` <= 0 selects the loss default.
Signal prox_block(const FidelityBlock& fb, double gamma, const Signal& z, double tol = 0.0,
                  ProxWorkspace* ws = nullptr);

/// prox_{gamma g}(z) with g = (1/b) sum g_i.
Signal prox_full(const FidelitySet& fs, double gamma, const Signal& z, double tol = 0.0, ProxWorkspace* ws = nullptr);

/// (1/b) sum_i prox_{gamma g_i}(z)
Signal prox_average(const FidelitySet& fs, double gamma, const Signal& z, double tol = 0.0,
                    ProxWorkspace* ws = nullptr);

/// (1/p) sum_j prox_{gamma g_{i_j}}(z). Block proxes may run concurrently;
/// the reduction is over sorted indices so the result is order-independent.
Signal minibatch_prox(const FidelitySet& fs, double gamma, const Signal& z, std::span<const std::size_t> indices,
                      double tol = 0.0, ProxWorkspace* ws = nullptr);

/// Upper bound on subgradient norms of g_i over ||x|| <= domain_radius.
double lipschitz_bound(const MeasurementBlock& block, Loss loss, double domain_radius, double operator_norm);
double lipschitz_bound(const FidelityBlock& fb, double domain_radius);

/// Gradient of the L2Square block loss, A_i^T (A_i x - y_i).
Signal block_gradient(const FidelityBlock& fb, const Signal& x);
/// Value of g_i at x.
double block_value(const FidelityBlock& fb, const Signal& x);

} // namespace pnp
