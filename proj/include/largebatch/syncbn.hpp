#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "largebatch/collective.hpp"
#include "largebatch/tensor.hpp"

namespace largebatch {

inline constexpr double kDefaultBnEpsilon = 1e-5;

// Batch norm over [batch, features] inputs with no running averages. Eval
// statistics come only from the most recent training minibatch of each
// worker, averaged across workers by sync_statistics().
struct BnLayerState {
    Tensor gamma;
    Tensor beta;
    std::optional<Tensor> last_mean;
    std::optional<Tensor> last_var;  // biased (divisor = batch)
    std::optional<Tensor> synced_mean;
    std::optional<Tensor> synced_var;

    explicit BnLayerState(std::size_t features);
    BnLayerState(Tensor gamma, Tensor beta);

    std::size_t features() const noexcept { return gamma.size(); }
    bool has_batch_statistics() const noexcept { return last_mean.has_value() && last_var.has_value(); }
    bool has_synced_statistics() const noexcept { return synced_mean.has_value() && synced_var.has_value(); }
};

// How per-worker variances are combined. `simple` averages them; `pooled`
// adds the spread of worker means (law of total variance, equal batches).
enum class VarianceCombine { simple, pooled };

VarianceCombine parse_variance_combine(std::string_view name);
std::string_view to_string(VarianceCombine mode);

// Normalizes with the batch's own statistics, records them as last_mean /
// last_var and drops any synced statistics. Requires batch >= 2.
Tensor bn_forward_train(const Tensor& x, BnLayerState& state, double eps_bn = kDefaultBnEpsilon);

// Normalizes with synced statistics; any batch size. Throws Error
// ("validation before sync") when the layer has not been synced.
Tensor bn_forward_eval(const Tensor& x, const BnLayerState& state, double eps_bn = kDefaultBnEpsilon);

// All-reduce-averages last_mean and last_var over the workers' copies of one
// layer and stores the result as every worker's synced statistics.
void sync_statistics(std::span<BnLayerState* const> states, CommPrecision precision,
                     VarianceCombine combine = VarianceCombine::simple, AllReduceStats* stats = nullptr);

struct BnGradients {
    Tensor grad_x;
    Tensor grad_gamma;
    Tensor grad_beta;
};

// Gradients of the training-mode forward pass, using the batch statistics
// that bn_forward_train recorded for this x.
BnGradients bn_backward(const Tensor& grad_out, const Tensor& x, const BnLayerState& state,
                        double eps_bn = kDefaultBnEpsilon);

}  // namespace largebatch
