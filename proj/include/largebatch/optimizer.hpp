#pragma once

#include <cstdint>
#include <string_view>

#include "largebatch/tensor.hpp"

namespace largebatch {

struct OptimizerHyper {
    double mu1 = 0.9;           // momentum
    double mu2 = 0.99;          // decay of the squared-gradient average
    double epsilon = 1e-8;      // added after the square root
    double eta_rmsprop = 3e-4;  // RMSprop learning rate
    double beta_center = 10.0;  // epochs
    double beta_period = 5.0;   // epochs

    // Throws DomainError when a field is outside its valid range.
    void validate() const;
};

// Per-parameter buffers. `m` is the running mean of g^2, `delta` the momentum
// buffer. delta never carries a learning-rate factor, so changing eta between
// steps does not rescale accumulated momentum.
struct OptimizerState {
    Tensor m;
    Tensor delta;
    std::uint64_t t = 0;

    static OptimizerState zeros(const Shape& shape);
    bool operator==(const OptimizerState&) const = default;
};

struct BlendCoefficients {
    double alpha_sgd = 1.0;
    double alpha_rmsprop = 0.0;
    double eta = 0.0;
};

// Share of momentum SGD in the update. Exponential up to beta_center (where
// it is 1/2), then linear with slope 1/beta_period, then 1 from
// beta_center + beta_period/2 on. Continuous and C1 at beta_center.
double alpha_sgd_at(double epoch, double beta_center, double beta_period);

// alpha_rmsprop = (1 - alpha_sgd) * eta_rmsprop / eta_sgd and eta = eta_sgd.
BlendCoefficients blend_at(double epoch, double eta_sgd, const OptimizerHyper& hyper);

enum class OptimizerKind { hybrid, sgd, rmsprop };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

// Coefficients for the configured optimizer: hybrid follows blend_at, sgd is
// fixed at (1, 0, eta_sgd), rmsprop at (0, eta_rmsprop / eta_sgd, eta_sgd).
BlendCoefficients blend_for(OptimizerKind kind, double epoch, double eta_sgd, const OptimizerHyper& hyper);

struct StepResult {
    Tensor theta;
    OptimizerState state;
};

// One update:
//   m     <- mu2 m + (1 - mu2) g^2
//   delta <- mu1 delta - (alpha_sgd + alpha_rmsprop / (sqrt(m) + eps)) g
//   theta <- theta + eta delta
// Pure; throws NonFiniteError (with the first offending index) for a
// non-finite gradient and ShapeError when shapes disagree.
StepResult step(const Tensor& theta, const Tensor& g, const OptimizerState& state,
                const BlendCoefficients& blend, const OptimizerHyper& hyper);

// In-place form of step() for the trainer's hot loop.
void step_in_place(Tensor& theta, const Tensor& g, OptimizerState& state, const BlendCoefficients& blend,
                   const OptimizerHyper& hyper);

}  // namespace largebatch
