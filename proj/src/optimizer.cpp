#include "largebatch/optimizer.hpp"

#include <cmath>
#include <string>

#include "largebatch/error.hpp"

namespace largebatch {

void OptimizerHyper::validate() const {
    if (!(mu1 >= 0.0 && mu1 < 1.0)) throw DomainError("mu1 must lie in [0, 1)");
    if (!(mu2 >= 0.0 && mu2 < 1.0)) throw DomainError("mu2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (!(eta_rmsprop > 0.0)) throw DomainError("eta_rmsprop must be positive");
    if (!(beta_period > 0.0)) throw DomainError("beta_period must be positive");
    if (!std::isfinite(beta_center)) throw DomainError("beta_center must be finite");
}

OptimizerState OptimizerState::zeros(const Shape& shape) { return {Tensor(shape), Tensor(shape), 0}; }

double alpha_sgd_at(double epoch, double beta_center, double beta_period) {
    if (!(beta_period > 0.0)) throw DomainError("alpha_sgd_at: beta_period must be positive");
    if (!(epoch >= 0.0)) throw DomainError("alpha_sgd_at: epoch must be nonnegative");
    if (epoch < beta_center) return 0.5 * std::exp(2.0 * (epoch - beta_center) / beta_period);
    if (epoch < beta_center + 0.5 * beta_period) return 0.5 + (epoch - beta_center) / beta_period;
    return 1.0;
}

BlendCoefficients blend_at(double epoch, double eta_sgd, const OptimizerHyper& hyper) {
    if (!(eta_sgd > 0.0)) throw DomainError("blend_at: eta_sgd must be positive");
    const double a = alpha_sgd_at(epoch, hyper.beta_center, hyper.beta_period);
    return {a, (1.0 - a) * hyper.eta_rmsprop / eta_sgd, eta_sgd};
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "hybrid") return OptimizerKind::hybrid;
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "rmsprop") return OptimizerKind::rmsprop;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected hybrid|sgd|rmsprop)");
}

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::hybrid: return "hybrid";
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::rmsprop: return "rmsprop";
    }
    return "?";
}

BlendCoefficients blend_for(OptimizerKind kind, double epoch, double eta_sgd, const OptimizerHyper& hyper) {
    if (!(eta_sgd > 0.0)) throw DomainError("blend_for: eta_sgd must be positive");
    switch (kind) {
        case OptimizerKind::sgd: return {1.0, 0.0, eta_sgd};
        case OptimizerKind::rmsprop: return {0.0, hyper.eta_rmsprop / eta_sgd, eta_sgd};
        case OptimizerKind::hybrid: break;
    }
    return blend_at(epoch, eta_sgd, hyper);
}

void step_in_place(Tensor& theta, const Tensor& g, OptimizerState& state, const BlendCoefficients& blend,
                   const OptimizerHyper& hyper) {
    require_same_shape(theta, g, "optimizer step (theta, g)");
    require_same_shape(theta, state.m, "optimizer step (theta, m)");
    require_same_shape(theta, state.delta, "optimizer step (theta, delta)");
    require_finite(g.data(), "gradient");
    require_finite(theta.data(), "parameter");

    auto th = theta.data();
    auto gr = g.data();
    auto m = state.m.data();
    auto d = state.delta.data();
    const double mu1 = hyper.mu1;
    const double mu2 = hyper.mu2;
    for (std::size_t i = 0; i < th.size(); ++i) {
        const double gi = gr[i];
        m[i] = mu2 * m[i] + (1.0 - mu2) * (gi * gi);
        const double scale = blend.alpha_sgd + blend.alpha_rmsprop / (std::sqrt(m[i]) + hyper.epsilon);
        d[i] = mu1 * d[i] - scale * gi;
        th[i] = th[i] + blend.eta * d[i];
    }
    ++state.t;
}

StepResult step(const Tensor& theta, const Tensor& g, const OptimizerState& state,
                const BlendCoefficients& blend, const OptimizerHyper& hyper) {
    StepResult out{theta, state};
    step_in_place(out.theta, g, out.state, blend, hyper);
    return out;
}

}  // namespace largebatch
