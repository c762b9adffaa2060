#include "largebatch/syncbn.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "largebatch/error.hpp"

namespace largebatch {

BnLayerState::BnLayerState(std::size_t features) : gamma({features}, 1.0), beta({features}, 0.0) {}

BnLayerState::BnLayerState(Tensor g, Tensor b) : gamma(std::move(g)), beta(std::move(b)) {
    require_same_shape(gamma, beta, "BnLayerState");
    if (gamma.rank() != 1) throw ShapeError("BnLayerState: gamma/beta must be 1-D");
}

VarianceCombine parse_variance_combine(std::string_view name) {
    if (name == "simple") return VarianceCombine::simple;
    if (name == "pooled") return VarianceCombine::pooled;
    throw ConfigError("unknown variance combination '" + std::string(name) + "' (expected simple|pooled)");
}

std::string_view to_string(VarianceCombine mode) { return mode == VarianceCombine::simple ? "simple" : "pooled"; }

namespace {

void check_input(const Tensor& x, const BnLayerState& state, const char* where) {
    if (x.rank() != 2) throw ShapeError(std::string(where) + ": input must be [batch, features]");
    if (x.dim(1) != state.features())
        throw ShapeError(std::string(where) + ": input has " + std::to_string(x.dim(1)) + " features, layer has " +
                         std::to_string(state.features()));
}

void check_eps(double eps_bn) {
    if (!(eps_bn >= 0.0)) throw DomainError("eps_bn must be nonnegative");
}

Tensor normalize(const Tensor& x, const BnLayerState& state, const Tensor& mean, const Tensor& var, double eps_bn) {
    const std::size_t batch = x.dim(0), features = x.dim(1);
    std::vector<double> scale(features), shift(features);
    for (std::size_t f = 0; f < features; ++f) {
        const double inv_std = 1.0 / std::sqrt(var[f] + eps_bn);
        scale[f] = state.gamma[f] * inv_std;
        shift[f] = state.beta[f];
    }
    Tensor out(x.shape());
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t f = 0; f < features; ++f)
            out.at(i, f) = (x.at(i, f) - mean[f]) * scale[f] + shift[f];
    return out;
}

}  // namespace

Tensor bn_forward_train(const Tensor& x, BnLayerState& state, double eps_bn) {
    check_input(x, state, "bn_forward_train");
    check_eps(eps_bn);
    const std::size_t batch = x.dim(0), features = x.dim(1);
    if (batch < 2) throw DomainError("bn_forward_train: batch must be at least 2");

    Tensor mean({features}), var({features});
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t f = 0; f < features; ++f) mean[f] += x.at(i, f);
    for (auto& m : mean.data()) m /= static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t f = 0; f < features; ++f) {
            const double d = x.at(i, f) - mean[f];
            var[f] += d * d;
        }
    for (auto& v : var.data()) v /= static_cast<double>(batch);

    if (eps_bn == 0.0)
        for (std::size_t f = 0; f < features; ++f)
            if (var[f] == 0.0) throw DomainError("bn_forward_train: zero variance with eps_bn = 0");

    Tensor out = normalize(x, state, mean, var, eps_bn);
    state.last_mean = std::move(mean);
    state.last_var = std::move(var);
    state.synced_mean.reset();
    state.synced_var.reset();
    return out;
}

Tensor bn_forward_eval(const Tensor& x, const BnLayerState& state, double eps_bn) {
    check_input(x, state, "bn_forward_eval");
    check_eps(eps_bn);
    if (!state.has_synced_statistics()) throw Error("bn_forward_eval: validation before sync");
    return normalize(x, state, *state.synced_mean, *state.synced_var, eps_bn);
}

void sync_statistics(std::span<BnLayerState* const> states, CommPrecision precision, VarianceCombine combine,
                     AllReduceStats* stats) {
    if (states.empty()) throw DomainError("sync_statistics: no workers");
    std::vector<Tensor> means, vars;
    means.reserve(states.size());
    vars.reserve(states.size());
    for (std::size_t w = 0; w < states.size(); ++w) {
        if (!states[w]->has_batch_statistics())
            throw Error("sync_statistics: worker " + std::to_string(w) + " has no batch statistics");
        means.push_back(*states[w]->last_mean);
        vars.push_back(*states[w]->last_var);
    }
    Tensor mean = all_reduce(means, ReduceOp::average, precision, stats);
    Tensor var;
    if (combine == VarianceCombine::simple) {
        var = all_reduce(vars, ReduceOp::average, precision, stats);
    } else {
        // E[x^2] per worker = var + mean^2; pooled var = avg(E[x^2]) - mean^2.
        std::vector<Tensor> second;
        second.reserve(states.size());
        for (std::size_t w = 0; w < states.size(); ++w) second.push_back(add(vars[w], square(means[w])));
        var = all_reduce(second, ReduceOp::average, precision, stats);
        for (std::size_t f = 0; f < var.size(); ++f) var[f] = std::max(0.0, var[f] - mean[f] * mean[f]);
    }
    for (auto* s : states) {
        s->synced_mean = mean;
        s->synced_var = var;
    }
}

BnGradients bn_backward(const Tensor& grad_out, const Tensor& x, const BnLayerState& state, double eps_bn) {
    check_input(x, state, "bn_backward");
    require_same_shape(grad_out, x, "bn_backward");
    if (!state.has_batch_statistics()) throw Error("bn_backward: no batch statistics recorded");
    const std::size_t batch = x.dim(0), features = x.dim(1);
    const auto n = static_cast<double>(batch);
    const Tensor& mean = *state.last_mean;
    const Tensor& var = *state.last_var;

    BnGradients g{Tensor(x.shape()), Tensor({features}), Tensor({features})};
    std::vector<double> inv_std(features), sum_dxhat(features), sum_dxhat_xhat(features);
    for (std::size_t f = 0; f < features; ++f) inv_std[f] = 1.0 / std::sqrt(var[f] + eps_bn);

    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t f = 0; f < features; ++f) {
            const double xhat = (x.at(i, f) - mean[f]) * inv_std[f];
            const double go = grad_out.at(i, f);
            g.grad_beta[f] += go;
            g.grad_gamma[f] += go * xhat;
            const double dxhat = go * state.gamma[f];
            sum_dxhat[f] += dxhat;
            sum_dxhat_xhat[f] += dxhat * xhat;
        }
    // dx = inv_std / n * (n dxhat - sum(dxhat) - xhat sum(dxhat xhat))
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t f = 0; f < features; ++f) {
            const double xhat = (x.at(i, f) - mean[f]) * inv_std[f];
            const double dxhat = grad_out.at(i, f) * state.gamma[f];
            g.grad_x.at(i, f) = inv_std[f] / n * (n * dxhat - sum_dxhat[f] - xhat * sum_dxhat_xhat[f]);
        }
    return g;
}

}  // namespace largebatch
