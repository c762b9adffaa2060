#include "largebatch/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "largebatch/error.hpp"

namespace largebatch {

ModelSpec ModelSpec::uniform(std::vector<std::size_t> layer_sizes, bool use_batchnorm, double init_scale) {
    ModelSpec spec;
    const std::size_t hidden = layer_sizes.size() >= 2 ? layer_sizes.size() - 2 : 0;
    spec.layer_sizes = std::move(layer_sizes);
    spec.batchnorm.assign(hidden, use_batchnorm);
    spec.init_scale = init_scale;
    return spec;
}

void ModelSpec::validate() const {
    if (layer_sizes.size() < 3) throw DomainError("model: need input, at least one hidden layer and classes");
    for (auto s : layer_sizes)
        if (s == 0) throw DomainError("model: layer sizes must be positive");
    if (layer_sizes.back() < 2) throw DomainError("model: need at least 2 classes");
    if (batchnorm.size() != hidden_layers()) throw DomainError("model: one batchnorm flag per hidden layer");
    if (!(init_scale > 0.0)) throw DomainError("model: init_scale must be positive");
    if (!(bn_eps >= 0.0)) throw DomainError("model: bn_eps must be nonnegative");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
        throw ShapeError("matmul_tn: " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({k, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + i * n;
            double* crow = pc + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
    const std::size_t m = a.dim(0), n = a.dim(1), k = b.dim(0);
    Tensor c({m, k});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < n; ++p) s += pa[i * n + p] * pb[j * n + p];
            pc[i * k + j] = s;
        }
    return c;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw ShapeError("softmax_cross_entropy: logits/labels mismatch");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (grad) *grad = Tensor(logits.shape());
    double total = 0.0;
    std::vector<double> p(classes);
    for (std::size_t i = 0; i < batch; ++i) {
        const auto label = static_cast<std::size_t>(labels[i]);
        if (labels[i] < 0 || label >= classes) throw DomainError("softmax_cross_entropy: label out of range");
        double mx = logits.at(i, 0);
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, logits.at(i, c));
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            p[c] = std::exp(logits.at(i, c) - mx);
            z += p[c];
        }
        total += std::log(z) - (logits.at(i, label) - mx);
        if (grad) {
            const double inv = 1.0 / (z * static_cast<double>(batch));
            for (std::size_t c = 0; c < classes; ++c) grad->at(i, c) = p[c] * inv;
            grad->at(i, label) -= 1.0 / static_cast<double>(batch);
        }
    }
    return total / static_cast<double>(batch);
}

Mlp::Mlp(ModelSpec spec, Rng& init_rng) : spec_(std::move(spec)) {
    spec_.validate();
    const std::size_t hidden = spec_.hidden_layers();
    for (std::size_t l = 0; l <= hidden; ++l) {
        const std::size_t in = spec_.layer_sizes[l], out = spec_.layer_sizes[l + 1];
        const bool is_output = l == hidden;
        const bool bn = !is_output && spec_.batchnorm[l];
        const double std_dev = is_output ? 0.1 * spec_.init_scale / std::sqrt(static_cast<double>(in))
                                         : spec_.init_scale * std::sqrt(2.0 / static_cast<double>(in));
        Linear layer{rand_normal(init_rng, {in, out}, 0.0, std_dev), bn ? Tensor() : Tensor({out}), !bn};
        linear_.push_back(std::move(layer));
        if (!is_output) {
            bn_index_.push_back(bn ? static_cast<int>(bn_.size()) : -1);
            if (bn) bn_.emplace_back(out);
        }
    }
}

std::vector<ParamRef> Mlp::parameters() {
    std::vector<ParamRef> out;
    const std::size_t hidden = spec_.hidden_layers();
    for (std::size_t l = 0; l <= hidden; ++l) {
        const std::string prefix = l == hidden ? "out" : "fc" + std::to_string(l);
        out.push_back({prefix + ".weight", &linear_[l].weight});
        if (linear_[l].has_bias) out.push_back({prefix + ".bias", &linear_[l].bias});
        if (l < hidden && bn_index_[l] >= 0) {
            auto& bn = bn_[static_cast<std::size_t>(bn_index_[l])];
            out.push_back({"bn" + std::to_string(l) + ".gamma", &bn.gamma});
            out.push_back({"bn" + std::to_string(l) + ".beta", &bn.beta});
        }
    }
    return out;
}

std::vector<ConstParamRef> Mlp::parameters() const {
    std::vector<ConstParamRef> out;
    for (auto& p : const_cast<Mlp*>(this)->parameters()) out.push_back({std::move(p.name), p.value});
    return out;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value->size();
    return n;
}

namespace {

void add_bias(Tensor& z, const Tensor& bias) {
    const std::size_t batch = z.dim(0), out = z.dim(1);
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < out; ++j) z.at(i, j) += bias[j];
}

void relu_in_place(Tensor& t) {
    for (auto& v : t.data()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

LossAndGrads Mlp::forward_backward(const Tensor& x, std::span<const int> labels) {
    const std::size_t hidden = spec_.hidden_layers();
    if (x.rank() != 2 || x.dim(1) != spec_.layer_sizes[0])
        throw ShapeError("forward_backward: input must be [batch, " + std::to_string(spec_.layer_sizes[0]) + "]");
    if (x.dim(0) != labels.size()) throw ShapeError("forward_backward: one label per example");

    // inputs[l] feeds linear layer l; pre_bn[l] is its output before batch norm;
    // pre_act[l] is the ReLU input.
    std::vector<Tensor> inputs{x}, pre_bn, pre_act;
    for (std::size_t l = 0; l < hidden; ++l) {
        Tensor z = matmul(inputs[l], linear_[l].weight);
        if (linear_[l].has_bias) add_bias(z, linear_[l].bias);
        Tensor y = bn_index_[l] >= 0 ? bn_forward_train(z, bn_[static_cast<std::size_t>(bn_index_[l])], spec_.bn_eps)
                                     : z;
        Tensor h = y;
        relu_in_place(h);
        require_finite(h.data(), "hidden layer " + std::to_string(l) + " output");
        pre_bn.push_back(std::move(z));
        pre_act.push_back(std::move(y));
        inputs.push_back(std::move(h));
    }
    Tensor logits = matmul(inputs[hidden], linear_[hidden].weight);
    add_bias(logits, linear_[hidden].bias);
    require_finite(logits.data(), "output layer logits");

    LossAndGrads result;
    Tensor grad;
    result.loss = softmax_cross_entropy(logits, labels, &grad);
    if (!std::isfinite(result.loss)) throw NonFiniteError("loss", 0);

    // Gradients are produced back to front, then reordered to parameters().
    std::vector<std::vector<Tensor>> per_layer(hidden + 1);
    for (std::size_t l = hidden + 1; l-- > 0;) {
        auto& slot = per_layer[l];
        slot.push_back(matmul_tn(inputs[l], grad));
        if (linear_[l].has_bias) {
            Tensor gb({grad.dim(1)});
            for (std::size_t i = 0; i < grad.dim(0); ++i)
                for (std::size_t j = 0; j < grad.dim(1); ++j) gb[j] += grad.at(i, j);
            slot.push_back(std::move(gb));
        }
        if (l == 0) break;

        // Back through ReLU and batch norm of hidden layer l - 1.
        Tensor gh = matmul_nt(grad, linear_[l].weight);
        const std::size_t k = l - 1;
        for (std::size_t i = 0; i < gh.size(); ++i)
            if (!(pre_act[k][i] > 0.0)) gh[i] = 0.0;
        if (bn_index_[k] >= 0) {
            auto g = bn_backward(gh, pre_bn[k], bn_[static_cast<std::size_t>(bn_index_[k])], spec_.bn_eps);
            per_layer[k].push_back(std::move(g.grad_gamma));
            per_layer[k].push_back(std::move(g.grad_beta));
            grad = std::move(g.grad_x);
        } else {
            grad = std::move(gh);
        }
    }
    // per_layer[k] for hidden k holds [bn grads..., weight, bias?] in push
    // order; parameters() wants weight, bias?, gamma, beta.
    for (std::size_t l = 0; l <= hidden; ++l) {
        auto& slot = per_layer[l];
        if (l < hidden && bn_index_[l] >= 0) std::rotate(slot.begin(), slot.begin() + 2, slot.end());
        for (auto& t : slot) result.grads.push_back(std::move(t));
    }
    return result;
}

Tensor Mlp::logits_eval(const Tensor& x) const {
    const std::size_t hidden = spec_.hidden_layers();
    if (x.rank() != 2 || x.dim(1) != spec_.layer_sizes[0])
        throw ShapeError("logits_eval: input must be [batch, " + std::to_string(spec_.layer_sizes[0]) + "]");
    Tensor h = x;
    for (std::size_t l = 0; l < hidden; ++l) {
        Tensor z = matmul(h, linear_[l].weight);
        if (linear_[l].has_bias) add_bias(z, linear_[l].bias);
        h = bn_index_[l] >= 0 ? bn_forward_eval(z, bn_[static_cast<std::size_t>(bn_index_[l])], spec_.bn_eps) : z;
        relu_in_place(h);
    }
    Tensor logits = matmul(h, linear_[hidden].weight);
    add_bias(logits, linear_[hidden].bias);
    return logits;
}

}  // namespace largebatch
