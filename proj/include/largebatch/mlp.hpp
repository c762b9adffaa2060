#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "largebatch/rng.hpp"
#include "largebatch/syncbn.hpp"
#include "largebatch/tensor.hpp"

namespace largebatch {

// layer_sizes = {input, hidden..., classes}. Hidden layers are
// Linear -> [BatchNorm] -> ReLU; the output layer is Linear feeding softmax
// cross-entropy. Linear layers followed by batch norm carry no bias.
struct ModelSpec {
    std::vector<std::size_t> layer_sizes;
    std::vector<bool> batchnorm;  // one flag per hidden layer
    double init_scale = 1.0;
    double bn_eps = kDefaultBnEpsilon;

    static ModelSpec uniform(std::vector<std::size_t> layer_sizes, bool use_batchnorm, double init_scale = 1.0);

    std::size_t hidden_layers() const noexcept { return layer_sizes.size() - 2; }
    std::size_t classes() const { return layer_sizes.back(); }
    void validate() const;
};

struct ParamRef {
    std::string name;
    Tensor* value;
};

struct ConstParamRef {
    std::string name;
    const Tensor* value;
};

struct LossAndGrads {
    double loss = 0.0;
    std::vector<Tensor> grads;  // parallel to Mlp::parameters()
};

class Mlp {
public:
    // Hidden weights ~ N(0, 2 init_scale^2 / fan_in); output weights use a
    // 0.1 smaller scale so an untrained model predicts near-uniformly.
    Mlp(ModelSpec spec, Rng& init_rng);

    const ModelSpec& spec() const noexcept { return spec_; }

    // Stable order: fc0.weight, [fc0.bias | bn0.gamma, bn0.beta], fc1..., out.weight, out.bias.
    std::vector<ParamRef> parameters();
    std::vector<ConstParamRef> parameters() const;
    std::size_t parameter_count() const;

    std::vector<BnLayerState>& bn_layers() noexcept { return bn_; }
    const std::vector<BnLayerState>& bn_layers() const noexcept { return bn_; }
    bool has_batchnorm() const noexcept { return !bn_.empty(); }

    // Training-mode pass over one minibatch: mean softmax cross-entropy and
    // its gradients. Records batch-norm statistics. Throws NonFiniteError
    // naming the first layer whose output is not finite.
    LossAndGrads forward_backward(const Tensor& x, std::span<const int> labels);

    // Eval-mode logits; batch norm uses the synced statistics.
    Tensor logits_eval(const Tensor& x) const;

private:
    struct Linear {
        Tensor weight;  // [in, out]
        Tensor bias;    // [out]; empty when followed by batch norm
        bool has_bias;
    };

    ModelSpec spec_;
    std::vector<Linear> linear_;      // hidden layers then output
    std::vector<BnLayerState> bn_;    // one per hidden layer with batch norm
    std::vector<int> bn_index_;       // hidden layer -> index into bn_, or -1
};

// Mean softmax cross-entropy of logits [batch, classes]; optionally writes
// d(loss)/d(logits) into grad.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad = nullptr);

// Row-major products used by the model.
Tensor matmul(const Tensor& a, const Tensor& b);       // [m,k] x [k,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);    // a^T b: [m,k]^T x [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);    // a b^T: [m,n] x [k,n]^T

}  // namespace largebatch
