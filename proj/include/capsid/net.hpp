#pragma once

#include <cstdint>
#include <vector>

#include "capsid/tensor.hpp"

namespace capsid {

enum class LayerKind : uint8_t {
    conv = 1,
    relu = 2,
    maxpool = 3,
    global_avg_pool = 4,
    dense = 5,
};

/// One layer of the network. Only the fields of the active kind are used.
struct Layer {
    LayerKind kind = LayerKind::relu;

    // conv
    int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
    // maxpool
    int window = 0, pool_stride = 0;
    // dense
    int in_dim = 0, out_dim = 0;

    std::vector<float> weights; // conv: (out,in,k,k); dense: (out,in)
    std::vector<float> bias;    // conv/dense: (out)

    static Layer make_conv(int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0);
    static Layer make_relu();
    static Layer make_maxpool(int window, int stride);
    static Layer make_gap();
    static Layer make_dense(int in_dim, int out_dim);
};

/// Feed-forward network mapping a (1,H,W) image tensor to a scalar logit.
/// cam_layer is the index of the last convolutional layer; its activations
/// and gradients drive the class activation map.
struct Network {
    int input_side = 0;
    std::vector<Layer> layers;
    int cam_layer = -1;

    /// Shape of every layer output, computed from input_side. Throws
    /// ConfigError when consecutive layers do not compose or the final
    /// output is not a single scalar.
    std::vector<std::vector<int>> layer_shapes() const;
};

/// Per-layer activations retained for backpropagation.
struct ForwardTrace {
    Tensor input;
    std::vector<Tensor> outputs; // outputs[i] = activation of layers[i]
    int cam_layer = -1;
};

/// Counts classifier evaluations; injected by callers that audit compute.
struct ForwardCounter {
    uint64_t count = 0;
};

/// Evaluates the network. Activations are float; every dot product
/// accumulates in double. Deterministic: identical inputs give bit-identical
/// logits.
float forward(const Network& net, const Tensor& input, ForwardTrace& trace,
              ForwardCounter* counter = nullptr);

struct Gradients {
    struct LayerGrads {
        std::vector<float> weights;
        std::vector<float> bias;
    };
    std::vector<LayerGrads> layers;
    Tensor input_grad;     // same shape as the network input
    Tensor cam_layer_grad; // gradient w.r.t. the CAM layer's activation
};

/// Reverse-mode pass from d(logit) = seed. Gradients are exactly linear in
/// the seed (scaling by a power of two is bitwise). Max-pool ties route to
/// the first (row-major) maximum, matching the forward pass.
Gradients backward(const Network& net, const ForwardTrace& trace, float seed);

/// Numerically stable binary cross entropy on a logit.
/// Returns (loss, dloss/dlogit) with dloss/dlogit = sigmoid(logit) - label.
struct BceResult {
    double loss;
    double dloss_dlogit;
};
BceResult sigmoid_bce(double logit, int label);

double sigmoid(double logit);

} // namespace capsid
