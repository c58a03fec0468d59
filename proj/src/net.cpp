#include "capsid/net.hpp"

#include <cmath>
#include <limits>

namespace capsid {

Layer Layer::make_conv(int in_ch, int out_ch, int kernel, int stride, int pad) {
    Layer l;
    l.kind = LayerKind::conv;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    l.weights.assign(static_cast<size_t>(out_ch) * in_ch * kernel * kernel, 0.0f);
    l.bias.assign(out_ch, 0.0f);
    return l;
}

Layer Layer::make_relu() {
    Layer l;
    l.kind = LayerKind::relu;
    return l;
}

Layer Layer::make_maxpool(int window, int stride) {
    Layer l;
    l.kind = LayerKind::maxpool;
    l.window = window;
    l.pool_stride = stride;
    return l;
}

Layer Layer::make_gap() {
    Layer l;
    l.kind = LayerKind::global_avg_pool;
    return l;
}

Layer Layer::make_dense(int in_dim, int out_dim) {
    Layer l;
    l.kind = LayerKind::dense;
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.weights.assign(static_cast<size_t>(out_dim) * in_dim, 0.0f);
    l.bias.assign(out_dim, 0.0f);
    return l;
}

namespace {

std::vector<int> conv_out_shape(const Layer& l, const std::vector<int>& in) {
    if (in.size() != 3 || in[0] != l.in_ch)
        throw ConfigError("conv layer input shape does not compose");
    const int h = (in[1] + 2 * l.pad - l.kernel) / l.stride + 1;
    const int w = (in[2] + 2 * l.pad - l.kernel) / l.stride + 1;
    if (h <= 0 || w <= 0) throw ConfigError("conv layer output collapses to zero extent");
    return {l.out_ch, h, w};
}

std::vector<int> pool_out_shape(const Layer& l, const std::vector<int>& in) {
    if (in.size() != 3) throw ConfigError("maxpool expects a (c,h,w) input");
    const int h = (in[1] - l.window) / l.pool_stride + 1;
    const int w = (in[2] - l.window) / l.pool_stride + 1;
    if (h <= 0 || w <= 0) throw ConfigError("maxpool output collapses to zero extent");
    return {in[0], h, w};
}

} // namespace

std::vector<std::vector<int>> Network::layer_shapes() const {
    std::vector<std::vector<int>> shapes;
    std::vector<int> cur = {1, input_side, input_side};
    for (const Layer& l : layers) {
        switch (l.kind) {
            case LayerKind::conv: cur = conv_out_shape(l, cur); break;
            case LayerKind::relu: break;
            case LayerKind::maxpool: cur = pool_out_shape(l, cur); break;
            case LayerKind::global_avg_pool:
                if (cur.size() != 3) throw ConfigError("global-average-pool expects (c,h,w)");
                cur = {cur[0]};
                break;
            case LayerKind::dense:
                if (cur.size() != 1 || cur[0] != l.in_dim)
                    throw ConfigError("dense layer input shape does not compose");
                cur = {l.out_dim};
                break;
        }
        shapes.push_back(cur);
    }
    if (shapes.empty() || shapes.back() != std::vector<int>{1})
        throw ConfigError("network must end in a single scalar logit");
    return shapes;
}

namespace {

void run_conv(const Layer& l, const Tensor& in, Tensor& out) {
    const int ih = in.height(), iw = in.width();
    const int oh = out.height(), ow = out.width();
    const int k = l.kernel;
    for (int oc = 0; oc < l.out_ch; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = l.bias[oc];
                const int y0 = oy * l.stride - l.pad;
                const int x0 = ox * l.stride - l.pad;
                for (int ic = 0; ic < l.in_ch; ++ic) {
                    const size_t wbase = ((static_cast<size_t>(oc) * l.in_ch + ic) * k) * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int y = y0 + ky;
                        if (y < 0 || y >= ih) continue; // zero padding
                        for (int kx = 0; kx < k; ++kx) {
                            const int x = x0 + kx;
                            if (x < 0 || x >= iw) continue;
                            acc += static_cast<double>(l.weights[wbase + ky * k + kx]) *
                                   in.at(ic, y, x);
                        }
                    }
                }
                out.at(oc, oy, ox) = static_cast<float>(acc);
            }
        }
    }
}

void run_maxpool(const Layer& l, const Tensor& in, Tensor& out) {
    const int ih = in.height(), iw = in.width();
    for (int c = 0; c < in.channels(); ++c) {
        for (int oy = 0; oy < out.height(); ++oy) {
            for (int ox = 0; ox < out.width(); ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                for (int ky = 0; ky < l.window; ++ky) {
                    const int y = oy * l.pool_stride + ky;
                    if (y >= ih) continue;
                    for (int kx = 0; kx < l.window; ++kx) {
                        const int x = ox * l.pool_stride + kx;
                        if (x >= iw) continue;
                        const float v = in.at(c, y, x);
                        if (v > best) best = v; // strict: first max wins
                    }
                }
                out.at(c, oy, ox) = best;
            }
        }
    }
}

} // namespace

float forward(const Network& net, const Tensor& input, ForwardTrace& trace,
              ForwardCounter* counter) {
    if (input.shape != std::vector<int>{1, net.input_side, net.input_side})
        throw InvalidInput("input shape does not match the network input");
    if (counter) ++counter->count;

    const auto shapes = net.layer_shapes();
    trace.input = input;
    trace.outputs.clear();
    trace.outputs.reserve(net.layers.size());
    trace.cam_layer = net.cam_layer;

    const Tensor* cur = &input;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        Tensor out(shapes[i]);
        switch (l.kind) {
            case LayerKind::conv: run_conv(l, *cur, out); break;
            case LayerKind::relu:
                for (size_t j = 0; j < cur->size(); ++j)
                    out.v[j] = cur->v[j] > 0.0f ? cur->v[j] : 0.0f;
                break;
            case LayerKind::maxpool: run_maxpool(l, *cur, out); break;
            case LayerKind::global_avg_pool: {
                const size_t hw = static_cast<size_t>(cur->height()) * cur->width();
                for (int c = 0; c < cur->channels(); ++c) {
                    double acc = 0.0;
                    const size_t base = c * hw;
                    for (size_t j = 0; j < hw; ++j) acc += cur->v[base + j];
                    out.v[c] = static_cast<float>(acc / static_cast<double>(hw));
                }
                break;
            }
            case LayerKind::dense: {
                for (int o = 0; o < l.out_dim; ++o) {
                    double acc = l.bias[o];
                    const size_t base = static_cast<size_t>(o) * l.in_dim;
                    for (int j = 0; j < l.in_dim; ++j)
                        acc += static_cast<double>(l.weights[base + j]) * cur->v[j];
                    out.v[o] = static_cast<float>(acc);
                }
                break;
            }
        }
        trace.outputs.push_back(std::move(out));
        cur = &trace.outputs.back();
    }
    return cur->v[0];
}

namespace {

void backward_conv(const Layer& l, const Tensor& in, const Tensor& gout,
                   Gradients::LayerGrads& lg, Tensor& gin) {
    const int ih = in.height(), iw = in.width();
    const int k = l.kernel;
    lg.weights.assign(l.weights.size(), 0.0f);
    lg.bias.assign(l.bias.size(), 0.0f);
    // Accumulate in double, store once.
    std::vector<double> wacc(l.weights.size(), 0.0);
    std::vector<double> bacc(l.bias.size(), 0.0);
    std::vector<double> iacc(in.size(), 0.0);
    for (int oc = 0; oc < l.out_ch; ++oc) {
        for (int oy = 0; oy < gout.height(); ++oy) {
            for (int ox = 0; ox < gout.width(); ++ox) {
                const double g = gout.at(oc, oy, ox);
                if (g == 0.0) continue;
                bacc[oc] += g;
                const int y0 = oy * l.stride - l.pad;
                const int x0 = ox * l.stride - l.pad;
                for (int ic = 0; ic < l.in_ch; ++ic) {
                    const size_t wbase = ((static_cast<size_t>(oc) * l.in_ch + ic) * k) * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const int y = y0 + ky;
                        if (y < 0 || y >= ih) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int x = x0 + kx;
                            if (x < 0 || x >= iw) continue;
                            const size_t ii = (static_cast<size_t>(ic) * ih + y) * iw + x;
                            wacc[wbase + ky * k + kx] += g * in.v[ii];
                            iacc[ii] += g * l.weights[wbase + ky * k + kx];
                        }
                    }
                }
            }
        }
    }
    for (size_t j = 0; j < wacc.size(); ++j) lg.weights[j] = static_cast<float>(wacc[j]);
    for (size_t j = 0; j < bacc.size(); ++j) lg.bias[j] = static_cast<float>(bacc[j]);
    for (size_t j = 0; j < iacc.size(); ++j) gin.v[j] = static_cast<float>(iacc[j]);
}

void backward_maxpool(const Layer& l, const Tensor& in, const Tensor& gout, Tensor& gin) {
    const int ih = in.height(), iw = in.width();
    for (int c = 0; c < in.channels(); ++c) {
        for (int oy = 0; oy < gout.height(); ++oy) {
            for (int ox = 0; ox < gout.width(); ++ox) {
                // Recompute the argmax with the forward tie rule.
                float best = -std::numeric_limits<float>::infinity();
                int by = -1, bx = -1;
                for (int ky = 0; ky < l.window; ++ky) {
                    const int y = oy * l.pool_stride + ky;
                    if (y >= ih) continue;
                    for (int kx = 0; kx < l.window; ++kx) {
                        const int x = ox * l.pool_stride + kx;
                        if (x >= iw) continue;
                        const float v = in.at(c, y, x);
                        if (v > best) {
                            best = v;
                            by = y;
                            bx = x;
                        }
                    }
                }
                gin.at(c, by, bx) += gout.at(c, oy, ox);
            }
        }
    }
}

} // namespace

Gradients backward(const Network& net, const ForwardTrace& trace, float seed) {
    if (trace.outputs.size() != net.layers.size())
        throw InvalidInput("trace does not match the network (stale trace)");
    if (trace.input.shape != std::vector<int>{1, net.input_side, net.input_side})
        throw InvalidInput("trace input shape does not match the network");

    Gradients grads;
    grads.layers.resize(net.layers.size());

    Tensor g(trace.outputs.back().shape);
    g.v[0] = seed;

    for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
        const Layer& l = net.layers[i];
        const Tensor& in = (i == 0) ? trace.input : trace.outputs[i - 1];
        if (i == net.cam_layer) grads.cam_layer_grad = g;
        Tensor gin(in.shape);
        switch (l.kind) {
            case LayerKind::conv:
                backward_conv(l, in, g, grads.layers[i], gin);
                break;
            case LayerKind::relu:
                for (size_t j = 0; j < in.size(); ++j)
                    gin.v[j] = in.v[j] > 0.0f ? g.v[j] : 0.0f;
                break;
            case LayerKind::maxpool:
                backward_maxpool(l, in, g, gin);
                break;
            case LayerKind::global_avg_pool: {
                const size_t hw = static_cast<size_t>(in.height()) * in.width();
                for (int c = 0; c < in.channels(); ++c) {
                    const float share = static_cast<float>(g.v[c] / static_cast<double>(hw));
                    const size_t base = c * hw;
                    for (size_t j = 0; j < hw; ++j) gin.v[base + j] = share;
                }
                break;
            }
            case LayerKind::dense: {
                auto& lg = grads.layers[i];
                lg.weights.assign(l.weights.size(), 0.0f);
                lg.bias.assign(l.bias.size(), 0.0f);
                for (int o = 0; o < l.out_dim; ++o) {
                    const float go = g.v[o];
                    lg.bias[o] = go;
                    const size_t base = static_cast<size_t>(o) * l.in_dim;
                    for (int j = 0; j < l.in_dim; ++j) {
                        lg.weights[base + j] = go * in.v[j];
                        gin.v[j] += go * l.weights[base + j];
                    }
                }
                break;
            }
        }
        g = std::move(gin);
    }
    grads.input_grad = std::move(g);
    return grads;
}

double sigmoid(double logit) {
    if (logit >= 0.0) {
        return 1.0 / (1.0 + std::exp(-logit));
    }
    const double e = std::exp(logit);
    return e / (1.0 + e);
}

BceResult sigmoid_bce(double logit, int label) {
    if (label != 0 && label != 1) throw InvalidInput("label must be 0 or 1");
    // loss = max(z,0) - z*y + log(1 + exp(-|z|))
    const double z = logit;
    const double loss = (z > 0.0 ? z : 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
    return {loss, sigmoid(z) - label};
}

} // namespace capsid
