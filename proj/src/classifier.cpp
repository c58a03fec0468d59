#include "capsid/classifier.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace capsid {

namespace {

void init_uniform(std::vector<float>& params, double bound, Rng& rng) {
    for (float& p : params) p = static_cast<float>(rng.uniform(-bound, bound));
}

} // namespace

ClassifierModel build_default(int input_side, uint64_t seed) {
    if (input_side < 16)
        throw ConfigError("input side " + std::to_string(input_side) +
                          " is too small to pool three times (minimum 16)");

    Network net;
    net.input_side = input_side;
    const int channels[3] = {8, 16, 32};
    int in_ch = 1;
    for (int b = 0; b < 3; ++b) {
        net.layers.push_back(Layer::make_maxpool(2, 2));
        net.layers.push_back(Layer::make_conv(in_ch, channels[b], 3, 1, 1));
        net.layers.push_back(Layer::make_relu());
        in_ch = channels[b];
    }
    net.cam_layer = static_cast<int>(net.layers.size()) - 2; // last conv
    net.layers.push_back(Layer::make_gap());
    net.layers.push_back(Layer::make_dense(in_ch, 1));
    net.layer_shapes(); // validate composition

    Rng rng(seed);
    for (Layer& l : net.layers) {
        if (l.kind == LayerKind::conv) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_ch) * l.kernel * l.kernel);
            init_uniform(l.weights, bound, rng);
            init_uniform(l.bias, bound, rng);
        } else if (l.kind == LayerKind::dense) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
            init_uniform(l.weights, bound, rng);
            init_uniform(l.bias, bound, rng);
        }
    }

    ClassifierModel model;
    model.net = std::move(net);
    return model;
}

Tensor normalize(const Image& image, float mean, float std) {
    if (std <= 0.0f) throw InvalidInput("normalization std must be positive");
    Tensor t({1, image.height, image.width});
    for (size_t i = 0; i < image.px.size(); ++i) t.v[i] = (image.px[i] - mean) / std;
    return t;
}

namespace {

struct Momentum {
    std::vector<std::vector<float>> weights;
    std::vector<std::vector<float>> bias;
};

void sgd_step(Network& net, const Gradients& grads, Momentum& vel, double lr, double mu,
              double wd) {
    for (size_t i = 0; i < net.layers.size(); ++i) {
        Layer& l = net.layers[i];
        if (l.weights.empty()) continue;
        auto& vw = vel.weights[i];
        auto& vb = vel.bias[i];
        for (size_t j = 0; j < l.weights.size(); ++j) {
            vw[j] = static_cast<float>(mu * vw[j] + grads.layers[i].weights[j] +
                                       wd * l.weights[j]);
            l.weights[j] -= static_cast<float>(lr) * vw[j];
        }
        for (size_t j = 0; j < l.bias.size(); ++j) {
            // Biases are not decayed.
            vb[j] = static_cast<float>(mu * vb[j] + grads.layers[i].bias[j]);
            l.bias[j] -= static_cast<float>(lr) * vb[j];
        }
    }
}

void accumulate(Gradients& acc, const Gradients& g, double scale) {
    for (size_t i = 0; i < acc.layers.size(); ++i) {
        for (size_t j = 0; j < acc.layers[i].weights.size(); ++j)
            acc.layers[i].weights[j] += static_cast<float>(scale) * g.layers[i].weights[j];
        for (size_t j = 0; j < acc.layers[i].bias.size(); ++j)
            acc.layers[i].bias[j] += static_cast<float>(scale) * g.layers[i].bias[j];
    }
}

Gradients zero_like(const Network& net) {
    Gradients g;
    g.layers.resize(net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        g.layers[i].weights.assign(net.layers[i].weights.size(), 0.0f);
        g.layers[i].bias.assign(net.layers[i].bias.size(), 0.0f);
    }
    return g;
}

} // namespace

ClassifierModel train(const std::vector<LabeledImage>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw InvalidInput("empty training set");
    if (cfg.epochs < 0 || cfg.learning_rate <= 0.0 || cfg.batch_size <= 0)
        throw ConfigError("training configuration values must be positive");

    const int w = dataset.front().image.width;
    const int h = dataset.front().image.height;
    if (w != h) throw InvalidInput("training images must be square");
    bool has_pos = false, has_neg = false;
    for (const auto& s : dataset) {
        if (s.image.width != w || s.image.height != h)
            throw InvalidInput("training images must share one shape");
        (s.label ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw InvalidInput("training set must contain both labels");

    ClassifierModel model = build_default(w, cfg.seed);

    // Global scalar statistics of the training images, population std.
    double sum = 0.0, sumsq = 0.0;
    size_t n = 0;
    for (const auto& s : dataset) {
        for (float v : s.image.px) {
            sum += v;
            sumsq += static_cast<double>(v) * v;
        }
        n += s.image.px.size();
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sumsq / static_cast<double>(n) - mean * mean;
    model.norm_mean = static_cast<float>(mean);
    model.norm_std = static_cast<float>(std::sqrt(var > 1e-12 ? var : 1e-12));

    Momentum vel;
    vel.weights.resize(model.net.layers.size());
    vel.bias.resize(model.net.layers.size());
    for (size_t i = 0; i < model.net.layers.size(); ++i) {
        vel.weights[i].assign(model.net.layers[i].weights.size(), 0.0f);
        vel.bias[i].assign(model.net.layers[i].bias.size(), 0.0f);
    }

    Rng rng = Rng::derive(cfg.seed, 0x7261696e);
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            Gradients batch_grads = zero_like(model.net);
            const double inv = 1.0 / static_cast<double>(end - start);
            for (size_t k = start; k < end; ++k) {
                const LabeledImage& s = dataset[order[k]];
                const Tensor x = normalize(s.image, model.norm_mean, model.norm_std);
                ForwardTrace trace;
                const float logit = forward(model.net, x, trace);
                const BceResult bce = sigmoid_bce(logit, s.label);
                const Gradients g =
                    backward(model.net, trace, static_cast<float>(bce.dloss_dlogit));
                accumulate(batch_grads, g, inv);
            }
            sgd_step(model.net, batch_grads, vel, cfg.learning_rate, cfg.momentum,
                     cfg.weight_decay);
        }
    }
    return model;
}

Prediction predict(const ClassifierModel& model, const Image& image, ForwardCounter* counter) {
    if (image.width != model.input_side() || image.height != model.input_side())
        throw InvalidInput("image shape does not match the classifier input");
    const Tensor x = normalize(image, model.norm_mean, model.norm_std);
    ForwardTrace trace;
    const float logit = forward(model.net, x, trace, counter);
    return {sigmoid(logit), logit};
}

// ---------------------------------------------------------------------------
// Weight file I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'P', 'S', 'D'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("weight file truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

float read_f32(std::istream& is) {
    const uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_f32_array(std::ostream& os, const std::vector<float>& a) {
    for (float v : a) write_f32(os, v);
}

void read_f32_array(std::istream& is, std::vector<float>& a) {
    for (float& v : a) v = read_f32(is);
}

} // namespace

void save_model(const std::filesystem::path& path, const ClassifierModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open weight file for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(model.net.input_side));
    write_u32(os, static_cast<uint32_t>(model.net.layers.size()));
    for (const Layer& l : model.net.layers) {
        os.put(static_cast<char>(l.kind));
        switch (l.kind) {
            case LayerKind::conv:
                write_u32(os, l.in_ch);
                write_u32(os, l.out_ch);
                write_u32(os, l.kernel);
                write_u32(os, l.stride);
                write_u32(os, l.pad);
                write_f32_array(os, l.weights);
                write_f32_array(os, l.bias);
                break;
            case LayerKind::maxpool:
                write_u32(os, l.window);
                write_u32(os, l.pool_stride);
                break;
            case LayerKind::dense:
                write_u32(os, l.in_dim);
                write_u32(os, l.out_dim);
                write_f32_array(os, l.weights);
                write_f32_array(os, l.bias);
                break;
            case LayerKind::relu:
            case LayerKind::global_avg_pool:
                break;
        }
    }
    write_f32(os, model.norm_mean);
    write_f32(os, model.norm_std);
    if (!os) throw DataError("write failure on weight file: " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open weight file: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("bad magic in weight file: " + path.string());
    const uint32_t version = read_u32(is);
    if (version != kVersion)
        throw DataError("unsupported weight file version " + std::to_string(version));

    ClassifierModel model;
    model.net.input_side = static_cast<int>(read_u32(is));
    const uint32_t n_layers = read_u32(is);
    for (uint32_t i = 0; i < n_layers; ++i) {
        const int kind = is.get();
        if (kind == EOF) throw DataError("weight file truncated");
        Layer l;
        switch (static_cast<LayerKind>(kind)) {
            case LayerKind::conv: {
                const int in_ch = static_cast<int>(read_u32(is));
                const int out_ch = static_cast<int>(read_u32(is));
                const int kernel = static_cast<int>(read_u32(is));
                const int stride = static_cast<int>(read_u32(is));
                const int pad = static_cast<int>(read_u32(is));
                l = Layer::make_conv(in_ch, out_ch, kernel, stride, pad);
                read_f32_array(is, l.weights);
                read_f32_array(is, l.bias);
                model.net.cam_layer = static_cast<int>(model.net.layers.size());
                break;
            }
            case LayerKind::relu: l = Layer::make_relu(); break;
            case LayerKind::maxpool: {
                const int window = static_cast<int>(read_u32(is));
                const int stride = static_cast<int>(read_u32(is));
                l = Layer::make_maxpool(window, stride);
                break;
            }
            case LayerKind::global_avg_pool: l = Layer::make_gap(); break;
            case LayerKind::dense: {
                const int in_dim = static_cast<int>(read_u32(is));
                const int out_dim = static_cast<int>(read_u32(is));
                l = Layer::make_dense(in_dim, out_dim);
                read_f32_array(is, l.weights);
                read_f32_array(is, l.bias);
                break;
            }
            default:
                throw DataError("unknown layer kind tag " + std::to_string(kind) + " in " +
                                path.string());
        }
        model.net.layers.push_back(std::move(l));
    }
    model.norm_mean = read_f32(is);
    model.norm_std = read_f32(is);
    if (!is) throw DataError("weight file truncated: " + path.string());
    model.net.layer_shapes(); // validate
    return model;
}

} // namespace capsid
