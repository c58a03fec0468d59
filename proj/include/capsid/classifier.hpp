#pragma once

#include <filesystem>
#include <vector>

#include "capsid/image.hpp"
#include "capsid/net.hpp"
#include "capsid/rng.hpp"

namespace capsid {

/// Presence/absence classifier plus the normalization statistics of its
/// training set. Immutable once trained; safe to share across threads.
struct ClassifierModel {
    Network net;
    float norm_mean = 0.0f;
    float norm_std = 1.0f;

    int input_side() const { return net.input_side; }
};

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 16;
    /// L2 penalty; keeps logit margins bounded so scores stay informative
    /// instead of saturating the sigmoid.
    double weight_decay = 1e-2;
    uint64_t seed = 1;
    bool shuffle = true;
};

/// Default architecture: three blocks of (stride-2 max-pool, 3x3 conv,
/// relu) with channels 8/16/32, then global average pooling and a dense
/// head to one logit. The last conv sits at input_side/8 and is the CAM
/// layer. Parameters come from the seeded uniform fan-in scheme
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ClassifierModel build_default(int input_side, uint64_t seed = 1);

/// (image - mean) / std, elementwise, as a (1,h,w) tensor.
Tensor normalize(const Image& image, float mean, float std);

struct LabeledImage {
    Image image;
    int label = 0; // 1 = at least one particle present
};

/// SGD with momentum on sigmoid BCE. Normalization statistics are the
/// global mean/std of the training images (population std). Deterministic
/// given cfg.seed.
ClassifierModel train(const std::vector<LabeledImage>& dataset, const TrainConfig& cfg);

struct Prediction {
    double score; // sigmoid(logit), in (0,1)
    double logit;
};

/// Normalizes internally and evaluates the classifier.
Prediction predict(const ClassifierModel& model, const Image& image,
                   ForwardCounter* counter = nullptr);

/// Binary weight file, little-endian. Layout (documented in the README):
/// magic "CPSD", u32 version, u32 input_side, u32 layer count, then per
/// layer a u8 kind tag, the kind's extents as u32, and f32 parameter
/// arrays (weights then bias), then norm mean and std as two f32.
/// Round-trips are bit-exact.
void save_model(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_model(const std::filesystem::path& path);

} // namespace capsid
