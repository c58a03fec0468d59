#pragma once

#include <optional>

#include "capsid/classifier.hpp"
#include "capsid/image.hpp"
#include "capsid/rng.hpp"

namespace capsid {

/// Class activation map at the CAM layer's resolution plus a copy
/// upsampled to image resolution. Values are non-negative.
struct Heatmap {
    int low_w = 0, low_h = 0;
    std::vector<float> low;
    int width = 0, height = 0;
    std::vector<float> up;

    float up_at(int x, int y) const { return up[static_cast<size_t>(y) * width + x]; }
};

enum class Upsample { bilinear, nearest };

/// GradCAM: channel weights are the spatial mean of d(logit)/dA over the
/// CAM layer's activations A, the map is relu(sum_k w_k A_k), upsampled to
/// image size. Costs one forward and one backward pass.
Heatmap grad_cam(const ClassifierModel& model, const Image& image,
                 ForwardCounter* counter = nullptr, Upsample up = Upsample::bilinear);

/// Initial position: intensity-weighted center of mass of the pixels at or
/// above the 99th percentile (nearest-rank, upsampled map). If the center
/// of mass falls outside that set, a uniformly random member of the set is
/// used instead. Returns nullopt iff the map is flat (min == max).
std::optional<Vec2> init_position(const Heatmap& heat, Rng& rng);

/// Min-max scales the upsampled map to 8 bits for debugging dumps.
Image heatmap_to_image(const Heatmap& heat, double nm_per_px);

} // namespace capsid
