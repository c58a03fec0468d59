#include "capsid/cam.hpp"

#include <algorithm>
#include <cmath>

namespace capsid {

namespace {

void upsample_bilinear(const std::vector<float>& src, int sw, int sh, std::vector<float>& dst,
                       int dw, int dh) {
    const double fx = static_cast<double>(sw) / dw;
    const double fy = static_cast<double>(sh) / dh;
    for (int y = 0; y < dh; ++y) {
        const double sy = (y + 0.5) * fy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, sh - 1);
        const int y1 = std::min(y0 + 1, sh - 1);
        const double wy = std::clamp(sy - y0, 0.0, 1.0);
        for (int x = 0; x < dw; ++x) {
            const double sx = (x + 0.5) * fx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, sw - 1);
            const int x1 = std::min(x0 + 1, sw - 1);
            const double wx = std::clamp(sx - x0, 0.0, 1.0);
            const double top = src[y0 * sw + x0] * (1.0 - wx) + src[y0 * sw + x1] * wx;
            const double bot = src[y1 * sw + x0] * (1.0 - wx) + src[y1 * sw + x1] * wx;
            dst[static_cast<size_t>(y) * dw + x] =
                static_cast<float>(top * (1.0 - wy) + bot * wy);
        }
    }
}

void upsample_nearest(const std::vector<float>& src, int sw, int sh, std::vector<float>& dst,
                      int dw, int dh) {
    for (int y = 0; y < dh; ++y) {
        const int sy = std::min(static_cast<int>(static_cast<double>(y) * sh / dh), sh - 1);
        for (int x = 0; x < dw; ++x) {
            const int sx = std::min(static_cast<int>(static_cast<double>(x) * sw / dw), sw - 1);
            dst[static_cast<size_t>(y) * dw + x] = src[sy * sw + sx];
        }
    }
}

} // namespace

Heatmap grad_cam(const ClassifierModel& model, const Image& image, ForwardCounter* counter,
                 Upsample up) {
    if (model.net.cam_layer < 0) throw InvalidInput("model has no CAM layer");
    const Tensor x = normalize(image, model.norm_mean, model.norm_std);
    ForwardTrace trace;
    forward(model.net, x, trace, counter);
    const Gradients grads = backward(model.net, trace, 1.0f);

    const Tensor& act = trace.outputs[model.net.cam_layer];
    const Tensor& g = grads.cam_layer_grad;
    const int ch = act.channels(), lh = act.height(), lw = act.width();
    const size_t hw = static_cast<size_t>(lh) * lw;

    Heatmap heat;
    heat.low_w = lw;
    heat.low_h = lh;
    heat.low.assign(hw, 0.0f);
    for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        const size_t base = c * hw;
        for (size_t j = 0; j < hw; ++j) acc += g.v[base + j];
        const double wk = acc / static_cast<double>(hw);
        for (size_t j = 0; j < hw; ++j)
            heat.low[j] += static_cast<float>(wk * act.v[base + j]);
    }
    for (float& v : heat.low) v = v > 0.0f ? v : 0.0f;

    heat.width = image.width;
    heat.height = image.height;
    heat.up.assign(static_cast<size_t>(image.width) * image.height, 0.0f);
    if (up == Upsample::bilinear)
        upsample_bilinear(heat.low, lw, lh, heat.up, image.width, image.height);
    else
        upsample_nearest(heat.low, lw, lh, heat.up, image.width, image.height);
    return heat;
}

std::optional<Vec2> init_position(const Heatmap& heat, Rng& rng) {
    const auto [mn, mx] = std::minmax_element(heat.up.begin(), heat.up.end());
    if (!(*mn < *mx)) return std::nullopt; // flat map carries no focus

    // Nearest-rank 99th percentile over the upsampled map; ties included.
    std::vector<float> sorted(heat.up);
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    const size_t rank = static_cast<size_t>(std::ceil(0.99 * static_cast<double>(n)));
    const float threshold = sorted[std::min(rank, n) - 1];

    double wsum = 0.0, wx = 0.0, wy = 0.0;
    std::vector<int> members;
    for (int y = 0; y < heat.height; ++y) {
        for (int x = 0; x < heat.width; ++x) {
            const float v = heat.up_at(x, y);
            if (v >= threshold) {
                members.push_back(y * heat.width + x);
                wsum += v;
                wx += static_cast<double>(v) * x;
                wy += static_cast<double>(v) * y;
            }
        }
    }
    if (wsum <= 0.0) {
        // Top set has zero total weight (threshold 0 on a non-flat map can
        // only happen when positives exist, so this is unreachable in
        // practice; fall back to the max position).
        const size_t idx = static_cast<size_t>(std::distance(heat.up.begin(), mx));
        return Vec2{static_cast<double>(idx % heat.width),
                    static_cast<double>(idx / heat.width)};
    }

    Vec2 p{wx / wsum, wy / wsum};
    const int px = std::clamp(static_cast<int>(std::lround(p.x)), 0, heat.width - 1);
    const int py = std::clamp(static_cast<int>(std::lround(p.y)), 0, heat.height - 1);
    const bool inside = heat.up_at(px, py) >= threshold;
    if (!inside) {
        const int pick = rng.uniform_int(0, static_cast<int>(members.size()) - 1);
        const int idx = members[pick];
        p = Vec2{static_cast<double>(idx % heat.width), static_cast<double>(idx / heat.width)};
    }
    return p;
}

Image heatmap_to_image(const Heatmap& heat, double nm_per_px) {
    Image img(heat.width, heat.height, nm_per_px);
    const auto [mn, mx] = std::minmax_element(heat.up.begin(), heat.up.end());
    const float lo = *mn, hi = *mx;
    const float span = hi > lo ? hi - lo : 1.0f;
    for (size_t i = 0; i < heat.up.size(); ++i) img.px[i] = (heat.up[i] - lo) / span;
    return img;
}

} // namespace capsid
