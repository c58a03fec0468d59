#include "capsid/gaussian_mask.hpp"

#include <cmath>

namespace capsid {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

} // namespace

Tensor gaussian_mask(Vec2 p, double sigma_px, int width, int height, const MaskConfig& cfg) {
    if (sigma_px <= 0.0) throw ConfigError("mask standard deviation must be positive");
    Tensor mask({1, height, width});
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    const double scale = cfg.pdf_normalized ? 1.0 / (sigma_px * std::sqrt(kTwoPi)) : 1.0;
    for (int y = 0; y < height; ++y) {
        const double dy = y - p.y;
        for (int x = 0; x < width; ++x) {
            const double dx = x - p.x;
            mask.at(0, y, x) =
                static_cast<float>(scale * std::exp(-(dx * dx + dy * dy) * inv2s2));
        }
    }
    return mask;
}

MaskGradient mask_position_gradient(Vec2 p, double sigma_px, int width, int height,
                                    const MaskConfig& cfg) {
    if (sigma_px <= 0.0) throw ConfigError("mask standard deviation must be positive");
    MaskGradient g{Tensor({1, height, width}), Tensor({1, height, width})};
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    const double invs2 = 1.0 / (sigma_px * sigma_px);
    const double scale = cfg.pdf_normalized ? 1.0 / (sigma_px * std::sqrt(kTwoPi)) : 1.0;
    for (int y = 0; y < height; ++y) {
        const double dy = y - p.y;
        for (int x = 0; x < width; ++x) {
            const double dx = x - p.x;
            const double m = scale * std::exp(-(dx * dx + dy * dy) * inv2s2);
            g.d_px.at(0, y, x) = static_cast<float>(m * dx * invs2);
            g.d_py.at(0, y, x) = static_cast<float>(m * dy * invs2);
        }
    }
    return g;
}

Image apply_mask(const Image& image, const Tensor& mask) {
    if (mask.height() != image.height || mask.width() != image.width)
        throw InvalidInput("mask shape does not match the image");
    Image out = image;
    for (size_t i = 0; i < out.px.size(); ++i) out.px[i] *= mask.v[i];
    return out;
}

Image circular_fill(const Image& image, Vec2 center, double radius_px, float fill_value,
                    FillRegion region) {
    if (radius_px <= 0.0) throw InvalidInput("fill radius must be positive");
    Image out = image;
    const double r2 = radius_px * radius_px;
    for (int y = 0; y < image.height; ++y) {
        const double dy = y - center.y;
        for (int x = 0; x < image.width; ++x) {
            const double dx = x - center.x;
            const bool inside = dx * dx + dy * dy <= r2;
            if (inside == (region == FillRegion::remove)) out.at(x, y) = fill_value;
        }
    }
    return out;
}

} // namespace capsid
