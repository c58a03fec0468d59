#pragma once

#include "capsid/image.hpp"
#include "capsid/tensor.hpp"

namespace capsid {

enum class FillMode {
    mean,  // replace with the training-set mean intensity
    zeros, // replace with 0
};

struct MaskConfig {
    /// Multiply the mask by 1/(sigma*sqrt(2*pi)) (the 1-D normalizer applied
    /// to a 2-D mask). Off by default: without batch normalization in the
    /// classifier the pdf constant scales the masked image far below the
    /// training distribution and the logit goes flat; the plain exponential
    /// (peak 1 at p) keeps the objective informative. Both modes are
    /// supported and compared by the pdf ablation suite.
    bool pdf_normalized = false;
    FillMode fill = FillMode::mean;
};

/// Isotropic Gaussian mask centered at p (pixel coordinates), one value per
/// pixel: exp(-|x - p|^2 / (2 sigma^2)), optionally scaled by the pdf
/// constant. sigma is in pixels here; callers convert from nm.
Tensor gaussian_mask(Vec2 p, double sigma_px, int width, int height,
                     const MaskConfig& cfg = {});

/// Analytic dM/dp. Each component is M_ij * (x_ij - p) / sigma^2; the pdf
/// constant cancels into M so the formula is identical in both modes.
struct MaskGradient {
    Tensor d_px;
    Tensor d_py;
};
MaskGradient mask_position_gradient(Vec2 p, double sigma_px, int width, int height,
                                    const MaskConfig& cfg = {});

/// Elementwise product image * mask. Shapes must match.
Image apply_mask(const Image& image, const Tensor& mask);

enum class FillRegion {
    remove,    // fill inside the disk
    keep_only, // fill outside the disk
};

/// Replaces a circular region (pixel centers within `radius_px` of `center`,
/// inclusive) or its complement with `fill_value`.
Image circular_fill(const Image& image, Vec2 center, double radius_px, float fill_value,
                    FillRegion region);

} // namespace capsid
