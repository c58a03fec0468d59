#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "capsid/tensor.hpp"

namespace capsid {

/// Single-channel image with intensities in [0,1] and a physical scale.
/// All radii and mask widths are specified in nanometers and converted to
/// pixels through nm_per_px, so the same configuration works at any
/// magnification.
struct Image {
    int width = 0;
    int height = 0;
    double nm_per_px = 1.0;
    std::vector<float> px; // row-major

    Image() = default;
    Image(int w, int h, double scale, float fill = 0.0f)
        : width(w), height(h), nm_per_px(scale), px(static_cast<size_t>(w) * h, fill) {}

    float& at(int x, int y) { return px[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return px[static_cast<size_t>(y) * width + x]; }

    bool in_bounds(double x, double y) const {
        return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
    }

    Tensor to_tensor() const {
        Tensor t({1, height, width});
        t.v = px;
        return t;
    }
};

/// Writes an 8-bit binary PGM (P5). Intensities are clamped to [0,1] and
/// quantized with round-to-nearest.
void write_pgm(const std::filesystem::path& path, const Image& img);

/// Reads a P5 PGM with maxval 255. Malformed input raises DataError naming
/// the file and byte offset.
Image read_pgm(const std::filesystem::path& path, double nm_per_px = 1.0);

} // namespace capsid
