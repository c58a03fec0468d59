#pragma once

#include <cstddef>
#include <vector>

#include "capsid/errors.hpp"

namespace capsid {

/// Dense row-major float tensor. Network activations use (channels, height,
/// width); flat vectors use a single extent.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
        v.assign(element_count(shape), fill);
    }

    static size_t element_count(const std::vector<int>& s) {
        size_t n = 1;
        for (int e : s) {
            if (e <= 0) throw InvalidInput("tensor extent must be positive");
            n *= static_cast<size_t>(e);
        }
        return s.empty() ? 0 : n;
    }

    size_t size() const { return v.size(); }

    int channels() const { return shape.size() == 3 ? shape[0] : 1; }
    int height() const { return shape.size() == 3 ? shape[1] : 1; }
    int width() const { return shape.size() == 3 ? shape[2] : static_cast<int>(v.size()); }

    float& at(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * height() + y) * width() + x];
    }
    float at(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * height() + y) * width() + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

/// 2-D position in pixel coordinates (x = column, y = row).
struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

} // namespace capsid
