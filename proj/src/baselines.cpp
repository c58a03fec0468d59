#include "capsid/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace capsid {

DetectResult sliding_window_detect(const ClassifierModel& model, const Image& image,
                                   const DetectorConfig& cfg) {
    const double radius_px = radius_px_for(cfg, image);
    const double stride = 0.125 * radius_px;
    const int nx = static_cast<int>(std::ceil(image.width / stride));
    const int ny = static_cast<int>(std::ceil(image.height / stride));

    DetectResult res;
    ForwardCounter counter;

    // Dense keep-only response map.
    std::vector<double> response(static_cast<size_t>(nx) * ny, 0.0);
    for (int gy = 0; gy < ny; ++gy) {
        for (int gx = 0; gx < nx; ++gx) {
            const Vec2 p{std::min(gx * stride, image.width - 1.0),
                         std::min(gy * stride, image.height - 1.0)};
            response[static_cast<size_t>(gy) * nx + gx] =
                verify_detection(model, image, p, cfg, &counter).score;
        }
    }

    // Grid-local maxima above the threshold become candidates. Plateaus
    // keep the first (row-major) cell.
    auto at = [&](int gx, int gy) { return response[static_cast<size_t>(gy) * nx + gx]; };
    for (int gy = 0; gy < ny; ++gy) {
        for (int gx = 0; gx < nx; ++gx) {
            const double v = at(gx, gy);
            if (v < cfg.stop_threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
                for (int dx = -1; dx <= 1 && is_max; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int qx = gx + dx, qy = gy + dy;
                    if (qx < 0 || qy < 0 || qx >= nx || qy >= ny) continue;
                    const double w = at(qx, qy);
                    if (w > v) is_max = false;
                    // Tie: only the earliest cell of a plateau survives.
                    if (w == v && (qy < gy || (qy == gy && qx < gx))) is_max = false;
                }
            }
            if (is_max) {
                const Vec2 p{std::min(gx * stride, image.width - 1.0),
                             std::min(gy * stride, image.height - 1.0)};
                res.detections.push_back({p, radius_px, v});
            }
        }
    }

    score_detections(model, image, res.detections, cfg.score_mode, cfg, &counter);
    res.detections = nms(res.detections, cfg.nms_iou);
    res.forward_passes = counter.count;
    return res;
}

Vec2 random_init(int width, int height, Rng& rng) {
    return {static_cast<double>(rng.uniform_int(0, width - 1)),
            static_cast<double>(rng.uniform_int(0, height - 1))};
}

// ---------------------------------------------------------------------------
// DoG keypoints
// ---------------------------------------------------------------------------

namespace {

struct FloatMap {
    int w = 0, h = 0;
    std::vector<float> v;
    FloatMap() = default;
    FloatMap(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0.0f) {}
    float at(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
    float& at(int x, int y) { return v[static_cast<size_t>(y) * w + x]; }
};

// Separable Gaussian blur with reflected borders.
FloatMap gaussian_blur(const FloatMap& src, double sigma) {
    if (sigma <= 0.0) return src;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };

    FloatMap tmp(src.w, src.h), dst(src.w, src.h);
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * src.at(reflect(x + i, src.w), y);
            tmp.at(x, y) = static_cast<float>(acc);
        }
    }
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp.at(x, reflect(y + i, src.h));
            dst.at(x, y) = static_cast<float>(acc);
        }
    }
    return dst;
}

FloatMap downsample_half(const FloatMap& src) {
    FloatMap dst(std::max(1, src.w / 2), std::max(1, src.h / 2));
    for (int y = 0; y < dst.h; ++y)
        for (int x = 0; x < dst.w; ++x) dst.at(x, y) = src.at(2 * x, 2 * y);
    return dst;
}

} // namespace

std::vector<Detection> dog_detect(const Image& image, const DogConfig& cfg,
                                  std::vector<DogKeypoint>* keypoints) {
    if (cfg.contrast_threshold <= 0.0 || cfg.base_sigma <= 0.0)
        throw ConfigError("DoG thresholds must be positive");
    const double radius_px = cfg.radius_nm / image.nm_per_px;
    const double diam_lo = cfg.size_lo * 2.0 * radius_px;
    const double diam_hi = cfg.size_hi * 2.0 * radius_px;
    const int levels = cfg.intervals + 3;
    const double k = std::pow(2.0, 1.0 / cfg.intervals);

    FloatMap base(image.width, image.height);
    base.v = image.px;
    // Lift the assumed input blur up to base_sigma.
    const double first =
        std::sqrt(std::max(0.01, cfg.base_sigma * cfg.base_sigma -
                                     cfg.assumed_blur * cfg.assumed_blur));
    FloatMap current = gaussian_blur(base, first);

    std::vector<Detection> detections;
    if (keypoints) keypoints->clear();

    for (int octave = 0; octave < cfg.octaves; ++octave) {
        if (current.w < 8 || current.h < 8) break;
        // Gaussian stack: level i has absolute scale base_sigma * k^i * 2^octave.
        std::vector<FloatMap> gauss(levels);
        gauss[0] = current;
        for (int i = 1; i < levels; ++i) {
            const double s_prev = cfg.base_sigma * std::pow(k, i - 1);
            const double s_cur = cfg.base_sigma * std::pow(k, i);
            const double inc = std::sqrt(s_cur * s_cur - s_prev * s_prev);
            gauss[i] = gaussian_blur(gauss[i - 1], inc);
        }
        std::vector<FloatMap> dog(levels - 1);
        for (int i = 0; i + 1 < levels; ++i) {
            dog[i] = FloatMap(current.w, current.h);
            for (size_t j = 0; j < dog[i].v.size(); ++j)
                dog[i].v[j] = gauss[i + 1].v[j] - gauss[i].v[j];
        }

        const double octave_scale = static_cast<double>(1 << octave);
        for (int li = 1; li + 1 < levels - 1; ++li) {
            for (int y = 1; y + 1 < current.h; ++y) {
                for (int x = 1; x + 1 < current.w; ++x) {
                    const float v = dog[li].at(x, y);
                    if (std::abs(v) < cfg.contrast_threshold) continue;
                    bool is_max = true, is_min = true;
                    for (int dl = -1; dl <= 1 && (is_max || is_min); ++dl) {
                        for (int dy = -1; dy <= 1; ++dy) {
                            for (int dx = -1; dx <= 1; ++dx) {
                                if (dl == 0 && dy == 0 && dx == 0) continue;
                                const float n = dog[li + dl].at(x + dx, y + dy);
                                if (n >= v) is_max = false;
                                if (n <= v) is_min = false;
                            }
                        }
                    }
                    if (!is_max && !is_min) continue;

                    // Scale attributed between the two Gaussian levels of
                    // this difference.
                    const double sigma =
                        cfg.base_sigma * std::pow(k, li + 0.5) * octave_scale;
                    const double diameter = 2.0 * std::sqrt(2.0) * sigma;
                    if (diameter < diam_lo || diameter > diam_hi) continue;

                    DogKeypoint kp;
                    kp.center = {x * octave_scale, y * octave_scale};
                    kp.diameter = diameter;
                    kp.response = std::abs(v);
                    if (keypoints) keypoints->push_back(kp);
                    detections.push_back({kp.center, radius_px, kp.response});
                }
            }
        }
        current = downsample_half(gauss[cfg.intervals]); // scale doubled
    }
    return detections;
}

void finalize_dog_scores(std::vector<std::vector<Detection>>& per_image, bool respond_score) {
    if (!respond_score) {
        for (auto& dets : per_image)
            for (Detection& d : dets) d.score = 1.0;
        return;
    }
    double max_response = 0.0;
    for (const auto& dets : per_image)
        for (const Detection& d : dets) max_response = std::max(max_response, d.score);
    if (max_response <= 0.0) return;
    for (auto& dets : per_image)
        for (Detection& d : dets) d.score /= max_response;
}

} // namespace capsid
