#include "capsid/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace capsid {

float fill_value_for(const ClassifierModel& model, const MaskConfig& mask) {
    return mask.fill == FillMode::mean ? model.norm_mean : 0.0f;
}

double radius_px_for(const DetectorConfig& cfg, const Image& image) {
    if (cfg.radius_nm <= 0.0) throw ConfigError("particle radius (nm) must be positive");
    if (image.nm_per_px <= 0.0) throw ConfigError("image scale (nm per pixel) is unknown");
    return cfg.radius_nm / image.nm_per_px;
}

OptConfig resolve_opt_config(const DetectorConfig& cfg, const Image& image) {
    const double radius_px = radius_px_for(cfg, image);
    OptConfig opt;
    opt.schedule.sigma_max_nm =
        cfg.sigma_max_nm > 0.0
            ? cfg.sigma_max_nm
            : 0.5 * std::hypot(image.width, image.height) * image.nm_per_px;
    opt.schedule.sigma_min_nm = cfg.sigma_min_factor * cfg.radius_nm;
    opt.schedule.steps = cfg.opt_iterations;
    opt.max_iterations = cfg.opt_iterations;
    opt.step_px = cfg.step_factor * radius_px;
    opt.eps_px = cfg.eps_factor * radius_px;
    opt.objective = cfg.objective;
    opt.mask = cfg.mask;
    return opt;
}

Verification verify_detection(const ClassifierModel& model, const Image& image, Vec2 p,
                              const DetectorConfig& cfg, ForwardCounter* counter) {
    if (!image.in_bounds(p.x, p.y)) throw InvalidInput("candidate position out of bounds");
    // Padded like the removal disk: the check asks "is the whole particle
    // here", and the estimated center can be a pixel or two off.
    const double radius_px = cfg.verify_factor * radius_px_for(cfg, image);
    const Image isolated = circular_fill(image, p, radius_px, fill_value_for(model, cfg.mask),
                                         FillRegion::keep_only);
    const Prediction pred = predict(model, isolated, counter);
    return {pred.score >= cfg.stop_threshold, pred.score};
}

void score_detections(const ClassifierModel& model, const Image& image,
                      std::vector<Detection>& detections, ScoreMode mode,
                      const DetectorConfig& cfg, ForwardCounter* counter) {
    const float fill = fill_value_for(model, cfg.mask);
    for (size_t i = 0; i < detections.size(); ++i) {
        Image working = image;
        if (mode == ScoreMode::mask_other) {
            for (size_t j = 0; j < detections.size(); ++j) {
                if (j == i) continue;
                working = circular_fill(working, detections[j].center,
                                        cfg.removal_factor * detections[j].radius_px, fill,
                                        FillRegion::remove);
            }
        } else {
            working = circular_fill(working, detections[i].center, detections[i].radius_px,
                                    fill, FillRegion::keep_only);
        }
        detections[i].score = predict(model, working, counter).score;
    }
}

std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold) {
    std::vector<int> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return detections[a].score > detections[b].score;
    });
    std::vector<Detection> kept;
    for (int idx : order) {
        const Box candidate = detections[idx].box();
        bool overlaps = false;
        for (const Detection& k : kept) {
            if (iou(candidate, k.box()) >= iou_threshold) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) kept.push_back(detections[idx]);
    }
    return kept;
}

DetectResult detect(const ClassifierModel& model, const Image& image,
                    const DetectorConfig& cfg, Rng& rng, bool keep_heatmap) {
    if (cfg.stop_threshold <= 0.0 || cfg.stop_threshold >= 1.0)
        throw ConfigError("stop threshold must lie in (0,1)");
    if (cfg.max_detections < 1) throw ConfigError("max detections must be at least 1");
    const double radius_px = radius_px_for(cfg, image);
    const OptConfig opt = resolve_opt_config(cfg, image);
    const float fill = fill_value_for(model, cfg.mask);

    DetectResult res;
    ForwardCounter counter;
    Image working = image;

    // Criterion 2 on the untouched image: nothing to find, nothing to run.
    if (predict(model, working, &counter).score < cfg.stop_threshold) {
        res.forward_passes = counter.count;
        return res;
    }

    while (static_cast<int>(res.detections.size()) < cfg.max_detections) {
        // (a) Initialize; criterion 1 stops on a flat activation map.
        Vec2 p0;
        if (cfg.init == InitMethod::gradcam) {
            Heatmap heat = grad_cam(model, working, &counter);
            if (keep_heatmap && !res.first_heatmap) res.first_heatmap = heat;
            const std::optional<Vec2> init = init_position(heat, rng);
            if (!init) break;
            p0 = *init;
        } else {
            p0 = {static_cast<double>(rng.uniform_int(0, image.width - 1)),
                  static_cast<double>(rng.uniform_int(0, image.height - 1))};
        }

        // (b) Optimize the candidate position.
        ++res.rounds;
        OptimizeResult optres = optimize_position(model, working, p0, opt, &counter);
        res.trajectories.push_back(std::move(optres.trajectory));

        // (c) Criterion 3: candidate must survive the keep-only check.
        const Verification ver = verify_detection(model, working, optres.position, cfg, &counter);
        if (!ver.accepted) break;
        res.detections.push_back({optres.position, radius_px, ver.score});
        working = circular_fill(working, optres.position, cfg.removal_factor * radius_px, fill,
                                FillRegion::remove);

        // (d) Criterion 2: classifier sees no remaining particles.
        if (predict(model, working, &counter).score < cfg.stop_threshold) break;
    }

    score_detections(model, image, res.detections, cfg.score_mode, cfg, &counter);
    res.detections = nms(res.detections, cfg.nms_iou);
    res.forward_passes = counter.count;
    return res;
}

} // namespace capsid
