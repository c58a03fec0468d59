#pragma once

#include <functional>
#include <optional>

#include "capsid/cam.hpp"
#include "capsid/classifier.hpp"
#include "capsid/eval.hpp"
#include "capsid/position_optimizer.hpp"

namespace capsid {

/// One localized particle: center, fixed radius from the known physical
/// size, confidence score.
struct Detection {
    Vec2 center;
    double radius_px = 0.0;
    double score = 0.0;

    Box box() const { return Box::from_center(center, radius_px); }
};

enum class ScoreMode {
    mask_other,      // fill the other detections' disks, then classify
    mask_background, // keep only this detection's disk, then classify
};

enum class InitMethod {
    gradcam, // top-1% center of mass of the class activation map
    random,  // uniform position (baseline)
};

struct DetectorConfig {
    double radius_nm = 0.0;
    /// Acceptance/stopping score threshold; inclusive (score >= t accepts).
    double stop_threshold = 0.5;
    int max_detections = 16;
    double nms_iou = 0.5;

    /// sigma_max in nm; <= 0 selects the image half-diagonal.
    double sigma_max_nm = 0.0;
    /// sigma_min as a multiple of the particle radius.
    double sigma_min_factor = 1.0;
    int opt_iterations = 200;
    /// Step size as a multiple of the particle radius (px per unit gradient).
    double step_factor = 0.1;
    /// Convergence tolerance as a multiple of the particle radius.
    double eps_factor = 0.05;
    /// Removal disk as a multiple of the radius. Slightly over 1 so the
    /// fill swallows the particle's rim even when the estimated center is
    /// off by a pixel or two; leftover crescents otherwise attract later
    /// rounds. 1.2 keeps the disk clear of neighbors at the generator's
    /// minimum separation.
    double removal_factor = 1.2;
    /// Verification keep-only disk as a multiple of the radius; padded for
    /// the same reason the removal disk is.
    double verify_factor = 1.3;
    Objective objective = Objective::logit;
    MaskConfig mask;

    ScoreMode score_mode = ScoreMode::mask_other;
    InitMethod init = InitMethod::gradcam;
};

/// Resolved per-image optimizer settings (nm converted through the image
/// scale, sigma_max defaulted to the half-diagonal).
OptConfig resolve_opt_config(const DetectorConfig& cfg, const Image& image);

double radius_px_for(const DetectorConfig& cfg, const Image& image);

struct DetectResult {
    std::vector<Detection> detections;
    uint64_t forward_passes = 0; // all classifier forwards spent on this image
    int rounds = 0;              // initialize/optimize/verify rounds run
    std::vector<Trajectory> trajectories; // one per round, in order
    std::optional<Heatmap> first_heatmap; // kept when dump_heatmap is set
    bool dump_heatmap = false;
};

/// Full pipeline: initialize, optimize, verify, remove, repeat until a
/// stopping criterion fires; then score, NMS, fixed-size boxes.
DetectResult detect(const ClassifierModel& model, const Image& image,
                    const DetectorConfig& cfg, Rng& rng, bool keep_heatmap = false);

/// Keep-only check of a candidate: fill everything but the candidate disk
/// and classify. Accepted iff score >= cfg.stop_threshold.
struct Verification {
    bool accepted;
    double score;
};
Verification verify_detection(const ClassifierModel& model, const Image& image, Vec2 p,
                              const DetectorConfig& cfg, ForwardCounter* counter = nullptr);

/// Assigns a confidence to every detection per the configured mode.
void score_detections(const ClassifierModel& model, const Image& image,
                      std::vector<Detection>& detections, ScoreMode mode,
                      const DetectorConfig& cfg, ForwardCounter* counter = nullptr);

/// Greedy non-maximum suppression: descending score (ties keep input
/// order); a box survives iff its IoU with every kept box is below the
/// threshold.
std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold);

float fill_value_for(const ClassifierModel& model, const MaskConfig& mask);

} // namespace capsid
