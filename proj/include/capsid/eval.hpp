#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsid/rng.hpp"
#include "capsid/tensor.hpp"

namespace capsid {

/// Axis-aligned box, top-left corner plus extent, in pixels.
struct Box {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

    static Box from_center(Vec2 c, double radius_px) {
        return {c.x - radius_px, c.y - radius_px, 2.0 * radius_px, 2.0 * radius_px};
    }
    Vec2 center() const { return {x + w / 2.0, y + h / 2.0}; }
};

/// Intersection over union. Degenerate (non-positive extent) boxes are
/// rejected.
double iou(const Box& a, const Box& b);

/// A scored box; image_id groups detections for pooled evaluation.
struct ScoredBox {
    Box box;
    double score = 0.0;
    int image_id = 0;
};

struct GtBox {
    Box box;
    int image_id = 0;
};

struct MatchResult {
    std::vector<bool> tp; // per detection, in descending-score order
    std::vector<int> order; // indices of the input detections in that order
    int matched_gts = 0;
    int total_gts = 0;
};

/// Greedy matching: detections in descending score order (ties keep input
/// order) claim the unmatched ground truth of highest IoU >= threshold
/// within the same image. Each ground truth matches at most once.
MatchResult match_greedy(const std::vector<ScoredBox>& detections,
                         const std::vector<GtBox>& gts, double iou_threshold);

struct PrPoint {
    double recall;
    double precision;
    double score;
};

/// Single-class average precision with all-points interpolation (area under
/// the precision envelope). Set eleven_point for the legacy 11-point rule.
double average_precision(const std::vector<ScoredBox>& detections,
                         const std::vector<GtBox>& gts, double iou_threshold,
                         bool eleven_point = false,
                         std::vector<PrPoint>* pr_points = nullptr);

/// Dataset-pooled AP at IoU 0.5: every detection of every image is ranked
/// in one list. per_image vectors must align by index.
double map50(const std::vector<std::vector<ScoredBox>>& per_image_detections,
             const std::vector<std::vector<GtBox>>& per_image_gts,
             std::vector<PrPoint>* pr_points = nullptr);

struct F1Result {
    double precision;
    double recall;
    double f1;
    int tp = 0, fp = 0, fn = 0;
};

/// Precision/recall/F1 from the greedy matching. With no detections,
/// precision is defined as 1 (nothing asserted, nothing wrong) and recall
/// follows the ground truth count.
F1Result f1_at_iou(const std::vector<ScoredBox>& detections, const std::vector<GtBox>& gts,
                   double iou_threshold);

/// Boxes of side 2*radius around location labels.
std::vector<GtBox> centers_to_boxes(const std::vector<Vec2>& centers, double radius_px,
                                    int image_id = 0);

struct CostedItem {
    std::string id;
    double cost_s = 0.0;
};

/// Annotation-budget sampling: seeded uniform shuffle, then the longest
/// prefix whose cumulative cost stays within the budget. The first item
/// that would exceed the budget ends the prefix.
std::vector<std::string> budget_sample(std::vector<CostedItem> items, double budget_s,
                                       Rng& rng);

} // namespace capsid
