#include "capsid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capsid/errors.hpp"

namespace capsid {

double iou(const Box& a, const Box& b) {
    if (a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0)
        throw InvalidInput("boxes must have positive extents");
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

MatchResult match_greedy(const std::vector<ScoredBox>& detections,
                         const std::vector<GtBox>& gts, double iou_threshold) {
    MatchResult res;
    res.total_gts = static_cast<int>(gts.size());
    res.order.resize(detections.size());
    std::iota(res.order.begin(), res.order.end(), 0);
    std::stable_sort(res.order.begin(), res.order.end(), [&](int a, int b) {
        return detections[a].score > detections[b].score;
    });

    std::vector<bool> gt_used(gts.size(), false);
    res.tp.assign(detections.size(), false);
    for (size_t k = 0; k < res.order.size(); ++k) {
        const ScoredBox& det = detections[res.order[k]];
        int best = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[g] || gts[g].image_id != det.image_id) continue;
            const double v = iou(det.box, gts[g].box);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            gt_used[best] = true;
            res.tp[k] = true;
            ++res.matched_gts;
        }
    }
    return res;
}

double average_precision(const std::vector<ScoredBox>& detections,
                         const std::vector<GtBox>& gts, double iou_threshold,
                         bool eleven_point, std::vector<PrPoint>* pr_points) {
    if (gts.empty()) return detections.empty() ? 1.0 : 0.0;
    if (detections.empty()) return 0.0;

    const MatchResult m = match_greedy(detections, gts, iou_threshold);
    const double n_gt = static_cast<double>(gts.size());

    std::vector<PrPoint> pr(detections.size());
    int tp = 0;
    for (size_t k = 0; k < detections.size(); ++k) {
        if (m.tp[k]) ++tp;
        pr[k].recall = tp / n_gt;
        pr[k].precision = static_cast<double>(tp) / static_cast<double>(k + 1);
        pr[k].score = detections[m.order[k]].score;
    }
    if (pr_points) *pr_points = pr;

    // Precision envelope: max precision at recall >= r.
    std::vector<double> env(pr.size());
    double running = 0.0;
    for (size_t k = pr.size(); k-- > 0;) {
        running = std::max(running, pr[k].precision);
        env[k] = running;
    }

    if (eleven_point) {
        double ap = 0.0;
        for (int i = 0; i <= 10; ++i) {
            const double r = i / 10.0;
            double p = 0.0;
            for (size_t k = 0; k < pr.size(); ++k) {
                if (pr[k].recall >= r) {
                    p = env[k];
                    break;
                }
            }
            ap += p / 11.0;
        }
        return ap;
    }

    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t k = 0; k < pr.size(); ++k) {
        ap += (pr[k].recall - prev_recall) * env[k];
        prev_recall = pr[k].recall;
    }
    return ap;
}

double map50(const std::vector<std::vector<ScoredBox>>& per_image_detections,
             const std::vector<std::vector<GtBox>>& per_image_gts,
             std::vector<PrPoint>* pr_points) {
    if (per_image_detections.size() != per_image_gts.size())
        throw InvalidInput("detection and ground-truth image lists do not align");
    std::vector<ScoredBox> pooled_dets;
    std::vector<GtBox> pooled_gts;
    for (size_t i = 0; i < per_image_detections.size(); ++i) {
        for (ScoredBox d : per_image_detections[i]) {
            d.image_id = static_cast<int>(i);
            pooled_dets.push_back(d);
        }
        for (GtBox g : per_image_gts[i]) {
            g.image_id = static_cast<int>(i);
            pooled_gts.push_back(g);
        }
    }
    return average_precision(pooled_dets, pooled_gts, 0.5, false, pr_points);
}

F1Result f1_at_iou(const std::vector<ScoredBox>& detections, const std::vector<GtBox>& gts,
                   double iou_threshold) {
    const MatchResult m = match_greedy(detections, gts, iou_threshold);
    F1Result res;
    res.tp = m.matched_gts;
    res.fp = static_cast<int>(detections.size()) - m.matched_gts;
    res.fn = static_cast<int>(gts.size()) - m.matched_gts;
    res.precision = detections.empty()
                        ? 1.0
                        : static_cast<double>(res.tp) / static_cast<double>(detections.size());
    res.recall =
        gts.empty() ? 1.0 : static_cast<double>(res.tp) / static_cast<double>(gts.size());
    res.f1 = (res.precision + res.recall) > 0.0
                 ? 2.0 * res.precision * res.recall / (res.precision + res.recall)
                 : 0.0;
    return res;
}

std::vector<GtBox> centers_to_boxes(const std::vector<Vec2>& centers, double radius_px,
                                    int image_id) {
    std::vector<GtBox> boxes;
    boxes.reserve(centers.size());
    for (const Vec2& c : centers) boxes.push_back({Box::from_center(c, radius_px), image_id});
    return boxes;
}

std::vector<std::string> budget_sample(std::vector<CostedItem> items, double budget_s,
                                       Rng& rng) {
    for (const auto& it : items)
        if (it.cost_s <= 0.0) throw InvalidInput("item costs must be positive");
    rng.shuffle(items);
    std::vector<std::string> picked;
    double spent = 0.0;
    for (const auto& it : items) {
        if (spent + it.cost_s > budget_s) break;
        spent += it.cost_s;
        picked.push_back(it.id);
    }
    return picked;
}

} // namespace capsid
