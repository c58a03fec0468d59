#include "capsid/experiment.hpp"

#include <algorithm>
#include <cmath>

namespace capsid {

Method method_from_string(const std::string& name) {
    if (name == "opt") return Method::opt;
    if (name == "sliding") return Method::sliding;
    if (name == "dog") return Method::dog;
    throw ConfigError("unknown method '" + name + "' (expected opt, sliding or dog)");
}

namespace {

// One-to-one nearest matching of ground truths to detection centers.
int count_center_matches(const std::vector<Vec2>& gts, const std::vector<Detection>& dets,
                         double max_dist) {
    struct Pair {
        double dist;
        int gt, det;
    };
    std::vector<Pair> pairs;
    for (size_t g = 0; g < gts.size(); ++g) {
        for (size_t d = 0; d < dets.size(); ++d) {
            const double dist = std::hypot(gts[g].x - dets[d].center.x,
                                           gts[g].y - dets[d].center.y);
            if (dist <= max_dist)
                pairs.push_back({dist, static_cast<int>(g), static_cast<int>(d)});
        }
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
    std::vector<bool> gt_used(gts.size(), false), det_used(dets.size(), false);
    int matched = 0;
    for (const Pair& p : pairs) {
        if (gt_used[p.gt] || det_used[p.det]) continue;
        gt_used[p.gt] = true;
        det_used[p.det] = true;
        ++matched;
    }
    return matched;
}

} // namespace

SuiteResult run_suite(const ClassifierModel& model, const std::vector<DatasetSample>& samples,
                      const DetectorConfig& cfg, Method method, uint64_t seed,
                      const DogConfig* dog_cfg, double match_radius_fraction) {
    SuiteResult res;
    std::vector<std::vector<ScoredBox>> per_image_dets(samples.size());
    std::vector<std::vector<GtBox>> per_image_gts(samples.size());
    std::vector<std::vector<Detection>> raw(samples.size());

    double radius_px = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const Image& img = samples[i].image;
        radius_px = cfg.radius_nm / img.nm_per_px;
        if (method == Method::opt) {
            Rng rng = Rng::derive(seed, i);
            DetectResult dr = detect(model, img, cfg, rng);
            res.forward_passes += dr.forward_passes;
            raw[i] = std::move(dr.detections);
        } else if (method == Method::sliding) {
            DetectResult dr = sliding_window_detect(model, img, cfg);
            res.forward_passes += dr.forward_passes;
            raw[i] = std::move(dr.detections);
        } else {
            DogConfig dc = dog_cfg ? *dog_cfg : DogConfig{};
            dc.radius_nm = cfg.radius_nm;
            raw[i] = dog_detect(img, dc);
        }
    }
    if (method == Method::dog)
        finalize_dog_scores(raw, dog_cfg ? dog_cfg->respond_score : true);

    int matched = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const double gt_radius_px = samples[i].image.nm_per_px > 0.0
                                        ? cfg.radius_nm / samples[i].image.nm_per_px
                                        : radius_px;
        for (const Detection& d : raw[i])
            per_image_dets[i].push_back({d.box(), d.score, static_cast<int>(i)});
        per_image_gts[i] = samples[i].gt_boxes(gt_radius_px);
        res.total_detections += static_cast<int>(raw[i].size());
        res.total_gts += static_cast<int>(samples[i].gt_centers.size());
        matched += count_center_matches(samples[i].gt_centers, raw[i],
                                        match_radius_fraction * gt_radius_px);
    }
    res.map50 = map50(per_image_dets, per_image_gts);
    res.center_match_rate =
        res.total_gts > 0 ? static_cast<double>(matched) / res.total_gts : 1.0;
    return res;
}

std::vector<DatasetSample> eval_patches(const SceneSpec& spec, int n, int seed_index) {
    SceneSpec s = spec;
    s.seed = spec.seed + 7717ULL * static_cast<uint64_t>(seed_index + 1);
    std::vector<DatasetSample> samples;
    samples.reserve(n);
    for (int i = 0; i < n; ++i) samples.push_back(generate_patch(s, static_cast<uint64_t>(i)));
    return samples;
}

SeededStat seeded_map50(const ClassifierModel& model, const SceneSpec& eval_spec,
                        int patches_per_seed, int n_seeds, const DetectorConfig& cfg,
                        Method method, const DogConfig* dog_cfg) {
    SeededStat stat;
    for (int k = 0; k < n_seeds; ++k) {
        const auto samples = eval_patches(eval_spec, patches_per_seed, k);
        const SuiteResult r =
            run_suite(model, samples, cfg, method, eval_spec.seed + k, dog_cfg);
        stat.values.push_back(r.map50);
    }
    double sum = 0.0;
    for (double v : stat.values) sum += v;
    stat.mean = sum / stat.values.size();
    double var = 0.0;
    for (double v : stat.values) var += (v - stat.mean) * (v - stat.mean);
    stat.stddev = std::sqrt(var / stat.values.size());
    return stat;
}

} // namespace capsid
