#pragma once

#include <string>
#include <vector>

#include "capsid/baselines.hpp"
#include "capsid/detector.hpp"
#include "capsid/synth.hpp"

namespace capsid {

enum class Method {
    opt,     // annealed-mask position optimization (the pipeline)
    sliding, // dense sliding-window baseline
    dog,     // difference-of-Gaussians baseline
};

Method method_from_string(const std::string& name);

struct SuiteResult {
    double map50 = 0.0;
    uint64_t forward_passes = 0;
    int total_detections = 0;
    int total_gts = 0;
    /// Ground truths with an accepted detection within `match_radius_fraction`
    /// of the radius (one-to-one nearest matching).
    double center_match_rate = 0.0;

    double forwards_per_detection() const {
        return total_detections > 0
                   ? static_cast<double>(forward_passes) / total_detections
                   : static_cast<double>(forward_passes);
    }
};

/// Runs one detection method over a set of samples and pools the metrics.
/// The per-image rng is derived from `seed` and the image index.
SuiteResult run_suite(const ClassifierModel& model, const std::vector<DatasetSample>& samples,
                      const DetectorConfig& cfg, Method method, uint64_t seed,
                      const DogConfig* dog_cfg = nullptr,
                      double match_radius_fraction = 0.5);

/// Mean/std over per-seed mAP values of repeated runs on freshly generated
/// evaluation patches (spec seed offset by the run index).
struct SeededStat {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> values;
};
SeededStat seeded_map50(const ClassifierModel& model, const SceneSpec& eval_spec,
                        int patches_per_seed, int n_seeds, const DetectorConfig& cfg,
                        Method method, const DogConfig* dog_cfg = nullptr);

/// Evaluation patches for seed k: the scene spec with a derived seed.
std::vector<DatasetSample> eval_patches(const SceneSpec& spec, int n, int seed_index);

} // namespace capsid
