#pragma once

#include "capsid/detector.hpp"

namespace capsid {

/// Greedy dense variant of the detector: score a keep-only disk at every
/// grid position (stride 0.125*r), take local maxima of the response map
/// above the stop threshold, then reuse the detector's scoring and NMS.
DetectResult sliding_window_detect(const ClassifierModel& model, const Image& image,
                                   const DetectorConfig& cfg);

/// Uniform position on the pixel grid, seeded.
Vec2 random_init(int width, int height, Rng& rng);

struct DogConfig {
    double radius_nm = 0.0;
    /// Minimum |DoG response| of a keypoint.
    double contrast_threshold = 0.01;
    /// Accepted keypoint diameter range as multiples of the particle
    /// diameter 2r.
    double size_lo = 0.8;
    double size_hi = 1.2;
    int octaves = 3;
    int intervals = 3; // scale samples per octave doubling
    double base_sigma = 1.6;
    double assumed_blur = 0.5; // nominal blur of the input image
    /// Score with |response| (normalized across the dataset by the caller);
    /// otherwise every keypoint scores 1.
    bool respond_score = true;
};

struct DogKeypoint {
    Vec2 center;      // base-image pixel coordinates
    double diameter;  // 2*sqrt(2)*sigma: diameter of the disk whose DoG
                      // response peaks at sigma
    double response;  // |DoG| at the extremum
};

/// Difference-of-Gaussians blob detector over a scale-space pyramid.
/// Extrema of 3x3x3 neighborhoods, filtered by contrast and by the
/// size range around the known particle diameter. Scores carry the raw
/// |response|; use finalize_dog_scores for the dataset-level normalization.
std::vector<Detection> dog_detect(const Image& image, const DogConfig& cfg,
                                  std::vector<DogKeypoint>* keypoints = nullptr);

/// respond_score on: divides every score by the dataset maximum (the best
/// keypoint scores exactly 1). Off: sets every score to 1.
void finalize_dog_scores(std::vector<std::vector<Detection>>& per_image, bool respond_score);

} // namespace capsid
