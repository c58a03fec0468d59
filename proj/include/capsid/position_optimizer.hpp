#pragma once

#include <filesystem>
#include <vector>

#include "capsid/classifier.hpp"
#include "capsid/gaussian_mask.hpp"
#include "capsid/image.hpp"

namespace capsid {

/// Annealing schedule for the mask width, in nanometers.
/// sigma(t) = sigma_max * (sigma_min/sigma_max)^(t/steps) — exponential
/// interpolation from global context down to particle scale.
struct SigmaSchedule {
    double sigma_max_nm = 0.0;
    double sigma_min_nm = 0.0;
    int steps = 200;
};

double sigma_at(const SigmaSchedule& schedule, int t);

enum class Objective {
    logit, // maximize the raw classifier logit (default)
    score, // maximize sigmoid(logit)
};

struct OptConfig {
    SigmaSchedule schedule;
    /// Step in pixels per unit gradient; the gradient is scaled to unit
    /// infinity-norm before stepping.
    double step_px = 0.5;
    int max_iterations = 200;
    Objective objective = Objective::logit;
    /// Convergence: stop after 3 consecutive steps shorter than this.
    double eps_px = 0.3;
    MaskConfig mask;
};

struct TrajectoryPoint {
    int t;
    Vec2 p;
    double sigma_px;
    double value; // objective at p when its gradient was evaluated; NaN for
                  // the final point, which is never evaluated
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    uint64_t forward_passes = 0; // classifier forwards made by the optimizer
};

/// Objective C((I*M(p) - mean)/std) and its gradient with respect to p.
/// dC/dp_c = sum_ij dC/d(I*M)_ij * I_ij * dM_ij/dp_c, with the
/// normalization folded into dC/d(I*M). Exactly one classifier
/// forward+backward per call.
struct ObjectiveEval {
    double value;
    Vec2 gradient;
};
ObjectiveEval objective_gradient(const ClassifierModel& model, const Image& image, Vec2 p,
                                 double sigma_px, Objective objective = Objective::logit,
                                 const MaskConfig& mask = {},
                                 ForwardCounter* counter = nullptr);

struct OptimizeResult {
    Vec2 position;
    Trajectory trajectory;
    bool converged = false;
};

/// Annealed gradient ascent of the classifier objective through the
/// Gaussian mask. Positions are clamped to image bounds after every step.
OptimizeResult optimize_position(const ClassifierModel& model, const Image& image, Vec2 p0,
                                 const OptConfig& cfg, ForwardCounter* counter = nullptr);

/// CSV dump (t, px, py, sigma, value), one row per trajectory point.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

} // namespace capsid
