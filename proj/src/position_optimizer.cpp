#include "capsid/position_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace capsid {

double sigma_at(const SigmaSchedule& schedule, int t) {
    if (schedule.sigma_min_nm <= 0.0 || schedule.sigma_max_nm < schedule.sigma_min_nm)
        throw ConfigError("sigma schedule requires sigma_max >= sigma_min > 0");
    if (schedule.steps < 1) throw ConfigError("sigma schedule needs at least one step");
    const double frac = static_cast<double>(t) / static_cast<double>(schedule.steps);
    return schedule.sigma_max_nm *
           std::pow(schedule.sigma_min_nm / schedule.sigma_max_nm, frac);
}

ObjectiveEval objective_gradient(const ClassifierModel& model, const Image& image, Vec2 p,
                                 double sigma_px, Objective objective, const MaskConfig& mask,
                                 ForwardCounter* counter) {
    const Tensor m = gaussian_mask(p, sigma_px, image.width, image.height, mask);
    const Image masked = apply_mask(image, m);
    const Tensor x = normalize(masked, model.norm_mean, model.norm_std);

    ForwardTrace trace;
    const float logit = forward(model.net, x, trace, counter);

    double value;
    float seed;
    if (objective == Objective::logit) {
        value = logit;
        seed = 1.0f;
    } else {
        const double s = sigmoid(logit);
        value = s;
        seed = static_cast<float>(s * (1.0 - s));
    }
    const Gradients grads = backward(model.net, trace, seed);

    const MaskGradient mg = mask_position_gradient(p, sigma_px, image.width, image.height, mask);
    const double inv_std = 1.0 / model.norm_std;
    double gx = 0.0, gy = 0.0;
    for (size_t i = 0; i < image.px.size(); ++i) {
        const double chain = grads.input_grad.v[i] * inv_std * image.px[i];
        gx += chain * mg.d_px.v[i];
        gy += chain * mg.d_py.v[i];
    }
    return {value, {gx, gy}};
}

OptimizeResult optimize_position(const ClassifierModel& model, const Image& image, Vec2 p0,
                                 const OptConfig& cfg, ForwardCounter* counter) {
    if (!image.in_bounds(p0.x, p0.y))
        throw InvalidInput("initial position lies outside the image");
    if (cfg.step_px <= 0.0) throw ConfigError("step size must be positive");

    const double px_per_nm = 1.0 / image.nm_per_px;
    OptimizeResult res;
    res.position = p0;

    ForwardCounter local;
    ForwardCounter* fc = counter ? counter : &local;
    const uint64_t start_count = fc->count;

    Vec2 p = p0;
    int small_steps = 0;
    for (int t = 0; t < cfg.max_iterations; ++t) {
        const double sigma_px = sigma_at(cfg.schedule, t) * px_per_nm;
        const ObjectiveEval eval =
            objective_gradient(model, image, p, sigma_px, cfg.objective, cfg.mask, fc);
        res.trajectory.points.push_back({t, p, sigma_px, eval.value});

        const double mag = std::max(std::abs(eval.gradient.x), std::abs(eval.gradient.y));
        Vec2 next = p;
        if (mag > 0.0) {
            next.x += cfg.step_px * eval.gradient.x / mag;
            next.y += cfg.step_px * eval.gradient.y / mag;
        }
        next.x = std::clamp(next.x, 0.0, static_cast<double>(image.width - 1));
        next.y = std::clamp(next.y, 0.0, static_cast<double>(image.height - 1));

        const double moved = std::hypot(next.x - p.x, next.y - p.y);
        p = next;
        if (moved < cfg.eps_px) {
            if (++small_steps >= 3) {
                res.converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    const int t_final = static_cast<int>(res.trajectory.points.size());
    const double sigma_final = sigma_at(cfg.schedule, t_final) * px_per_nm;
    res.trajectory.points.push_back(
        {t_final, p, sigma_final, std::numeric_limits<double>::quiet_NaN()});
    res.trajectory.forward_passes = fc->count - start_count;
    res.position = p;
    return res;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open trajectory file for writing: " + path.string());
    os << "t,px,py,sigma,value\n";
    for (const TrajectoryPoint& pt : traj.points) {
        os << pt.t << ',' << pt.p.x << ',' << pt.p.y << ',' << pt.sigma_px << ',' << pt.value
           << '\n';
    }
}

} // namespace capsid
