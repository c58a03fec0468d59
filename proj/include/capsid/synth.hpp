#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "capsid/eval.hpp"
#include "capsid/image.hpp"
#include "capsid/rng.hpp"

namespace capsid {

enum class ParticleStyle {
    disk, // filled disk
    ring, // bright rim with a faint interior
};

/// Parameters of the synthetic electron-microscopy-like patch generator.
struct SceneSpec {
    int side = 64;
    double nm_per_px = 2.5;
    double radius_nm = 15.0;

    /// Particle count: 0 with probability empty_prob, else uniform on
    /// 1..max_count.
    int max_count = 8;
    double empty_prob = 0.25;

    ParticleStyle style = ParticleStyle::disk;
    double contrast_lo = 0.35;
    double contrast_hi = 0.70;
    /// Faint corona around each particle (fraction of its contrast),
    /// spanning (r, halo_radius*r]: the envelope/tegument ring that
    /// surrounds a capsid in micrographs. 0 disables it.
    double halo = 0.0;
    double halo_radius = 1.6;
    double background = 0.35;
    /// Per-image background level jitter (uniform +-): emulates stain-depth
    /// variation between micrographs, so one global fill value never
    /// matches every image exactly.
    double background_jitter = 0.08;
    double noise_sigma = 0.06;
    double texture_amp = 0.08;

    /// Minimum center separation as a multiple of the radius; must keep
    /// particles disjoint (>= 2).
    double separation_factor = 2.2;

    uint64_t seed = 1;

    double radius_px() const { return radius_nm / nm_per_px; }
    void validate() const;
};

struct DatasetSample {
    Image image;
    std::vector<Vec2> gt_centers;

    int label() const { return gt_centers.empty() ? 0 : 1; }
    std::vector<GtBox> gt_boxes(double radius_px) const {
        return centers_to_boxes(gt_centers, radius_px);
    }
};

/// Renders one patch with index-derived randomness (seed, index) so samples
/// are independent of generation order.
DatasetSample generate_patch(const SceneSpec& spec, uint64_t index);

struct Dataset {
    SceneSpec spec;
    std::vector<DatasetSample> train, val, test;

    const std::vector<DatasetSample>& split(const std::string& name) const;
};

/// n patches split 80/10/10 by a seeded shuffle.
Dataset generate_dataset(const SceneSpec& spec, int n);

/// Layout on disk: <dir>/dataset.json with the generating spec, and per
/// split <dir>/{train,val,test}/img_#####.pgm plus annotations.json holding
/// [{"image": file, "centers": [[x,y]..], "label": 0|1}].
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// Reads one split directory (annotations.json + PGMs); scale comes from
/// the caller since split dirs do not carry dataset.json.
std::vector<DatasetSample> load_split(const std::filesystem::path& split_dir,
                                      double nm_per_px);

} // namespace capsid
