#include "capsid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "capsid/errors.hpp"

namespace capsid {

using nlohmann::json;

void SceneSpec::validate() const {
    if (side < 8) throw ConfigError("scene side must be at least 8 px");
    if (nm_per_px <= 0.0) throw ConfigError("nm_per_px must be positive");
    if (radius_nm <= 0.0) throw ConfigError("radius_nm must be positive");
    if (radius_px() * 2.0 >= side) throw ConfigError("particle does not fit in the image");
    if (max_count < 0) throw ConfigError("max_count must be non-negative");
    if (empty_prob < 0.0 || empty_prob > 1.0) throw ConfigError("empty_prob must lie in [0,1]");
    if (contrast_lo <= 0.0 || contrast_hi < contrast_lo)
        throw ConfigError("contrast range must satisfy 0 < lo <= hi");
    if (noise_sigma < 0.0 || texture_amp < 0.0 || background_jitter < 0.0)
        throw ConfigError("noise and texture amplitudes must be non-negative");
    if (separation_factor < 2.0)
        throw ConfigError("separation factor below 2 would allow overlapping particles");
}

namespace {

// Smooth low-frequency background: a coarse random grid, bilinearly
// interpolated across the image.
void add_texture(Image& img, double amplitude, Rng& rng) {
    if (amplitude <= 0.0) return;
    constexpr int kGrid = 9;
    double grid[kGrid][kGrid];
    for (auto& row : grid)
        for (double& v : row) v = rng.uniform(-1.0, 1.0);
    const double step_x = static_cast<double>(img.width) / (kGrid - 1);
    const double step_y = static_cast<double>(img.height) / (kGrid - 1);
    for (int y = 0; y < img.height; ++y) {
        const double gy = y / step_y;
        const int y0 = std::min(static_cast<int>(gy), kGrid - 2);
        const double fy = gy - y0;
        for (int x = 0; x < img.width; ++x) {
            const double gx = x / step_x;
            const int x0 = std::min(static_cast<int>(gx), kGrid - 2);
            const double fx = gx - x0;
            const double v = grid[y0][x0] * (1 - fx) * (1 - fy) +
                             grid[y0][x0 + 1] * fx * (1 - fy) +
                             grid[y0 + 1][x0] * (1 - fx) * fy +
                             grid[y0 + 1][x0 + 1] * fx * fy;
            img.at(x, y) += static_cast<float>(amplitude * v);
        }
    }
}

void render_particle(Image& img, Vec2 c, double r, double contrast, const SceneSpec& spec) {
    const double reach = std::max(r, spec.halo > 0.0 ? spec.halo_radius * r : r);
    const int x0 = std::max(0, static_cast<int>(std::floor(c.x - reach - 2.0)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(c.x + reach + 2.0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.y - reach - 2.0)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(c.y + reach + 2.0)));
    const double inner = 0.55 * r; // ring: rim spans [0.55r, r]
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d = std::hypot(x - c.x, y - c.y);
            // 1 px linear ramp at each boundary keeps edges antialiased.
            const double outer_cov = std::clamp(r + 0.5 - d, 0.0, 1.0);
            double v;
            if (spec.style == ParticleStyle::disk) {
                v = outer_cov;
            } else {
                const double inner_cov = std::clamp(inner + 0.5 - d, 0.0, 1.0);
                v = (outer_cov - inner_cov) + 0.3 * inner_cov;
            }
            if (spec.halo > 0.0) {
                const double halo_cov =
                    std::clamp(spec.halo_radius * r + 0.5 - d, 0.0, 1.0) - outer_cov;
                v += spec.halo * halo_cov;
            }
            img.at(x, y) += static_cast<float>(contrast * v);
        }
    }
}

} // namespace

DatasetSample generate_patch(const SceneSpec& spec, uint64_t index) {
    spec.validate();
    Rng rng = Rng::derive(spec.seed, index);

    int count = 0;
    if (spec.max_count > 0 && rng.uniform() >= spec.empty_prob)
        count = rng.uniform_int(1, spec.max_count);

    const double r = spec.radius_px();
    const double margin = r + 1.5;
    const double min_sep = spec.separation_factor * r;

    DatasetSample sample;
    const double bg = spec.background_jitter > 0.0
                          ? rng.uniform(spec.background - spec.background_jitter,
                                        spec.background + spec.background_jitter)
                          : spec.background;
    sample.image = Image(spec.side, spec.side, spec.nm_per_px, static_cast<float>(bg));

    // Rejection-sample non-overlapping centers.
    int attempts = 0;
    while (static_cast<int>(sample.gt_centers.size()) < count) {
        if (++attempts > 1000)
            throw DataError("could not place " + std::to_string(count) +
                            " particles after 1000 tries; loosen the scene spec");
        const Vec2 c{rng.uniform(margin, spec.side - 1.0 - margin),
                     rng.uniform(margin, spec.side - 1.0 - margin)};
        bool ok = true;
        for (const Vec2& other : sample.gt_centers) {
            if (std::hypot(c.x - other.x, c.y - other.y) < min_sep) {
                ok = false;
                break;
            }
        }
        if (ok) sample.gt_centers.push_back(c);
    }

    add_texture(sample.image, spec.texture_amp, rng);
    for (const Vec2& c : sample.gt_centers) {
        const double contrast = rng.uniform(spec.contrast_lo, spec.contrast_hi);
        render_particle(sample.image, c, r, contrast, spec);
    }
    if (spec.noise_sigma > 0.0) {
        for (float& v : sample.image.px)
            v += static_cast<float>(rng.normal(0.0, spec.noise_sigma));
    }
    for (float& v : sample.image.px) v = std::clamp(v, 0.0f, 1.0f);
    return sample;
}

Dataset generate_dataset(const SceneSpec& spec, int n) {
    if (n < 10) throw ConfigError("dataset needs at least 10 samples for an 80/10/10 split");
    Dataset ds;
    ds.spec = spec;
    std::vector<DatasetSample> all;
    all.reserve(n);
    for (int i = 0; i < n; ++i) all.push_back(generate_patch(spec, static_cast<uint64_t>(i)));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = Rng::derive(spec.seed, 0x73706c69);
    split_rng.shuffle(order);

    const int n_train = n * 8 / 10;
    const int n_val = n / 10;
    for (int i = 0; i < n; ++i) {
        DatasetSample& s = all[order[i]];
        if (i < n_train)
            ds.train.push_back(std::move(s));
        else if (i < n_train + n_val)
            ds.val.push_back(std::move(s));
        else
            ds.test.push_back(std::move(s));
    }
    return ds;
}

const std::vector<DatasetSample>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw InvalidInput("unknown split '" + name + "' (expected train, val or test)");
}

namespace {

json spec_to_json(const SceneSpec& s) {
    return json{{"side", s.side},
                {"nm_per_px", s.nm_per_px},
                {"radius_nm", s.radius_nm},
                {"max_count", s.max_count},
                {"empty_prob", s.empty_prob},
                {"style", s.style == ParticleStyle::disk ? "disk" : "ring"},
                {"contrast_lo", s.contrast_lo},
                {"contrast_hi", s.contrast_hi},
                {"background", s.background},
                {"background_jitter", s.background_jitter},
                {"halo", s.halo},
                {"halo_radius", s.halo_radius},
                {"noise_sigma", s.noise_sigma},
                {"texture_amp", s.texture_amp},
                {"separation_factor", s.separation_factor},
                {"seed", s.seed}};
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec s;
    s.side = j.at("side").get<int>();
    s.nm_per_px = j.at("nm_per_px").get<double>();
    s.radius_nm = j.at("radius_nm").get<double>();
    s.max_count = j.at("max_count").get<int>();
    s.empty_prob = j.at("empty_prob").get<double>();
    s.style = j.at("style").get<std::string>() == "ring" ? ParticleStyle::ring
                                                         : ParticleStyle::disk;
    s.contrast_lo = j.at("contrast_lo").get<double>();
    s.contrast_hi = j.at("contrast_hi").get<double>();
    s.background = j.at("background").get<double>();
    s.background_jitter = j.value("background_jitter", 0.0);
    s.halo = j.value("halo", 0.0);
    s.halo_radius = j.value("halo_radius", 1.6);
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.texture_amp = j.at("texture_amp").get<double>();
    s.separation_factor = j.at("separation_factor").get<double>();
    s.seed = j.at("seed").get<uint64_t>();
    return s;
}

void save_split(const std::filesystem::path& dir, const std::vector<DatasetSample>& samples) {
    std::filesystem::create_directories(dir);
    json ann = json::array();
    for (size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.pgm", i);
        write_pgm(dir / name, samples[i].image);
        json centers = json::array();
        for (const Vec2& c : samples[i].gt_centers) centers.push_back({c.x, c.y});
        ann.push_back({{"image", name}, {"centers", centers}, {"label", samples[i].label()}});
    }
    std::ofstream os(dir / "annotations.json");
    if (!os) throw DataError("cannot write annotations in " + dir.string());
    os << ann.dump(2) << '\n';
}

} // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    {
        json meta = {{"nm_per_px", ds.spec.nm_per_px},
                     {"radius_nm", ds.spec.radius_nm},
                     {"spec", spec_to_json(ds.spec)}};
        std::ofstream os(dir / "dataset.json");
        if (!os) throw DataError("cannot write " + (dir / "dataset.json").string());
        os << meta.dump(2) << '\n';
    }
    save_split(dir / "train", ds.train);
    save_split(dir / "val", ds.val);
    save_split(dir / "test", ds.test);
}

std::vector<DatasetSample> load_split(const std::filesystem::path& split_dir,
                                      double nm_per_px) {
    const auto ann_path = split_dir / "annotations.json";
    std::ifstream is(ann_path);
    if (!is) throw DataError("cannot open " + ann_path.string());
    json ann;
    try {
        ann = json::parse(is);
    } catch (const json::parse_error& e) {
        throw DataError("parse error in " + ann_path.string() + ": " + e.what());
    }
    if (!ann.is_array()) throw DataError(ann_path.string() + ": expected a top-level array");

    std::vector<DatasetSample> samples;
    samples.reserve(ann.size());
    for (const json& entry : ann) {
        DatasetSample s;
        const std::string file = entry.at("image").get<std::string>();
        s.image = read_pgm(split_dir / file, nm_per_px);
        for (const json& c : entry.at("centers"))
            s.gt_centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        const int label = entry.at("label").get<int>();
        if (label != s.label())
            throw DataError(ann_path.string() + ": label of " + file +
                            " contradicts its center list");
        samples.push_back(std::move(s));
    }
    return samples;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto meta_path = dir / "dataset.json";
    std::ifstream is(meta_path);
    if (!is) throw DataError("cannot open " + meta_path.string());
    json meta;
    try {
        meta = json::parse(is);
    } catch (const json::parse_error& e) {
        throw DataError("parse error in " + meta_path.string() + ": " + e.what());
    }
    Dataset ds;
    ds.spec = spec_from_json(meta.at("spec"));
    ds.train = load_split(dir / "train", ds.spec.nm_per_px);
    ds.val = load_split(dir / "val", ds.spec.nm_per_px);
    ds.test = load_split(dir / "test", ds.spec.nm_per_px);
    return ds;
}

} // namespace capsid
