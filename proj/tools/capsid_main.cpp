// Command-line front end: synthetic data generation, classifier training,
// detection, evaluation and the ablation suites. Every command honors
// --seed and writes files atomically (temp + rename) so reruns with the
// same inputs are byte-identical.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "capsid/config.hpp"
#include "capsid/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace capsid;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

void write_atomic(const fs::path& path, const std::string& contents) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot open for writing: " + tmp.string());
        os << contents;
        if (!os) throw DataError("write failure: " + tmp.string());
    }
    fs::rename(tmp, path);
}

SceneSpec scene_spec_from_config(const KeyValueConfig& cfg) {
    cfg.require_known({"side", "nm_per_px", "radius_nm", "max_count", "empty_prob", "style",
                       "contrast_lo", "contrast_hi", "background", "background_jitter", "halo", "halo_radius",
                       "noise_sigma", "texture_amp", "separation_factor", "seed", "n"});
    SceneSpec spec;
    spec.side = cfg.get_int("side", spec.side);
    spec.nm_per_px = cfg.get_double("nm_per_px", spec.nm_per_px);
    spec.radius_nm = cfg.get_double("radius_nm", spec.radius_nm);
    spec.max_count = cfg.get_int("max_count", spec.max_count);
    spec.empty_prob = cfg.get_double("empty_prob", spec.empty_prob);
    const std::string style = cfg.get_string("style", "disk");
    if (style == "disk")
        spec.style = ParticleStyle::disk;
    else if (style == "ring")
        spec.style = ParticleStyle::ring;
    else
        throw ConfigError("style must be 'disk' or 'ring', got '" + style + "'");
    spec.contrast_lo = cfg.get_double("contrast_lo", spec.contrast_lo);
    spec.contrast_hi = cfg.get_double("contrast_hi", spec.contrast_hi);
    spec.background = cfg.get_double("background", spec.background);
    spec.background_jitter = cfg.get_double("background_jitter", spec.background_jitter);
    spec.halo = cfg.get_double("halo", spec.halo);
    spec.halo_radius = cfg.get_double("halo_radius", spec.halo_radius);
    spec.noise_sigma = cfg.get_double("noise_sigma", spec.noise_sigma);
    spec.texture_amp = cfg.get_double("texture_amp", spec.texture_amp);
    spec.separation_factor = cfg.get_double("separation_factor", spec.separation_factor);
    spec.seed = cfg.get_u64("seed", spec.seed);
    spec.validate();
    return spec;
}

DetectorConfig detector_config_from(const KeyValueConfig& cfg, double default_radius_nm) {
    cfg.require_known({"radius_nm", "stop_threshold", "max_detections", "nms_iou",
                       "sigma_max_nm", "sigma_min_factor", "opt_iterations", "step_factor",
                       "eps_factor", "objective", "pdf", "fill", "score_mode", "init"});
    DetectorConfig dc;
    dc.radius_nm = cfg.get_double("radius_nm", default_radius_nm);
    dc.stop_threshold = cfg.get_double("stop_threshold", dc.stop_threshold);
    dc.max_detections = cfg.get_int("max_detections", dc.max_detections);
    dc.nms_iou = cfg.get_double("nms_iou", dc.nms_iou);
    dc.sigma_max_nm = cfg.get_double("sigma_max_nm", dc.sigma_max_nm);
    dc.sigma_min_factor = cfg.get_double("sigma_min_factor", dc.sigma_min_factor);
    dc.opt_iterations = cfg.get_int("opt_iterations", dc.opt_iterations);
    dc.step_factor = cfg.get_double("step_factor", dc.step_factor);
    dc.eps_factor = cfg.get_double("eps_factor", dc.eps_factor);
    const std::string obj = cfg.get_string("objective", "logit");
    if (obj == "logit")
        dc.objective = Objective::logit;
    else if (obj == "score")
        dc.objective = Objective::score;
    else
        throw ConfigError("objective must be 'logit' or 'score', got '" + obj + "'");
    dc.mask.pdf_normalized = cfg.get_bool("pdf", dc.mask.pdf_normalized);
    const std::string fill = cfg.get_string("fill", "mean");
    if (fill == "mean")
        dc.mask.fill = FillMode::mean;
    else if (fill == "zeros")
        dc.mask.fill = FillMode::zeros;
    else
        throw ConfigError("fill must be 'mean' or 'zeros', got '" + fill + "'");
    const std::string sm = cfg.get_string("score_mode", "mask_other");
    if (sm == "mask_other")
        dc.score_mode = ScoreMode::mask_other;
    else if (sm == "mask_background")
        dc.score_mode = ScoreMode::mask_background;
    else
        throw ConfigError("score_mode must be 'mask_other' or 'mask_background', got '" + sm +
                          "'");
    const std::string init = cfg.get_string("init", "gradcam");
    if (init == "gradcam")
        dc.init = InitMethod::gradcam;
    else if (init == "random")
        dc.init = InitMethod::random;
    else
        throw ConfigError("init must be 'gradcam' or 'random', got '" + init + "'");
    return dc;
}

double dataset_radius_nm(const fs::path& data_dir) {
    std::ifstream is(data_dir / "dataset.json");
    if (!is) throw DataError("cannot open " + (data_dir / "dataset.json").string());
    const json meta = json::parse(is);
    return meta.at("radius_nm").get<double>();
}

std::string detections_json(const std::vector<Detection>& dets) {
    json arr = json::array();
    for (const Detection& d : dets) {
        const Box b = d.box();
        arr.push_back({{"x", b.x},
                       {"y", b.y},
                       {"w", b.w},
                       {"h", b.h},
                       {"score", d.score},
                       {"cx", d.center.x},
                       {"cy", d.center.y}});
    }
    return arr.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const fs::path& config_path, const fs::path& out_dir, uint64_t seed_override,
              bool has_seed) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
    SceneSpec spec = scene_spec_from_config(cfg);
    if (has_seed) spec.seed = seed_override;
    const int n = cfg.get_int("n", 100);

    const Dataset ds = generate_dataset(spec, n);
    save_dataset(out_dir, ds);

    auto positives = [](const std::vector<DatasetSample>& s) {
        int p = 0;
        for (const auto& x : s) p += x.label();
        return p;
    };
    std::cout << "dataset written to " << out_dir.string() << "\n"
              << "  train: " << ds.train.size() << " (" << positives(ds.train) << " positive)\n"
              << "  val:   " << ds.val.size() << " (" << positives(ds.val) << " positive)\n"
              << "  test:  " << ds.test.size() << " (" << positives(ds.test) << " positive)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const fs::path& data_dir, const fs::path& config_path, const fs::path& out_path,
              uint64_t seed_override, bool has_seed) {
    TrainConfig tc;
    if (!config_path.empty()) {
        KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
        cfg.require_known({"epochs", "learning_rate", "momentum", "batch_size",
                           "weight_decay", "seed", "shuffle"});
        tc.epochs = cfg.get_int("epochs", tc.epochs);
        tc.learning_rate = cfg.get_double("learning_rate", tc.learning_rate);
        tc.momentum = cfg.get_double("momentum", tc.momentum);
        tc.batch_size = cfg.get_int("batch_size", tc.batch_size);
        tc.weight_decay = cfg.get_double("weight_decay", tc.weight_decay);
        tc.seed = cfg.get_u64("seed", tc.seed);
        tc.shuffle = cfg.get_bool("shuffle", tc.shuffle);
    }
    if (has_seed) tc.seed = seed_override;

    const Dataset ds = load_dataset(data_dir);
    if (ds.train.empty()) throw DataError("dataset has an empty train split");
    std::vector<LabeledImage> train_set;
    train_set.reserve(ds.train.size());
    for (const auto& s : ds.train) train_set.push_back({s.image, s.label()});

    const ClassifierModel model = train(train_set, tc);

    int correct = 0;
    for (const auto& s : ds.val) {
        const Prediction p = predict(model, s.image);
        correct += (p.score >= 0.5 ? 1 : 0) == s.label();
    }
    const double val_acc = ds.val.empty() ? 0.0 : static_cast<double>(correct) / ds.val.size();

    save_model(out_path, model);
    std::cout << "model written to " << out_path.string() << "\n"
              << "val_accuracy " << val_acc << " (" << correct << "/" << ds.val.size() << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

int cmd_detect(const fs::path& weights, const fs::path& data_dir, const std::string& split,
               const fs::path& config_path, const fs::path& out_dir,
               const std::string& method_name, double size_error, uint64_t seed,
               bool dump_heatmaps, bool dump_trajectories, int threads) {
    const ClassifierModel model = load_model(weights);
    const double radius_nm = dataset_radius_nm(data_dir);
    KeyValueConfig cfg = config_path.empty()
                             ? KeyValueConfig::parse_string("", "<defaults>")
                             : KeyValueConfig::parse_file(config_path);
    DetectorConfig dc = detector_config_from(cfg, radius_nm);
    dc.radius_nm *= 1.0 + size_error;

    const Dataset ds = load_dataset(data_dir);
    const std::vector<DatasetSample>& samples = ds.split(split);
    const Method method = method_from_string(method_name);

    fs::create_directories(out_dir);

    struct PerImage {
        std::string stem;
        std::vector<Detection> detections;
        uint64_t forwards = 0;
        std::optional<Heatmap> heatmap;
        std::vector<Trajectory> trajectories;
    };
    std::vector<PerImage> results(samples.size());

    DogConfig dog_cfg;
    dog_cfg.radius_nm = dc.radius_nm;

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i; (i = next.fetch_add(1)) < samples.size();) {
            PerImage& out = results[i];
            char stem[32];
            std::snprintf(stem, sizeof(stem), "img_%05zu", i);
            out.stem = stem;
            const Image& img = samples[i].image;
            if (method == Method::opt) {
                Rng rng = Rng::derive(seed, i);
                DetectResult dr = detect(model, img, dc, rng, dump_heatmaps);
                out.detections = std::move(dr.detections);
                out.forwards = dr.forward_passes;
                out.heatmap = std::move(dr.first_heatmap);
                if (dump_trajectories) out.trajectories = std::move(dr.trajectories);
            } else if (method == Method::sliding) {
                DetectResult dr = sliding_window_detect(model, img, dc);
                out.detections = std::move(dr.detections);
                out.forwards = dr.forward_passes;
            } else {
                out.detections = dog_detect(img, dog_cfg);
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (method == Method::dog) {
        std::vector<std::vector<Detection>> raw(results.size());
        for (size_t i = 0; i < results.size(); ++i) raw[i] = std::move(results[i].detections);
        finalize_dog_scores(raw, dog_cfg.respond_score);
        for (size_t i = 0; i < results.size(); ++i) results[i].detections = std::move(raw[i]);
    }

    json manifest = json::array();
    uint64_t total_forwards = 0;
    size_t total_dets = 0;
    for (const PerImage& r : results) {
        write_atomic(out_dir / (r.stem + ".json"), detections_json(r.detections));
        if (r.heatmap) write_pgm(out_dir / (r.stem + "_cam.pgm"),
                                 heatmap_to_image(*r.heatmap, 1.0));
        for (size_t k = 0; k < r.trajectories.size(); ++k)
            write_trajectory_csv(out_dir / (r.stem + "_traj" + std::to_string(k) + ".csv"),
                                 r.trajectories[k]);
        manifest.push_back(r.stem);
        total_forwards += r.forwards;
        total_dets += r.detections.size();
    }
    write_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");

    std::cout << "detections for " << samples.size() << " images written to "
              << out_dir.string() << "\n"
              << "total detections " << total_dets << ", classifier forwards "
              << total_forwards << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const fs::path& dets_dir, const fs::path& data_dir, const std::string& split,
             const fs::path& out_path) {
    const Dataset ds = load_dataset(data_dir);
    const std::vector<DatasetSample>& samples = ds.split(split);
    const double radius_px = ds.spec.radius_px();

    std::vector<std::vector<ScoredBox>> dets(samples.size());
    std::vector<std::vector<GtBox>> gts(samples.size());
    size_t missing = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "img_%05zu", i);
        const fs::path file = dets_dir / (std::string(stem) + ".json");
        if (fs::exists(file)) {
            std::ifstream is(file);
            json arr;
            try {
                arr = json::parse(is);
            } catch (const json::parse_error& e) {
                throw DataError("parse error in " + file.string() + ": " + e.what());
            }
            for (const json& d : arr) {
                dets[i].push_back({{d.at("x").get<double>(), d.at("y").get<double>(),
                                    d.at("w").get<double>(), d.at("h").get<double>()},
                                   d.at("score").get<double>(),
                                   static_cast<int>(i)});
            }
        } else {
            ++missing;
        }
        gts[i] = samples[i].gt_boxes(radius_px);
        for (GtBox& g : gts[i]) g.image_id = static_cast<int>(i);
    }
    if (missing == samples.size() && !samples.empty())
        std::cerr << "warning: no detection files found in " << dets_dir.string() << "\n";

    std::vector<PrPoint> pr;
    const double m = map50(dets, gts, &pr);

    std::vector<ScoredBox> all_dets;
    std::vector<GtBox> all_gts;
    for (size_t i = 0; i < samples.size(); ++i) {
        all_dets.insert(all_dets.end(), dets[i].begin(), dets[i].end());
        all_gts.insert(all_gts.end(), gts[i].begin(), gts[i].end());
    }
    const F1Result f1 = f1_at_iou(all_dets, all_gts, 0.5);

    json metrics = {{"mAP50", m},
                    {"precision", f1.precision},
                    {"recall", f1.recall},
                    {"f1", f1.f1},
                    {"counts",
                     {{"tp", f1.tp},
                      {"fp", f1.fp},
                      {"fn", f1.fn},
                      {"detections", all_dets.size()},
                      {"gts", all_gts.size()},
                      {"images", samples.size()}}}};
    write_atomic(out_path, metrics.dump(2) + "\n");

    std::ostringstream csv;
    csv << "rank,score,precision,recall\n";
    for (size_t k = 0; k < pr.size(); ++k)
        csv << k + 1 << ',' << pr[k].score << ',' << pr[k].precision << ',' << pr[k].recall
            << '\n';
    fs::path pr_path = out_path;
    pr_path.replace_extension(".pr.csv");
    write_atomic(pr_path, csv.str());

    std::cout << "mAP50 " << m << "  precision " << f1.precision << "  recall " << f1.recall
              << "  f1 " << f1.f1 << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

int cmd_ablate(const std::string& suite, const fs::path& data_dir, const fs::path& weights,
               const fs::path& out_csv, int n_seeds, int eval_n, int iterations) {
    const ClassifierModel model = load_model(weights);
    const Dataset ds = load_dataset(data_dir);
    const SceneSpec& spec = ds.spec;

    DetectorConfig base;
    base.radius_nm = spec.radius_nm;
    base.opt_iterations = iterations;

    struct Row {
        std::string setting;
        SeededStat map;
        double forwards_mean = -1.0;
    };
    std::vector<Row> rows;

    auto run = [&](const std::string& name, const DetectorConfig& dc, Method method) {
        Row row;
        row.setting = name;
        double forwards = 0.0;
        SeededStat stat;
        for (int k = 0; k < n_seeds; ++k) {
            const auto samples = eval_patches(spec, eval_n, k);
            const SuiteResult r = run_suite(model, samples, dc, method, spec.seed + k);
            stat.values.push_back(r.map50);
            forwards += r.forwards_per_detection();
        }
        double sum = 0.0;
        for (double v : stat.values) sum += v;
        stat.mean = sum / stat.values.size();
        double var = 0.0;
        for (double v : stat.values) var += (v - stat.mean) * (v - stat.mean);
        stat.stddev = std::sqrt(var / stat.values.size());
        row.map = stat;
        row.forwards_mean = forwards / n_seeds;
        rows.push_back(row);
    };

    if (suite == "init") {
        DetectorConfig dc = base;
        dc.init = InitMethod::gradcam;
        run("gradcam", dc, Method::opt);
        dc.init = InitMethod::random;
        run("random", dc, Method::opt);
        run("sliding", base, Method::sliding);
    } else if (suite == "sigma_min") {
        for (double f : {2.0, 1.0, 0.5, 0.25}) {
            DetectorConfig dc = base;
            dc.sigma_min_factor = f;
            run(std::to_string(f) + "r", dc, Method::opt);
        }
    } else if (suite == "loss") {
        for (auto [name, obj] :
             {std::pair{"logit", Objective::logit}, std::pair{"score", Objective::score}}) {
            DetectorConfig dc = base;
            dc.objective = obj;
            run(name, dc, Method::opt);
        }
    } else if (suite == "fill") {
        for (auto [name, fill] :
             {std::pair{"mean", FillMode::mean}, std::pair{"zeros", FillMode::zeros}}) {
            DetectorConfig dc = base;
            dc.mask.fill = fill;
            run(name, dc, Method::opt);
        }
    } else if (suite == "score_mode") {
        for (auto [name, mode] : {std::pair{"mask_other", ScoreMode::mask_other},
                                  std::pair{"mask_background", ScoreMode::mask_background}}) {
            DetectorConfig dc = base;
            dc.score_mode = mode;
            run(name, dc, Method::opt);
        }
    } else if (suite == "pdf") {
        for (auto [name, pdf] : {std::pair{"on", true}, std::pair{"off", false}}) {
            DetectorConfig dc = base;
            dc.mask.pdf_normalized = pdf;
            run(name, dc, Method::opt);
        }
    } else if (suite == "size_error") {
        for (double e : {0.0, 0.1, 0.2, 0.3}) {
            DetectorConfig dc = base;
            dc.radius_nm = spec.radius_nm * (1.0 + e);
            run(std::to_string(static_cast<int>(e * 100)) + "%", dc, Method::opt);
        }
    } else {
        throw ConfigError("unknown suite '" + suite +
                          "' (valid: init, sigma_min, loss, fill, score_mode, pdf, "
                          "size_error)");
    }

    std::ostringstream csv;
    csv << "setting,map50_mean,map50_std,forwards_per_detection\n";
    for (const Row& r : rows) {
        csv << r.setting << ',' << r.map.mean << ',' << r.map.stddev << ','
            << r.forwards_mean << '\n';
        std::cout << r.setting << "  mAP50 " << r.map.mean << " +- " << r.map.stddev
                  << "  forwards/det " << r.forwards_mean << "\n";
    }
    write_atomic(out_csv, csv.str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly supervised particle detection toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, split = "test", out_path, weights, method = "opt";
    std::string suite, dets_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    double size_error = 0.0;
    bool dump_heatmaps = false, dump_trajectories = false;
    int threads = 1, n_seeds = 3, eval_n = 12, iterations = 100;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "override the configured seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", config_path, "scene spec (key=value)")->required();
    synth->add_option("--out", out_path, "output dataset directory")->required();
    add_seed(synth);

    CLI::App* trainc = app.add_subcommand("train", "train the presence classifier");
    trainc->add_option("--data", data_dir, "dataset directory")->required();
    trainc->add_option("--config", config_path, "training config (key=value)");
    trainc->add_option("--out", out_path, "output weight file")->required();
    add_seed(trainc);

    CLI::App* detectc = app.add_subcommand("detect", "run a detector over a split");
    detectc->add_option("--weights", weights, "classifier weight file")->required();
    detectc->add_option("--data", data_dir, "dataset directory")->required();
    detectc->add_option("--split", split, "train|val|test (default test)");
    detectc->add_option("--config", config_path, "detector config (key=value)");
    detectc->add_option("--out", out_path, "output detections directory")->required();
    detectc->add_option("--method", method, "opt|sliding|dog (default opt)");
    detectc->add_option("--size-error", size_error,
                        "relative corruption of the known radius, e.g. 0.2 for +20%");
    detectc->add_flag("--dump-heatmaps", dump_heatmaps, "write first-round CAM images");
    detectc->add_flag("--dump-trajectories", dump_trajectories, "write per-round CSVs");
    detectc->add_option("--threads", threads, "worker threads (default 1)");
    add_seed(detectc);

    CLI::App* evalc = app.add_subcommand("eval", "score detections against ground truth");
    evalc->add_option("--dets", dets_dir, "detections directory")->required();
    evalc->add_option("--data", data_dir, "dataset directory")->required();
    evalc->add_option("--split", split, "train|val|test (default test)");
    evalc->add_option("--out", out_path, "metrics JSON path")->required();

    CLI::App* ablatec = app.add_subcommand("ablate", "run an ablation suite");
    ablatec->add_option("suite", suite, "init|sigma_min|loss|fill|score_mode|pdf|size_error")
        ->required();
    ablatec->add_option("--data", data_dir, "dataset directory (provides the scene spec)")
        ->required();
    ablatec->add_option("--weights", weights, "classifier weight file")->required();
    ablatec->add_option("--out", out_path, "output CSV path")->required();
    ablatec->add_option("--seeds", n_seeds, "seeded repetitions (default 3)");
    ablatec->add_option("--eval-n", eval_n, "patches per seed (default 12)");
    ablatec->add_option("--iters", iterations, "optimizer iterations (default 100)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_path, seed, seed_set);
        if (trainc->parsed()) return cmd_train(data_dir, config_path, out_path, seed, seed_set);
        if (detectc->parsed())
            return cmd_detect(weights, data_dir, split, config_path, out_path, method,
                              size_error, seed_set ? seed : 0, dump_heatmaps,
                              dump_trajectories, threads);
        if (evalc->parsed()) return cmd_eval(dets_dir, data_dir, split, out_path);
        if (ablatec->parsed())
            return cmd_ablate(suite, data_dir, weights, out_path, n_seeds, eval_n, iterations);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitConfig;
}
