// Command-line front end: synthetic scene generation, scale estimation,
// joint optimization, and trajectory evaluation.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "quadscale/quadscale.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDomain = 2;

std::string csv_path_for(const std::string& json_path) {
    fs::path p(json_path);
    p.replace_extension(".csv");
    return p.string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw quadscale::Error("cannot write file: " + path);
    out << text;
}

struct SeedRange {
    std::uint64_t first = 0;
    std::uint64_t last = 0;
    bool set = false;
};

SeedRange parse_seed_range(const std::string& text) {
    const auto pos = text.find("..");
    if (pos == std::string::npos) {
        throw CLI::ValidationError("--seeds", "expected A..B");
    }
    SeedRange r;
    r.first = std::stoull(text.substr(0, pos));
    r.last = std::stoull(text.substr(pos + 2));
    r.set = true;
    if (r.last < r.first) {
        throw CLI::ValidationError("--seeds", "range end before start");
    }
    return r;
}

int cmd_simulate(const std::string& preset, std::uint64_t seed,
                 const std::string& out_dir, double true_scale,
                 const quadscale::NoiseConfig& noise, double dim_sigma_scale) {
    using namespace quadscale;
    SceneSpec spec = preset == "outdoor" ? outdoor_preset() : indoor_preset();
    spec.true_scale = true_scale;
    spec.dim_sigma_scale = dim_sigma_scale;
    const PriorRepository repo = builtin_sample_priors();
    const CameraIntrinsics k{500.0, 500.0, 320.0, 240.0};

    const Scene scene = generate_scene(spec, repo, seed);
    NoiseConfig nc = noise;
    nc.rng_seed = seed;
    const Observed obs = observe(scene, nc, k, repo);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    save_scene(scene, (dir / "scene.json").string());
    save_map(obs.map, (dir / "map.json").string());

    json dets = json::array();
    for (const auto& [frame, frame_dets] : obs.detections) {
        for (const auto& d : frame_dets) {
            dets.push_back({{"frame", frame},
                            {"object", d.object_id},
                            {"class", d.class_name},
                            {"prob", d.probability},
                            {"bbox", {d.bbox.u_max, d.bbox.v_max, d.bbox.u_min, d.bbox.v_min}}});
        }
    }
    write_text((dir / "detections.json").string(), dets.dump(2) + "\n");

    export_trajectories(scene, obs.map.cameras, (dir / "gt_traj.txt").string(),
                        (dir / "est_traj.txt").string());

    // Small perturbed joint-optimization fixture.
    SceneSpec mini = spec;
    mini.num_objects = 3;
    mini.num_frames = 5;
    mini.points_per_object = 20;
    mini.background_points = 0;
    const Scene mini_scene = generate_scene(mini, repo, seed + 1);
    Problem problem = make_joint_problem(mini_scene, k);
    int bump = 0;
    for (auto& [id, q] : problem.quadrics) {
        q.translation += 0.03 * Vec3(1.0, -1.0, 0.5) * (1.0 + 0.1 * bump++);
        q.log_semi_axes += Vec3::Constant(0.05);
    }
    save_problem(problem, (dir / "problem.json").string());

    std::cout << "wrote scene/map/detections/problem and trajectories to "
              << out_dir << "\n";
    return kExitOk;
}

int cmd_estimate(const std::string& map_path, const std::string& priors_path,
                 const quadscale::PipelineOptions& opts, const SeedRange& seeds,
                 double dim_noise, double misclass_rate, const std::string& out_path) {
    using namespace quadscale;
    const PriorRepository repo =
        priors_path.empty() ? builtin_sample_priors() : load_priors(priors_path);

    struct Record {
        std::uint64_t seed;
        double scale;
        double rse_value;
        int num_inliers;
        int num_outliers;
        double runtime_ms;
    };
    std::vector<Record> records;

    auto run_one = [&](const std::vector<ObjectEstimate>& objects, double true_scale,
                       std::uint64_t seed) {
        const auto t0 = std::chrono::steady_clock::now();
        const PipelineResult result = run_pipeline(objects, repo, opts);
        const auto t1 = std::chrono::steady_clock::now();
        Record rec;
        rec.seed = seed;
        rec.scale = result.solution.scale;
        rec.rse_value = true_scale > 0.0 ? rse(result.solution.scale, true_scale) : -1.0;
        rec.num_inliers = result.solution.num_inliers;
        rec.num_outliers = static_cast<int>(result.outliers.size());
        rec.runtime_ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
        records.push_back(rec);
        return result;
    };

    json doc;
    if (seeds.set) {
        const Scene scene = load_scene(map_path);
        const CameraIntrinsics k{500.0, 500.0, 320.0, 240.0};
        for (std::uint64_t seed = seeds.first; seed <= seeds.last; ++seed) {
            NoiseConfig noise;
            noise.dim_noise_frac = dim_noise;
            noise.misclassification_rate = misclass_rate;
            noise.rng_seed = seed;
            const Observed obs = observe(scene, noise, k, repo);
            std::vector<ObjectEstimate> objects;
            for (const auto& o : obs.map.objects) objects.push_back(o.estimate);
            run_one(objects, scene.true_scale, seed);
        }
    } else {
        const UnscaledMap map = load_map(map_path);
        std::vector<ObjectEstimate> objects;
        for (const auto& o : map.objects) objects.push_back(o.estimate);
        const PipelineResult result = run_one(objects, map.true_scale, 0);
        doc["local_scales"] = result.all_local_scales;
        doc["skipped_unknown_class"] = result.skipped_unknown_class;
        doc["weighted_residual"] = result.solution.weighted_residual;
    }

    json recs = json::array();
    double mean = 0.0;
    for (const auto& r : records) {
        recs.push_back({{"seed", r.seed},
                        {"scale", r.scale},
                        {"rse", r.rse_value},
                        {"num_inliers", r.num_inliers},
                        {"num_outliers", r.num_outliers},
                        {"runtime_ms", r.runtime_ms}});
        mean += r.rse_value;
    }
    mean /= static_cast<double>(records.size());
    double var = 0.0;
    for (const auto& r : records) var += (r.rse_value - mean) * (r.rse_value - mean);
    var /= static_cast<double>(records.size());

    doc["records"] = recs;
    doc["scale"] = records.back().scale;
    doc["rse"] = records.back().rse_value;
    doc["num_inliers"] = records.back().num_inliers;
    doc["num_outliers"] = records.back().num_outliers;
    doc["aggregate"] = {{"mean_rse", mean}, {"std_rse", std::sqrt(var)}};
    write_text(out_path, doc.dump(2) + "\n");

    std::ostringstream csv;
    csv << "seed,scale,rse,num_inliers,num_outliers,runtime_ms\n";
    for (const auto& r : records) {
        csv << r.seed << "," << r.scale << "," << r.rse_value << ","
            << r.num_inliers << "," << r.num_outliers << "," << r.runtime_ms << "\n";
    }
    write_text(csv_path_for(out_path), csv.str());

    std::cout << "scale " << records.back().scale;
    if (records.back().rse_value >= 0.0) {
        std::cout << "  RSE(%) " << 100.0 * mean << "  std " << 100.0 * std::sqrt(var);
    }
    std::cout << "\n";
    return kExitOk;
}

int cmd_optimize(const std::string& problem_path, int max_iters,
                 const std::string& out_path) {
    using namespace quadscale;
    Problem problem = load_problem(problem_path);
    SolverConfig cfg;
    cfg.max_iterations = max_iters;
    auto [solved, report] = solve(std::move(problem), cfg);

    json doc;
    doc["problem"] = problem_to_json(solved);
    doc["report"] = {{"initial_chi2", report.initial_chi2},
                     {"final_chi2", report.final_chi2},
                     {"iterations", report.iterations},
                     {"converged", report.converged},
                     {"bbox_residual_norm", report.bbox_residual_norm},
                     {"point_residual_norm", report.point_residual_norm},
                     {"object_point_residual_norm", report.object_point_residual_norm},
                     {"skipped_observations", report.skipped_observations}};
    write_text(out_path, doc.dump(2) + "\n");
    std::cout << "chi2 " << report.initial_chi2 << " -> " << report.final_chi2
              << " in " << report.iterations << " iterations"
              << (report.converged ? " (converged)" : "") << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             const std::string& mode_name, double max_dt, double scale_estimate,
             const std::string& out_path) {
    using namespace quadscale;
    const Trajectory est = load_tum(est_path);
    const Trajectory gt = load_tum(gt_path);
    AlignMode mode = AlignMode::None;
    if (mode_name == "rigid") mode = AlignMode::Rigid;
    if (mode_name == "sim3") mode = AlignMode::Sim3;

    const AteResult ate = ate_rmse(est, gt, mode, max_dt);

    json doc;
    doc["mode"] = mode_name;
    doc["ate_rmse"] = ate.rmse;
    doc["ate_mean"] = ate.mean;
    doc["ate_median"] = ate.median;
    doc["ate_max"] = ate.max;
    doc["num_pairs"] = ate.num_pairs;
    double recovered_scale = -1.0;
    if (ate.alignment) {
        recovered_scale = ate.alignment->scale;
        doc["scale"] = recovered_scale;
    }
    if (scale_estimate > 0.0 && recovered_scale > 0.0) {
        doc["rse"] = rse(scale_estimate, recovered_scale);
    }
    write_text(out_path, doc.dump(2) + "\n");

    std::ostringstream csv;
    csv << "mode,ate_rmse,ate_mean,ate_median,ate_max,num_pairs,scale\n";
    csv << mode_name << "," << ate.rmse << "," << ate.mean << "," << ate.median
        << "," << ate.max << "," << ate.num_pairs << "," << recovered_scale << "\n";
    write_text(csv_path_for(out_path), csv.str());

    std::cout << "ATE rmse " << ate.rmse;
    if (recovered_scale > 0.0) std::cout << "  scale " << recovered_scale;
    std::cout << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Metric-scale recovery toolkit for monocular object maps"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene");
    std::string preset = "indoor";
    std::uint64_t seed = 0;
    std::string out_dir;
    double true_scale = 1.0;
    double dim_sigma_scale = 1.0;
    quadscale::NoiseConfig noise;
    sim->add_option("--preset", preset, "Scene preset")
        ->check(CLI::IsMember({"indoor", "outdoor"}));
    sim->add_option("--seed", seed, "RNG seed");
    sim->add_option("--out", out_dir, "Output directory")->required();
    sim->add_option("--true-scale", true_scale, "Injected global scale");
    sim->add_option("--dim-noise", noise.dim_noise_frac, "Relative dimension noise");
    sim->add_option("--bbox-sigma", noise.bbox_sigma_px, "BBox noise [px]");
    sim->add_option("--pixel-sigma", noise.pixel_sigma_px, "Pixel noise [px]");
    sim->add_option("--misclass-rate", noise.misclassification_rate,
                    "Object misclassification probability");
    sim->add_option("--dim-sigma-scale", dim_sigma_scale,
                    "Object size spread as a multiple of the prior sigma");

    // estimate
    auto* est = app.add_subcommand("estimate", "Estimate the global scale");
    std::string map_path, priors_path, est_out;
    std::string seeds_text;
    double est_dim_noise = 0.05;
    double est_misclass = 0.0;
    quadscale::PipelineOptions opts;
    est->add_option("--map", map_path, "Map file (or scene file with --seeds)")
        ->required();
    est->add_option("--priors", priors_path, "Prior JSON file (default: builtin)");
    est->add_flag_callback("--no-outlier-elim",
                           [&opts] { opts.outlier_elimination = false; });
    est->add_flag_callback("--no-dim-select",
                           [&opts] { opts.dimension_selection = false; });
    est->add_flag_callback("--no-uncertainty",
                           [&opts] { opts.uncertainty_model = false; });
    est->add_option("--seeds", seeds_text, "Seed sweep A..B over re-observed noise");
    est->add_option("--dim-noise", est_dim_noise, "Relative dimension noise (sweep)");
    est->add_option("--misclass-rate", est_misclass, "Misclassification rate (sweep)");
    est->add_option("--out", est_out, "Output report JSON")->required();

    // optimize
    auto* opt = app.add_subcommand("optimize", "Joint bundle adjustment");
    std::string problem_path, opt_out;
    int max_iters = 50;
    opt->add_option("--problem", problem_path, "Problem JSON")->required();
    opt->add_option("--max-iters", max_iters, "Maximum LM iterations");
    opt->add_option("--out", opt_out, "Output JSON")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Trajectory evaluation");
    std::string est_traj, gt_traj, mode_name = "none", eval_out;
    double max_dt = 0.02;
    double scale_estimate = -1.0;
    ev->add_option("--est", est_traj, "Estimated trajectory (TUM)")->required();
    ev->add_option("--gt", gt_traj, "Ground-truth trajectory (TUM)")->required();
    ev->add_option("--mode", mode_name, "Alignment mode")
        ->check(CLI::IsMember({"none", "rigid", "sim3"}));
    ev->add_option("--max-dt", max_dt, "Timestamp association tolerance [s]");
    ev->add_option("--scale-estimate", scale_estimate,
                   "Estimated scale, reported as RSE against the sim3 scale");
    ev->add_option("--out", eval_out, "Output metrics JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(preset, seed, out_dir, true_scale, noise,
                                dim_sigma_scale);
        }
        if (est->parsed()) {
            SeedRange seeds;
            if (!seeds_text.empty()) seeds = parse_seed_range(seeds_text);
            return cmd_estimate(map_path, priors_path, opts, seeds, est_dim_noise,
                                est_misclass, est_out);
        }
        if (opt->parsed()) {
            return cmd_optimize(problem_path, max_iters, opt_out);
        }
        if (ev->parsed()) {
            return cmd_eval(est_traj, gt_traj, mode_name, max_dt, scale_estimate,
                            eval_out);
        }
    } catch (const quadscale::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const quadscale::UnknownClass& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const quadscale::GaugeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.get_name() << "\n";
        return kExitUsage;
    } catch (const quadscale::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitUsage;
}
