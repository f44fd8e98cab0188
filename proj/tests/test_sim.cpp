#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "quadscale/quadscale.hpp"

using namespace quadscale;

namespace {

const CameraIntrinsics kCam{500.0, 500.0, 320.0, 240.0};

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("scene generation is deterministic per seed") {
    const PriorRepository repo = builtin_sample_priors();
    const SceneSpec spec = indoor_preset();
    const Scene a = generate_scene(spec, repo, 42);
    const Scene b = generate_scene(spec, repo, 42);
    CHECK(scene_to_json(a).dump() == scene_to_json(b).dump());

    const Scene c = generate_scene(spec, repo, 43);
    CHECK(scene_to_json(a).dump() != scene_to_json(c).dump());
}

TEST_CASE("scene generation rejects unknown classes") {
    PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.classes.push_back("unicorn");
    CHECK_THROWS_AS(generate_scene(spec, repo, 1), UnknownClass);

    SceneSpec empty = indoor_preset();
    empty.classes.clear();
    CHECK_THROWS_AS(generate_scene(empty, repo, 1), UnknownClass);
}

TEST_CASE("object dimensions stay within three sigma of the prior") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 200;
    const Scene scene = generate_scene(spec, repo, 7);
    for (const auto& obj : scene.objects) {
        const SizePrior prior = *repo.lookup(obj.class_name);
        // Dims are sorted after sampling, so compare unordered: every dim must
        // fall in at least one prior dimension's 3-sigma band.
        const Vec3 dims = obj.ellipsoid.dims();
        for (int i = 0; i < 3; ++i) {
            CHECK(dims(i) > 0.0);
            bool in_band = false;
            for (const auto& d : prior.dims) {
                if (std::abs(dims(i) - d.mean) <= 3.0 * d.std + 1e-12) in_band = true;
            }
            CHECK(in_band);
        }
    }
}

TEST_CASE("zero dim spread pins dims to the prior means") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.dim_sigma_scale = 0.0;
    const Scene scene = generate_scene(spec, repo, 3);
    for (const auto& obj : scene.objects) {
        const SizePrior prior = *repo.lookup(obj.class_name);
        const Vec3 dims = obj.ellipsoid.dims();
        for (int i = 0; i < 3; ++i) {
            CHECK(dims(i) == doctest::Approx(prior.dims[i].mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("noise-free observation reproduces exact projected boxes") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 5;
    spec.num_frames = 8;
    const Scene scene = generate_scene(spec, repo, 9);
    const Observed obs = observe(scene, NoiseConfig{}, kCam, repo);
    for (const auto& [frame_id, dets] : obs.detections) {
        const RigidPose& cam = scene.cameras[frame_id].second;
        for (const auto& det : dets) {
            const auto& obj = scene.objects[det.object_id];
            const BBox2D exact = conic_bbox(
                project_quadric(ellipsoid_to_dual_quadric(obj.ellipsoid), kCam, cam));
            CHECK((det.bbox.vector() - exact.vector()).norm() == doctest::Approx(0.0));
            CHECK(det.class_name == obj.class_name);
        }
    }
}

TEST_CASE("injected scale divides all map lengths") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 6;
    spec.num_frames = 4;
    spec.true_scale = 2.0;
    const Scene scene = generate_scene(spec, repo, 5);
    const Observed obs = observe(scene, NoiseConfig{}, kCam, repo);
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const Vec3 metric = scene.objects[i].ellipsoid.dims();
        const Vec3 mapped = obs.map.objects[i].estimate.dims;
        CHECK((mapped - metric / 2.0).norm() < 1e-12);
    }
    for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
        CHECK((obs.map.cameras[i].second.translation -
               scene.cameras[i].second.translation / 2.0)
                  .norm() < 1e-12);
    }
    for (std::size_t i = 0; i < scene.points.size(); ++i) {
        CHECK((obs.map.points[i].position - scene.points[i].position / 2.0).norm() <
              1e-12);
    }
}

TEST_CASE("misclassification is seeded and reproducible") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 60;
    spec.num_frames = 2;
    spec.points_per_object = 2;
    const Scene scene = generate_scene(spec, repo, 8);
    NoiseConfig noise;
    noise.misclassification_rate = 0.3;
    noise.rng_seed = 77;
    const Observed a = observe(scene, noise, kCam, repo);
    const Observed b = observe(scene, noise, kCam, repo);
    int flipped = 0;
    for (std::size_t i = 0; i < a.map.objects.size(); ++i) {
        CHECK(a.map.objects[i].class_name == b.map.objects[i].class_name);
        if (a.map.objects[i].class_name != scene.objects[i].class_name) ++flipped;
    }
    CHECK(flipped > 5);
    CHECK(flipped < 35);
}

TEST_CASE("apply_scale multiplies lengths and rejects non-positive factors") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 3;
    spec.num_frames = 3;
    spec.true_scale = 2.5;
    const Scene scene = generate_scene(spec, repo, 4);
    const Observed obs = observe(scene, NoiseConfig{}, kCam, repo);

    const UnscaledMap rescaled = apply_scale(obs.map, 2.5);
    for (std::size_t i = 0; i < scene.points.size(); ++i) {
        CHECK((rescaled.points[i].position - scene.points[i].position).norm() < 1e-12);
    }
    CHECK(rescaled.true_scale == doctest::Approx(1.0));

    const UnscaledMap identity = apply_scale(obs.map, 1.0);
    CHECK(map_to_json(identity).dump() == map_to_json(obs.map).dump());

    CHECK_THROWS_AS(apply_scale(obs.map, 0.0), NonPositiveScale);
    CHECK_THROWS_AS(apply_scale(obs.map, -2.0), NonPositiveScale);
}

TEST_CASE("noise-free end-to-end pipeline recovers the injected scale exactly") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.true_scale = 3.4;
    spec.dim_sigma_scale = 0.0;  // object sizes equal the prior means
    const Scene scene = generate_scene(spec, repo, 123);
    const Observed obs = observe(scene, NoiseConfig{}, kCam, repo);

    std::vector<ObjectEstimate> estimates;
    for (const auto& obj : obs.map.objects) estimates.push_back(obj.estimate);
    const PipelineResult result = run_pipeline(estimates, repo);
    CHECK(rse(result.solution.scale, 3.4) < 1e-9);
}

TEST_CASE("visible detections correspond to objects in front of the camera") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = outdoor_preset();
    spec.num_objects = 8;
    const Scene scene = generate_scene(spec, repo, 2);
    const Observed obs = observe(scene, NoiseConfig{}, kCam, repo);
    for (const auto& [frame_id, dets] : obs.detections) {
        const RigidPose& cam = scene.cameras[frame_id].second;
        for (const auto& det : dets) {
            const Vec3 center = scene.objects[det.object_id].ellipsoid.pose.translation;
            CHECK(cam.inverse().apply(center).z() > 0.0);
            CHECK(det.bbox.u_max >= det.bbox.u_min);
            CHECK(det.bbox.v_max >= det.bbox.v_min);
        }
    }
}

TEST_CASE("scene JSON round-trip") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 4;
    spec.num_frames = 3;
    const Scene scene = generate_scene(spec, repo, 6);
    const std::string path = temp_file("scene_rt.json");
    save_scene(scene, path);
    const Scene loaded = load_scene(path);
    CHECK(scene_to_json(loaded).dump() == scene_to_json(scene).dump());

    // Extra keys are ignored.
    nlohmann::json doc = scene_to_json(scene);
    doc["extra_key"] = {{"nested", true}};
    const Scene tolerant = scene_from_json(doc);
    CHECK(scene_to_json(tolerant).dump() == scene_to_json(scene).dump());

    std::ofstream(temp_file("scene_trunc.json")) << R"({"true_scale": 1.0, "cam)";
    CHECK_THROWS_AS(load_scene(temp_file("scene_trunc.json")), ParseError);
    CHECK_THROWS_AS(load_scene("/nonexistent/scene.json"), ParseError);
}

TEST_CASE("map JSON round-trip") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 4;
    spec.num_frames = 3;
    spec.true_scale = 1.7;
    const Scene scene = generate_scene(spec, repo, 10);
    NoiseConfig noise;
    noise.dim_noise_frac = 0.05;
    noise.detection_prob_std = 0.05;
    noise.rng_seed = 3;
    const Observed obs = observe(scene, noise, kCam, repo);
    const std::string path = temp_file("map_rt.json");
    save_map(obs.map, path);
    const UnscaledMap loaded = load_map(path);
    CHECK(map_to_json(loaded).dump() == map_to_json(obs.map).dump());
    CHECK_THROWS_AS(load_map("/nonexistent/map.json"), ParseError);
}

TEST_CASE("trajectory export writes matching TUM files") {
    const PriorRepository repo = builtin_sample_priors();
    SceneSpec spec = indoor_preset();
    spec.num_objects = 2;
    spec.num_frames = 10;
    const Scene scene = generate_scene(spec, repo, 20);
    const std::string gt_path = temp_file("gt_traj.txt");
    const std::string est_path = temp_file("est_traj.txt");
    export_trajectories(scene, scene.cameras, gt_path, est_path);
    const Trajectory gt = load_tum(gt_path);
    const Trajectory est = load_tum(est_path);
    REQUIRE(gt.poses.size() == scene.cameras.size());
    REQUIRE(est.poses.size() == scene.cameras.size());
    for (std::size_t i = 0; i < gt.poses.size(); ++i) {
        CHECK(gt.poses[i].first == doctest::Approx(scene.cameras[i].first));
        CHECK((gt.poses[i].second.translation -
               scene.cameras[i].second.translation).norm() < 1e-12);
        CHECK((gt.poses[i].second.translation - est.poses[i].second.translation)
                  .norm() < 1e-12);
    }
}
