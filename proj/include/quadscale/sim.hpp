#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadscale/core.hpp"
#include "quadscale/geometry.hpp"
#include "quadscale/optimizer.hpp"
#include "quadscale/priors.hpp"
#include "quadscale/scale.hpp"

namespace quadscale {

struct UnknownClass : Error { using Error::Error; };

namespace detail {

/// Deterministic RNG with fully specified sampling (no implementation-defined
/// standard distributions), so fixed seeds reproduce byte-identical scenes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
    }

    double normal(double mean = 0.0, double sigma = 1.0) {
        // Box-Muller; draws two uniforms every call to stay stateless.
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return mean + sigma * std::sqrt(-2.0 * std::log(u1)) *
                          std::cos(2.0 * M_PI * u2);
    }

    /// Normal truncated at mean +/- 3 sigma and at > 0.
    double truncated_normal(double mean, double sigma) {
        for (int i = 0; i < 1000; ++i) {
            const double v = normal(mean, sigma);
            if (v > 0.0 && std::abs(v - mean) <= 3.0 * sigma) return v;
        }
        return std::max(mean, 1e-6);
    }

    Rotation rotation() {
        Eigen::Quaterniond q(normal(), normal(), normal(), normal());
        if (q.norm() < 1e-12) q = Eigen::Quaterniond::Identity();
        return Rotation(q);
    }

    Vec3 unit_vector() {
        Vec3 v(normal(), normal(), normal());
        const double n = v.norm();
        return n < 1e-12 ? Vec3::UnitX() : Vec3(v / n);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace detail

enum class TrajectoryKind { Orbit, Straight };

struct SceneSpec {
    std::vector<std::string> classes;
    int num_objects = 20;
    TrajectoryKind trajectory = TrajectoryKind::Orbit;
    int num_frames = 60;
    double scene_radius = 2.0;       // meters; object placement region
    double camera_distance = 6.0;    // orbit radius / road length scale
    int points_per_object = 30;
    int background_points = 40;
    double true_scale = 1.0;
    // Spread of object sizes around the prior means during generation, as a
    // multiple of the prior sigma. Zero makes dims equal the prior means.
    double dim_sigma_scale = 1.0;
};

inline SceneSpec indoor_preset() {
    SceneSpec spec;
    spec.classes = {"bottle", "book", "keyboard", "monitor",
                    "cup", "laptop", "chair", "potted_plant"};
    spec.num_objects = 20;
    spec.trajectory = TrajectoryKind::Orbit;
    spec.num_frames = 60;
    spec.scene_radius = 2.0;
    spec.camera_distance = 6.0;
    return spec;
}

inline SceneSpec outdoor_preset() {
    SceneSpec spec;
    spec.classes = {"car"};
    spec.num_objects = 12;
    spec.trajectory = TrajectoryKind::Straight;
    spec.num_frames = 60;
    spec.scene_radius = 30.0;
    spec.camera_distance = 60.0;
    return spec;
}

struct ScenePoint {
    int id = 0;
    Vec3 position = Vec3::Zero();
    int object_id = -1;  // -1 for background points
};

struct SceneObject {
    int id = 0;
    std::string class_name;
    Ellipsoid ellipsoid;  // metric units
};

/// Synthetic ground-truth world in metric units with an injected global scale.
struct Scene {
    double true_scale = 1.0;
    std::vector<std::pair<double, RigidPose>> cameras;  // (timestamp, pose)
    std::vector<SceneObject> objects;
    std::vector<ScenePoint> points;
};

struct NoiseConfig {
    double bbox_sigma_px = 0.0;
    double pixel_sigma_px = 0.0;
    double dim_noise_frac = 0.0;     // multiplicative log-normal sigma
    double detection_prob_mean = 0.9;
    double detection_prob_std = 0.0;
    double misclassification_rate = 0.0;
    double point_jitter = 0.0;       // map units, on unscaled points
    std::uint64_t rng_seed = 0;
};

struct MapObject {
    int id = 0;
    std::string class_name;  // observed (possibly misclassified) label
    Ellipsoid ellipsoid;     // unscaled, with dimension noise applied
    ObjectEstimate estimate;
};

/// Scene divided by the true scale: what a monocular mapper would deliver.
struct UnscaledMap {
    double true_scale = 1.0;  // carried along for evaluation only
    std::vector<std::pair<double, RigidPose>> cameras;
    std::vector<MapObject> objects;
    std::vector<ScenePoint> points;
};

struct PointObservation {
    int frame_id = 0;
    int point_id = 0;
    Vec2 pixel = Vec2::Zero();
};

struct Observed {
    UnscaledMap map;
    std::map<int, std::vector<FrameDetection>> detections;  // frame -> boxes
    std::vector<PointObservation> point_obs;
};

namespace detail {

inline Rotation look_at(const Vec3& eye, const Vec3& target) {
    Vec3 forward = target - eye;
    if (forward.norm() < 1e-9) forward = Vec3::UnitX();
    forward.normalize();
    Vec3 up = Vec3::UnitZ();
    if (std::abs(forward.dot(up)) > 0.999) up = Vec3::UnitY();
    const Vec3 right = forward.cross(up).normalized() * -1.0;  // x right
    const Vec3 down = forward.cross(right).normalized();       // y down
    Mat3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = forward;
    if (r.determinant() < 0.0) r.col(0) *= -1.0;
    return Rotation::from_matrix(r);
}

}  // namespace detail

/// Deterministic synthetic scene generation. Object dimensions are drawn from
/// the class priors (truncated at +/- 3 sigma and at > 0).
inline Scene generate_scene(const SceneSpec& spec, const PriorRepository& repo,
                            std::uint64_t seed) {
    for (const auto& cls : spec.classes) {
        if (!repo.lookup(cls)) {
            throw UnknownClass("class '" + cls + "' not present in prior repository");
        }
    }
    if (spec.classes.empty()) {
        throw UnknownClass("scene spec names no object classes");
    }
    detail::Rng rng(seed);
    Scene scene;
    scene.true_scale = spec.true_scale;

    const bool orbit = spec.trajectory == TrajectoryKind::Orbit;
    for (int i = 0; i < spec.num_objects; ++i) {
        SceneObject obj;
        obj.id = i;
        obj.class_name = spec.classes[rng.uniform_int(
            static_cast<int>(spec.classes.size()))];
        const SizePrior prior = *repo.lookup(obj.class_name);
        Vec3 dims;
        for (int d = 0; d < 3; ++d) {
            dims(d) = spec.dim_sigma_scale > 0.0
                          ? rng.truncated_normal(prior.dims[d].mean,
                                                 spec.dim_sigma_scale * prior.dims[d].std)
                          : prior.dims[d].mean;
        }
        std::sort(dims.data(), dims.data() + 3, std::greater<double>());
        Vec3 center;
        if (orbit) {
            center = rng.unit_vector() * spec.scene_radius * std::cbrt(rng.uniform());
        } else {
            // Objects scattered along both sides of a straight path.
            center = Vec3(rng.uniform(10.0, 10.0 + spec.camera_distance),
                          (rng.uniform_int(2) == 0 ? -1.0 : 1.0) * rng.uniform(3.0, 8.0),
                          rng.uniform(0.0, 1.0));
        }
        obj.ellipsoid = Ellipsoid(RigidPose(rng.rotation(), center), 0.5 * dims);
        scene.objects.push_back(std::move(obj));
    }

    int point_id = 0;
    for (const auto& obj : scene.objects) {
        for (int p = 0; p < spec.points_per_object; ++p) {
            const Vec3 dir = rng.unit_vector();
            const Vec3 local = obj.ellipsoid.semi_axes.cwiseProduct(dir);
            scene.points.push_back(
                {point_id++, obj.ellipsoid.pose.apply(local), obj.id});
        }
    }
    for (int p = 0; p < spec.background_points; ++p) {
        const double shell = spec.scene_radius * rng.uniform(1.5, 2.5);
        scene.points.push_back({point_id++, rng.unit_vector() * shell, -1});
    }

    for (int i = 0; i < spec.num_frames; ++i) {
        const double t = 0.1 * static_cast<double>(i);
        Vec3 eye;
        Vec3 target;
        if (orbit) {
            const double theta =
                2.0 * M_PI * static_cast<double>(i) / std::max(1, spec.num_frames);
            eye = Vec3(spec.camera_distance * std::cos(theta),
                       spec.camera_distance * std::sin(theta),
                       0.5 + 0.3 * std::sin(2.0 * theta));
            target = Vec3::Zero();
        } else {
            const double x = spec.camera_distance * static_cast<double>(i) /
                             std::max(1, spec.num_frames - 1);
            eye = Vec3(x, 0.0, 1.5);
            target = eye + Vec3::UnitX();
        }
        scene.cameras.emplace_back(t, RigidPose(detail::look_at(eye, target), eye));
    }
    return scene;
}

/// Synthesizes noisy measurements and the unscaled map the estimation
/// pipeline consumes.
inline Observed observe(const Scene& scene, const NoiseConfig& noise,
                        const CameraIntrinsics& k, const PriorRepository& repo) {
    detail::Rng rng(noise.rng_seed);
    const double s = scene.true_scale;
    Observed out;
    out.map.true_scale = s;

    for (const auto& [t, pose] : scene.cameras) {
        out.map.cameras.emplace_back(
            t, RigidPose(pose.rotation, pose.translation / s));
    }

    const std::vector<std::string> all_classes = repo.class_names();
    std::map<int, std::string> observed_class;
    for (const auto& obj : scene.objects) {
        std::string cls = obj.class_name;
        if (rng.uniform() < noise.misclassification_rate && all_classes.size() > 1) {
            std::string wrong = cls;
            while (wrong == cls) {
                wrong = all_classes[rng.uniform_int(
                    static_cast<int>(all_classes.size()))];
            }
            cls = wrong;
        }
        observed_class[obj.id] = cls;
    }

    std::map<int, std::vector<double>> probs;
    for (std::size_t fi = 0; fi < scene.cameras.size(); ++fi) {
        const RigidPose& cam = scene.cameras[fi].second;
        std::vector<FrameDetection> dets;
        for (const auto& obj : scene.objects) {
            // Visibility: object center strictly in front of the camera and a
            // bounded projected outline.
            const Vec3 in_cam = cam.inverse().apply(obj.ellipsoid.pose.translation);
            if (in_cam.z() <= 0.0) continue;
            BBox2D box;
            try {
                box = conic_bbox(
                    project_quadric(ellipsoid_to_dual_quadric(obj.ellipsoid), k, cam));
            } catch (const UnboundedConic&) {
                continue;
            }
            box.u_max += rng.normal(0.0, noise.bbox_sigma_px);
            box.v_max += rng.normal(0.0, noise.bbox_sigma_px);
            box.u_min += rng.normal(0.0, noise.bbox_sigma_px);
            box.v_min += rng.normal(0.0, noise.bbox_sigma_px);
            if (box.u_min > box.u_max) std::swap(box.u_min, box.u_max);
            if (box.v_min > box.v_max) std::swap(box.v_min, box.v_max);
            const double prob = std::clamp(
                rng.normal(noise.detection_prob_mean, noise.detection_prob_std), 0.0, 1.0);
            dets.push_back({obj.id, box, prob, observed_class[obj.id]});
            probs[obj.id].push_back(prob);
        }
        out.detections[static_cast<int>(fi)] = std::move(dets);
    }

    std::map<int, int> points_per_object;
    for (const auto& pt : scene.points) {
        if (pt.object_id >= 0) ++points_per_object[pt.object_id];
        Vec3 p = pt.position / s;
        if (noise.point_jitter > 0.0) {
            p += Vec3(rng.normal(0.0, noise.point_jitter),
                      rng.normal(0.0, noise.point_jitter),
                      rng.normal(0.0, noise.point_jitter));
        }
        out.map.points.push_back({pt.id, p, pt.object_id});
    }

    for (const auto& obj : scene.objects) {
        MapObject mo;
        mo.id = obj.id;
        mo.class_name = observed_class[obj.id];
        Vec3 axes = obj.ellipsoid.semi_axes / s;
        if (noise.dim_noise_frac > 0.0) {
            for (int d = 0; d < 3; ++d) {
                axes(d) *= std::exp(rng.normal(0.0, noise.dim_noise_frac));
            }
        }
        mo.ellipsoid = Ellipsoid(
            RigidPose(obj.ellipsoid.pose.rotation, obj.ellipsoid.pose.translation / s),
            axes);
        mo.estimate.id = obj.id;
        mo.estimate.class_name = mo.class_name;
        mo.estimate.dims = mo.ellipsoid.dims();
        mo.estimate.detection_probs = probs[obj.id];
        mo.estimate.num_detections = static_cast<int>(probs[obj.id].size());
        mo.estimate.num_points = points_per_object[obj.id];
        out.map.objects.push_back(std::move(mo));
    }

    for (std::size_t fi = 0; fi < scene.cameras.size(); ++fi) {
        const RigidPose& cam = scene.cameras[fi].second;
        for (const auto& pt : scene.points) {
            Vec2 uv;
            try {
                uv = project_point(k, cam, pt.position);
            } catch (const BehindCamera&) {
                continue;
            }
            uv.x() += rng.normal(0.0, noise.pixel_sigma_px);
            uv.y() += rng.normal(0.0, noise.pixel_sigma_px);
            out.point_obs.push_back({static_cast<int>(fi), pt.id, uv});
        }
    }
    return out;
}

/// Multiplies every length in the map by s: translations, points, semi-axes,
/// and estimate dimensions. Rotations are unchanged.
inline UnscaledMap apply_scale(UnscaledMap map, double s) {
    if (!(s > 0.0)) {
        throw NonPositiveScale("scale factor must be positive");
    }
    for (auto& [t, pose] : map.cameras) pose.translation *= s;
    for (auto& pt : map.points) pt.position *= s;
    for (auto& obj : map.objects) {
        obj.ellipsoid.pose.translation *= s;
        obj.ellipsoid.semi_axes *= s;
        obj.estimate.dims *= s;
    }
    map.true_scale /= s;
    return map;
}

/// Builds a joint optimization problem from noise-free scene ground truth.
/// The first `fixed_poses` camera poses are held fixed as the gauge.
inline Problem make_joint_problem(const Scene& scene, const CameraIntrinsics& k,
                                  int fixed_poses = 2) {
    Problem problem;
    problem.intrinsics = k;
    for (std::size_t fi = 0; fi < scene.cameras.size(); ++fi) {
        problem.poses[static_cast<int>(fi)] = scene.cameras[fi].second;
        if (static_cast<int>(fi) < fixed_poses) {
            problem.fixed_poses.insert(static_cast<int>(fi));
        }
    }
    for (const auto& obj : scene.objects) {
        problem.quadrics[obj.id] = QuadricParams::from_ellipsoid(obj.ellipsoid);
    }
    for (const auto& pt : scene.points) {
        problem.points[pt.id] = pt.position;
    }
    for (std::size_t fi = 0; fi < scene.cameras.size(); ++fi) {
        const RigidPose& cam = scene.cameras[fi].second;
        for (const auto& obj : scene.objects) {
            const Vec3 in_cam = cam.inverse().apply(obj.ellipsoid.pose.translation);
            if (in_cam.z() <= 0.0) continue;
            BBoxObs bb;
            bb.frame_id = static_cast<int>(fi);
            bb.object_id = obj.id;
            try {
                bb.bbox = conic_bbox(
                    project_quadric(ellipsoid_to_dual_quadric(obj.ellipsoid), k, cam));
            } catch (const UnboundedConic&) {
                continue;
            }
            problem.observations.emplace_back(bb);
        }
        for (const auto& pt : scene.points) {
            PointObs po;
            po.frame_id = static_cast<int>(fi);
            po.point_id = pt.id;
            try {
                po.pixel = project_point(k, cam, pt.position);
            } catch (const BehindCamera&) {
                continue;
            }
            problem.observations.emplace_back(po);
        }
    }
    for (const auto& pt : scene.points) {
        if (pt.object_id < 0) continue;
        ObjectPointLink op;
        op.object_id = pt.object_id;
        op.point_id = pt.id;
        problem.observations.emplace_back(op);
    }
    return problem;
}

// ---------------------------------------------------------------------------
// Scene and map JSON round-trip.

namespace detail {

inline nlohmann::json ellipsoid_to_json(const Ellipsoid& e) {
    return {{"pose", pose_to_json(e.pose)}, {"semi_axes", to_json(e.semi_axes)}};
}

inline Ellipsoid ellipsoid_from_json(const nlohmann::json& j) {
    return Ellipsoid(pose_from_json(j.at("pose")), vec3_from_json(j.at("semi_axes")));
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json doc;
    doc["true_scale"] = scene.true_scale;
    doc["cameras"] = nlohmann::json::array();
    for (const auto& [t, pose] : scene.cameras) {
        doc["cameras"].push_back({{"t", t}, {"pose", detail::pose_to_json(pose)}});
    }
    doc["objects"] = nlohmann::json::array();
    for (const auto& obj : scene.objects) {
        doc["objects"].push_back({{"id", obj.id},
                                  {"class", obj.class_name},
                                  {"ellipsoid", detail::ellipsoid_to_json(obj.ellipsoid)}});
    }
    doc["points"] = nlohmann::json::array();
    for (const auto& pt : scene.points) {
        doc["points"].push_back({{"id", pt.id},
                                 {"p", detail::to_json(pt.position)},
                                 {"object_id", pt.object_id}});
    }
    return doc;
}

inline Scene scene_from_json(const nlohmann::json& doc) {
    Scene scene;
    try {
        scene.true_scale = doc.at("true_scale").get<double>();
        for (const auto& jc : doc.at("cameras")) {
            scene.cameras.emplace_back(jc.at("t").get<double>(),
                                       detail::pose_from_json(jc.at("pose")));
        }
        for (const auto& jo : doc.at("objects")) {
            scene.objects.push_back({jo.at("id").get<int>(),
                                     jo.at("class").get<std::string>(),
                                     detail::ellipsoid_from_json(jo.at("ellipsoid"))});
        }
        for (const auto& jp : doc.at("points")) {
            scene.points.push_back({jp.at("id").get<int>(),
                                    detail::vec3_from_json(jp.at("p")),
                                    jp.at("object_id").get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scene JSON: ") + e.what());
    }
    return scene;
}

inline void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream out(path);
    out << scene_to_json(scene).dump(2) << "\n";
}

inline Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scene file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("scene file '" + path + "': " + e.what());
    }
    return scene_from_json(doc);
}

inline nlohmann::json map_to_json(const UnscaledMap& map) {
    nlohmann::json doc;
    doc["true_scale"] = map.true_scale;
    doc["cameras"] = nlohmann::json::array();
    for (const auto& [t, pose] : map.cameras) {
        doc["cameras"].push_back({{"t", t}, {"pose", detail::pose_to_json(pose)}});
    }
    doc["objects"] = nlohmann::json::array();
    for (const auto& obj : map.objects) {
        doc["objects"].push_back(
            {{"id", obj.id},
             {"class", obj.class_name},
             {"ellipsoid", detail::ellipsoid_to_json(obj.ellipsoid)},
             {"dims_desc", detail::to_json(obj.estimate.dims)},
             {"detection_probs", obj.estimate.detection_probs},
             {"num_points", obj.estimate.num_points},
             {"num_detections", obj.estimate.num_detections}});
    }
    doc["points"] = nlohmann::json::array();
    for (const auto& pt : map.points) {
        doc["points"].push_back({{"id", pt.id},
                                 {"p", detail::to_json(pt.position)},
                                 {"object_id", pt.object_id}});
    }
    return doc;
}

inline UnscaledMap map_from_json(const nlohmann::json& doc) {
    UnscaledMap map;
    try {
        map.true_scale = doc.value("true_scale", 0.0);
        if (doc.contains("cameras")) {
            for (const auto& jc : doc.at("cameras")) {
                map.cameras.emplace_back(jc.at("t").get<double>(),
                                         detail::pose_from_json(jc.at("pose")));
            }
        }
        for (const auto& jo : doc.at("objects")) {
            MapObject mo;
            mo.id = jo.at("id").get<int>();
            mo.class_name = jo.at("class").get<std::string>();
            if (jo.contains("ellipsoid")) {
                mo.ellipsoid = detail::ellipsoid_from_json(jo.at("ellipsoid"));
            }
            mo.estimate.id = mo.id;
            mo.estimate.class_name = mo.class_name;
            mo.estimate.dims = detail::vec3_from_json(jo.at("dims_desc"));
            mo.estimate.detection_probs =
                jo.value("detection_probs", std::vector<double>{});
            mo.estimate.num_points = jo.value("num_points", 0);
            mo.estimate.num_detections =
                jo.value("num_detections",
                         static_cast<int>(mo.estimate.detection_probs.size()));
            map.objects.push_back(std::move(mo));
        }
        if (doc.contains("points")) {
            for (const auto& jp : doc.at("points")) {
                map.points.push_back({jp.at("id").get<int>(),
                                      detail::vec3_from_json(jp.at("p")),
                                      jp.value("object_id", -1)});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("map JSON: ") + e.what());
    }
    return map;
}

inline void save_map(const UnscaledMap& map, const std::string& path) {
    std::ofstream out(path);
    out << map_to_json(map).dump(2) << "\n";
}

inline UnscaledMap load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open map file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("map file '" + path + "': " + e.what());
    }
    return map_from_json(doc);
}

}  // namespace quadscale
