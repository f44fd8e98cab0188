#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "quadscale/core.hpp"
#include "quadscale/geometry.hpp"

namespace quadscale {

struct TooFewPoints : Error { using Error::Error; };
struct SingularNormalEquations : Error { using Error::Error; };
struct GaugeError : Error { using Error::Error; };

/// Unconstrained 9-parameter quadric: axis-angle rotation, translation, and
/// log semi-axes (positivity is automatic under exp).
struct QuadricParams {
    Vec3 rotation_log = Vec3::Zero();
    Vec3 translation = Vec3::Zero();
    Vec3 log_semi_axes = Vec3::Zero();

    static QuadricParams from_ellipsoid(const Ellipsoid& e) {
        QuadricParams p;
        p.rotation_log = e.pose.rotation.log();
        p.translation = e.pose.translation;
        p.log_semi_axes = e.semi_axes.array().log();
        return p;
    }

    Ellipsoid to_ellipsoid() const {
        return Ellipsoid(
            RigidPose(Rotation::from_axis_angle(rotation_log), translation),
            log_semi_axes.array().exp());
    }

    Eigen::Matrix<double, 9, 1> vector() const {
        Eigen::Matrix<double, 9, 1> v;
        v << rotation_log, translation, log_semi_axes;
        return v;
    }

    static QuadricParams from_vector(const Eigen::Matrix<double, 9, 1>& v) {
        QuadricParams p;
        p.rotation_log = v.segment<3>(0);
        p.translation = v.segment<3>(3);
        p.log_semi_axes = v.segment<3>(6);
        return p;
    }
};

struct BBoxObs {
    int frame_id = 0;
    int object_id = 0;
    BBox2D bbox;
    Mat4 info = Mat4::Identity() / 4.0;  // default sigma_bb = 2 px
};

struct PointObs {
    int frame_id = 0;
    int point_id = 0;
    Vec2 pixel = Vec2::Zero();
    Eigen::Matrix2d info = Eigen::Matrix2d::Identity();  // sigma_px = 1 px
};

struct ObjectPointLink {
    int object_id = 0;
    int point_id = 0;
    double info = 100.0;  // sigma_op = 0.1
};

using Observation = std::variant<BBoxObs, PointObs, ObjectPointLink>;

/// Joint factor problem over camera poses, quadrics, and points.
struct Problem {
    CameraIntrinsics intrinsics;
    std::map<int, RigidPose> poses;
    std::map<int, QuadricParams> quadrics;
    std::map<int, Vec3> points;
    std::vector<Observation> observations;
    std::set<int> fixed_poses;
    std::set<int> fixed_quadrics;
    std::set<int> fixed_points;
};

struct SolverConfig {
    int max_iterations = 50;
    double initial_damping = 1e-4;
    double damping_up = 10.0;
    double damping_down = 0.1;
    double max_damping = 1e12;
    double chi2_rel_tol = 1e-12;
    double chi2_abs_tol = 1e-14;
    double step_tol = 1e-12;
    double fd_step = 1e-6;
    bool fix_unconstrained = true;  // hold variables with no observations fixed
    bool huber = false;
    double huber_delta = 1.0;  // in whitened units
};

struct SolveReport {
    double initial_chi2 = 0.0;
    double final_chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    double bbox_residual_norm = 0.0;
    double point_residual_norm = 0.0;
    double object_point_residual_norm = 0.0;
    int skipped_observations = 0;
    std::vector<double> chi2_history;  // chi2 after each accepted step
};

/// Predicted-minus-measured bounding box, ordered (u_max, v_max, u_min, v_min).
/// Throws UnboundedConic when the projected outline is not a bounded ellipse.
inline Vec4 residual_camera_object(const RigidPose& pose, const QuadricParams& quadric,
                                   const BBoxObs& obs, const CameraIntrinsics& k) {
    const DualQuadric q = ellipsoid_to_dual_quadric(quadric.to_ellipsoid());
    const BBox2D predicted = conic_bbox(project_quadric(q, k, pose));
    return predicted.vector() - obs.bbox.vector();
}

/// Standard point reprojection error pi(T_c^-1 p) - z.
inline Vec2 residual_camera_point(const RigidPose& pose, const Vec3& point,
                                  const PointObs& obs, const CameraIntrinsics& k) {
    return project_point(k, pose, point) - obs.pixel;
}

/// Point-to-quadric surface error; zero for points on or inside the surface.
inline double residual_object_point(const QuadricParams& quadric, const Vec3& point) {
    return point_quadric_error(ellipsoid_to_dual_quadric(quadric.to_ellipsoid()), point);
}

/// Analytic Jacobian of the camera-point residual with respect to the point.
inline Eigen::Matrix<double, 2, 3> camera_point_jacobian_point(
    const RigidPose& pose, const Vec3& point, const CameraIntrinsics& k) {
    const Mat3 r_cw = pose.rotation.matrix().transpose();
    const Vec3 pc = r_cw * (point - pose.translation);
    const double z = pc.z();
    Eigen::Matrix<double, 2, 3> dpi;
    dpi << k.fx / z, 0.0, -k.fx * pc.x() / (z * z),
           0.0, k.fy / z, -k.fy * pc.y() / (z * z);
    return dpi * r_cw;
}

/// Central-difference Jacobian of fn at x, per-component step eps*max(1,|x_i|).
template <typename F>
Eigen::MatrixXd numeric_jacobian(F&& fn, const Eigen::VectorXd& x, double eps = 1e-6) {
    const Eigen::VectorXd r0 = fn(x);
    Eigen::MatrixXd jac(r0.size(), x.size());
    for (int i = 0; i < x.size(); ++i) {
        const double h = eps * std::max(1.0, std::abs(x(i)));
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        jac.col(i) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return jac;
}

struct FrameDetection {
    int object_id = 0;
    BBox2D bbox;
    double probability = 1.0;
    std::string class_name;
};

/// Associates map points with objects: a point belongs to an object when it
/// projects inside that object's detection box in at least min_frames frames.
inline std::map<int, std::vector<int>> associate_points(
    const std::map<int, Vec3>& points,
    const std::map<int, std::vector<FrameDetection>>& detections,
    const std::map<int, RigidPose>& poses, const CameraIntrinsics& k,
    int min_frames = 2) {
    std::map<std::pair<int, int>, int> hits;  // (object, point) -> frame count
    for (const auto& [frame_id, dets] : detections) {
        const auto pose_it = poses.find(frame_id);
        if (pose_it == poses.end()) continue;
        for (const auto& [point_id, p] : points) {
            Vec2 uv;
            try {
                uv = project_point(k, pose_it->second, p);
            } catch (const BehindCamera&) {
                continue;
            }
            for (const auto& det : dets) {
                if (det.bbox.contains(uv.x(), uv.y())) {
                    ++hits[{det.object_id, point_id}];
                }
            }
        }
    }
    std::map<int, std::vector<int>> assoc;
    for (const auto& [key, count] : hits) {
        if (count >= min_frames) {
            assoc[key.first].push_back(key.second);
        }
    }
    return assoc;
}

/// Keeps the largest single-linkage cluster, with linkage threshold
/// k_tau * median nearest-neighbor distance. Filters background points.
inline std::vector<Vec3> cluster_filter(const std::vector<Vec3>& points,
                                        double k_tau = 3.0) {
    const std::size_t n = points.size();
    if (n <= 1) return points;

    std::vector<double> nn(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = (points[i] - points[j]).norm();
            nn[i] = std::min(nn[i], d);
            nn[j] = std::min(nn[j], d);
        }
    }
    std::vector<double> sorted_nn = nn;
    std::sort(sorted_nn.begin(), sorted_nn.end());
    const double median_nn = 0.5 * (sorted_nn[(n - 1) / 2] + sorted_nn[n / 2]);
    const double tau = k_tau * median_nn;

    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if ((points[i] - points[j]).norm() <= tau) {
                parent[std::max(find(i), find(j))] = std::min(find(i), find(j));
            }
        }
    }
    std::map<std::size_t, std::size_t> cluster_size;
    for (std::size_t i = 0; i < n; ++i) ++cluster_size[find(i)];
    std::size_t best_root = 0, best_size = 0;
    for (const auto& [root, size] : cluster_size) {
        if (size > best_size) {
            best_root = root;
            best_size = size;
        }
    }
    std::vector<Vec3> kept;
    kept.reserve(best_size);
    for (std::size_t i = 0; i < n; ++i) {
        if (find(i) == best_root) kept.push_back(points[i]);
    }
    return kept;
}

/// Initializes a quadric from the oriented bounding box of associated points.
inline QuadricParams init_quadric_from_obb(const std::vector<Vec3>& points) {
    if (points.size() < 4) {
        throw TooFewPoints("quadric initialization needs at least 4 points");
    }
    const OrientedBox box = fit_obb(points);
    QuadricParams p;
    p.rotation_log = box.pose.rotation.log();
    p.translation = box.pose.translation;
    p.log_semi_axes = box.half_extents.cwiseMax(1e-6).array().log();
    return p;
}

namespace detail {

enum class BlockKind { Pose, Quadric, Point };

struct Block {
    BlockKind kind;
    int id;
    int dim;
    int offset;
};

inline void apply_block_delta(Problem& p, const Block& b,
                              const Eigen::Ref<const Eigen::VectorXd>& delta) {
    switch (b.kind) {
        case BlockKind::Pose: {
            RigidPose& pose = p.poses.at(b.id);
            pose.rotation = pose.rotation * Rotation::from_axis_angle(delta.head<3>());
            pose.translation += delta.tail<3>();
            break;
        }
        case BlockKind::Quadric: {
            QuadricParams& q = p.quadrics.at(b.id);
            q = QuadricParams::from_vector(q.vector() + delta);
            break;
        }
        case BlockKind::Point:
            p.points.at(b.id) += delta;
            break;
    }
}

struct ObsEval {
    Eigen::VectorXd residual;  // whitened; empty when the observation is skipped
    bool skipped = false;
};

inline ObsEval eval_observation(const Problem& p, const Observation& obs) {
    ObsEval out;
    if (const auto* bb = std::get_if<BBoxObs>(&obs)) {
        try {
            const Vec4 r = residual_camera_object(p.poses.at(bb->frame_id),
                                                  p.quadrics.at(bb->object_id), *bb,
                                                  p.intrinsics);
            out.residual = Eigen::LLT<Mat4>(bb->info).matrixU() * r;
        } catch (const UnboundedConic&) {
            out.skipped = true;
        }
    } else if (const auto* po = std::get_if<PointObs>(&obs)) {
        try {
            const Vec2 r = residual_camera_point(p.poses.at(po->frame_id),
                                                 p.points.at(po->point_id), *po,
                                                 p.intrinsics);
            out.residual = Eigen::LLT<Eigen::Matrix2d>(po->info).matrixU() * r;
        } catch (const BehindCamera&) {
            out.skipped = true;
        }
    } else {
        const auto& op = std::get<ObjectPointLink>(obs);
        const double r = residual_object_point(p.quadrics.at(op.object_id),
                                               p.points.at(op.point_id));
        out.residual = Eigen::VectorXd::Constant(1, std::sqrt(op.info) * r);
    }
    return out;
}

inline int observation_dim(const Observation& obs) {
    if (std::holds_alternative<BBoxObs>(obs)) return 4;
    if (std::holds_alternative<PointObs>(obs)) return 2;
    return 1;
}

inline double huber_sqrt_weight(double norm, double delta) {
    if (norm <= delta) return 1.0;
    return std::sqrt(delta * (2.0 * norm - delta)) / norm;
}

}  // namespace detail

/// Levenberg-Marquardt solve of the joint problem. Requires at least one
/// fixed pose (gauge). Derivatives are central finite differences evaluated
/// per observation block.
inline std::pair<Problem, SolveReport> solve(Problem problem,
                                             const SolverConfig& cfg = {}) {
    using detail::Block;
    using detail::BlockKind;

    if (!problem.poses.empty()) {
        bool any_fixed = false;
        for (const auto& [id, _] : problem.poses) {
            if (problem.fixed_poses.count(id)) any_fixed = true;
        }
        if (!any_fixed) {
            throw GaugeError("at least one pose must be held fixed");
        }
    }

    // Variables never referenced by an observation cannot be constrained.
    if (cfg.fix_unconstrained) {
        std::set<int> seen_poses, seen_quadrics, seen_points;
        for (const auto& obs : problem.observations) {
            if (const auto* bb = std::get_if<BBoxObs>(&obs)) {
                seen_poses.insert(bb->frame_id);
                seen_quadrics.insert(bb->object_id);
            } else if (const auto* po = std::get_if<PointObs>(&obs)) {
                seen_poses.insert(po->frame_id);
                seen_points.insert(po->point_id);
            } else {
                const auto& op = std::get<ObjectPointLink>(obs);
                seen_quadrics.insert(op.object_id);
                seen_points.insert(op.point_id);
            }
        }
        for (const auto& [id, _] : problem.poses)
            if (!seen_poses.count(id)) problem.fixed_poses.insert(id);
        for (const auto& [id, _] : problem.quadrics)
            if (!seen_quadrics.count(id)) problem.fixed_quadrics.insert(id);
        for (const auto& [id, _] : problem.points)
            if (!seen_points.count(id)) problem.fixed_points.insert(id);
    }

    std::vector<Block> blocks;
    int total_dim = 0;
    for (const auto& [id, _] : problem.poses) {
        if (!problem.fixed_poses.count(id)) {
            blocks.push_back({BlockKind::Pose, id, 6, total_dim});
            total_dim += 6;
        }
    }
    for (const auto& [id, _] : problem.quadrics) {
        if (!problem.fixed_quadrics.count(id)) {
            blocks.push_back({BlockKind::Quadric, id, 9, total_dim});
            total_dim += 9;
        }
    }
    for (const auto& [id, _] : problem.points) {
        if (!problem.fixed_points.count(id)) {
            blocks.push_back({BlockKind::Point, id, 3, total_dim});
            total_dim += 3;
        }
    }

    std::map<int, int> pose_idx, quadric_idx, point_idx;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        switch (blocks[i].kind) {
            case BlockKind::Pose: pose_idx[blocks[i].id] = static_cast<int>(i); break;
            case BlockKind::Quadric: quadric_idx[blocks[i].id] = static_cast<int>(i); break;
            case BlockKind::Point: point_idx[blocks[i].id] = static_cast<int>(i); break;
        }
    }

    auto touched_blocks = [&](const Observation& obs) {
        std::vector<int> touched;
        auto add = [&](const std::map<int, int>& idx, int id) {
            auto it = idx.find(id);
            if (it != idx.end()) touched.push_back(it->second);
        };
        if (const auto* bb = std::get_if<BBoxObs>(&obs)) {
            add(pose_idx, bb->frame_id);
            add(quadric_idx, bb->object_id);
        } else if (const auto* po = std::get_if<PointObs>(&obs)) {
            add(pose_idx, po->frame_id);
            add(point_idx, po->point_id);
        } else {
            const auto& op = std::get<ObjectPointLink>(obs);
            add(quadric_idx, op.object_id);
            add(point_idx, op.point_id);
        }
        return touched;
    };

    SolveReport report;

    // chi2 and per-family norms at a given state; skipped observations
    // contribute nothing.
    auto evaluate_chi2 = [&](const Problem& p, SolveReport* family_report) {
        double chi2 = 0.0;
        int skipped = 0;
        double bb_sq = 0.0, pt_sq = 0.0, op_sq = 0.0;
        for (const auto& obs : p.observations) {
            detail::ObsEval ev = detail::eval_observation(p, obs);
            if (ev.skipped) {
                ++skipped;
                continue;
            }
            double sq = ev.residual.squaredNorm();
            if (cfg.huber) {
                const double w = detail::huber_sqrt_weight(ev.residual.norm(), cfg.huber_delta);
                sq *= w * w;
            }
            chi2 += sq;
            if (std::holds_alternative<BBoxObs>(obs)) bb_sq += sq;
            else if (std::holds_alternative<PointObs>(obs)) pt_sq += sq;
            else op_sq += sq;
        }
        if (family_report) {
            family_report->bbox_residual_norm = std::sqrt(bb_sq);
            family_report->point_residual_norm = std::sqrt(pt_sq);
            family_report->object_point_residual_norm = std::sqrt(op_sq);
            family_report->skipped_observations = skipped;
        }
        return chi2;
    };

    double chi2 = evaluate_chi2(problem, &report);
    report.initial_chi2 = chi2;
    report.final_chi2 = chi2;
    if (chi2 <= cfg.chi2_abs_tol || total_dim == 0) {
        report.converged = true;
        return {problem, report};
    }

    double damping = cfg.initial_damping;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        // Assemble dense normal equations from per-observation Jacobians.
        Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(total_dim, total_dim);
        Eigen::VectorXd gradient = Eigen::VectorXd::Zero(total_dim);
        for (const auto& obs : problem.observations) {
            detail::ObsEval ev = detail::eval_observation(problem, obs);
            if (ev.skipped) continue;
            const std::vector<int> touched = touched_blocks(obs);
            if (touched.empty()) continue;
            int local_dim = 0;
            for (int b : touched) local_dim += blocks[b].dim;

            // Perturb touched variables in place and restore afterwards;
            // eval_observation only reads the problem.
            std::vector<std::variant<RigidPose, QuadricParams, Vec3>> saved;
            for (int b : touched) {
                switch (blocks[b].kind) {
                    case BlockKind::Pose: saved.emplace_back(problem.poses.at(blocks[b].id)); break;
                    case BlockKind::Quadric: saved.emplace_back(problem.quadrics.at(blocks[b].id)); break;
                    case BlockKind::Point: saved.emplace_back(problem.points.at(blocks[b].id)); break;
                }
            }
            auto restore = [&]() {
                for (std::size_t s = 0; s < touched.size(); ++s) {
                    const Block& b = blocks[touched[s]];
                    switch (b.kind) {
                        case BlockKind::Pose: problem.poses.at(b.id) = std::get<RigidPose>(saved[s]); break;
                        case BlockKind::Quadric: problem.quadrics.at(b.id) = std::get<QuadricParams>(saved[s]); break;
                        case BlockKind::Point: problem.points.at(b.id) = std::get<Vec3>(saved[s]); break;
                    }
                }
            };
            auto local_fn = [&](const Eigen::VectorXd& delta) -> Eigen::VectorXd {
                int off = 0;
                for (int b : touched) {
                    detail::apply_block_delta(problem, blocks[b],
                                              delta.segment(off, blocks[b].dim));
                    off += blocks[b].dim;
                }
                detail::ObsEval e = detail::eval_observation(problem, obs);
                restore();
                if (e.skipped) {
                    return Eigen::VectorXd::Zero(detail::observation_dim(obs));
                }
                return e.residual;
            };
            Eigen::MatrixXd jac = numeric_jacobian(
                local_fn, Eigen::VectorXd::Zero(local_dim), cfg.fd_step);
            Eigen::VectorXd res = ev.residual;
            if (cfg.huber) {
                const double w = detail::huber_sqrt_weight(res.norm(), cfg.huber_delta);
                res *= w;
                jac *= w;
            }
            int row_off = 0;
            for (int bi : touched) {
                const auto jbi = jac.middleCols(row_off, blocks[bi].dim);
                gradient.segment(blocks[bi].offset, blocks[bi].dim) +=
                    jbi.transpose() * res;
                int col_off = 0;
                for (int bj : touched) {
                    hessian.block(blocks[bi].offset, blocks[bj].offset,
                                  blocks[bi].dim, blocks[bj].dim) +=
                        jbi.transpose() * jac.middleCols(col_off, blocks[bj].dim);
                    col_off += blocks[bj].dim;
                }
                row_off += blocks[bi].dim;
            }
        }

        // Damped solve; raise damping until a step decreases chi2.
        bool accepted = false;
        while (!accepted) {
            Eigen::VectorXd diag = hessian.diagonal().cwiseMax(1e-12);
            Eigen::MatrixXd damped = hessian;
            damped.diagonal() += damping * diag;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
            Eigen::VectorXd step = ldlt.solve(-gradient);
            const bool solvable =
                ldlt.info() == Eigen::Success && step.allFinite() &&
                (damped * step + gradient).norm() <=
                    1e-6 * std::max(1.0, gradient.norm());
            if (!solvable) {
                damping *= cfg.damping_up;
                if (damping > cfg.max_damping) {
                    throw SingularNormalEquations(
                        "normal equations unsolvable at maximum damping");
                }
                continue;
            }

            Problem candidate = problem;
            for (const Block& b : blocks) {
                detail::apply_block_delta(candidate, b, step.segment(b.offset, b.dim));
            }
            const double new_chi2 = evaluate_chi2(candidate, nullptr);
            if (new_chi2 < chi2) {
                problem = std::move(candidate);
                const double rel_drop = (chi2 - new_chi2) / std::max(chi2, 1e-300);
                chi2 = new_chi2;
                report.chi2_history.push_back(chi2);
                ++report.iterations;
                damping = std::max(damping * cfg.damping_down, 1e-15);
                accepted = true;
                if (chi2 <= cfg.chi2_abs_tol || rel_drop < cfg.chi2_rel_tol ||
                    step.norm() < cfg.step_tol) {
                    report.converged = true;
                }
            } else {
                damping *= cfg.damping_up;
                if (damping > cfg.max_damping) {
                    // No descent direction left: stationary point.
                    report.converged = true;
                    break;
                }
            }
        }
        if (report.converged) break;
    }

    report.final_chi2 = evaluate_chi2(problem, &report);
    return {problem, report};
}

// ---------------------------------------------------------------------------
// JSON serialization for reproducible fixtures.

namespace detail {

inline nlohmann::json to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3 vec3_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

template <typename Mat>
nlohmann::json matrix_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

template <typename Mat>
void matrix_from_json(const nlohmann::json& j, Mat& m) {
    for (int i = 0; i < m.rows(); ++i)
        for (int k = 0; k < m.cols(); ++k) m(i, k) = j.at(i).at(k).get<double>();
}

inline nlohmann::json pose_to_json(const RigidPose& p) {
    const auto& q = p.rotation.quat();
    return {{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", to_json(p.translation)}};
}

inline RigidPose pose_from_json(const nlohmann::json& j) {
    const auto& q = j.at("q");
    return RigidPose(Rotation(q.at(0).get<double>(), q.at(1).get<double>(),
                              q.at(2).get<double>(), q.at(3).get<double>()),
                     vec3_from_json(j.at("t")));
}

}  // namespace detail

inline nlohmann::json problem_to_json(const Problem& p) {
    nlohmann::json doc;
    doc["intrinsics"] = {{"fx", p.intrinsics.fx},
                         {"fy", p.intrinsics.fy},
                         {"cx", p.intrinsics.cx},
                         {"cy", p.intrinsics.cy}};
    for (const auto& [id, pose] : p.poses) {
        nlohmann::json jp = detail::pose_to_json(pose);
        jp["fixed"] = p.fixed_poses.count(id) > 0;
        doc["poses"][std::to_string(id)] = jp;
    }
    for (const auto& [id, q] : p.quadrics) {
        doc["quadrics"][std::to_string(id)] = {
            {"rotation_log", detail::to_json(q.rotation_log)},
            {"translation", detail::to_json(q.translation)},
            {"log_semi_axes", detail::to_json(q.log_semi_axes)},
            {"fixed", p.fixed_quadrics.count(id) > 0}};
    }
    for (const auto& [id, pt] : p.points) {
        doc["points"][std::to_string(id)] = {
            {"p", detail::to_json(pt)}, {"fixed", p.fixed_points.count(id) > 0}};
    }
    doc["observations"] = nlohmann::json::array();
    for (const auto& obs : p.observations) {
        nlohmann::json jo;
        if (const auto* bb = std::get_if<BBoxObs>(&obs)) {
            jo = {{"type", "bbox"},
                  {"frame", bb->frame_id},
                  {"object", bb->object_id},
                  {"bbox", {bb->bbox.u_max, bb->bbox.v_max, bb->bbox.u_min, bb->bbox.v_min}},
                  {"info", detail::matrix_to_json(bb->info)}};
        } else if (const auto* po = std::get_if<PointObs>(&obs)) {
            jo = {{"type", "pixel"},
                  {"frame", po->frame_id},
                  {"point", po->point_id},
                  {"uv", {po->pixel.x(), po->pixel.y()}},
                  {"info", detail::matrix_to_json(po->info)}};
        } else {
            const auto& op = std::get<ObjectPointLink>(obs);
            jo = {{"type", "object_point"},
                  {"object", op.object_id},
                  {"point", op.point_id},
                  {"info", op.info}};
        }
        doc["observations"].push_back(jo);
    }
    return doc;
}

inline Problem problem_from_json(const nlohmann::json& doc) {
    Problem p;
    try {
        const auto& k = doc.at("intrinsics");
        p.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(),
                        k.at("cx").get<double>(), k.at("cy").get<double>()};
        if (doc.contains("poses")) {
            for (const auto& [key, jp] : doc.at("poses").items()) {
                const int id = std::stoi(key);
                p.poses[id] = detail::pose_from_json(jp);
                if (jp.value("fixed", false)) p.fixed_poses.insert(id);
            }
        }
        if (doc.contains("quadrics")) {
            for (const auto& [key, jq] : doc.at("quadrics").items()) {
                const int id = std::stoi(key);
                QuadricParams q;
                q.rotation_log = detail::vec3_from_json(jq.at("rotation_log"));
                q.translation = detail::vec3_from_json(jq.at("translation"));
                q.log_semi_axes = detail::vec3_from_json(jq.at("log_semi_axes"));
                p.quadrics[id] = q;
                if (jq.value("fixed", false)) p.fixed_quadrics.insert(id);
            }
        }
        if (doc.contains("points")) {
            for (const auto& [key, jp] : doc.at("points").items()) {
                const int id = std::stoi(key);
                p.points[id] = detail::vec3_from_json(jp.at("p"));
                if (jp.value("fixed", false)) p.fixed_points.insert(id);
            }
        }
        for (const auto& jo : doc.value("observations", nlohmann::json::array())) {
            const std::string type = jo.at("type").get<std::string>();
            if (type == "bbox") {
                BBoxObs bb;
                bb.frame_id = jo.at("frame").get<int>();
                bb.object_id = jo.at("object").get<int>();
                const auto& b = jo.at("bbox");
                bb.bbox = {b.at(0).get<double>(), b.at(1).get<double>(),
                           b.at(2).get<double>(), b.at(3).get<double>()};
                detail::matrix_from_json(jo.at("info"), bb.info);
                p.observations.emplace_back(bb);
            } else if (type == "pixel") {
                PointObs po;
                po.frame_id = jo.at("frame").get<int>();
                po.point_id = jo.at("point").get<int>();
                po.pixel = {jo.at("uv").at(0).get<double>(), jo.at("uv").at(1).get<double>()};
                detail::matrix_from_json(jo.at("info"), po.info);
                p.observations.emplace_back(po);
            } else if (type == "object_point") {
                ObjectPointLink op;
                op.object_id = jo.at("object").get<int>();
                op.point_id = jo.at("point").get<int>();
                op.info = jo.at("info").get<double>();
                p.observations.emplace_back(op);
            } else {
                throw ParseError("unknown observation type: " + type);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("problem JSON: ") + e.what());
    }
    return p;
}

inline void save_problem(const Problem& p, const std::string& path) {
    std::ofstream out(path);
    out << problem_to_json(p).dump(2) << "\n";
}

inline Problem load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open problem file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("problem file '" + path + "': " + e.what());
    }
    return problem_from_json(doc);
}

}  // namespace quadscale
