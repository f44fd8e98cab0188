#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "quadscale/core.hpp"
#include "quadscale/sim.hpp"

namespace quadscale {

struct DegenerateGeometry : Error { using Error::Error; };
struct NoAssociations : Error { using Error::Error; };

/// Timestamped pose sequence.
struct Trajectory {
    std::vector<std::pair<double, RigidPose>> poses;

    std::vector<Vec3> positions() const {
        std::vector<Vec3> out;
        out.reserve(poses.size());
        for (const auto& [t, p] : poses) out.push_back(p.translation);
        return out;
    }
};

struct SimilarityTransform {
    double scale = 1.0;
    Rotation rotation;
    Vec3 translation = Vec3::Zero();
    double residual = 0.0;  // objective value at the optimum

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

enum class AlignMode { None, Rigid, Sim3 };

struct AteResult {
    double rmse = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double max = 0.0;
    std::vector<double> per_pose_errors;
    std::optional<SimilarityTransform> alignment;
    int num_pairs = 0;
};

namespace detail {

/// Closed-form similarity (or rigid, with fix_scale) alignment mapping
/// `estimate` onto `truth` via SVD with determinant correction.
inline SimilarityTransform align_points(const std::vector<Vec3>& estimate,
                                        const std::vector<Vec3>& truth,
                                        bool fix_scale) {
    if (estimate.size() != truth.size()) {
        throw DegenerateGeometry("point sets must have equal size");
    }
    const std::size_t n = estimate.size();
    if (n < 3) {
        throw DegenerateGeometry("alignment needs at least 3 point pairs");
    }
    Vec3 mean_e = Vec3::Zero(), mean_t = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mean_e += estimate[i];
        mean_t += truth[i];
    }
    mean_e /= static_cast<double>(n);
    mean_t /= static_cast<double>(n);

    Mat3 sigma = Mat3::Zero();
    double var_e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 de = estimate[i] - mean_e;
        sigma += (truth[i] - mean_t) * de.transpose();
        var_e += de.squaredNorm();
    }
    sigma /= static_cast<double>(n);
    var_e /= static_cast<double>(n);

    Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    if (var_e < 1e-18 || sv(1) <= 1e-9 * std::max(sv(0), 1e-18)) {
        throw DegenerateGeometry("point pairs are collinear or coincident");
    }
    Vec3 d = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        d(2) = -1.0;
    }
    const Mat3 r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();

    SimilarityTransform s;
    s.rotation = Rotation::from_matrix(r);
    s.scale = fix_scale ? 1.0 : sv.dot(d) / var_e;
    s.translation = mean_t - s.scale * (r * mean_e);
    for (std::size_t i = 0; i < n; ++i) {
        s.residual += (truth[i] - s.apply(estimate[i])).squaredNorm();
    }
    return s;
}

}  // namespace detail

/// Optimal similarity transform {s, R, t} minimizing
/// sum_i || truth_i - s R estimate_i - t ||^2.
inline SimilarityTransform umeyama_align(const std::vector<Vec3>& estimate,
                                         const std::vector<Vec3>& truth) {
    return detail::align_points(estimate, truth, false);
}

/// Relative scale error |estimated - true| / true.
inline double rse(double estimated_scale, double true_scale) {
    return std::abs(estimated_scale - true_scale) / true_scale;
}

/// Greedy nearest-neighbor timestamp association; each pose used at most once.
inline std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(
    const Trajectory& a, const Trajectory& b, double max_dt = 0.02) {
    struct Cand {
        double dt;
        std::size_t i, j;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < a.poses.size(); ++i) {
        for (std::size_t j = 0; j < b.poses.size(); ++j) {
            const double dt = std::abs(a.poses[i].first - b.poses[j].first);
            if (dt <= max_dt) cands.push_back({dt, i, j});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        return std::tie(x.dt, x.i, x.j) < std::tie(y.dt, y.i, y.j);
    });
    std::vector<bool> used_a(a.poses.size(), false), used_b(b.poses.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& c : cands) {
        if (used_a[c.i] || used_b[c.j]) continue;
        used_a[c.i] = true;
        used_b[c.j] = true;
        pairs.emplace_back(c.i, c.j);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

/// RMS position error between time-associated trajectories after the
/// selected alignment.
inline AteResult ate_rmse(const Trajectory& estimate, const Trajectory& truth,
                          AlignMode mode, double max_dt = 0.02) {
    const auto pairs = associate_timestamps(estimate, truth, max_dt);
    if (pairs.empty()) {
        throw NoAssociations("no timestamp pairs within tolerance");
    }
    std::vector<Vec3> est, gt;
    est.reserve(pairs.size());
    gt.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        est.push_back(estimate.poses[i].second.translation);
        gt.push_back(truth.poses[j].second.translation);
    }
    AteResult result;
    result.num_pairs = static_cast<int>(pairs.size());
    if (mode != AlignMode::None) {
        const SimilarityTransform s =
            detail::align_points(est, gt, mode == AlignMode::Rigid);
        for (auto& p : est) p = s.apply(p);
        result.alignment = s;
    }
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double e = (gt[i] - est[i]).norm();
        result.per_pose_errors.push_back(e);
        sq_sum += e * e;
        result.mean += e;
        result.max = std::max(result.max, e);
    }
    const double n = static_cast<double>(est.size());
    result.rmse = std::sqrt(sq_sum / n);
    result.mean /= n;
    std::vector<double> sorted = result.per_pose_errors;
    std::sort(sorted.begin(), sorted.end());
    result.median = 0.5 * (sorted[(sorted.size() - 1) / 2] + sorted[sorted.size() / 2]);
    return result;
}

// ---------------------------------------------------------------------------
// TUM trajectory format: `timestamp tx ty tz qx qy qz qw`, '#' comments.

inline Trajectory load_tum(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open trajectory file: " + path);
    Trajectory traj;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected 8 numeric fields");
        }
        traj.poses.emplace_back(
            t, RigidPose(Rotation(qw, qx, qy, qz), Vec3(tx, ty, tz)));
    }
    std::stable_sort(traj.poses.begin(), traj.poses.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return traj;
}

inline void save_tum(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    out << "# timestamp tx ty tz qx qy qz qw\n";
    out << std::setprecision(17);
    for (const auto& [t, pose] : traj.poses) {
        const auto& q = pose.rotation.quat();
        out << t << " " << pose.translation.x() << " " << pose.translation.y()
            << " " << pose.translation.z() << " " << q.x() << " " << q.y() << " "
            << q.z() << " " << q.w() << "\n";
    }
}

/// Writes ground-truth and estimated camera trajectories as TUM files.
inline void export_trajectories(const Scene& scene,
                                const std::vector<std::pair<double, RigidPose>>& estimated,
                                const std::string& gt_path,
                                const std::string& est_path) {
    Trajectory gt, est;
    gt.poses = scene.cameras;
    est.poses = estimated;
    save_tum(gt, gt_path);
    save_tum(est, est_path);
}

}  // namespace quadscale
