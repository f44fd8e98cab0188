#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "quadscale/core.hpp"

namespace quadscale {

/// Closed ellipsoidal surface: object pose in the world plus three semi-axes.
struct Ellipsoid {
    RigidPose pose;
    Vec3 semi_axes = Vec3::Ones();  // > 0, expressed along the local x/y/z axes

    Ellipsoid() = default;
    Ellipsoid(const RigidPose& p, const Vec3& axes) : pose(p), semi_axes(axes) {}

    /// Full extents (2 * semi-axes), sorted descending.
    Vec3 dims() const {
        Vec3 d = 2.0 * semi_axes;
        std::sort(d.data(), d.data() + 3, std::greater<double>());
        return d;
    }
};

/// Dual quadric Q*: 4x4 symmetric matrix of tangent planes.
class DualQuadric {
public:
    DualQuadric() : m_(Mat4::Zero()) {}
    explicit DualQuadric(const Mat4& m) : m_(0.5 * (m + m.transpose())) {}

    const Mat4& matrix() const { return m_; }

private:
    Mat4 m_;
};

/// Dual conic C*: 3x3 symmetric matrix, the perspective image of a dual quadric.
class DualConic {
public:
    DualConic() : m_(Mat3::Zero()) {}
    explicit DualConic(const Mat3& m) : m_(0.5 * (m + m.transpose())) {}

    const Mat3& matrix() const { return m_; }

private:
    Mat3 m_;
};

/// Axis-aligned 2-D box in pixels, stored as (u_max, v_max, u_min, v_min).
struct BBox2D {
    double u_max = 0.0;
    double v_max = 0.0;
    double u_min = 0.0;
    double v_min = 0.0;

    Vec4 vector() const { return {u_max, v_max, u_min, v_min}; }

    bool contains(double u, double v) const {
        return u >= u_min && u <= u_max && v >= v_min && v <= v_max;
    }

    double width() const { return u_max - u_min; }
    double height() const { return v_max - v_min; }
};

/// Oriented 3-D box: pose of the box frame plus half-extents along its axes.
struct OrientedBox {
    RigidPose pose;
    Vec3 half_extents = Vec3::Zero();
};

inline DualQuadric ellipsoid_to_dual_quadric(const Ellipsoid& e) {
    Mat4 d = Mat4::Zero();
    d(0, 0) = e.semi_axes.x() * e.semi_axes.x();
    d(1, 1) = e.semi_axes.y() * e.semi_axes.y();
    d(2, 2) = e.semi_axes.z() * e.semi_axes.z();
    d(3, 3) = -1.0;
    const Mat4 z = e.pose.matrix();
    return DualQuadric(z * d * z.transpose());
}

/// Recovers pose and semi-axes from a dual quadric with ellipsoid signature.
inline Ellipsoid dual_quadric_to_ellipsoid(const DualQuadric& q,
                                           const GeometryConfig& cfg = {}) {
    Mat4 m = q.matrix();
    if (std::abs(m(3, 3)) < cfg.tol) {
        throw NonEllipsoid("dual quadric has vanishing (3,3) entry");
    }
    m /= -m(3, 3);  // now m(3,3) == -1, matching the canonical construction
    const Vec3 center = -m.topRightCorner<3, 1>();
    const Mat3 shape = m.topLeftCorner<3, 3>() + center * center.transpose();

    Eigen::SelfAdjointEigenSolver<Mat3> es(shape);
    const Vec3 evals = es.eigenvalues();  // ascending
    if (!(evals(0) > 0.0)) {
        throw NonEllipsoid("dual quadric does not have ellipsoid signature");
    }
    if (evals(2) / evals(0) > cfg.max_condition) {
        throw NonEllipsoid("dual quadric is numerically degenerate");
    }
    Mat3 axes = es.eigenvectors();
    if (axes.determinant() < 0.0) {
        axes.col(2) *= -1.0;
    }
    return Ellipsoid(RigidPose(Rotation::from_matrix(axes), center),
                     evals.cwiseSqrt());
}

/// Eq.-style dual conic projection C* = H Q* H^T with H = K [R|t].
inline DualConic project_quadric(const DualQuadric& q, const CameraIntrinsics& k,
                                 const RigidPose& cam) {
    const Mat4 ext = cam.inverse().matrix();  // world -> camera
    const Eigen::Matrix<double, 3, 4> h = k.matrix() * ext.topRows<3>();
    return DualConic(h * q.matrix() * h.transpose());
}

/// Axis-aligned extent of the conic outline. Throws if the conic is not a
/// bounded ellipse (object intersecting or behind the principal plane).
inline BBox2D conic_bbox(const DualConic& c, const GeometryConfig& cfg = {}) {
    Mat3 m = c.matrix();
    if (std::abs(m(2, 2)) < cfg.tol) {
        throw UnboundedConic("conic has vanishing (2,2) entry");
    }
    m /= m(2, 2);  // normalized so m(2,2) == 1; extents below are sign-safe
    const double du = m(0, 2) * m(0, 2) - m(0, 0);
    const double dv = m(1, 2) * m(1, 2) - m(1, 1);
    if (du < 0.0 || dv < 0.0) {
        throw UnboundedConic("conic is not a bounded ellipse");
    }
    BBox2D b;
    b.u_max = m(0, 2) + std::sqrt(du);
    b.u_min = m(0, 2) - std::sqrt(du);
    b.v_max = m(1, 2) + std::sqrt(dv);
    b.v_min = m(1, 2) - std::sqrt(dv);
    return b;
}

/// Point-to-quadric error max(0, sqrt(p^T Q p + 1) - 1) with the primal form
/// normalized to -1 at the center (Q(3,3) = -1 in the object frame). Zero on
/// and inside the surface; for outside points this is the ratio of the
/// distance beyond the surface to the surface radius along the center ray.
inline double point_quadric_error(const DualQuadric& q, const Vec3& p,
                                  const GeometryConfig& cfg = {}) {
    const Ellipsoid e = dual_quadric_to_ellipsoid(q, cfg);
    const Vec3 local = e.pose.inverse().apply(p);
    const double r = local.cwiseQuotient(e.semi_axes).norm();
    return std::max(0.0, r - 1.0);
}

inline Vec2 project_point(const CameraIntrinsics& k, const RigidPose& cam,
                          const Vec3& p, const GeometryConfig& cfg = {}) {
    const Vec3 pc = cam.inverse().apply(p);
    if (pc.z() <= cfg.min_depth) {
        throw BehindCamera("point depth below minimum");
    }
    return {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy};
}

namespace detail {

// Deterministic sign convention: largest-magnitude component positive.
inline Vec3 fix_sign(const Vec3& v) {
    int idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    return v(idx) < 0.0 ? Vec3(-v) : v;
}

}  // namespace detail

/// Covariance-based oriented bounding box fit. Axes are the covariance
/// eigenvectors ordered by descending eigenvalue; among (near-)equal
/// eigenvalues the axes closest to the world axes are chosen so that
/// isotropic inputs produce a deterministic result.
inline OrientedBox fit_obb(const std::vector<Vec3>& points) {
    if (points.empty()) {
        throw EmptyInput("fit_obb requires at least one point");
    }
    const double n = static_cast<double>(points.size());
    Vec3 mean = Vec3::Zero();
    for (const auto& p : points) mean += p;
    mean /= n;

    Mat3 cov = Mat3::Zero();
    for (const auto& p : points) {
        const Vec3 d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    // Descending order.
    std::array<double, 3> evals = {es.eigenvalues()(2), es.eigenvalues()(1),
                                   es.eigenvalues()(0)};
    std::array<Vec3, 3> evecs = {es.eigenvectors().col(2), es.eigenvectors().col(1),
                                 es.eigenvectors().col(0)};

    const double tie_tol = 1e-9 * std::max(1.0, evals[0]);
    Mat3 axes;
    int i = 0;
    while (i < 3) {
        int j = i;
        while (j + 1 < 3 && evals[i] - evals[j + 1] <= tie_tol) ++j;
        if (j == i) {
            axes.col(i) = detail::fix_sign(evecs[i]);
        } else {
            // Tied group: re-span the eigen-subspace with the world axes
            // projected into it, Gram-Schmidt in world-axis order.
            Mat3 proj = Mat3::Zero();
            for (int g = i; g <= j; ++g) proj += evecs[g] * evecs[g].transpose();
            int filled = i;
            for (int w = 0; w < 3 && filled <= j; ++w) {
                Vec3 cand = proj * Vec3::Unit(w);
                for (int g = i; g < filled; ++g) {
                    cand -= axes.col(g).dot(cand) * axes.col(g);
                }
                if (cand.norm() > 1e-6) {
                    axes.col(filled++) = detail::fix_sign(cand.normalized());
                }
            }
            for (; filled <= j; ++filled) {
                axes.col(filled) = detail::fix_sign(evecs[filled]);
            }
            for (int g = i; g < filled; ++g) evecs[g] = axes.col(g);  // keep orthogonality downstream
        }
        i = j + 1;
    }
    if (axes.determinant() < 0.0) {
        axes.col(2) *= -1.0;
    }

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& p : points) {
        const Vec3 local = axes.transpose() * (p - mean);
        lo = lo.cwiseMin(local);
        hi = hi.cwiseMax(local);
    }
    OrientedBox box;
    box.pose = RigidPose(Rotation::from_matrix(axes), mean + axes * (0.5 * (lo + hi)));
    box.half_extents = 0.5 * (hi - lo);
    return box;
}

}  // namespace quadscale
