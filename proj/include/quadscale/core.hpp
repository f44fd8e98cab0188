#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <string>

namespace quadscale {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonEllipsoid : Error { using Error::Error; };
struct UnboundedConic : Error { using Error::Error; };
struct BehindCamera : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };

/// Numeric tolerances shared across geometric routines.
struct GeometryConfig {
    double tol = 1e-9;            // symmetry / orthonormality checks
    double max_condition = 1e12;  // primal-form conditioning limit
    double min_depth = 1e-9;      // minimum depth for projection
};

/// Unit quaternion rotation. Kept normalized on construction.
class Rotation {
public:
    Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}
    explicit Rotation(const Eigen::Quaterniond& q) : q_(q) { renormalize(); }
    Rotation(double w, double x, double y, double z) : q_(w, x, y, z) { renormalize(); }

    static Rotation identity() { return {}; }

    static Rotation from_matrix(const Mat3& m) { return Rotation(Eigen::Quaterniond(m)); }

    /// Exponential map: axis-angle vector -> rotation.
    static Rotation from_axis_angle(const Vec3& aa) {
        const double angle = aa.norm();
        if (angle < 1e-12) {
            Eigen::Quaterniond q(1.0, 0.5 * aa.x(), 0.5 * aa.y(), 0.5 * aa.z());
            return Rotation(q);
        }
        return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, aa / angle)));
    }

    /// Logarithm map: rotation -> axis-angle vector, |result| <= pi.
    Vec3 log() const {
        Eigen::AngleAxisd aa(q_);
        double angle = aa.angle();
        Vec3 axis = aa.axis();
        if (angle > M_PI) {  // wrap into (-pi, pi]
            angle = 2.0 * M_PI - angle;
            axis = -axis;
        }
        return angle * axis;
    }

    Mat3 matrix() const { return q_.toRotationMatrix(); }
    const Eigen::Quaterniond& quat() const { return q_; }

    Rotation inverse() const { return Rotation(q_.conjugate()); }
    Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }
    Vec3 operator*(const Vec3& v) const { return q_ * v; }

    double angle_to(const Rotation& other) const {
        return (inverse() * other).log().norm();
    }

private:
    // Skips the divide when already unit so serialized coefficients survive a
    // parse byte-for-byte.
    void renormalize() {
        if (std::abs(q_.squaredNorm() - 1.0) > 1e-12) q_.normalize();
    }

    Eigen::Quaterniond q_;
};

/// Rigid transform in SE(3): x_world = rotation * x_local + translation.
struct RigidPose {
    Rotation rotation;
    Vec3 translation = Vec3::Zero();

    RigidPose() = default;
    RigidPose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

    static RigidPose identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    RigidPose operator*(const RigidPose& other) const {
        return {rotation * other.rotation, rotation * other.translation + translation};
    }

    RigidPose inverse() const {
        const Rotation rinv = rotation.inverse();
        return {rinv, -(rinv * translation)};
    }

    Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation.matrix();
        m.topRightCorner<3, 1>() = translation;
        return m;
    }
};

/// Pinhole camera intrinsics in pixels.
struct CameraIntrinsics {
    double fx = 500.0;
    double fy = 500.0;
    double cx = 0.0;
    double cy = 0.0;

    Mat3 matrix() const {
        Mat3 k = Mat3::Identity();
        k(0, 0) = fx;
        k(1, 1) = fy;
        k(0, 2) = cx;
        k(1, 2) = cy;
        return k;
    }
};

}  // namespace quadscale
