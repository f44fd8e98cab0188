#include <doctest.h>

#include "oracles.hpp"
#include "quadscale/quadscale.hpp"
#include "quadscale/sim.hpp"

using namespace quadscale;

namespace {

detail::Rng& rng() {
    static detail::Rng r(12345);
    return r;
}

Ellipsoid random_ellipsoid() {
    Vec3 axes(rng().uniform(0.5, 2.0), rng().uniform(0.5, 2.0), rng().uniform(0.5, 2.0));
    Vec3 center(rng().uniform(-1.0, 1.0), rng().uniform(-1.0, 1.0), rng().uniform(-1.0, 1.0));
    return Ellipsoid(RigidPose(rng().rotation(), center), axes);
}

}  // namespace

TEST_CASE("ellipsoid to dual quadric, canonical cases") {
    const DualQuadric unit = ellipsoid_to_dual_quadric(Ellipsoid());
    Mat4 expected = Mat4::Identity();
    expected(3, 3) = -1.0;
    CHECK((unit.matrix() - expected).norm() == doctest::Approx(0.0).epsilon(1e-12));

    const DualQuadric stretched =
        ellipsoid_to_dual_quadric(Ellipsoid(RigidPose(), Vec3(2.0, 1.0, 1.0)));
    Mat4 expected2 = Mat4::Identity();
    expected2(0, 0) = 4.0;
    expected2(3, 3) = -1.0;
    CHECK((stretched.matrix() - expected2).norm() < 1e-12);
}

TEST_CASE("dual quadric to ellipsoid, canonical cases") {
    Mat4 m = Mat4::Identity();
    m(3, 3) = -1.0;
    const Ellipsoid unit = dual_quadric_to_ellipsoid(DualQuadric(m));
    CHECK(unit.pose.translation.norm() < 1e-12);
    CHECK((unit.semi_axes - Vec3::Ones()).norm() < 1e-12);

    m(0, 0) = 4.0;
    const Ellipsoid e = dual_quadric_to_ellipsoid(DualQuadric(m));
    Vec3 sorted = e.semi_axes;
    std::sort(sorted.data(), sorted.data() + 3);
    CHECK(sorted.isApprox(Vec3(1.0, 1.0, 2.0), 1e-12));
}

TEST_CASE("degenerate dual quadrics are rejected") {
    Mat4 rank3 = Mat4::Identity();
    rank3(3, 3) = 0.0;
    CHECK_THROWS_AS(dual_quadric_to_ellipsoid(DualQuadric(rank3)), NonEllipsoid);

    Mat4 wrong_sig = Mat4::Identity();
    wrong_sig(2, 2) = 0.0;
    wrong_sig(3, 3) = -1.0;
    CHECK_THROWS_AS(dual_quadric_to_ellipsoid(DualQuadric(wrong_sig)), NonEllipsoid);
}

TEST_CASE("round trip reproduces center and sorted axes") {
    for (int i = 0; i < 200; ++i) {
        const Ellipsoid e = random_ellipsoid();
        const Ellipsoid back = dual_quadric_to_ellipsoid(ellipsoid_to_dual_quadric(e));
        CHECK((back.pose.translation - e.pose.translation).norm() < 1e-8);
        CHECK((back.dims() - e.dims()).norm() < 1e-8);
    }
}

TEST_CASE("project_quadric identity camera") {
    const CameraIntrinsics k{1.0, 1.0, 0.0, 0.0};
    const DualQuadric q = ellipsoid_to_dual_quadric(Ellipsoid());
    const DualConic c = project_quadric(q, k, RigidPose());
    CHECK((c.matrix() - Mat3::Identity()).norm() < 1e-12);

    // Sphere at depth 5: direct H Q* H^T with H = [I|0].
    const DualQuadric q5 = ellipsoid_to_dual_quadric(
        Ellipsoid(RigidPose(Rotation(), Vec3(0.0, 0.0, 5.0)), Vec3::Ones()));
    const DualConic c5 = project_quadric(q5, k, RigidPose());
    const Mat3 by_hand = q5.matrix().topLeftCorner<3, 3>();
    CHECK((c5.matrix() - by_hand).norm() < 1e-12);
}

TEST_CASE("projection is invariant under a common rigid transform") {
    const CameraIntrinsics k{400.0, 380.0, 10.0, -5.0};
    for (int i = 0; i < 20; ++i) {
        const Ellipsoid e = random_ellipsoid();
        const RigidPose cam(rng().rotation(), Vec3(0.0, 0.0, -8.0));
        const RigidPose shift(rng().rotation(),
                              Vec3(rng().uniform(-3.0, 3.0), rng().uniform(-3.0, 3.0),
                                   rng().uniform(-3.0, 3.0)));
        const DualConic c1 = project_quadric(ellipsoid_to_dual_quadric(e), k, cam);
        const Ellipsoid moved(shift * e.pose, e.semi_axes);
        const DualConic c2 =
            project_quadric(ellipsoid_to_dual_quadric(moved), k, shift * cam);
        CHECK((c1.matrix() - c2.matrix()).norm() <
              1e-7 * std::max(1.0, c1.matrix().norm()));
    }
}

TEST_CASE("conic_bbox of a centered sphere") {
    const CameraIntrinsics k{100.0, 100.0, 0.0, 0.0};
    const Ellipsoid sphere(RigidPose(Rotation(), Vec3(0.0, 0.0, 5.0)), Vec3::Ones());
    const BBox2D box =
        conic_bbox(project_quadric(ellipsoid_to_dual_quadric(sphere), k, RigidPose()));
    const double expected = 100.0 / std::sqrt(24.0);
    CHECK(box.u_max == doctest::Approx(expected).epsilon(1e-9));
    CHECK(box.u_min == doctest::Approx(-expected).epsilon(1e-9));
    CHECK(box.v_max == doctest::Approx(expected).epsilon(1e-9));
    // Symmetric about the principal point for an on-axis sphere.
    CHECK(box.u_max + box.u_min == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("conic_bbox rejects unbounded outlines") {
    const CameraIntrinsics k{100.0, 100.0, 0.0, 0.0};
    // Sphere straddling the principal plane.
    const Ellipsoid straddling(RigidPose(Rotation(), Vec3(0.0, 0.0, -0.5)), Vec3::Ones());
    CHECK_THROWS_AS(
        conic_bbox(project_quadric(ellipsoid_to_dual_quadric(straddling), k, RigidPose())),
        UnboundedConic);
    // Camera inside the object.
    CHECK_THROWS_AS(
        conic_bbox(project_quadric(ellipsoid_to_dual_quadric(Ellipsoid()), k, RigidPose())),
        UnboundedConic);
}

TEST_CASE("conic_bbox matches the silhouette sampling oracle") {
    const CameraIntrinsics k{500.0, 500.0, 320.0, 240.0};
    int done = 0;
    while (done < 25) {
        const Ellipsoid e = random_ellipsoid();
        const Vec3 eye(rng().uniform(-2.0, 2.0), rng().uniform(-2.0, 2.0),
                       -rng().uniform(8.0, 14.0));
        const RigidPose cam(Rotation(), eye);
        BBox2D predicted;
        try {
            predicted = conic_bbox(project_quadric(ellipsoid_to_dual_quadric(e), k, cam));
        } catch (const UnboundedConic&) {
            continue;
        }
        const BBox2D sampled = oracles::silhouette_bbox(e, k, cam);
        CHECK(std::abs(predicted.u_max - sampled.u_max) < 0.05);
        CHECK(std::abs(predicted.u_min - sampled.u_min) < 0.05);
        CHECK(std::abs(predicted.v_max - sampled.v_max) < 0.05);
        CHECK(std::abs(predicted.v_min - sampled.v_min) < 0.05);
        ++done;
    }
}

TEST_CASE("point_quadric_error canonical values") {
    const DualQuadric sphere = ellipsoid_to_dual_quadric(Ellipsoid());
    CHECK(point_quadric_error(sphere, Vec3(1.0, 0.0, 0.0)) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(point_quadric_error(sphere, Vec3(0.5, 0.0, 0.0)) == 0.0);
    // p = (2,0,0): p^T Q p = 3, sqrt(4)-1 = 1, which is also |op*|/|p*p|.
    CHECK(point_quadric_error(sphere, Vec3(2.0, 0.0, 0.0)) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("point_quadric_error is zero on the surface, increasing beyond") {
    for (int i = 0; i < 50; ++i) {
        const Ellipsoid e = random_ellipsoid();
        const DualQuadric q = ellipsoid_to_dual_quadric(e);
        const Vec3 dir = rng().unit_vector();
        const Vec3 surface = e.pose.apply(e.semi_axes.cwiseProduct(dir));
        CHECK(std::abs(point_quadric_error(q, surface)) < 1e-9);
        double prev = 0.0;
        for (double t : {1.2, 1.5, 2.0, 3.0}) {
            const double err =
                point_quadric_error(q, e.pose.apply(t * e.semi_axes.cwiseProduct(dir)));
            CHECK(err > prev);
            prev = err;
        }
    }
}

TEST_CASE("project_point") {
    const CameraIntrinsics k{100.0, 100.0, 0.0, 0.0};
    CHECK(project_point(k, RigidPose(), Vec3(0.0, 0.0, 5.0)).norm() < 1e-12);
    const Vec2 uv = project_point(k, RigidPose(), Vec3(1.0, 0.0, 5.0));
    CHECK(uv.x() == doctest::Approx(20.0));
    CHECK(uv.y() == doctest::Approx(0.0));
    CHECK_THROWS_AS(project_point(k, RigidPose(), Vec3(0.0, 0.0, -1.0)), BehindCamera);
}

TEST_CASE("fit_obb recovers an axis-aligned box") {
    std::vector<Vec3> corners;
    for (double x : {-2.0, 2.0})
        for (double y : {-1.0, 1.0})
            for (double z : {-0.5, 0.5}) corners.emplace_back(x, y, z);
    const OrientedBox box = fit_obb(corners);
    Vec3 ext = box.half_extents;
    std::sort(ext.data(), ext.data() + 3, std::greater<double>());
    CHECK(ext.isApprox(Vec3(2.0, 1.0, 0.5), 1e-9));
    CHECK(box.pose.translation.norm() < 1e-12);
    // Distinct covariance eigenvalues: axes unique up to sign.
    const Mat3 r = box.pose.rotation.matrix();
    CHECK(r.cwiseAbs().isApprox(Mat3::Identity(), 1e-9));
    CHECK(r.determinant() == doctest::Approx(1.0));
}

TEST_CASE("fit_obb recovers a known rotation up to sign and permutation") {
    std::vector<Vec3> corners;
    for (double x : {-2.0, 2.0})
        for (double y : {-1.0, 1.0})
            for (double z : {-0.5, 0.5}) corners.emplace_back(x, y, z);
    const Rotation known = rng().rotation();
    std::vector<Vec3> rotated;
    for (const auto& p : corners) rotated.push_back(known * p);
    const OrientedBox box = fit_obb(rotated);
    // Each fitted axis must match one column of the known rotation up to sign.
    const Mat3 dot = (known.matrix().transpose() * box.pose.rotation.matrix()).cwiseAbs();
    for (int c = 0; c < 3; ++c) {
        CHECK(dot.col(c).maxCoeff() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("fit_obb degenerate and error cases") {
    CHECK_THROWS_AS(fit_obb({}), EmptyInput);
    const OrientedBox single = fit_obb({Vec3(1.0, 2.0, 3.0)});
    CHECK(single.half_extents.norm() == 0.0);
    CHECK(single.pose.translation.isApprox(Vec3(1.0, 2.0, 3.0)));
}

TEST_CASE("fit_obb contains every input point; extents are tight") {
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Vec3> pts;
        const int n = 4 + rng().uniform_int(40);
        for (int i = 0; i < n; ++i) {
            pts.emplace_back(rng().normal(0.0, 2.0), rng().normal(0.0, 1.0),
                             rng().normal(0.0, 0.5));
        }
        const OrientedBox box = fit_obb(pts);
        const RigidPose inv = box.pose.inverse();
        Vec3 max_abs = Vec3::Zero();
        for (const auto& p : pts) {
            const Vec3 local = inv.apply(p);
            CHECK((local.cwiseAbs().array() <= box.half_extents.array() + 1e-9).all());
            max_abs = max_abs.cwiseMax(local.cwiseAbs());
        }
        // Axis-aligned extent in the fitted frame equals the box extent.
        CHECK((max_abs - box.half_extents).norm() < 1e-9);
    }
}

TEST_CASE("fit_obb scaling equivariance") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 25; ++i) {
        pts.emplace_back(rng().normal(1.0, 2.0), rng().normal(-1.0, 1.0),
                         rng().normal(0.5, 0.5));
    }
    const double s = 3.7;
    std::vector<Vec3> scaled;
    for (const auto& p : pts) scaled.push_back(s * p);
    const OrientedBox a = fit_obb(pts);
    const OrientedBox b = fit_obb(scaled);
    CHECK((b.half_extents - s * a.half_extents).norm() < 1e-9);
    CHECK((b.pose.translation - s * a.pose.translation).norm() < 1e-9);
}
