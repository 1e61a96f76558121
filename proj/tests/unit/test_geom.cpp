#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "spdo/error.hpp"
#include "spdo/geom.hpp"

using namespace spdo;

namespace {

double mat_err(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

SpherePoint random_point(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    return SpherePoint::normalized(Vec3(n(rng), n(rng), n(rng)));
}

}  // namespace

TEST_CASE("euler angles of the poles and the equator") {
    auto n = euler_angles_of_point(SpherePoint(Vec3(0, 0, 1)));
    CHECK(n.alpha == 0.0);
    CHECK(n.beta == 0.0);
    auto s = euler_angles_of_point(SpherePoint(Vec3(0, 0, -1)));
    CHECK(s.alpha == 0.0);
    CHECK(s.beta == doctest::Approx(kPi).epsilon(1e-15));
    auto e = euler_angles_of_point(SpherePoint(Vec3(1, 0, 0)));
    CHECK(e.alpha == 0.0);
    CHECK(e.beta == doctest::Approx(kPi / 2).epsilon(1e-15));
}

TEST_CASE("coset representative maps the north pole to the point") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 1000; ++k) {
        const SpherePoint p = random_point(rng);
        const EulerPoint ab = euler_angles_of_point(p);
        CHECK(ab.alpha >= 0.0);
        CHECK(ab.alpha < kTwoPi);
        CHECK(ab.beta >= 0.0);
        CHECK(ab.beta <= kPi);
        const Vec3 q = rot_z(ab.alpha) * rot_y(ab.beta) * north_pole();
        CHECK((q - p.vec()).norm() < 1e-12);
    }
}

TEST_CASE("rotation checks") {
    CHECK_THROWS_AS(Rotation3(Mat3::Identity() * 2.0), DomainError);
    Mat3 reflect = Mat3::Identity();
    reflect(2, 2) = -1;
    CHECK_THROWS_AS(Rotation3{reflect}, DomainError);
    CHECK_THROWS_AS(SpherePoint(Vec3(0, 0, 1.1)), DomainError);
}

TEST_CASE("decompose identity and z rotations") {
    const RotDecomp id = decompose(Rotation3::identity());
    CHECK((id.point.vec() - north_pole()).norm() == 0.0);
    CHECK((id.inplane - Mat2::Identity()).norm() < 1e-15);
    CHECK(id.gamma == 0.0);

    const RotDecomp z = decompose(Rotation3(rot_z(kPi / 3)));
    CHECK((z.point.vec() - north_pole()).norm() < 1e-15);
    CHECK(z.gamma == doctest::Approx(kPi / 3).epsilon(1e-14));
    CHECK(z.alpha == 0.0);
}

TEST_CASE("decompose reconstructs random rotations") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 1000; ++k) {
        const Rotation3 r = Rotation3::haar(rng);
        const RotDecomp d = decompose(r);
        const Mat3 back = rot_z(d.alpha) * rot_y(d.beta) * rot_z(d.gamma);
        CHECK(mat_err(back, r.matrix()) < 1e-12);
        CHECK(mat_err(d.compose().matrix(), r.matrix()) < 1e-12);
        CHECK((d.point.vec() - r.matrix().col(2)).norm() < 1e-12);
        CHECK(d.gamma >= 0.0);
        CHECK(d.gamma < kTwoPi);
        CHECK((d.inplane - rot2(d.gamma)).norm() < 1e-15);
    }
}

TEST_CASE("decompose at the south pole keeps alpha = 0") {
    const Rotation3 r = Rotation3::from_zyz(0.0, kPi, 0.0) * Rotation3(rot_z(1.2));
    const RotDecomp d = decompose(r);
    CHECK(d.alpha == 0.0);
    CHECK(d.beta == doctest::Approx(kPi));
    CHECK(mat_err(d.compose().matrix(), r.matrix()) < 1e-12);
}

TEST_CASE("compose then decompose away from the poles") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        const double a = kTwoPi * u(rng), b = 0.1 + (kPi - 0.2) * u(rng), g = kTwoPi * u(rng);
        const RotDecomp d = decompose(Rotation3::from_zyz(a, b, g));
        CHECK(d.alpha == doctest::Approx(a).epsilon(1e-11));
        CHECK(d.beta == doctest::Approx(b).epsilon(1e-11));
        CHECK(std::abs(std::remainder(d.gamma - g, kTwoPi)) < 1e-10);
    }
}

TEST_CASE("chart inverse examples") {
    const ChartFrame np = ChartFrame::at(SpherePoint(Vec3(0, 0, 1)));
    CHECK((chart_inverse(np, Vec2(0, 0)).vec() - north_pole()).norm() < 1e-15);
    CHECK((chart_inverse(np, Vec2(0.3, 0)).vec() - Vec3(0.3, 0, std::sqrt(0.91))).norm() < 1e-15);

    const ChartFrame ex = ChartFrame::at(SpherePoint(Vec3(1, 0, 0)));
    // Pbar = Z(0) Y(pi/2) = [[0,0,1],[0,1,0],[-1,0,0]].
    Mat3 pbar;
    pbar << 0, 0, 1, 0, 1, 0, -1, 0, 0;
    CHECK(mat_err(ex.pbar.matrix(), pbar) < 1e-15);
    const Vec3 expect = pbar * Vec3(0, 0.1, std::sqrt(0.99));
    CHECK((chart_inverse(ex, Vec2(0, 0.1)).vec() - expect).norm() < 1e-15);

    CHECK_THROWS_AS(chart_inverse(np, Vec2(1.0, 0.0)), DomainError);
    CHECK_THROWS_AS(chart_inverse(np, Vec2(0.8, 0.7)), DomainError);
}

TEST_CASE("chart forward examples and domain") {
    const ChartFrame np = ChartFrame::at(SpherePoint(Vec3(0, 0, 1)));
    CHECK(chart_forward(np, np.base).norm() == 0.0);
    const Vec2 x = chart_forward(np, SpherePoint(Vec3(0.3, 0, std::sqrt(0.91))));
    CHECK((x - Vec2(0.3, 0)).norm() < 1e-15);
    CHECK_THROWS_AS(chart_forward(np, SpherePoint(Vec3(1, 0, 0))), DomainError);
    CHECK_THROWS_AS(chart_forward(np, SpherePoint(Vec3(0, 0, -1))), DomainError);
}

TEST_CASE("chart round trip on random in-chart points") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const ChartFrame f = ChartFrame::at(random_point(rng));
        Vec2 x(u(rng), u(rng));
        if (x.norm() >= 0.95) x *= 0.95 / x.norm();
        const SpherePoint q = chart_inverse(f, x);
        CHECK((chart_forward(f, q) - x).norm() < 1e-12);
        CHECK((chart_inverse(f, chart_forward(f, q)).vec() - q.vec()).norm() < 1e-12);
    }
}

TEST_CASE("chart frame invariants") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 200; ++k) {
        const ChartFrame f = ChartFrame::at(random_point(rng));
        CHECK((f.pbar * north_pole() - f.base.vec()).norm() < 1e-12);
        const double g = decompose(f.pbar).gamma;
        CHECK(std::min(g, kTwoPi - g) < 1e-12);
    }
}

TEST_CASE("x1 chart direction is the beta tangent") {
    std::mt19937_64 rng(6);
    for (int k = 0; k < 200; ++k) {
        const SpherePoint p = random_point(rng);
        const EulerPoint ab = euler_angles_of_point(p);
        if (ab.beta < 1e-3 || ab.beta > kPi - 1e-3) continue;
        const ChartFrame f = ChartFrame::at(p);
        const double h = 1e-6;
        const Vec3 dx1 = (chart_inverse(f, Vec2(h, 0)).vec() - chart_inverse(f, Vec2(-h, 0)).vec()) / (2 * h);
        // d/dbeta of (sin b cos a, sin b sin a, cos b).
        const Vec3 tb(std::cos(ab.beta) * std::cos(ab.alpha), std::cos(ab.beta) * std::sin(ab.alpha),
                      -std::sin(ab.beta));
        CHECK((dx1 - tb).norm() < 1e-8);
    }
}
