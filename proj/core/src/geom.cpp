#include "spdo/geom.hpp"

#include <cmath>
#include <sstream>

#include "spdo/error.hpp"

namespace spdo {

namespace {

constexpr double kUnitTol = 1e-12;
// Points closer than this (in the xy-plane) to the z axis use the pole rule.
constexpr double kPoleTol = 1e-14;

}  // namespace

double wrap_angle(double a) {
    double r = std::fmod(a, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

Mat3 rot_z(double alpha) {
    const double c = std::cos(alpha), s = std::sin(alpha);
    Mat3 m;
    m << c, -s, 0.0,
         s, c, 0.0,
         0.0, 0.0, 1.0;
    return m;
}

Mat3 rot_y(double beta) {
    const double c = std::cos(beta), s = std::sin(beta);
    Mat3 m;
    m << c, 0.0, s,
         0.0, 1.0, 0.0,
         -s, 0.0, c;
    return m;
}

Mat2 rot2(double gamma) {
    const double c = std::cos(gamma), s = std::sin(gamma);
    Mat2 m;
    m << c, -s,
         s, c;
    return m;
}

const Vec3& north_pole() {
    static const Vec3 n(0.0, 0.0, 1.0);
    return n;
}

Rotation3::Rotation3(const Mat3& m) : m_(m) {
    const double orth = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    const double det = m.determinant();
    if (!(orth <= kUnitTol * 10) || !(std::abs(det - 1.0) <= kUnitTol * 10)) {
        std::ostringstream os;
        os << "Rotation3: matrix is not a proper rotation (|R^T R - I| = " << orth
           << ", det = " << det << ")";
        throw DomainError(os.str());
    }
}

Rotation3 Rotation3::from_zyz(double alpha, double beta, double gamma) {
    return Rotation3(rot_z(alpha) * rot_y(beta) * rot_z(gamma), Unchecked{});
}

Rotation3 Rotation3::haar(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double alpha = kTwoPi * u(rng);
    const double beta = std::acos(1.0 - 2.0 * u(rng));
    const double gamma = kTwoPi * u(rng);
    return from_zyz(alpha, beta, gamma);
}

Rotation3 Rotation3::inverse() const { return Rotation3(m_.transpose(), Unchecked{}); }

Rotation3 Rotation3::operator*(const Rotation3& o) const {
    return Rotation3(m_ * o.m_, Unchecked{});
}

SpherePoint::SpherePoint(const Vec3& p) : p_(p) {
    if (!(std::abs(p.norm() - 1.0) <= kUnitTol)) {
        std::ostringstream os;
        os << "SpherePoint: |p| = " << p.norm() << " is not 1";
        throw DomainError(os.str());
    }
}

SpherePoint SpherePoint::normalized(const Vec3& p) {
    const double n = p.norm();
    if (!(n > 0.0)) throw DomainError("SpherePoint::normalized: zero vector");
    return SpherePoint(p / n);
}

EulerPoint euler_angles_of_point(const SpherePoint& p) {
    const double rxy = std::hypot(p.x(), p.y());
    if (rxy < kPoleTol) {
        return p.z() > 0.0 ? EulerPoint{0.0, 0.0} : EulerPoint{0.0, kPi};
    }
    // atan2 forms agree with the arccos expressions but stay accurate near
    // x2 = 0 and near the poles.
    return EulerPoint{wrap_angle(std::atan2(p.y(), p.x())), std::atan2(rxy, p.z())};
}

Rotation3 coset_representative(const SpherePoint& p) {
    const EulerPoint e = euler_angles_of_point(p);
    return Rotation3::from_zyz(e.alpha, e.beta, 0.0);
}

ChartFrame ChartFrame::at(const SpherePoint& p) {
    return ChartFrame{p, coset_representative(p)};
}

Rotation3 RotDecomp::compose() const { return Rotation3::from_zyz(alpha, beta, gamma); }

RotDecomp decompose(const Rotation3& r) {
    RotDecomp d;
    d.point = SpherePoint::normalized(r.matrix().col(2));
    const EulerPoint e = euler_angles_of_point(d.point);
    d.alpha = e.alpha;
    d.beta = e.beta;
    // Residual in-plane part Z(gamma) = Pbar^T R. At the poles this absorbs the
    // whole (alpha + gamma) ambiguity.
    const Mat3 zg = Rotation3::from_zyz(e.alpha, e.beta, 0.0).matrix().transpose() * r.matrix();
    d.gamma = wrap_angle(std::atan2(zg(1, 0), zg(0, 0)));
    d.inplane = rot2(d.gamma);
    return d;
}

SpherePoint chart_inverse(const ChartFrame& frame, const Vec2& x) {
    const double r2 = x.squaredNorm();
    if (!(r2 < 1.0)) {
        std::ostringstream os;
        os << "chart_inverse: |x| = " << std::sqrt(r2) << " must be < 1";
        throw DomainError(os.str());
    }
    const Vec3 y(x.x(), x.y(), std::sqrt(1.0 - r2));
    return SpherePoint::normalized(frame.pbar.matrix() * y);
}

Vec2 chart_forward(const ChartFrame& frame, const SpherePoint& q) {
    const Vec3 y = frame.pbar.matrix().transpose() * q.vec();
    if (!(y.z() > 0.0)) {
        std::ostringstream os;
        os << "chart_forward: point (" << q.x() << ", " << q.y() << ", " << q.z()
           << ") is outside the chart hemisphere";
        throw DomainError(os.str());
    }
    return Vec2(y.x(), y.y());
}

}  // namespace spdo
