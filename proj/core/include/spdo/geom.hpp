#pragma once

// ZYZ Euler parameterization of SO(3), the sphere as the quotient
// SO(3)/SO(2), and the per-point charts used by every differential operator
// in the library.
//
// Conventions:
//   Z(a) rotates about the z axis, Y(b) about the y axis.
//   A rotation R is written R = Z(alpha) Y(beta) Z(gamma) with
//   alpha in [0, 2pi), beta in [0, pi], gamma in [0, 2pi).
//   A sphere point P has coset representative Pbar = Z(alpha) Y(beta),
//   so Pbar * n = P with n = (0, 0, 1).
//   The chart at P is  phi_P^{-1}(x) = Pbar * (x1, x2, sqrt(1 - |x|^2)).

#include <random>
#include <utility>

#include <Eigen/Dense>

namespace spdo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Wraps an angle into [0, 2pi).
double wrap_angle(double a);

Mat3 rot_z(double alpha);
Mat3 rot_y(double beta);
Mat2 rot2(double gamma);

const Vec3& north_pole();

/// Proper rotation of R^3. Construction checks orthonormality and det = +1.
class Rotation3 {
public:
    Rotation3() : m_(Mat3::Identity()) {}
    explicit Rotation3(const Mat3& m);

    static Rotation3 identity() { return Rotation3(); }
    static Rotation3 from_zyz(double alpha, double beta, double gamma);
    // Haar-uniform sample: alpha, gamma uniform, beta = arccos(1 - 2u).
    static Rotation3 haar(std::mt19937_64& rng);

    const Mat3& matrix() const { return m_; }
    Rotation3 inverse() const;
    Rotation3 operator*(const Rotation3& o) const;
    Vec3 operator*(const Vec3& v) const { return m_ * v; }

private:
    struct Unchecked {};
    Rotation3(const Mat3& m, Unchecked) : m_(m) {}
    Mat3 m_;
};

/// Unit vector in R^3.
class SpherePoint {
public:
    SpherePoint() : p_(0.0, 0.0, 1.0) {}
    // Throws DomainError unless |p| = 1 within 1e-12.
    explicit SpherePoint(const Vec3& p);
    // Normalizes p (which must be nonzero).
    static SpherePoint normalized(const Vec3& p);

    const Vec3& vec() const { return p_; }
    double x() const { return p_.x(); }
    double y() const { return p_.y(); }
    double z() const { return p_.z(); }

private:
    Vec3 p_;
};

struct EulerPoint {
    double alpha = 0.0;
    double beta = 0.0;
};

// (alpha, beta) with Z(alpha)Y(beta) n = p. North pole maps to (0, 0) and the
// south pole to (0, pi).
EulerPoint euler_angles_of_point(const SpherePoint& p);

// Coset representative Pbar = Z(alpha) Y(beta) of a sphere point.
Rotation3 coset_representative(const SpherePoint& p);

/// Chart frame at a sphere point: the point and its coset representative.
struct ChartFrame {
    SpherePoint base;
    Rotation3 pbar;

    static ChartFrame at(const SpherePoint& p);
};

/// R = (P_R, A_R): base point, in-plane rotation, and the ZYZ angle gamma.
struct RotDecomp {
    SpherePoint point;
    Mat2 inplane = Mat2::Identity();
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;

    Rotation3 compose() const;
};

RotDecomp decompose(const Rotation3& r);

// phi_P^{-1}. Throws DomainError when |x| >= 1.
SpherePoint chart_inverse(const ChartFrame& frame, const Vec2& x);

// phi_P. Throws DomainError when q is not in the open hemisphere around the
// frame's base point.
Vec2 chart_forward(const ChartFrame& frame, const SpherePoint& q);

}  // namespace spdo
