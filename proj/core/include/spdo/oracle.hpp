#pragma once

// Continuous reference: smooth test functions on R^3 with closed-form
// gradients and Hessians, their exact chart derivatives at any rotation, and
// the exact lifting / hidden operators built on them.
//
// Chart derivatives at R = Pbar_R Z(gamma_R) are the derivatives at x = 0 of
//     f_R(x) = s(Pbar_R (A_R x, sqrt(1 - |x|^2))),   A_R = rot2(gamma_R),
// which have the closed forms
//     grad_i   = (R^T grad s)_i
//     hess_ij  = -delta_ij (R^T grad s)_3 + (R^T Hess s R)_ij       i, j in {1, 2}
// evaluated at the base point P_R = R n.

#include <functional>
#include <string>
#include <vector>

#include "spdo/geom.hpp"
#include "spdo/icomesh.hpp"
#include "spdo/ops.hpp"

namespace spdo {

/// Polynomial of total degree <= 4 in (x1, x2, x3).
class Poly3 {
public:
    static constexpr int kMaxDegree = 4;

    double& coef(int a, int b, int c) { return c_[idx(a, b, c)]; }
    double coef(int a, int b, int c) const { return c_[idx(a, b, c)]; }

    double value(const Vec3& x) const;
    Vec3 gradient(const Vec3& x) const;
    Mat3 hessian(const Vec3& x) const;

    // q(x) = p(M x). Exact: the total degree is preserved.
    Poly3 substitute(const Mat3& m) const;

    Poly3 operator*(const Poly3& o) const;
    Poly3 operator+(const Poly3& o) const;
    Poly3 operator*(double s) const;

    static Poly3 constant(double v);
    static Poly3 monomial(int a, int b, int c, double coef = 1.0);
    static Poly3 linear(const Vec3& a);

private:
    static constexpr int kDim = kMaxDegree + 1;
    static int idx(int a, int b, int c) { return (a * kDim + b) * kDim + c; }
    std::array<double, kDim * kDim * kDim> c_{};
};

/// One term of a SmoothTestFn.
struct SmoothTerm {
    enum class Kind { Poly, Exp, Gaussian };
    Kind kind = Kind::Poly;
    double weight = 1.0;
    Poly3 poly;            // Poly
    Vec3 a = Vec3::Zero(); // Exp: exp(a . x)
    Vec3 c = Vec3::Zero(); // Gaussian center
    double kappa = 0.0;    // Gaussian: exp(-kappa |x - c|^2)
};

/// s(x) = sum of weighted polynomial, exponential and Gaussian terms.
struct SmoothTestFn {
    std::string name;
    std::vector<SmoothTerm> terms;

    double value(const Vec3& x) const;
    Vec3 gradient(const Vec3& x) const;
    Mat3 hessian(const Vec3& x) const;

    static SmoothTestFn poly(std::string name, const Poly3& p);
    static SmoothTestFn exp(std::string name, const Vec3& a, double weight = 1.0);
    static SmoothTestFn gaussian(std::string name, const Vec3& center, double kappa,
                                 double weight = 1.0);
    SmoothTestFn operator+(const SmoothTestFn& o) const;
};

// x -> s(R~^{-1} x).
SmoothTestFn rotate_fn(const SmoothTestFn& f, const Rotation3& rt);

// Fixed catalog: low-degree monomials, a dense random quartic, exp(x3),
// exp(a . x), a Gaussian bump and a two-bump mixture.
std::vector<SmoothTestFn> function_catalog();

// exp(x3), the consistency-order test function.
SmoothTestFn exp_x3();

// f sampled on every mesh vertex.
std::vector<double> sample_on_mesh(const SmoothTestFn& f, const IcoMesh& mesh);

/// Value, chart gradient and chart Hessian at a rotation.
struct ChartDerivs {
    double value = 0.0;
    Vec2 grad = Vec2::Zero();
    Mat2 hess = Mat2::Zero();

    // (f, d1, d2, d11, d12, d22), the vector the 6-vector w acts on.
    Coeff6 as_vector() const;
};

Vec2 chart_grad(const SmoothTestFn& f, const Rotation3& r);
Mat2 chart_hess(const SmoothTestFn& f, const Rotation3& r);
ChartDerivs chart_derivs(const SmoothTestFn& f, const Rotation3& r);

// Central differences of f_R (defined above) at x = 0 with step h.
// order 2 or 4.
ChartDerivs fd_chart_derivs(const std::function<double(const Vec3&)>& s, const Rotation3& r,
                            double h, int order = 2);

// Psi[s](P_R, A_R) = rotate(w, A_R) . (s, D s)(Pbar_R).
double exact_psi(const SmoothTestFn& f, const Coeff6& w, const Rotation3& r);

// ---- orientation-indexed families ----------------------------------------

/// g(theta) for the orientation dependence of a family.
struct AngularFactor {
    enum class Kind { Constant, Cos, Poisson };
    Kind kind = Kind::Constant;
    int k = 0;            // Cos: cos(k theta + phase)
    double phase = 0.0;
    double r = 0.0;       // Poisson: (1 - r^2) / (1 - 2 r cos(theta - phase) + r^2)
    double scale = 1.0;

    double operator()(double theta) const;

    static AngularFactor constant(double scale = 1.0);
    static AngularFactor cosine(int k, double phase, double scale = 1.0);
    // Not band-limited: Fourier coefficients r^|m|.
    static AngularFactor poisson(double r, double phase, double scale = 1.0);
};

/// so(P, A) = sum_t g_t(theta_A) s_t(P), theta_A the angle of A.
struct OrientationFamily {
    std::vector<AngularFactor> angular;
    std::vector<SmoothTestFn> spatial;

    double value(const Vec3& p, double theta) const;
    bool band_limited_below(int n) const;  // all factors exact for an N-point rule

    static OrientationFamily constant_in_orientation(const SmoothTestFn& f);
    static OrientationFamily cosine(const SmoothTestFn& f, int k, double phase);
    static OrientationFamily poisson(const SmoothTestFn& f, double r, double phase);
};

// Same angular factors, spatial parts rotated by rt.
OrientationFamily rotate_spatial(const OrientationFamily& fam, const Rotation3& rt);

/// Hidden-layer weights as a smooth function of the offset angle:
/// w(theta) = w0 + sum_m (a_m cos(m theta) + b_m sin(m theta)).
struct WeightField {
    Coeff6 w0 = Coeff6::Zero();
    std::vector<int> harmonics;
    std::vector<Coeff6> a;
    std::vector<Coeff6> b;

    Coeff6 operator()(double theta) const;
    std::vector<Coeff6> table(int n) const;  // w(2 pi q / n), q = 0..n-1

    // Discrete offsets j = 0..n-1 at theta_j = 2 pi j / n, one weight per
    // (out, in) = (0, 0).
    OperatorWeights<double> discretize(int n) const;
};

// Phi[so](R) = int g(gamma_R + theta) rotate(w(theta), A_R) . (s, D s)(Pbar_R) dnu,
// nu(SO(2)) = 1, by the n_q-point rectangle rule at theta_q = 2 pi q / n_q.
// twist is added to every orientation argument (used for transported families).
double exact_phi(const OrientationFamily& fam, const WeightField& w, const Rotation3& r, int n_q,
                 double twist = 0.0);

// Precomputed (s_t, D s_t) at a rotation so that many quadrature sizes can be
// evaluated cheaply.
class PhiEvaluator {
public:
    PhiEvaluator(const OrientationFamily& fam, const Rotation3& r);
    double operator()(const WeightField& w, int n_q, double twist = 0.0) const;
    // Same with w(theta_q) precomputed for theta_q = 2 pi q / table.size().
    double operator()(const std::vector<Coeff6>& w_table, double twist = 0.0) const;

private:
    std::vector<AngularFactor> angular_;
    std::vector<Coeff6> derivs_;  // in the rotated frame of r
    double gamma_ = 0.0;
};

// Transport of a family under rt with the orientation argument at the base
// point P_R carried along the chart neighborhood (a frozen gauge): returns
// Phi[pi_rt so](R) evaluated as exact_phi of the rotated spatial parts with
// twist gamma(rt^{-1} R) - gamma(R).
double exact_phi_transported(const OrientationFamily& fam, const WeightField& w,
                             const Rotation3& rt, const Rotation3& r, int n_q);

// Default reference quadrature size.
inline constexpr int kReferenceQuadrature = 1024;

}  // namespace spdo
