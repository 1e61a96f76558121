#include <doctest.h>

#include <cmath>
#include <random>

#include "spdo/oracle.hpp"

using namespace spdo;

namespace {

// Central differences in R^3.
Vec3 fd_gradient(const SmoothTestFn& f, const Vec3& x, double h) {
    Vec3 g;
    for (int i = 0; i < 3; ++i) {
        Vec3 e = Vec3::Zero();
        e(i) = h;
        g(i) = (f.value(x + e) - f.value(x - e)) / (2 * h);
    }
    return g;
}

Mat3 fd_hessian(const SmoothTestFn& f, const Vec3& x, double h) {
    Mat3 m;
    for (int i = 0; i < 3; ++i) {
        Vec3 e = Vec3::Zero();
        e(i) = h;
        m.col(i) = (f.gradient(x + e) - f.gradient(x - e)) / (2 * h);
    }
    return m;
}

Rotation3 pbar_of(const Rotation3& r) {
    const RotDecomp d = decompose(r);
    return Rotation3::from_zyz(d.alpha, d.beta, 0.0);
}

}  // namespace

TEST_CASE("closed-form gradients and Hessians match finite differences") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n;
    for (const auto& f : function_catalog()) {
        for (int k = 0; k < 20; ++k) {
            const Vec3 x(0.7 * n(rng), 0.7 * n(rng), 0.7 * n(rng));
            const double scale = 1.0 + std::abs(f.value(x)) + f.gradient(x).norm();
            CHECK((fd_gradient(f, x, 1e-5) - f.gradient(x)).norm() < 1e-6 * scale);
            CHECK((fd_hessian(f, x, 1e-5) - f.hessian(x)).norm() < 1e-6 * (scale + f.hessian(x).norm()));
        }
    }
}

TEST_CASE("polynomial substitution") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> n;
    const Rotation3 r = Rotation3::haar(rng);
    for (const auto& f : function_catalog()) {
        const SmoothTestFn g = rotate_fn(f, r);
        for (int k = 0; k < 100; ++k) {
            const Vec3 p = Vec3(n(rng), n(rng), n(rng)).normalized();
            CHECK(std::abs(g.value(p) - f.value(r.inverse() * p)) < 1e-12);
            CHECK((g.gradient(p) - r.matrix() * f.gradient(r.inverse() * p)).norm() < 1e-11);
            const Mat3 h = r.matrix() * f.hessian(r.inverse() * p) * r.matrix().transpose();
            CHECK((g.hessian(p) - h).norm() < 1e-10);
        }
    }
}

TEST_CASE("rotate_fn identity and composition") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> n;
    const Rotation3 a = Rotation3::haar(rng), b = Rotation3::haar(rng);
    for (const auto& f : function_catalog()) {
        const SmoothTestFn same = rotate_fn(f, Rotation3::identity());
        const SmoothTestFn ab = rotate_fn(rotate_fn(f, a), b);
        const SmoothTestFn direct = rotate_fn(f, b * a);
        for (int k = 0; k < 50; ++k) {
            const Vec3 p = Vec3(n(rng), n(rng), n(rng)).normalized();
            CHECK(same.value(p) == doctest::Approx(f.value(p)).epsilon(1e-14));
            CHECK(std::abs(ab.value(p) - direct.value(p)) < 1e-12);
        }
    }
}

TEST_CASE("chart derivative examples") {
    const SmoothTestFn x3 = SmoothTestFn::poly("x3", Poly3::monomial(0, 0, 1));
    const SmoothTestFn x1 = SmoothTestFn::poly("x1", Poly3::monomial(1, 0, 0));
    const SmoothTestFn x1sq = SmoothTestFn::poly("x1^2", Poly3::monomial(2, 0, 0));
    const Rotation3 id;
    CHECK(chart_grad(x3, id).norm() == 0.0);
    CHECK((chart_grad(x1, id) - Vec2(1, 0)).norm() == 0.0);
    CHECK((chart_hess(x3, id) + Mat2::Identity()).norm() == 0.0);
    Mat2 e;
    e << 2, 0, 0, 0;
    CHECK((chart_hess(x1sq, id) - e).norm() == 0.0);
}

TEST_CASE("closed-form chart derivatives match differences through the charts") {
    std::mt19937_64 rng(24);
    for (const auto& f : function_catalog()) {
        auto s = [&](const Vec3& x) { return f.value(x); };
        for (int k = 0; k < 20; ++k) {
            const Rotation3 r = Rotation3::haar(rng);
            const ChartDerivs ex = chart_derivs(f, r);
            const ChartDerivs g = fd_chart_derivs(s, r, 1e-5, 2);
            const ChartDerivs h = fd_chart_derivs(s, r, 1e-3, 4);
            const double scale = 1.0 + ex.grad.norm() + ex.hess.norm();
            CHECK((g.grad - ex.grad).norm() < 1e-7 * scale);
            CHECK((h.hess - ex.hess).norm() < 1e-5 * scale);
        }
    }
}

TEST_CASE("chart derivatives follow the rotation") {
    std::mt19937_64 rng(25);
    for (const auto& f : function_catalog()) {
        for (int k = 0; k < 100; ++k) {
            const Rotation3 rt = Rotation3::haar(rng), r = Rotation3::haar(rng);
            const SmoothTestFn g = rotate_fn(f, rt);
            const Rotation3 back = rt.inverse() * r;
            CHECK((chart_grad(g, r) - chart_grad(f, back)).norm() < 1e-10);
            CHECK((chart_hess(g, r) - chart_hess(f, back)).norm() < 1e-9);
        }
    }
}

TEST_CASE("exact_psi examples and equivalence of the two forms") {
    const SmoothTestFn x3 = SmoothTestFn::poly("x3", Poly3::monomial(0, 0, 1));
    Coeff6 lap;
    lap << 0, 0, 0, 1, 0, 1;
    for (double g : {0.0, 0.4, 2.0, 5.5})
        CHECK(exact_psi(x3, lap, Rotation3(rot_z(g))) == doctest::Approx(-2.0).epsilon(1e-14));

    std::mt19937_64 rng(26);
    std::normal_distribution<double> n;
    for (const auto& f : function_catalog()) {
        for (int k = 0; k < 20; ++k) {
            const Rotation3 r = Rotation3::haar(rng);
            CHECK(exact_psi(f, Coeff6::Unit(0), r) == doctest::Approx(f.value(r.matrix().col(2))).epsilon(1e-14));
            Coeff6 w;
            for (int i = 0; i < 6; ++i) w(i) = n(rng);
            // Coefficient transform on the unrotated chart vs the plain weights
            // on the rotated-frame derivatives.
            const double direct = w.dot(chart_derivs(f, r).as_vector());
            CHECK(std::abs(exact_psi(f, w, r) - direct) < 1e-10 * (1 + std::abs(direct)));
        }
    }
}

TEST_CASE("Psi equivariance on the catalog") {
    std::mt19937_64 rng(27);
    std::normal_distribution<double> n;
    for (const auto& f : function_catalog()) {
        for (int k = 0; k < 100; ++k) {
            const Rotation3 rt = Rotation3::haar(rng), r = Rotation3::haar(rng);
            Coeff6 w;
            for (int i = 0; i < 6; ++i) w(i) = n(rng);
            const double lhs = exact_psi(rotate_fn(f, rt), w, r);
            const double rhs = exact_psi(f, w, rt.inverse() * r);
            CHECK(std::abs(lhs - rhs) < 1e-10 * (1 + std::abs(rhs)));
        }
    }
}

TEST_CASE("Phi families") {
    const SmoothTestFn bump = SmoothTestFn::gaussian("bump", Vec3(0, 0.6, 0.8), 3.0);
    WeightField wf;
    wf.w0 << 0.5, 0.2, -0.1, 0.3, 0.05, -0.2;
    wf.harmonics = {1, 2};
    wf.a = {Coeff6::Constant(0.1), Coeff6::Constant(-0.05)};
    wf.b = {Coeff6::Constant(0.07), Coeff6::Constant(0.02)};

    std::mt19937_64 rng(28);
    SUBCASE("constant family with value-only weights") {
        WeightField v;
        v.w0 = 2.0 * Coeff6::Unit(0);
        const auto fam = OrientationFamily::constant_in_orientation(bump);
        for (int k = 0; k < 20; ++k) {
            const Rotation3 r = Rotation3::haar(rng);
            CHECK(exact_phi(fam, v, r, 512) == doctest::Approx(2.0 * bump.value(r.matrix().col(2))).epsilon(1e-13));
        }
    }
    SUBCASE("band-limited families converge at 512 points") {
        const auto fam = OrientationFamily::cosine(bump, 3, 0.4);
        for (int k = 0; k < 20; ++k) {
            const Rotation3 r = Rotation3::haar(rng);
            CHECK(std::abs(exact_phi(fam, wf, r, 512) - exact_phi(fam, wf, r, 1024)) < 1e-10);
        }
    }
    SUBCASE("rotated-frame evaluation equals coefficient rotation") {
        const auto fam = OrientationFamily::poisson(bump, 0.6, 0.3);
        for (int k = 0; k < 10; ++k) {
            const Rotation3 r = Rotation3::haar(rng);
            const RotDecomp d = decompose(r);
            const Coeff6 dp = chart_derivs(bump, pbar_of(r)).as_vector();
            double ref = 0.0;
            const int nq = 64;
            for (int q = 0; q < nq; ++q) {
                const double th = kTwoPi * q / nq;
                ref += fam.angular[0](d.gamma + th) * rotate_coefficients(wf(th), d.inplane).dot(dp);
            }
            ref /= nq;
            CHECK(std::abs(exact_phi(fam, wf, r, nq) - ref) < 1e-12);
        }
    }
    SUBCASE("Phi equivariance under transport") {
        for (const auto& fam : {OrientationFamily::poisson(bump, 0.8, 0.1),
                                OrientationFamily::cosine(bump, 2, 1.0)}) {
            for (int k = 0; k < 100; ++k) {
                const Rotation3 rt = Rotation3::haar(rng), r = Rotation3::haar(rng);
                const double lhs = exact_phi_transported(fam, wf, rt, r, 512);
                const double rhs = exact_phi(fam, wf, rt.inverse() * r, 512);
                CHECK(std::abs(lhs - rhs) < 1e-9);
            }
        }
    }
}
