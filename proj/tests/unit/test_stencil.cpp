#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "spdo/error.hpp"
#include "spdo/icomesh.hpp"
#include "spdo/io.hpp"
#include "spdo/oracle.hpp"
#include "spdo/stencil.hpp"

using namespace spdo;

namespace {

// q(x) = c0 + c1 x1 + c2 x2 + c3 x1^2/2 + c4 x1 x2 + c5 x2^2/2 in the chart of P.
double chart_quadratic(const Coeff6& c, const Vec2& x) {
    return c(0) + c(1) * x(0) + c(2) * x(1) + 0.5 * c(3) * x(0) * x(0) + c(4) * x(0) * x(1) +
           0.5 * c(5) * x(1) * x(1);
}

double max_stencil_error_on_quadratics(const IcoMesh& mesh, const StencilSet& set, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double err = 0.0;
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const VertexStencil& st = set.stencils[v];
        const ChartFrame frame = ChartFrame::at(mesh.point(v));
        Coeff6 c;
        for (int k = 0; k < 6; ++k) c(k) = u(rng);
        std::vector<double> vals{chart_quadratic(c, Vec2::Zero())};
        for (int q : st.neighbor_idx) vals.push_back(chart_quadratic(c, chart_forward(frame, mesh.point(q))));
        const Deriv5 d = apply_stencil(st, vals);
        err = std::max(err, (d - c.tail<5>()).cwiseAbs().maxCoeff());
    }
    return err;
}

}  // namespace

TEST_CASE("pinv is a left inverse of the design matrix") {
    const IcoMesh m = build_mesh(3);
    const StencilSet s = build_stencils(m);
    REQUIRE(s.vertex_count() == m.vertex_count());
    for (const auto& st : s.stencils) {
        CHECK((st.size() == 5 || st.size() == 6));
        const Eigen::MatrixXd id = st.pinv * design_matrix(st.chart_xy);
        CHECK((id - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("exact on chart quadratics at levels 0..4") {
    std::mt19937_64 rng(11);
    for (int l = 0; l <= 4; ++l) {
        const IcoMesh m = build_mesh(l);
        const StencilSet s = build_stencils(m);
        CHECK(max_stencil_error_on_quadratics(m, s, rng) < 1e-9);
    }
}

TEST_CASE("linear and constant samples") {
    const IcoMesh m = build_mesh(2);
    const StencilSet s = build_stencils(m);
    for (const auto& st : s.stencils) {
        std::vector<double> lin{0.0}, cst(st.size() + 1, 3.7);
        for (int i = 0; i < st.size(); ++i) lin.push_back(st.chart_xy(i, 0));
        const Deriv5 d = apply_stencil(st, lin);
        CHECK((d - Deriv5(1, 0, 0, 0, 0)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(apply_stencil(st, cst).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("x3 at the north pole") {
    const IcoMesh m = build_mesh(4);
    const StencilSet s = build_stencils(m);
    const double rho = grid_scale(m);
    const auto x3 = sample_on_mesh(SmoothTestFn::poly("x3", Poly3::monomial(0, 0, 1)), m);
    const Deriv5 d = apply_stencil_to_signal(s.stencils[0], x3);
    // sqrt(1 - |x|^2) has zero gradient and Hessian -I at 0.
    CHECK(std::abs(d(0)) < rho * rho);
    CHECK(std::abs(d(1)) < rho * rho);
    CHECK(std::abs(d(2) + 1.0) < rho);
    CHECK(std::abs(d(3)) < rho);
    CHECK(std::abs(d(4) + 1.0) < rho);
}

TEST_CASE("x1 x2 at a generic vertex matches the oracle") {
    const IcoMesh m = build_mesh(4);
    const StencilSet s = build_stencils(m);
    const double rho = grid_scale(m);
    const SmoothTestFn f = SmoothTestFn::poly("x1*x2", Poly3::monomial(1, 1, 0));
    const auto sig = sample_on_mesh(f, m);
    for (int v : {100, 777, 2000}) {
        const Deriv5 d = apply_stencil_to_signal(s.stencils[v], sig);
        const ChartDerivs ex = chart_derivs(f, ChartFrame::at(m.point(v)).pbar);
        CHECK(std::abs(d(2) - ex.hess(0, 0)) < 5 * rho);
        CHECK(std::abs(d(3) - ex.hess(0, 1)) < 5 * rho);
        CHECK(std::abs(d(4) - ex.hess(1, 1)) < 5 * rho);
    }
}

TEST_CASE("linearity and length check") {
    const IcoMesh m = build_mesh(2);
    const StencilSet s = build_stencils(m);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n;
    for (const auto& st : s.stencils) {
        std::vector<double> a(st.size() + 1), b(st.size() + 1), c(st.size() + 1);
        for (std::size_t k = 0; k < a.size(); ++k) {
            a[k] = n(rng);
            b[k] = n(rng);
            c[k] = 2.0 * a[k] - 0.5 * b[k];
        }
        const Deriv5 lhs = apply_stencil(st, c);
        const Deriv5 rhs = 2.0 * apply_stencil(st, a) - 0.5 * apply_stencil(st, b);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK_THROWS_AS(apply_stencil(s.stencils[0], std::vector<double>(3, 0.0)), ShapeError);
}

TEST_CASE("conditioning is bounded below") {
    for (int l = 0; l <= 6; ++l) {
        const StencilSet s = build_stencils(build_mesh(l));
        double worst = 1.0;
        for (const auto& st : s.stencils) worst = std::min(worst, st.sigma_ratio);
        CHECK(worst > 1e-4);
    }
}

TEST_CASE("compact stencil agrees with apply_stencil") {
    const IcoMesh m = build_mesh(3);
    const StencilSet s = build_stencils(m);
    const auto c = CompactStencil<double>::from(s);
    const auto sig = sample_on_mesh(exp_x3(), m);
    for (int v = 0; v < m.vertex_count(); ++v) {
        const Deriv5 d = apply_stencil_to_signal(s.stencils[v], sig);
        for (int k = 0; k < 5; ++k) {
            double e = c.center[5 * v + k] * sig[v];
            for (int j = c.offset[v]; j < c.offset[v + 1]; ++j) e += c.weight[5 * j + k] * sig[c.nbr[j]];
            CHECK(std::abs(e - d(k)) < 1e-9 * (1 + std::abs(d(k))));
        }
    }
}

TEST_CASE("stencil cache round trip") {
    const IcoMesh m = build_mesh(2);
    const StencilSet s = build_stencils(m);
    const auto dir = std::filesystem::temp_directory_path() / "spdo_test_stencil";
    std::filesystem::remove_all(dir);
    const StencilSet a = load_or_build_stencils(m, dir);
    REQUIRE(std::filesystem::exists(dir / "stencils_L2.bin"));
    const StencilSet b = load_stencils(dir / "stencils_L2.bin");
    CHECK(b.mesh_level == 2);
    REQUIRE(b.vertex_count() == s.vertex_count());
    for (int v = 0; v < s.vertex_count(); ++v) {
        CHECK(b.stencils[v].neighbor_idx == s.stencils[v].neighbor_idx);
        CHECK((b.stencils[v].pinv - s.stencils[v].pinv).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.stencils[v].pinv - s.stencils[v].pinv).cwiseAbs().maxCoeff() == 0.0);
    }
    io::write_file_atomic(dir / "bad.bin", std::string_view("SPDOXXXX"));
    CHECK_THROWS_AS(load_stencils(dir / "bad.bin"), FormatError);
    std::filesystem::remove_all(dir);
}
