#include "spdo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "spdo/io.hpp"
#include "spdo/ops.hpp"
#include "spdo/version.hpp"

namespace spdo {

// ---- reports -----------------------------------------------------------------

void ConvergenceReport::finalize() {
    for (std::size_t k = 0; k < rows.size(); ++k)
        rows[k].ratio = (k == 0 || rows[k].max_err == 0.0) ? 0.0 : rows[k - 1].max_err / rows[k].max_err;
}

double ConvergenceReport::log2_slope() const {
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
        if (r.max_err <= 0.0) continue;
        xs.push_back(axis == "n" ? std::log2(r.x) : r.x);
        ys.push_back(std::log2(r.max_err));
    }
    if (xs.size() < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxy += (xs[k] - mx) * (ys[k] - my);
        sxx += (xs[k] - mx) * (xs[k] - mx);
    }
    return sxy / sxx;
}

bool ConvergenceReport::strictly_decreasing() const {
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (!(rows[k].max_err < rows[k - 1].max_err)) return false;
    return true;
}

double ConvergenceReport::min_ratio() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < rows.size(); ++k) m = std::min(m, rows[k].ratio);
    return m;
}

double ConvergenceReport::max_ratio() const {
    double m = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) m = std::max(m, rows[k].ratio);
    return m;
}

std::string report_csv(const ConvergenceReport& r, std::uint64_t seed) {
    std::ostringstream os;
    os << "# tool_version=" << kToolVersion << "\n";
    os << "# format_version=" << kReportFormatVersion << "\n";
    os << "# seed=" << seed << "\n";
    os << "# quantity=" << r.quantity << "\n";
    os << "# axis=" << r.axis << "\n";
    os << "level_or_n,max_err,mean_err,ratio,rho,rho_max\n";
    for (const auto& row : r.rows) {
        os << io::format_double(row.x) << ',' << io::format_double(row.max_err) << ','
           << io::format_double(row.mean_err) << ',' << io::format_double(row.ratio) << ','
           << io::format_double(row.rho) << ',' << io::format_double(row.rho_max) << '\n';
    }
    return os.str();
}

void print_report_table(std::ostream& os, const ConvergenceReport& r) {
    os << r.quantity << '\n';
    os << std::setw(8) << r.axis << std::setw(14) << "max_err" << std::setw(14) << "mean_err"
       << std::setw(9) << "ratio";
    if (r.axis == "level") os << std::setw(12) << "rho" << std::setw(12) << "rho_max";
    os << '\n';
    const auto flags = os.flags();
    for (const auto& row : r.rows) {
        os << std::setw(8) << row.x << std::scientific << std::setprecision(4) << std::setw(14)
           << row.max_err << std::setw(14) << row.mean_err << std::fixed << std::setprecision(3)
           << std::setw(9) << row.ratio;
        if (r.axis == "level")
            os << std::scientific << std::setprecision(4) << std::setw(12) << row.rho << std::setw(12)
               << row.rho_max;
        os << '\n';
        os.flags(flags);
    }
    os << "log2 slope: " << std::fixed << std::setprecision(3) << r.log2_slope() << '\n';
    os.flags(flags);
}

LevelData make_level(int level) {
    LevelData d;
    d.mesh = build_mesh(level);
    d.stencils = build_stencils(d.mesh);
    d.compact = CompactStencil<double>::from(d.stencils);
    d.rho = grid_scale_stats(d.mesh);
    return d;
}

namespace {

Rotation3 pbar_at(const IcoMesh& mesh, int v) { return coset_representative(mesh.point(v)); }

ReportRow level_row(const LevelData& d) {
    ReportRow r;
    r.x = d.mesh.level;
    r.rho = d.rho.mean;
    r.rho_max = d.rho.max;
    return r;
}

SmoothTestFn random_bump(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(2.0, 4.0);
    const Vec3 c = Vec3(n(rng), n(rng), n(rng)).normalized();
    return SmoothTestFn::gaussian("bump", c, u(rng));
}

Coeff6 random_weights(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Coeff6 w;
    for (int k = 0; k < 6; ++k) w(k) = n(rng);
    return w;
}

}  // namespace

ConsistencyResult stencil_consistency(const std::vector<int>& levels, const SmoothTestFn& f) {
    ConsistencyResult res;
    res.first.quantity = "stencil first-derivative error, " + f.name;
    res.second.quantity = "stencil second-derivative error, " + f.name;
    res.first.axis = res.second.axis = "level";
    for (int l : levels) {
        const LevelData d = make_level(l);
        const auto sig = sample_on_mesh(f, d.mesh);
        ReportRow r1 = level_row(d), r2 = level_row(d);
        const int nv = d.mesh.vertex_count();
        for (int v = 0; v < nv; ++v) {
            const Deriv5 est = apply_stencil_to_signal(d.stencils.stencils[v], sig);
            const Coeff6 ex = chart_derivs(f, pbar_at(d.mesh, v)).as_vector();
            const double e1 = std::max(std::abs(est(0) - ex(1)), std::abs(est(1) - ex(2)));
            const double e2 = std::max({std::abs(est(2) - ex(3)), std::abs(est(3) - ex(4)),
                                        std::abs(est(4) - ex(5))});
            r1.max_err = std::max(r1.max_err, e1);
            r2.max_err = std::max(r2.max_err, e2);
            r1.mean_err += e1 / nv;
            r2.mean_err += e2 / nv;
        }
        res.first.rows.push_back(r1);
        res.second.rows.push_back(r2);
    }
    res.first.finalize();
    res.second.finalize();
    return res;
}

double stencil_quadratic_exactness(const LevelData& d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double err = 0.0;
    for (int v = 0; v < d.mesh.vertex_count(); ++v) {
        const VertexStencil& st = d.stencils.stencils[v];
        const ChartFrame frame = ChartFrame::at(d.mesh.point(v));
        double c[6];
        for (double& x : c) x = u(rng);
        auto q = [&](const Vec2& x) {
            return c[0] + c[1] * x(0) + c[2] * x(1) + 0.5 * c[3] * x(0) * x(0) + c[4] * x(0) * x(1) +
                   0.5 * c[5] * x(1) * x(1);
        };
        std::vector<double> vals{q(Vec2::Zero())};
        for (int nb : st.neighbor_idx) vals.push_back(q(chart_forward(frame, d.mesh.point(nb))));
        const Deriv5 est = apply_stencil(st, vals);
        for (int k = 0; k < 5; ++k) err = std::max(err, std::abs(est(k) - c[k + 1]));
    }
    return err;
}

ConvergenceReport psi_equivariance_error(const std::vector<int>& levels, const PsiDefectOptions& opt) {
    ConvergenceReport rep;
    rep.quantity = "input-layer equivariance defect, N=" + std::to_string(opt.n);
    rep.axis = "level";
    const CyclicGroup g(opt.n);
    // Same draws at every level so that only the mesh changes.
    std::mt19937_64 rng(opt.seed);
    struct Draw {
        Rotation3 rt;
        SmoothTestFn s;
        Coeff6 w;
    };
    std::vector<Draw> draws;
    for (int t = 0; t < opt.trials; ++t) {
        Draw d{Rotation3::haar(rng), random_bump(rng), random_weights(rng)};
        if (opt.identity) d.rt = Rotation3::identity();
        if (opt.value_only) d.w = Coeff6::Unit(0);
        draws.push_back(d);
    }
    for (int l : levels) {
        const LevelData d = make_level(l);
        const int nv = d.mesh.vertex_count();
        ReportRow row = level_row(d);
        double sum = 0.0;
        for (const Draw& dr : draws) {
            const SmoothTestFn moved = rotate_fn(dr.s, dr.rt);
            FeatureMap<double> in(1, l, nv, 1, 1);
            in.values = sample_on_mesh(moved, d.mesh);
            OperatorWeights<double> w(1, 1, 0);
            w.set(0, 0, 0, dr.w);
            const FeatureMap<double> out = psi_layer(in, w, g, d.compact);
            std::vector<Coeff6> rotated(opt.n);
            for (int i = 0; i < opt.n; ++i) rotated[i] = rotate_coefficients(dr.w, g.element(i));
            double trial_max = 0.0, trial_sum = 0.0;
            for (int v = 0; v < nv; ++v) {
                const Coeff6 ex = chart_derivs(moved, pbar_at(d.mesh, v)).as_vector();
                for (int i = 0; i < opt.n; ++i) {
                    const double e = std::abs(out.at(0, v, i, 0) - rotated[i].dot(ex));
                    trial_max = std::max(trial_max, e);
                    trial_sum += e;
                }
            }
            row.max_err = std::max(row.max_err, trial_max);
            sum += trial_sum / (static_cast<double>(nv) * opt.n);
        }
        row.mean_err = sum / draws.size();
        rep.rows.push_back(row);
    }
    rep.finalize();
    return rep;
}

ConvergenceReport phi_quadrature_error(const PhiQuadratureOptions& opt) {
    ConvergenceReport rep;
    const char* fname = opt.family == PhiQuadratureOptions::Family::Constant ? "constant"
                        : opt.family == PhiQuadratureOptions::Family::Cosine ? "cosine"
                                                                            : "poisson";
    rep.quantity = std::string("hidden-layer quadrature error, ") + fname + " family, level " +
                   std::to_string(opt.level);
    rep.axis = "n";
    const IcoMesh mesh = build_mesh(opt.level);
    const int nv = mesh.vertex_count();
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(0.0, kTwoPi);

    struct Draw {
        OrientationFamily fam;
        std::vector<Coeff6> ref_table;
        WeightField wf;
    };
    std::vector<Draw> draws;
    for (int t = 0; t < opt.trials; ++t) {
        const SmoothTestFn s = random_bump(rng);
        Draw d;
        switch (opt.family) {
            case PhiQuadratureOptions::Family::Constant: d.fam = OrientationFamily::constant_in_orientation(s); break;
            case PhiQuadratureOptions::Family::Cosine: d.fam = OrientationFamily::cosine(s, 1, u(rng)); break;
            case PhiQuadratureOptions::Family::Poisson: d.fam = OrientationFamily::poisson(s, 0.8, u(rng)); break;
        }
        // Offset-independent weights isolate the orientation dependence of the
        // family.
        d.wf.w0 = random_weights(rng);
        d.ref_table = d.wf.table(opt.reference_n);
        draws.push_back(std::move(d));
    }
    for (int n : opt.n_values) {
        ReportRow row;
        row.x = n;
        double sum = 0.0;
        long long count = 0;
        for (const Draw& d : draws) {
            const std::vector<Coeff6> table = d.wf.table(n);
            for (int v = 0; v < nv; v += opt.vertex_stride) {
                const Rotation3 pbar = pbar_at(mesh, v);
                for (int i = 0; i < n; ++i) {
                    const Rotation3 r = pbar * Rotation3(rot_z(kTwoPi * i / n));
                    const PhiEvaluator ev(d.fam, r);
                    const double e = std::abs(ev(table) - ev(d.ref_table));
                    row.max_err = std::max(row.max_err, e);
                    sum += e;
                    ++count;
                }
            }
        }
        row.mean_err = sum / static_cast<double>(count);
        rep.rows.push_back(row);
    }
    rep.finalize();
    return rep;
}

ConvergenceReport phi_level_error(const std::vector<int>& levels, const PhiLevelOptions& opt) {
    ConvergenceReport rep;
    rep.quantity = "hidden-layer discretization defect, N=" + std::to_string(opt.n);
    rep.axis = "level";
    const CyclicGroup g(opt.n);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    struct Draw {
        OrientationFamily fam;
        WeightField wf;
    };
    std::vector<Draw> draws;
    for (int t = 0; t < opt.trials; ++t) {
        const Rotation3 rt = opt.identity ? Rotation3::identity() : Rotation3::haar(rng);
        OrientationFamily fam = OrientationFamily::poisson(random_bump(rng), 0.5, u(rng));
        fam.angular.push_back(AngularFactor::cosine(1, u(rng), 0.5));
        fam.spatial.push_back(random_bump(rng));
        Draw d{rotate_spatial(fam, rt), {}};
        d.wf.w0 = random_weights(rng);
        d.wf.harmonics = {1};
        d.wf.a = {0.5 * random_weights(rng)};
        d.wf.b = {0.5 * random_weights(rng)};
        draws.push_back(std::move(d));
    }
    for (int l : levels) {
        const LevelData d = make_level(l);
        const int nv = d.mesh.vertex_count();
        ReportRow row = level_row(d);
        double sum = 0.0;
        for (const Draw& dr : draws) {
            FeatureMap<double> in(1, l, nv, opt.n, 1);
            for (int v = 0; v < nv; ++v)
                for (int i = 0; i < opt.n; ++i) in.at(0, v, i, 0) = dr.fam.value(d.mesh.vertices[v], g.angle(i));
            const FeatureMap<double> out = phi_layer(in, dr.wf.discretize(opt.n), g, d.compact);
            const std::vector<Coeff6> table = dr.wf.table(opt.n);
            double trial_sum = 0.0;
            for (int v = 0; v < nv; ++v) {
                const Rotation3 pbar = pbar_at(d.mesh, v);
                for (int i = 0; i < opt.n; ++i) {
                    const PhiEvaluator ev(dr.fam, pbar * Rotation3(rot_z(g.angle(i))));
                    const double e = std::abs(out.at(0, v, i, 0) - ev(table));
                    row.max_err = std::max(row.max_err, e);
                    trial_sum += e;
                }
            }
            sum += trial_sum / (static_cast<double>(nv) * opt.n);
        }
        row.mean_err = sum / draws.size();
        rep.rows.push_back(row);
    }
    rep.finalize();
    return rep;
}

std::vector<SmokeRow> network_equivariance_smoke(const std::vector<int>& levels, const SmokeOptions& opt) {
    const int n = opt.n, ch = opt.channels;
    const CyclicGroup g(n);
    std::mt19937_64 rng(opt.seed);
    struct Draw {
        SmoothTestFn moved;
        std::vector<Coeff6> w1;               // [c]
        std::vector<std::vector<Coeff6>> w2;  // [c][j]
    };
    std::vector<Draw> draws;
    for (int t = 0; t < opt.trials; ++t) {
        const Rotation3 rt = Rotation3::haar(rng);
        Draw d;
        d.moved = rotate_fn(random_bump(rng), rt);
        for (int c = 0; c < ch; ++c) d.w1.push_back(opt.identity_mix ? Coeff6::Unit(0) : random_weights(rng));
        d.w2.assign(ch, std::vector<Coeff6>(n, Coeff6::Zero()));
        for (int c = 0; c < ch; ++c)
            for (int j = 0; j < n; ++j)
                d.w2[c][j] = opt.identity_mix ? Coeff6(Coeff6::Unit(0) * (j == 0 ? n : 0))
                                              : random_weights(rng);
        draws.push_back(std::move(d));
    }
    auto act = [&](double x) { return opt.relu ? std::max(0.0, x) : x; };

    std::vector<SmokeRow> rows;
    for (int l : levels) {
        const LevelData d = make_level(l);
        const int nv = d.mesh.vertex_count();
        SmokeRow row;
        row.level = l;
        row.max_defect_per_depth.assign(2, 0.0);
        for (const Draw& dr : draws) {
            FeatureMap<double> in(1, l, nv, 1, 1);
            in.values = sample_on_mesh(dr.moved, d.mesh);
            OperatorWeights<double> w1(ch, 1, 0), w2(1, ch, n);
            for (int c = 0; c < ch; ++c) {
                w1.set(c, 0, 0, dr.w1[c]);
                for (int j = 0; j < n; ++j) w2.set(0, c, j, dr.w2[c][j]);
            }
            FeatureMap<double> h = psi_layer(in, w1, g, d.compact);
            for (int v = 0; v < nv; ++v)
                for (int i = 0; i < n; ++i)
                    for (int c = 0; c < ch; ++c) {
                        const Rotation3 r = pbar_at(d.mesh, v) * Rotation3(rot_z(g.angle(i)));
                        const double e = std::abs(h.at(0, v, i, c) - exact_psi(dr.moved, dr.w1[c], r));
                        row.max_defect_per_depth[0] = std::max(row.max_defect_per_depth[0], e);
                    }
            if (opt.exact_first_layer)
                for (int v = 0; v < nv; ++v)
                    for (int i = 0; i < n; ++i) {
                        const Rotation3 r = pbar_at(d.mesh, v) * Rotation3(rot_z(g.angle(i)));
                        for (int c = 0; c < ch; ++c) h.at(0, v, i, c) = exact_psi(dr.moved, dr.w1[c], r);
                    }
            for (auto& x : h.values) x = act(x);
            const FeatureMap<double> out = phi_layer(h, w2, g, d.compact);

            // Continuous second layer: the first-layer field in its natural
            // gauge, F_c(Q, k) = act(Psi_c[s](Pbar_Q Z(theta_k))), differentiated
            // through the chart at P.
            for (int v = 0; v < nv; ++v) {
                const SpherePoint p = d.mesh.point(v);
                if (std::acos(std::clamp(std::abs(p.z()), 0.0, 1.0)) < opt.polar_cap) continue;
                const Rotation3 pbar = pbar_at(d.mesh, v);
                std::vector<Coeff6> fd(static_cast<std::size_t>(n) * ch);
                for (int k = 0; k < n; ++k)
                    for (int c = 0; c < ch; ++c) {
                        auto field = [&](const Vec3& q) {
                            const Rotation3 r = coset_representative(SpherePoint::normalized(q)) *
                                                Rotation3(rot_z(g.angle(k)));
                            return act(exact_psi(dr.moved, dr.w1[c], r));
                        };
                        fd[k * ch + c] = fd_chart_derivs(field, pbar, 1e-3, 4).as_vector();
                    }
                for (int i = 0; i < n; ++i) {
                    double ref = 0.0;
                    for (int j = 0; j < n; ++j)
                        for (int c = 0; c < ch; ++c)
                            ref += rotate_coefficients(dr.w2[c][j], g.element(i)).dot(fd[g.add(i, j) * ch + c]);
                    ref /= n;
                    row.max_defect_per_depth[1] = std::max(row.max_defect_per_depth[1], std::abs(out.at(0, v, i, 0) - ref));
                }
            }
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace spdo
