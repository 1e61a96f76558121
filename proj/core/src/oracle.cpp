#include "spdo/oracle.hpp"

#include <cmath>
#include <random>

namespace spdo {

// ---- Poly3 ------------------------------------------------------------------

namespace {

double ipow(double x, int n) {
    double r = 1.0;
    for (int k = 0; k < n; ++k) r *= x;
    return r;
}

}  // namespace

double Poly3::value(const Vec3& x) const {
    double s = 0.0;
    for (int a = 0; a <= kMaxDegree; ++a)
        for (int b = 0; a + b <= kMaxDegree; ++b)
            for (int c = 0; a + b + c <= kMaxDegree; ++c) {
                const double k = coef(a, b, c);
                if (k != 0.0) s += k * ipow(x(0), a) * ipow(x(1), b) * ipow(x(2), c);
            }
    return s;
}

Vec3 Poly3::gradient(const Vec3& x) const {
    Vec3 g = Vec3::Zero();
    for (int a = 0; a <= kMaxDegree; ++a)
        for (int b = 0; a + b <= kMaxDegree; ++b)
            for (int c = 0; a + b + c <= kMaxDegree; ++c) {
                const double k = coef(a, b, c);
                if (k == 0.0) continue;
                if (a > 0) g(0) += k * a * ipow(x(0), a - 1) * ipow(x(1), b) * ipow(x(2), c);
                if (b > 0) g(1) += k * b * ipow(x(0), a) * ipow(x(1), b - 1) * ipow(x(2), c);
                if (c > 0) g(2) += k * c * ipow(x(0), a) * ipow(x(1), b) * ipow(x(2), c - 1);
            }
    return g;
}

Mat3 Poly3::hessian(const Vec3& x) const {
    Mat3 h = Mat3::Zero();
    for (int a = 0; a <= kMaxDegree; ++a)
        for (int b = 0; a + b <= kMaxDegree; ++b)
            for (int c = 0; a + b + c <= kMaxDegree; ++c) {
                const double k = coef(a, b, c);
                if (k == 0.0) continue;
                for (int i = 0; i < 3; ++i)
                    for (int j = i; j < 3; ++j) {
                        int d[3] = {a, b, c};
                        if (d[i] == 0) continue;
                        double f = k * d[i]--;
                        if (d[j] == 0) continue;
                        f *= d[j]--;
                        const double v = f * ipow(x(0), d[0]) * ipow(x(1), d[1]) * ipow(x(2), d[2]);
                        h(i, j) += v;
                        if (i != j) h(j, i) += v;
                    }
            }
    return h;
}

Poly3 Poly3::operator*(const Poly3& o) const {
    Poly3 r;
    for (int a = 0; a <= kMaxDegree; ++a)
        for (int b = 0; a + b <= kMaxDegree; ++b)
            for (int c = 0; a + b + c <= kMaxDegree; ++c) {
                const double k = coef(a, b, c);
                if (k == 0.0) continue;
                for (int a2 = 0; a + a2 <= kMaxDegree; ++a2)
                    for (int b2 = 0; a + a2 + b + b2 <= kMaxDegree; ++b2)
                        for (int c2 = 0; a + a2 + b + b2 + c + c2 <= kMaxDegree; ++c2)
                            r.coef(a + a2, b + b2, c + c2) += k * o.coef(a2, b2, c2);
            }
    return r;
}

Poly3 Poly3::operator+(const Poly3& o) const {
    Poly3 r = *this;
    for (std::size_t k = 0; k < c_.size(); ++k) r.c_[k] += o.c_[k];
    return r;
}

Poly3 Poly3::operator*(double s) const {
    Poly3 r = *this;
    for (auto& v : r.c_) v *= s;
    return r;
}

Poly3 Poly3::constant(double v) { return monomial(0, 0, 0, v); }

Poly3 Poly3::monomial(int a, int b, int c, double k) {
    Poly3 p;
    p.coef(a, b, c) = k;
    return p;
}

Poly3 Poly3::linear(const Vec3& a) {
    Poly3 p;
    p.coef(1, 0, 0) = a(0);
    p.coef(0, 1, 0) = a(1);
    p.coef(0, 0, 1) = a(2);
    return p;
}

Poly3 Poly3::substitute(const Mat3& m) const {
    // (M x)_i as linear polynomials, and their powers up to kMaxDegree.
    std::array<std::array<Poly3, kDim>, 3> pw;
    for (int i = 0; i < 3; ++i) {
        pw[i][0] = constant(1.0);
        const Poly3 li = linear(m.row(i).transpose());
        for (int d = 1; d <= kMaxDegree; ++d) pw[i][d] = pw[i][d - 1] * li;
    }
    Poly3 r;
    for (int a = 0; a <= kMaxDegree; ++a)
        for (int b = 0; a + b <= kMaxDegree; ++b)
            for (int c = 0; a + b + c <= kMaxDegree; ++c) {
                const double k = coef(a, b, c);
                if (k != 0.0) r = r + pw[0][a] * pw[1][b] * pw[2][c] * k;
            }
    return r;
}

// ---- SmoothTestFn -----------------------------------------------------------

double SmoothTestFn::value(const Vec3& x) const {
    double s = 0.0;
    for (const auto& t : terms) {
        switch (t.kind) {
            case SmoothTerm::Kind::Poly: s += t.weight * t.poly.value(x); break;
            case SmoothTerm::Kind::Exp: s += t.weight * std::exp(t.a.dot(x)); break;
            case SmoothTerm::Kind::Gaussian:
                s += t.weight * std::exp(-t.kappa * (x - t.c).squaredNorm());
                break;
        }
    }
    return s;
}

Vec3 SmoothTestFn::gradient(const Vec3& x) const {
    Vec3 g = Vec3::Zero();
    for (const auto& t : terms) {
        switch (t.kind) {
            case SmoothTerm::Kind::Poly: g += t.weight * t.poly.gradient(x); break;
            case SmoothTerm::Kind::Exp: g += t.weight * std::exp(t.a.dot(x)) * t.a; break;
            case SmoothTerm::Kind::Gaussian: {
                const Vec3 d = x - t.c;
                g += t.weight * std::exp(-t.kappa * d.squaredNorm()) * (-2.0 * t.kappa) * d;
                break;
            }
        }
    }
    return g;
}

Mat3 SmoothTestFn::hessian(const Vec3& x) const {
    Mat3 h = Mat3::Zero();
    for (const auto& t : terms) {
        switch (t.kind) {
            case SmoothTerm::Kind::Poly: h += t.weight * t.poly.hessian(x); break;
            case SmoothTerm::Kind::Exp: h += t.weight * std::exp(t.a.dot(x)) * (t.a * t.a.transpose()); break;
            case SmoothTerm::Kind::Gaussian: {
                const Vec3 d = x - t.c;
                const double e = std::exp(-t.kappa * d.squaredNorm());
                h += t.weight * e *
                     (4.0 * t.kappa * t.kappa * (d * d.transpose()) - 2.0 * t.kappa * Mat3::Identity());
                break;
            }
        }
    }
    return h;
}

SmoothTestFn SmoothTestFn::poly(std::string name, const Poly3& p) {
    SmoothTestFn f;
    f.name = std::move(name);
    SmoothTerm t;
    t.kind = SmoothTerm::Kind::Poly;
    t.poly = p;
    f.terms.push_back(t);
    return f;
}

SmoothTestFn SmoothTestFn::exp(std::string name, const Vec3& a, double weight) {
    SmoothTestFn f;
    f.name = std::move(name);
    SmoothTerm t;
    t.kind = SmoothTerm::Kind::Exp;
    t.a = a;
    t.weight = weight;
    f.terms.push_back(t);
    return f;
}

SmoothTestFn SmoothTestFn::gaussian(std::string name, const Vec3& center, double kappa, double weight) {
    SmoothTestFn f;
    f.name = std::move(name);
    SmoothTerm t;
    t.kind = SmoothTerm::Kind::Gaussian;
    t.c = center;
    t.kappa = kappa;
    t.weight = weight;
    f.terms.push_back(t);
    return f;
}

SmoothTestFn SmoothTestFn::operator+(const SmoothTestFn& o) const {
    SmoothTestFn f = *this;
    f.name = name + "+" + o.name;
    f.terms.insert(f.terms.end(), o.terms.begin(), o.terms.end());
    return f;
}

SmoothTestFn rotate_fn(const SmoothTestFn& f, const Rotation3& rt) {
    const Mat3& m = rt.matrix();
    SmoothTestFn g = f;
    for (auto& t : g.terms) {
        switch (t.kind) {
            case SmoothTerm::Kind::Poly: t.poly = t.poly.substitute(m.transpose()); break;
            case SmoothTerm::Kind::Exp: t.a = m * t.a; break;
            case SmoothTerm::Kind::Gaussian: t.c = m * t.c; break;
        }
    }
    return g;
}

SmoothTestFn exp_x3() { return SmoothTestFn::exp("exp(x3)", Vec3(0, 0, 1)); }

std::vector<SmoothTestFn> function_catalog() {
    std::vector<SmoothTestFn> cat;
    cat.push_back(SmoothTestFn::poly("x1", Poly3::monomial(1, 0, 0)));
    cat.push_back(SmoothTestFn::poly("x3", Poly3::monomial(0, 0, 1)));
    cat.push_back(SmoothTestFn::poly("x1^2", Poly3::monomial(2, 0, 0)));
    cat.push_back(SmoothTestFn::poly("x1*x2", Poly3::monomial(1, 1, 0)));
    cat.push_back(SmoothTestFn::poly("x1*x2*x3", Poly3::monomial(1, 1, 1)));
    cat.push_back(SmoothTestFn::poly("x2^3*x3", Poly3::monomial(0, 3, 1)));
    {
        // Dense quartic with fixed pseudo-random coefficients.
        std::mt19937_64 rng(20240601);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Poly3 p;
        for (int a = 0; a <= 4; ++a)
            for (int b = 0; a + b <= 4; ++b)
                for (int c = 0; a + b + c <= 4; ++c) p.coef(a, b, c) = u(rng);
        cat.push_back(SmoothTestFn::poly("quartic", p));
    }
    cat.push_back(exp_x3());
    cat.push_back(SmoothTestFn::exp("exp(a.x)", Vec3(0.7, -0.4, 0.5)));
    cat.push_back(SmoothTestFn::gaussian("bump", Vec3(0.3, 0.5, 0.81).normalized(), 3.0));
    cat.push_back(SmoothTestFn::gaussian("bumpA", Vec3(1, 0.2, -0.3).normalized(), 5.0, 1.0) +
                  SmoothTestFn::gaussian("bumpB", Vec3(-0.4, 0.8, 0.2).normalized(), 2.0, -0.7));
    return cat;
}

std::vector<double> sample_on_mesh(const SmoothTestFn& f, const IcoMesh& mesh) {
    std::vector<double> s(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v) s[v] = f.value(mesh.point(v).vec());
    return s;
}

// ---- chart derivatives ------------------------------------------------------

Coeff6 ChartDerivs::as_vector() const {
    Coeff6 d;
    d << value, grad(0), grad(1), hess(0, 0), hess(0, 1), hess(1, 1);
    return d;
}

Vec2 chart_grad(const SmoothTestFn& f, const Rotation3& r) {
    const Mat3& m = r.matrix();
    const Vec3 g = m.transpose() * f.gradient(m.col(2));
    return g.head<2>();
}

Mat2 chart_hess(const SmoothTestFn& f, const Rotation3& r) {
    const Mat3& m = r.matrix();
    const Vec3 p = m.col(2);
    const Vec3 g = m.transpose() * f.gradient(p);
    const Mat3 h = m.transpose() * f.hessian(p) * m;
    return h.topLeftCorner<2, 2>() - g(2) * Mat2::Identity();
}

ChartDerivs chart_derivs(const SmoothTestFn& f, const Rotation3& r) {
    ChartDerivs d;
    d.value = f.value(r.matrix().col(2));
    d.grad = chart_grad(f, r);
    d.hess = chart_hess(f, r);
    return d;
}

ChartDerivs fd_chart_derivs(const std::function<double(const Vec3&)>& s, const Rotation3& r,
                            double h, int order) {
    const RotDecomp dec = decompose(r);
    ChartFrame frame;
    frame.base = dec.point;
    frame.pbar = Rotation3::from_zyz(dec.alpha, dec.beta, 0.0);
    const Mat2 a = dec.inplane;
    auto f = [&](double x1, double x2) {
        return s(chart_inverse(frame, a * Vec2(x1, x2)).vec());
    };
    ChartDerivs d;
    d.value = f(0, 0);
    const double f0 = d.value;
    if (order == 4) {
        auto d1 = [&](auto g) { return (-g(2 * h) + 8 * g(h) - 8 * g(-h) + g(-2 * h)) / (12 * h); };
        auto d2 = [&](auto g) {
            return (-g(2 * h) + 16 * g(h) - 30 * f0 + 16 * g(-h) - g(-2 * h)) / (12 * h * h);
        };
        d.grad(0) = d1([&](double t) { return f(t, 0); });
        d.grad(1) = d1([&](double t) { return f(0, t); });
        d.hess(0, 0) = d2([&](double t) { return f(t, 0); });
        d.hess(1, 1) = d2([&](double t) { return f(0, t); });
        // Mixed derivative as the 4th-order first difference of the 4th-order
        // first difference.
        auto dx = [&](double y) {
            return (-f(2 * h, y) + 8 * f(h, y) - 8 * f(-h, y) + f(-2 * h, y)) / (12 * h);
        };
        d.hess(0, 1) = (-dx(2 * h) + 8 * dx(h) - 8 * dx(-h) + dx(-2 * h)) / (12 * h);
    } else {
        d.grad(0) = (f(h, 0) - f(-h, 0)) / (2 * h);
        d.grad(1) = (f(0, h) - f(0, -h)) / (2 * h);
        d.hess(0, 0) = (f(h, 0) - 2 * f0 + f(-h, 0)) / (h * h);
        d.hess(1, 1) = (f(0, h) - 2 * f0 + f(0, -h)) / (h * h);
        d.hess(0, 1) = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
    }
    d.hess(1, 0) = d.hess(0, 1);
    return d;
}

double exact_psi(const SmoothTestFn& f, const Coeff6& w, const Rotation3& r) {
    const RotDecomp dec = decompose(r);
    const Rotation3 pbar = Rotation3::from_zyz(dec.alpha, dec.beta, 0.0);
    return rotate_coefficients(w, dec.inplane).dot(chart_derivs(f, pbar).as_vector());
}

// ---- families -----------------------------------------------------------------

double AngularFactor::operator()(double theta) const {
    switch (kind) {
        case Kind::Constant: return scale;
        case Kind::Cos: return scale * std::cos(k * theta + phase);
        case Kind::Poisson: {
            const double c = std::cos(theta - phase);
            return scale * (1.0 - r * r) / (1.0 - 2.0 * r * c + r * r);
        }
    }
    return 0.0;
}

AngularFactor AngularFactor::constant(double scale) {
    AngularFactor g;
    g.scale = scale;
    return g;
}

AngularFactor AngularFactor::cosine(int k, double phase, double scale) {
    AngularFactor g;
    g.kind = Kind::Cos;
    g.k = k;
    g.phase = phase;
    g.scale = scale;
    return g;
}

AngularFactor AngularFactor::poisson(double r, double phase, double scale) {
    AngularFactor g;
    g.kind = Kind::Poisson;
    g.r = r;
    g.phase = phase;
    g.scale = scale;
    return g;
}

double OrientationFamily::value(const Vec3& p, double theta) const {
    double s = 0.0;
    for (std::size_t t = 0; t < spatial.size(); ++t) s += angular[t](theta) * spatial[t].value(p);
    return s;
}

bool OrientationFamily::band_limited_below(int n) const {
    for (const auto& g : angular) {
        if (g.kind == AngularFactor::Kind::Poisson) return false;
        if (g.kind == AngularFactor::Kind::Cos && g.k >= n) return false;
    }
    return true;
}

OrientationFamily OrientationFamily::constant_in_orientation(const SmoothTestFn& f) {
    return {{AngularFactor::constant()}, {f}};
}

OrientationFamily OrientationFamily::cosine(const SmoothTestFn& f, int k, double phase) {
    return {{AngularFactor::cosine(k, phase)}, {f}};
}

OrientationFamily OrientationFamily::poisson(const SmoothTestFn& f, double r, double phase) {
    return {{AngularFactor::poisson(r, phase)}, {f}};
}

OrientationFamily rotate_spatial(const OrientationFamily& fam, const Rotation3& rt) {
    OrientationFamily out = fam;
    for (auto& s : out.spatial) s = rotate_fn(s, rt);
    return out;
}

Coeff6 WeightField::operator()(double theta) const {
    Coeff6 w = w0;
    for (std::size_t m = 0; m < harmonics.size(); ++m)
        w += a[m] * std::cos(harmonics[m] * theta) + b[m] * std::sin(harmonics[m] * theta);
    return w;
}

std::vector<Coeff6> WeightField::table(int n) const {
    std::vector<Coeff6> t(n);
    for (int q = 0; q < n; ++q) t[q] = (*this)(kTwoPi * q / n);
    return t;
}

OperatorWeights<double> WeightField::discretize(int n) const {
    OperatorWeights<double> w(1, 1, n);
    for (int j = 0; j < n; ++j) w.set(0, 0, j, (*this)(kTwoPi * j / n));
    return w;
}

PhiEvaluator::PhiEvaluator(const OrientationFamily& fam, const Rotation3& r)
    : angular_(fam.angular), gamma_(decompose(r).gamma) {
    // rotate(w, A_R) . D(Pbar_R) = w . D(R): use the rotated-frame derivatives.
    derivs_.reserve(fam.spatial.size());
    for (const auto& s : fam.spatial) derivs_.push_back(chart_derivs(s, r).as_vector());
}

double PhiEvaluator::operator()(const WeightField& w, int n_q, double twist) const {
    return (*this)(w.table(n_q), twist);
}

double PhiEvaluator::operator()(const std::vector<Coeff6>& w_table, double twist) const {
    const int n_q = static_cast<int>(w_table.size());
    double acc = 0.0;
    for (int q = 0; q < n_q; ++q) {
        const double theta = kTwoPi * q / n_q;
        for (std::size_t t = 0; t < derivs_.size(); ++t)
            acc += angular_[t](gamma_ + twist + theta) * w_table[q].dot(derivs_[t]);
    }
    return acc / n_q;
}

double exact_phi(const OrientationFamily& fam, const WeightField& w, const Rotation3& r, int n_q,
                 double twist) {
    return PhiEvaluator(fam, r)(w, n_q, twist);
}

double exact_phi_transported(const OrientationFamily& fam, const WeightField& w,
                             const Rotation3& rt, const Rotation3& r, int n_q) {
    const double twist = decompose(rt.inverse() * r).gamma - decompose(r).gamma;
    return exact_phi(rotate_spatial(fam, rt), w, r, n_q, twist);
}

}  // namespace spdo
