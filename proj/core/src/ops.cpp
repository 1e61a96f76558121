#include "spdo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spdo/error.hpp"
#include "spdo/parallel.hpp"

namespace spdo {

CyclicGroup::CyclicGroup(int order) : n(order) {
    if (order < 1) throw ShapeError("CyclicGroup: order must be >= 1");
}

Coeff6 rotate_coefficients(const Coeff6& w, const Mat2& a) {
    const Mat2 ainv = a.transpose();
    Coeff6 c;
    c(0) = w(0);
    const Eigen::RowVector2d g = Eigen::RowVector2d(w(1), w(2)) * ainv;
    c(1) = g(0);
    c(2) = g(1);
    Mat2 m;
    m << w(3), 0.5 * w(4),
         0.5 * w(4), w(5);
    const Mat2 r = a * m * ainv;
    c(3) = r(0, 0);
    c(4) = r(0, 1) + r(1, 0);
    c(5) = r(1, 1);
    return c;
}

Transform6 coefficient_transform(const Mat2& a) {
    Transform6 t;
    for (int k = 0; k < 6; ++k) t.col(k) = rotate_coefficients(Coeff6::Unit(k), a);
    return t;
}

CoefficientTable CoefficientTable::build(const Coeff6& w, const CyclicGroup& group) {
    CoefficientTable t;
    t.per_orientation.reserve(group.n);
    for (int i = 0; i < group.n; ++i) t.per_orientation.push_back(rotate_coefficients(w, group.element(i)));
    return t;
}

template <typename T>
Coeff6 OperatorWeights<T>::get(int o, int c, int j) const {
    const std::size_t base = index(o, c, j);
    Coeff6 w;
    for (int k = 0; k < 6; ++k) w(k) = static_cast<double>(values[base + k]);
    return w;
}

template <typename T>
void OperatorWeights<T>::set(int o, int c, int j, const Coeff6& w) {
    const std::size_t base = index(o, c, j);
    for (int k = 0; k < 6; ++k) values[base + k] = static_cast<T>(w(k));
}

template struct OperatorWeights<float>;
template struct OperatorWeights<double>;

namespace {

std::string shape_str(int b, int l, int v, int o, int c) {
    std::ostringstream os;
    os << "[batch " << b << ", level " << l << ", " << v << " vertices, " << o << " orientations, "
       << c << " channels]";
    return os.str();
}

template <typename T>
std::string shape_str(const FeatureMap<T>& f) {
    return shape_str(f.batch, f.level, f.vertices, f.orientations, f.channels);
}

// Value and estimated derivatives of every (orientation, channel) slice of
// one sample: feat[((v * n_orient + o) * channels + c) * 6 + k].
template <typename T>
void lift_sample(const FeatureMap<T>& in, int b, const CompactStencil<T>& st, std::vector<T>& feat) {
    const int no = in.orientations, nc = in.channels;
    const int slice = no * nc;
    feat.assign(static_cast<std::size_t>(in.vertices) * slice * 6, T(0));
    const T* x = in.values.data() + in.index(b, 0, 0, 0);
    for (int v = 0; v < in.vertices; ++v) {
        const T* xv = x + static_cast<std::size_t>(v) * slice;
        T* fv = feat.data() + static_cast<std::size_t>(v) * slice * 6;
        const T* cw = st.center.data() + 5 * v;
        for (int s = 0; s < slice; ++s) {
            fv[6 * s] = xv[s];
            for (int k = 0; k < 5; ++k) fv[6 * s + 1 + k] = cw[k] * xv[s];
        }
        for (int e = st.offset[v]; e < st.offset[v + 1]; ++e) {
            const T* xq = x + static_cast<std::size_t>(st.nbr[e]) * slice;
            const T* w = st.weight.data() + 5 * e;
            for (int s = 0; s < slice; ++s) {
                const T q = xq[s];
                for (int k = 0; k < 5; ++k) fv[6 * s + 1 + k] += w[k] * q;
            }
        }
    }
}

// Adjoint of lift_sample: adds the input gradient of one sample.
template <typename T>
void lift_sample_adjoint(const std::vector<T>& gfeat, const CompactStencil<T>& st,
                         FeatureMap<T>& gin, int b) {
    const int slice = gin.orientations * gin.channels;
    T* g = gin.values.data() + gin.index(b, 0, 0, 0);
    for (int v = 0; v < gin.vertices; ++v) {
        const T* fv = gfeat.data() + static_cast<std::size_t>(v) * slice * 6;
        T* gv = g + static_cast<std::size_t>(v) * slice;
        const T* cw = st.center.data() + 5 * v;
        for (int s = 0; s < slice; ++s) {
            T acc = fv[6 * s];
            for (int k = 0; k < 5; ++k) acc += cw[k] * fv[6 * s + 1 + k];
            gv[s] += acc;
        }
        for (int e = st.offset[v]; e < st.offset[v + 1]; ++e) {
            T* gq = g + static_cast<std::size_t>(st.nbr[e]) * slice;
            const T* w = st.weight.data() + 5 * e;
            for (int s = 0; s < slice; ++s) {
                T acc = 0;
                for (int k = 0; k < 5; ++k) acc += w[k] * fv[6 * s + 1 + k];
                gq[s] += acc;
            }
        }
    }
}

// Coefficients of a lifted convolution, layout [i][j][c * 6 + k][o].
//   psi: J = 1, source orientation 0
//   phi: J = N, source orientation (i + j) mod N, scaled by 1/N
template <typename T>
struct LiftedConv {
    int n_out = 1;
    int offsets = 1;
    int c_in = 0;
    int c_out = 0;
    bool cyclic = false;
    std::vector<T> table;
    std::vector<Transform6> transforms;  // T(A_i)

    std::size_t block() const { return static_cast<std::size_t>(c_in) * 6 * c_out; }
    const T* at(int i, int j) const { return table.data() + (static_cast<std::size_t>(i) * offsets + j) * block(); }
    int source(int i, int j) const { return cyclic ? (i + j) % n_out : 0; }
    double scale() const { return cyclic ? 1.0 / n_out : 1.0; }
};

template <typename T>
LiftedConv<T> make_lifted(const OperatorWeights<T>& w, const CyclicGroup& group, bool cyclic) {
    LiftedConv<T> lc;
    lc.n_out = group.n;
    lc.offsets = cyclic ? group.n : 1;
    lc.c_in = w.c_in;
    lc.c_out = w.c_out;
    lc.cyclic = cyclic;
    lc.table.assign(static_cast<std::size_t>(lc.n_out) * lc.offsets * lc.block(), T(0));
    lc.transforms.reserve(group.n);
    for (int i = 0; i < group.n; ++i) lc.transforms.push_back(coefficient_transform(group.element(i)));
    const double s = lc.scale();
    for (int i = 0; i < lc.n_out; ++i) {
        for (int j = 0; j < lc.offsets; ++j) {
            T* blk = lc.table.data() + (static_cast<std::size_t>(i) * lc.offsets + j) * lc.block();
            for (int o = 0; o < lc.c_out; ++o) {
                for (int c = 0; c < lc.c_in; ++c) {
                    const Coeff6 r = lc.transforms[i] * w.get(o, c, j);
                    for (int k = 0; k < 6; ++k)
                        blk[(static_cast<std::size_t>(c) * 6 + k) * lc.c_out + o] = static_cast<T>(s * r(k));
                }
            }
        }
    }
    return lc;
}

template <typename T>
void lifted_forward_sample(const LiftedConv<T>& lc, const std::vector<T>& feat, int vertices,
                           int in_orient, FeatureMap<T>& out, int b) {
    const int kin = lc.c_in * 6;
    for (int v = 0; v < vertices; ++v) {
        for (int i = 0; i < lc.n_out; ++i) {
            T* y = out.values.data() + out.index(b, v, i, 0);
            for (int j = 0; j < lc.offsets; ++j) {
                const T* f = feat.data() + (static_cast<std::size_t>(v) * in_orient + lc.source(i, j)) * kin;
                const T* blk = lc.at(i, j);
                for (int k = 0; k < kin; ++k) {
                    const T fk = f[k];
                    const T* row = blk + static_cast<std::size_t>(k) * lc.c_out;
                    for (int o = 0; o < lc.c_out; ++o) y[o] += fk * row[o];
                }
            }
        }
    }
}

template <typename T>
void lifted_backward_sample(const LiftedConv<T>& lc, const std::vector<T>& feat, int vertices,
                            int in_orient, const FeatureMap<T>& gout, int b,
                            std::vector<T>& gfeat, std::vector<T>& gtable) {
    const int kin = lc.c_in * 6;
    gfeat.assign(feat.size(), T(0));
    for (int v = 0; v < vertices; ++v) {
        for (int i = 0; i < lc.n_out; ++i) {
            const T* gy = gout.values.data() + gout.index(b, v, i, 0);
            for (int j = 0; j < lc.offsets; ++j) {
                const std::size_t src = (static_cast<std::size_t>(v) * in_orient + lc.source(i, j)) * kin;
                const T* f = feat.data() + src;
                T* gf = gfeat.data() + src;
                const T* blk = lc.at(i, j);
                T* gblk = gtable.data() + (static_cast<std::size_t>(i) * lc.offsets + j) * lc.block();
                for (int k = 0; k < kin; ++k) {
                    const T* row = blk + static_cast<std::size_t>(k) * lc.c_out;
                    T* grow = gblk + static_cast<std::size_t>(k) * lc.c_out;
                    const T fk = f[k];
                    T acc = 0;
                    for (int o = 0; o < lc.c_out; ++o) {
                        acc += row[o] * gy[o];
                        grow[o] += fk * gy[o];
                    }
                    gf[k] += acc;
                }
            }
        }
    }
}

template <typename T>
void check_conv_shapes(const FeatureMap<T>& in, const OperatorWeights<T>& w, const CyclicGroup& g,
                       const CompactStencil<T>& st, bool cyclic, const char* what) {
    std::ostringstream os;
    if (in.vertices != st.vertices) {
        os << what << ": input " << shape_str(in) << " does not match stencil with " << st.vertices
           << " vertices";
    } else if (in.channels != w.c_in) {
        os << what << ": input has " << in.channels << " channels, weights expect " << w.c_in;
    } else if (!cyclic && in.orientations != 1) {
        os << what << ": input must have a single orientation, got " << in.orientations;
    } else if (cyclic && in.orientations != g.n) {
        os << what << ": input has " << in.orientations << " orientations, group order is " << g.n;
    } else if (cyclic && w.offsets != g.n) {
        os << what << ": weights have " << w.offsets << " offsets, group order is " << g.n;
    } else if (!cyclic && w.offsets != 0) {
        os << what << ": input-layer weights must not have an offset axis";
    } else {
        return;
    }
    throw ShapeError(os.str());
}

template <typename T>
FeatureMap<T> lifted_forward(const FeatureMap<T>& in, const OperatorWeights<T>& w,
                             const CyclicGroup& g, const CompactStencil<T>& st, bool cyclic) {
    check_conv_shapes(in, w, g, st, cyclic, cyclic ? "phi_layer" : "psi_layer");
    const LiftedConv<T> lc = make_lifted(w, g, cyclic);
    FeatureMap<T> out(in.batch, in.level, in.vertices, g.n, w.c_out);
    parallel_chunks(static_cast<std::size_t>(in.batch), [&](int, std::size_t b0, std::size_t b1) {
        std::vector<T> feat;
        for (std::size_t b = b0; b < b1; ++b) {
            lift_sample(in, static_cast<int>(b), st, feat);
            lifted_forward_sample(lc, feat, in.vertices, in.orientations, out, static_cast<int>(b));
        }
    });
    return out;
}

template <typename T>
FeatureMap<T> lifted_backward(const FeatureMap<T>& in, const OperatorWeights<T>& w,
                              const CyclicGroup& g, const CompactStencil<T>& st, bool cyclic,
                              const FeatureMap<T>& gout, OperatorWeights<T>& gw) {
    check_conv_shapes(in, w, g, st, cyclic, cyclic ? "phi_layer_backward" : "psi_layer_backward");
    if (gw.values.size() != w.values.size()) throw ShapeError("lifted conv backward: grad weight shape");
    const LiftedConv<T> lc = make_lifted(w, g, cyclic);
    FeatureMap<T> gin(in.batch, in.level, in.vertices, in.orientations, in.channels);
    const int chunks = chunk_count(static_cast<std::size_t>(in.batch));
    std::vector<std::vector<T>> gtables(chunks, std::vector<T>(lc.table.size(), T(0)));
    parallel_chunks(static_cast<std::size_t>(in.batch), [&](int chunk, std::size_t b0, std::size_t b1) {
        std::vector<T> feat, gfeat;
        for (std::size_t b = b0; b < b1; ++b) {
            lift_sample(in, static_cast<int>(b), st, feat);
            lifted_backward_sample(lc, feat, in.vertices, in.orientations, gout, static_cast<int>(b),
                                   gfeat, gtables[chunk]);
            lift_sample_adjoint(gfeat, st, gin, static_cast<int>(b));
        }
    });
    for (int c = 1; c < chunks; ++c)
        for (std::size_t k = 0; k < gtables[0].size(); ++k) gtables[0][k] += gtables[c][k];
    // Coefficient table -> weights: c = s * T(A_i) w, so dw = s * sum_i T(A_i)^T dc.
    const double s = lc.scale();
    for (int o = 0; o < w.c_out; ++o) {
        for (int c = 0; c < w.c_in; ++c) {
            for (int j = 0; j < lc.offsets; ++j) {
                Coeff6 acc = Coeff6::Zero();
                for (int i = 0; i < lc.n_out; ++i) {
                    const T* gblk = gtables[0].data() + (static_cast<std::size_t>(i) * lc.offsets + j) * lc.block();
                    Coeff6 gc;
                    for (int k = 0; k < 6; ++k)
                        gc(k) = static_cast<double>(gblk[(static_cast<std::size_t>(c) * 6 + k) * lc.c_out + o]);
                    acc += lc.transforms[i].transpose() * gc;
                }
                const std::size_t base = gw.index(o, c, j);
                for (int k = 0; k < 6; ++k) gw.values[base + k] += static_cast<T>(s * acc(k));
            }
        }
    }
    return gin;
}

}  // namespace

template <typename T>
FeatureMap<T> psi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const CompactStencil<T>& stencil) {
    return lifted_forward(input, weights, group, stencil, false);
}

template <typename T>
FeatureMap<T> psi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const StencilSet& stencils) {
    if (input.level != stencils.mesh_level) {
        std::ostringstream os;
        os << "psi_layer: input level " << input.level << " != stencil level " << stencils.mesh_level;
        throw ShapeError(os.str());
    }
    return psi_layer(input, weights, group, CompactStencil<T>::from(stencils));
}

template <typename T>
FeatureMap<T> psi_layer_backward(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                                 const CyclicGroup& group, const CompactStencil<T>& stencil,
                                 const FeatureMap<T>& grad_output, OperatorWeights<T>& grad_weights) {
    return lifted_backward(input, weights, group, stencil, false, grad_output, grad_weights);
}

template <typename T>
FeatureMap<T> phi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const CompactStencil<T>& stencil) {
    return lifted_forward(input, weights, group, stencil, true);
}

template <typename T>
FeatureMap<T> phi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const StencilSet& stencils) {
    if (input.level != stencils.mesh_level) {
        std::ostringstream os;
        os << "phi_layer: input level " << input.level << " != stencil level " << stencils.mesh_level;
        throw ShapeError(os.str());
    }
    return phi_layer(input, weights, group, CompactStencil<T>::from(stencils));
}

template <typename T>
FeatureMap<T> phi_layer_backward(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                                 const CyclicGroup& group, const CompactStencil<T>& stencil,
                                 const FeatureMap<T>& grad_output, OperatorWeights<T>& grad_weights) {
    return lifted_backward(input, weights, group, stencil, true, grad_output, grad_weights);
}

// ---- 1x1 -------------------------------------------------------------------

namespace {

template <typename T>
void check_mix(const FeatureMap<T>& in, const MixMatrix<T>& mix, const char* what) {
    if (in.channels != mix.c_in || (mix.offsets != 1 && mix.offsets != in.orientations)) {
        std::ostringstream os;
        os << what << ": mix " << mix.c_out << "x(" << mix.c_in << "*" << mix.offsets
           << ") incompatible with input " << shape_str(in);
        throw ShapeError(os.str());
    }
}

}  // namespace

template <typename T>
FeatureMap<T> one_by_one(const FeatureMap<T>& input, const MixMatrix<T>& mix) {
    check_mix(input, mix, "one_by_one");
    FeatureMap<T> out(input.batch, input.level, input.vertices, input.orientations, mix.c_out);
    const int n = input.orientations;
    for (int b = 0; b < input.batch; ++b)
        for (int v = 0; v < input.vertices; ++v)
            for (int i = 0; i < n; ++i) {
                T* y = &out.at(b, v, i, 0);
                for (int j = 0; j < mix.offsets; ++j) {
                    const T* x = &input.at(b, v, (i + j) % n, 0);
                    for (int o = 0; o < mix.c_out; ++o) {
                        T acc = 0;
                        for (int c = 0; c < mix.c_in; ++c) acc += mix.at(o, c, j) * x[c];
                        y[o] += acc;
                    }
                }
            }
    return out;
}

template <typename T>
FeatureMap<T> one_by_one_backward(const FeatureMap<T>& input, const MixMatrix<T>& mix,
                                  const FeatureMap<T>& grad_output, MixMatrix<T>& grad_mix) {
    check_mix(input, mix, "one_by_one_backward");
    FeatureMap<T> gin(input.batch, input.level, input.vertices, input.orientations, input.channels);
    const int n = input.orientations;
    for (int b = 0; b < input.batch; ++b)
        for (int v = 0; v < input.vertices; ++v)
            for (int i = 0; i < n; ++i) {
                const T* gy = &grad_output.at(b, v, i, 0);
                for (int j = 0; j < mix.offsets; ++j) {
                    const int src = (i + j) % n;
                    const T* x = &input.at(b, v, src, 0);
                    T* gx = &gin.at(b, v, src, 0);
                    for (int o = 0; o < mix.c_out; ++o) {
                        for (int c = 0; c < mix.c_in; ++c) {
                            grad_mix.at(o, c, j) += gy[o] * x[c];
                            gx[c] += gy[o] * mix.at(o, c, j);
                        }
                    }
                }
            }
    return gin;
}

template <typename T>
OperatorWeights<T> one_hot_phi_weights(const MixMatrix<T>& mix, int group_order) {
    OperatorWeights<T> w(mix.c_out, mix.c_in, group_order);
    for (int o = 0; o < mix.c_out; ++o)
        for (int c = 0; c < mix.c_in; ++c)
            for (int j = 0; j < mix.offsets; ++j) {
                Coeff6 e = Coeff6::Zero();
                e(0) = static_cast<double>(group_order) * static_cast<double>(mix.at(o, c, j));
                w.set(o, c, j, e);
            }
    return w;
}

// ---- batch norm ------------------------------------------------------------

template <typename T>
FeatureMap<T> orientation_batchnorm(const FeatureMap<T>& input, BatchNormParams<T>& p, bool training,
                                    BatchNormCache<T>* cache) {
    const int nc = input.channels;
    if (static_cast<int>(p.scale.size()) != nc) {
        std::ostringstream os;
        os << "orientation_batchnorm: " << p.scale.size() << " parameter channels for input "
           << shape_str(input);
        throw ShapeError(os.str());
    }
    const std::size_t count = input.values.size() / std::max(1, nc);
    std::vector<double> mean(nc, 0.0), var(nc, 0.0);
    if (training) {
        for (std::size_t r = 0; r < count; ++r)
            for (int c = 0; c < nc; ++c) mean[c] += input.values[r * nc + c];
        for (int c = 0; c < nc; ++c) mean[c] /= static_cast<double>(count);
        for (std::size_t r = 0; r < count; ++r)
            for (int c = 0; c < nc; ++c) {
                const double d = input.values[r * nc + c] - mean[c];
                var[c] += d * d;
            }
        for (int c = 0; c < nc; ++c) {
            var[c] /= static_cast<double>(count);
            const double unbiased = count > 1 ? var[c] * count / (count - 1.0) : var[c];
            p.running_mean[c] = static_cast<T>((1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean[c]);
            p.running_var[c] = static_cast<T>((1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased);
        }
    } else {
        for (int c = 0; c < nc; ++c) {
            mean[c] = p.running_mean[c];
            var[c] = p.running_var[c];
        }
    }
    std::vector<T> inv_std(nc), mu(nc);
    std::vector<unsigned char> floored(nc, 0);
    for (int c = 0; c < nc; ++c) {
        const double sd = std::sqrt(var[c]);
        floored[c] = sd <= kBatchNormEps;
        inv_std[c] = static_cast<T>(1.0 / std::max(sd, kBatchNormEps));
        mu[c] = static_cast<T>(mean[c]);
    }
    FeatureMap<T> out = input;
    FeatureMap<T> normalized;
    if (cache) normalized = input;
    for (std::size_t r = 0; r < count; ++r)
        for (int c = 0; c < nc; ++c) {
            const T xh = (input.values[r * nc + c] - mu[c]) * inv_std[c];
            if (cache) normalized.values[r * nc + c] = xh;
            out.values[r * nc + c] = p.scale[c] * xh + p.bias[c];
        }
    if (cache) {
        cache->mean = std::move(mu);
        cache->inv_std = std::move(inv_std);
        cache->floored = std::move(floored);
        cache->normalized = std::move(normalized);
    }
    return out;
}

template <typename T>
FeatureMap<T> orientation_batchnorm_backward(const BatchNormParams<T>& p, const BatchNormCache<T>& cache,
                                             bool training, const FeatureMap<T>& gout,
                                             std::vector<T>& grad_scale, std::vector<T>& grad_bias) {
    const int nc = gout.channels;
    const std::size_t count = gout.values.size() / std::max(1, nc);
    const auto& xh = cache.normalized.values;
    std::vector<double> sum_g(nc, 0.0), sum_gx(nc, 0.0);
    for (std::size_t r = 0; r < count; ++r)
        for (int c = 0; c < nc; ++c) {
            const double g = gout.values[r * nc + c];
            sum_g[c] += g;
            sum_gx[c] += g * xh[r * nc + c];
        }
    for (int c = 0; c < nc; ++c) {
        grad_bias[c] += static_cast<T>(sum_g[c]);
        grad_scale[c] += static_cast<T>(sum_gx[c]);
    }
    FeatureMap<T> gin = gout;
    for (std::size_t r = 0; r < count; ++r)
        for (int c = 0; c < nc; ++c) {
            const double g = gout.values[r * nc + c];
            const double k = static_cast<double>(p.scale[c]) * cache.inv_std[c];
            double d = g;
            if (training) {
                d = g - sum_g[c] / count;
                if (!cache.floored[c]) d -= xh[r * nc + c] * sum_gx[c] / count;
            }
            gin.values[r * nc + c] = static_cast<T>(k * d);
        }
    return gin;
}

// ---- pooling ---------------------------------------------------------------

template <typename T>
FeatureMap<T> avg_pool(const FeatureMap<T>& in, const std::vector<std::vector<int>>& pool, int coarse_level) {
    FeatureMap<T> out(in.batch, coarse_level, static_cast<int>(pool.size()), in.orientations, in.channels);
    const int slice = in.orientations * in.channels;
    for (int b = 0; b < in.batch; ++b)
        for (int c = 0; c < out.vertices; ++c) {
            T* y = &out.at(b, c, 0, 0);
            for (int f : pool[c]) {
                if (f >= in.vertices) throw ShapeError("avg_pool: pool map does not match input level");
                const T* x = &in.at(b, f, 0, 0);
                for (int s = 0; s < slice; ++s) y[s] += x[s];
            }
            const T inv = T(1) / static_cast<T>(pool[c].size());
            for (int s = 0; s < slice; ++s) y[s] *= inv;
        }
    return out;
}

template <typename T>
FeatureMap<T> avg_pool_backward(const FeatureMap<T>& gout, const std::vector<std::vector<int>>& pool,
                                int fine_level, int fine_vertices) {
    FeatureMap<T> gin(gout.batch, fine_level, fine_vertices, gout.orientations, gout.channels);
    const int slice = gout.orientations * gout.channels;
    for (int b = 0; b < gout.batch; ++b)
        for (int c = 0; c < gout.vertices; ++c) {
            const T* gy = &gout.at(b, c, 0, 0);
            const T inv = T(1) / static_cast<T>(pool[c].size());
            for (int f : pool[c]) {
                T* gx = &gin.at(b, f, 0, 0);
                for (int s = 0; s < slice; ++s) gx[s] += gy[s] * inv;
            }
        }
    return gin;
}

template <typename T>
FeatureMap<T> unpool(const FeatureMap<T>& in, const std::vector<std::vector<InterpSource>>& interp,
                     int fine_level) {
    FeatureMap<T> out(in.batch, fine_level, static_cast<int>(interp.size()), in.orientations, in.channels);
    const int slice = in.orientations * in.channels;
    for (int b = 0; b < in.batch; ++b)
        for (int f = 0; f < out.vertices; ++f) {
            T* y = &out.at(b, f, 0, 0);
            for (const auto& src : interp[f]) {
                if (src.index >= in.vertices) throw ShapeError("unpool: map does not match input level");
                const T* x = &in.at(b, src.index, 0, 0);
                const T w = static_cast<T>(src.weight);
                for (int s = 0; s < slice; ++s) y[s] += w * x[s];
            }
        }
    return out;
}

template <typename T>
FeatureMap<T> unpool_backward(const FeatureMap<T>& gout, const std::vector<std::vector<InterpSource>>& interp,
                              int coarse_level, int coarse_vertices) {
    FeatureMap<T> gin(gout.batch, coarse_level, coarse_vertices, gout.orientations, gout.channels);
    const int slice = gout.orientations * gout.channels;
    for (int b = 0; b < gout.batch; ++b)
        for (int f = 0; f < gout.vertices; ++f) {
            const T* gy = &gout.at(b, f, 0, 0);
            for (const auto& src : interp[f]) {
                T* gx = &gin.at(b, src.index, 0, 0);
                const T w = static_cast<T>(src.weight);
                for (int s = 0; s < slice; ++s) gx[s] += w * gy[s];
            }
        }
    return gin;
}

template <typename T>
FeatureMap<T> relu(const FeatureMap<T>& in) {
    FeatureMap<T> out = in;
    for (auto& x : out.values) x = x > T(0) ? x : T(0);
    return out;
}

template <typename T>
FeatureMap<T> relu_backward(const FeatureMap<T>& in, const FeatureMap<T>& gout) {
    FeatureMap<T> gin = gout;
    for (std::size_t k = 0; k < gin.values.size(); ++k)
        if (!(in.values[k] > T(0))) gin.values[k] = T(0);
    return gin;
}

template <typename T>
FeatureMap<T> orientation_pool(const FeatureMap<T>& in, std::vector<int>* argmax) {
    FeatureMap<T> out(in.batch, in.level, in.vertices, 1, in.channels);
    if (argmax) argmax->assign(out.values.size(), 0);
    for (int b = 0; b < in.batch; ++b)
        for (int v = 0; v < in.vertices; ++v)
            for (int c = 0; c < in.channels; ++c) {
                int best = 0;
                T m = in.at(b, v, 0, c);
                for (int o = 1; o < in.orientations; ++o) {
                    const T x = in.at(b, v, o, c);
                    if (x > m) {
                        m = x;
                        best = o;
                    }
                }
                out.at(b, v, 0, c) = m;
                if (argmax) (*argmax)[out.index(b, v, 0, c)] = best;
            }
    return out;
}

template <typename T>
FeatureMap<T> orientation_pool_backward(const FeatureMap<T>& in, const std::vector<int>& argmax,
                                        const FeatureMap<T>& gout) {
    FeatureMap<T> gin(in.batch, in.level, in.vertices, in.orientations, in.channels);
    for (int b = 0; b < in.batch; ++b)
        for (int v = 0; v < in.vertices; ++v)
            for (int c = 0; c < in.channels; ++c) {
                const std::size_t k = gout.index(b, v, 0, c);
                gin.at(b, v, argmax[k], c) += gout.values[k];
            }
    return gin;
}

template <typename T>
FeatureMap<T> global_pool(const FeatureMap<T>& in) {
    FeatureMap<T> out(in.batch, -1, 1, in.orientations, in.channels);
    const int slice = in.orientations * in.channels;
    const T inv = T(1) / static_cast<T>(in.vertices);
    for (int b = 0; b < in.batch; ++b) {
        T* y = &out.at(b, 0, 0, 0);
        for (int v = 0; v < in.vertices; ++v) {
            const T* x = &in.at(b, v, 0, 0);
            for (int s = 0; s < slice; ++s) y[s] += x[s];
        }
        for (int s = 0; s < slice; ++s) y[s] *= inv;
    }
    return out;
}

template <typename T>
FeatureMap<T> global_pool_backward(const FeatureMap<T>& in, const FeatureMap<T>& gout) {
    FeatureMap<T> gin(in.batch, in.level, in.vertices, in.orientations, in.channels);
    const int slice = in.orientations * in.channels;
    const T inv = T(1) / static_cast<T>(in.vertices);
    for (int b = 0; b < in.batch; ++b) {
        const T* gy = &gout.at(b, 0, 0, 0);
        for (int v = 0; v < in.vertices; ++v) {
            T* gx = &gin.at(b, v, 0, 0);
            for (int s = 0; s < slice; ++s) gx[s] = gy[s] * inv;
        }
    }
    return gin;
}

#define SPDO_INSTANTIATE_OPS(T)                                                                   \
    template struct FeatureMap<T>;                                                                \
    template FeatureMap<T> psi_layer(const FeatureMap<T>&, const OperatorWeights<T>&,             \
                                     const CyclicGroup&, const CompactStencil<T>&);               \
    template FeatureMap<T> psi_layer(const FeatureMap<T>&, const OperatorWeights<T>&,             \
                                     const CyclicGroup&, const StencilSet&);                      \
    template FeatureMap<T> psi_layer_backward(const FeatureMap<T>&, const OperatorWeights<T>&,    \
                                              const CyclicGroup&, const CompactStencil<T>&,       \
                                              const FeatureMap<T>&, OperatorWeights<T>&);         \
    template FeatureMap<T> phi_layer(const FeatureMap<T>&, const OperatorWeights<T>&,             \
                                     const CyclicGroup&, const CompactStencil<T>&);               \
    template FeatureMap<T> phi_layer(const FeatureMap<T>&, const OperatorWeights<T>&,             \
                                     const CyclicGroup&, const StencilSet&);                      \
    template FeatureMap<T> phi_layer_backward(const FeatureMap<T>&, const OperatorWeights<T>&,    \
                                              const CyclicGroup&, const CompactStencil<T>&,       \
                                              const FeatureMap<T>&, OperatorWeights<T>&);         \
    template FeatureMap<T> one_by_one(const FeatureMap<T>&, const MixMatrix<T>&);                 \
    template FeatureMap<T> one_by_one_backward(const FeatureMap<T>&, const MixMatrix<T>&,         \
                                               const FeatureMap<T>&, MixMatrix<T>&);              \
    template OperatorWeights<T> one_hot_phi_weights(const MixMatrix<T>&, int);                    \
    template FeatureMap<T> orientation_batchnorm(const FeatureMap<T>&, BatchNormParams<T>&, bool, \
                                                 BatchNormCache<T>*);                             \
    template FeatureMap<T> orientation_batchnorm_backward(const BatchNormParams<T>&,              \
                                                          const BatchNormCache<T>&, bool,         \
                                                          const FeatureMap<T>&, std::vector<T>&,  \
                                                          std::vector<T>&);                       \
    template FeatureMap<T> avg_pool(const FeatureMap<T>&, const std::vector<std::vector<int>>&,   \
                                    int);                                                         \
    template FeatureMap<T> avg_pool_backward(const FeatureMap<T>&,                                \
                                             const std::vector<std::vector<int>>&, int, int);     \
    template FeatureMap<T> unpool(const FeatureMap<T>&,                                           \
                                  const std::vector<std::vector<InterpSource>>&, int);            \
    template FeatureMap<T> unpool_backward(const FeatureMap<T>&,                                  \
                                           const std::vector<std::vector<InterpSource>>&, int,    \
                                           int);                                                  \
    template FeatureMap<T> relu(const FeatureMap<T>&);                                            \
    template FeatureMap<T> relu_backward(const FeatureMap<T>&, const FeatureMap<T>&);             \
    template FeatureMap<T> orientation_pool(const FeatureMap<T>&, std::vector<int>*);             \
    template FeatureMap<T> orientation_pool_backward(const FeatureMap<T>&,                        \
                                                     const std::vector<int>&,                     \
                                                     const FeatureMap<T>&);                       \
    template FeatureMap<T> global_pool(const FeatureMap<T>&);                                     \
    template FeatureMap<T> global_pool_backward(const FeatureMap<T>&, const FeatureMap<T>&);

SPDO_INSTANTIATE_OPS(float)
SPDO_INSTANTIATE_OPS(double)

#undef SPDO_INSTANTIATE_OPS

}  // namespace spdo
