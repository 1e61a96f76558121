#pragma once

// Rotated parameterized differential operators and the discrete layers built
// from them.
//
// A weight 6-vector w parameterizes
//     H(u, v; w) = w1 + w2 u + w3 v + w4 u^2 + w5 u v + w6 v^2
// with u, v the chart derivatives. Rotating the operator by A in SO(2) is the
// same as transforming the coefficients:
//     c1 = w1,  (c2, c3) = (w2, w3) A^{-1},
//     [[c4, c5/2], [c5/2, c6]] = A [[w4, w5/2], [w5/2, w6]] A^{-1},
// after which the operator acts on the unrotated derivative vector
// (f, d1, d2, d11, d12, d22).
//
// Orientation i of an N-orientation feature map corresponds to the cyclic
// group element A_i = rot2(2 pi i / N); A_i A_j = A_{(i + j) mod N}.
//
// Layer outputs:
//   psi:  out(P, i, o) = sum_c  rotate(w[o][c], A_i) . (f_c, D_hat f_c)(P)
//   phi:  out(P, i, o) = 1/N sum_j sum_c rotate(w[o][c][j], A_i) . (F, D_hat F)(P, i+j, c)
// The SO(2) measure is normalized to 1, hence the 1/N.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spdo/geom.hpp"
#include "spdo/icomesh.hpp"
#include "spdo/stencil.hpp"

namespace spdo {

using Coeff6 = Eigen::Matrix<double, 6, 1>;
using Transform6 = Eigen::Matrix<double, 6, 6>;

struct CyclicGroup {
    int n = 1;

    explicit CyclicGroup(int order);
    double angle(int i) const { return kTwoPi * i / n; }
    Mat2 element(int i) const { return rot2(angle(i)); }
    int add(int i, int j) const { return (i + j) % n; }
};

Coeff6 rotate_coefficients(const Coeff6& w, const Mat2& a);

// Matrix form of rotate_coefficients: rotate_coefficients(w, a) = T(a) w.
Transform6 coefficient_transform(const Mat2& a);

/// rotate_coefficients(w, A_i) for every orientation of a cyclic group.
struct CoefficientTable {
    std::vector<Coeff6> per_orientation;

    static CoefficientTable build(const Coeff6& w, const CyclicGroup& group);
};

/// Discrete feature map, layout [batch][vertex][orientation][channel].
/// level < 0 marks a non-spatial (pooled) map with vertices == 1.
template <typename T>
struct FeatureMap {
    int batch = 1;
    int level = -1;
    int vertices = 0;
    int orientations = 1;
    int channels = 0;
    std::vector<T> values;

    FeatureMap() = default;
    FeatureMap(int batch_, int level_, int vertices_, int orientations_, int channels_)
        : batch(batch_), level(level_), vertices(vertices_), orientations(orientations_),
          channels(channels_),
          values(static_cast<std::size_t>(batch_) * vertices_ * orientations_ * channels_, T(0)) {}

    std::size_t index(int b, int v, int o, int c) const {
        return ((static_cast<std::size_t>(b) * vertices + v) * orientations + o) * channels + c;
    }
    T& at(int b, int v, int o, int c) { return values[index(b, v, o, c)]; }
    const T& at(int b, int v, int o, int c) const { return values[index(b, v, o, c)]; }
    std::size_t sample_size() const {
        return static_cast<std::size_t>(vertices) * orientations * channels;
    }
    bool same_shape(const FeatureMap& o) const {
        return batch == o.batch && level == o.level && vertices == o.vertices &&
               orientations == o.orientations && channels == o.channels;
    }
};

/// Operator weights, layout [c_out][c_in][offset][6]. offsets == 0 marks an
/// input (psi) layer without an orientation-offset axis.
template <typename T>
struct OperatorWeights {
    int c_out = 0;
    int c_in = 0;
    int offsets = 0;
    std::vector<T> values;

    OperatorWeights() = default;
    OperatorWeights(int c_out_, int c_in_, int offsets_)
        : c_out(c_out_), c_in(c_in_), offsets(offsets_),
          values(static_cast<std::size_t>(c_out_) * c_in_ * std::max(1, offsets_) * 6, T(0)) {}

    std::size_t index(int o, int c, int j) const {
        return ((static_cast<std::size_t>(o) * c_in + c) * std::max(1, offsets) + j) * 6;
    }
    Coeff6 get(int o, int c, int j = 0) const;
    void set(int o, int c, int j, const Coeff6& w);
    std::size_t free_parameters() const { return values.size(); }
};

// ---- stencil-based layers -------------------------------------------------

template <typename T>
FeatureMap<T> psi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const CompactStencil<T>& stencil);
template <typename T>
FeatureMap<T> psi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const StencilSet& stencils);

// Adjoint of psi_layer: accumulates into grad_weights (same shape as weights)
// and returns the input gradient.
template <typename T>
FeatureMap<T> psi_layer_backward(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                                 const CyclicGroup& group, const CompactStencil<T>& stencil,
                                 const FeatureMap<T>& grad_output,
                                 OperatorWeights<T>& grad_weights);

template <typename T>
FeatureMap<T> phi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const CompactStencil<T>& stencil);
template <typename T>
FeatureMap<T> phi_layer(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                        const CyclicGroup& group, const StencilSet& stencils);

template <typename T>
FeatureMap<T> phi_layer_backward(const FeatureMap<T>& input, const OperatorWeights<T>& weights,
                                 const CyclicGroup& group, const CompactStencil<T>& stencil,
                                 const FeatureMap<T>& grad_output,
                                 OperatorWeights<T>& grad_weights);

// ---- 1x1 mixing ------------------------------------------------------------

/// Channel/orientation mixing. Either c_out x c_in (same orientation only) or
/// c_out x (c_in * n) with column c * n + j mixing orientation i + j into i.
template <typename T>
struct MixMatrix {
    int c_out = 0;
    int c_in = 0;
    int offsets = 1;  // 1 or the group order
    std::vector<T> values;  // [c_out][c_in * offsets]

    MixMatrix() = default;
    MixMatrix(int c_out_, int c_in_, int offsets_)
        : c_out(c_out_), c_in(c_in_), offsets(offsets_),
          values(static_cast<std::size_t>(c_out_) * c_in_ * offsets_, T(0)) {}
    T& at(int o, int c, int j = 0) { return values[(static_cast<std::size_t>(o) * c_in + c) * offsets + j]; }
    const T& at(int o, int c, int j = 0) const {
        return values[(static_cast<std::size_t>(o) * c_in + c) * offsets + j];
    }
};

template <typename T>
FeatureMap<T> one_by_one(const FeatureMap<T>& input, const MixMatrix<T>& mix);
template <typename T>
FeatureMap<T> one_by_one_backward(const FeatureMap<T>& input, const MixMatrix<T>& mix,
                                  const FeatureMap<T>& grad_output, MixMatrix<T>& grad_mix);

// The phi weights that make phi_layer equal to one_by_one(mix):
// every 6-vector is (N * mix entry, 0, 0, 0, 0, 0).
template <typename T>
OperatorWeights<T> one_hot_phi_weights(const MixMatrix<T>& mix, int group_order);

// ---- normalization ---------------------------------------------------------

// Standard deviations are floored at this value, so inputs that are already
// standardized pass through unchanged and constant channels map to the bias.
inline constexpr double kBatchNormEps = 1e-5;

/// One scale and one bias per channel; statistics pooled over
/// (batch, vertex, orientation).
template <typename T>
struct BatchNormParams {
    std::vector<T> scale;
    std::vector<T> bias;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    double momentum = 0.1;

    explicit BatchNormParams(int channels = 0)
        : scale(channels, T(1)), bias(channels, T(0)), running_mean(channels, T(0)),
          running_var(channels, T(1)) {}
};

template <typename T>
struct BatchNormCache {
    std::vector<T> mean;
    std::vector<T> inv_std;
    std::vector<unsigned char> floored;  // std hit kBatchNormEps
    FeatureMap<T> normalized;
};

// training = true uses batch statistics and updates the running estimates;
// otherwise the running estimates are used. cache may be null.
template <typename T>
FeatureMap<T> orientation_batchnorm(const FeatureMap<T>& input, BatchNormParams<T>& params,
                                    bool training, BatchNormCache<T>* cache = nullptr);

template <typename T>
FeatureMap<T> orientation_batchnorm_backward(const BatchNormParams<T>& params,
                                             const BatchNormCache<T>& cache, bool training,
                                             const FeatureMap<T>& grad_output,
                                             std::vector<T>& grad_scale,
                                             std::vector<T>& grad_bias);

// ---- resampling and pointwise ---------------------------------------------

template <typename T>
FeatureMap<T> avg_pool(const FeatureMap<T>& input, const std::vector<std::vector<int>>& pool,
                       int coarse_level);
template <typename T>
FeatureMap<T> avg_pool_backward(const FeatureMap<T>& grad_output,
                                const std::vector<std::vector<int>>& pool, int fine_level,
                                int fine_vertices);

template <typename T>
FeatureMap<T> unpool(const FeatureMap<T>& input,
                     const std::vector<std::vector<InterpSource>>& interp, int fine_level);
template <typename T>
FeatureMap<T> unpool_backward(const FeatureMap<T>& grad_output,
                              const std::vector<std::vector<InterpSource>>& interp,
                              int coarse_level, int coarse_vertices);

template <typename T>
FeatureMap<T> relu(const FeatureMap<T>& input);
template <typename T>
FeatureMap<T> relu_backward(const FeatureMap<T>& input, const FeatureMap<T>& grad_output);

// Max over the orientation axis. argmax (first maximum) is returned through
// the optional out-parameter for the backward pass.
template <typename T>
FeatureMap<T> orientation_pool(const FeatureMap<T>& input, std::vector<int>* argmax = nullptr);
template <typename T>
FeatureMap<T> orientation_pool_backward(const FeatureMap<T>& input_shape_ref,
                                        const std::vector<int>& argmax,
                                        const FeatureMap<T>& grad_output);

// Mean over vertices; output has vertices == 1, level == -1.
template <typename T>
FeatureMap<T> global_pool(const FeatureMap<T>& input);
template <typename T>
FeatureMap<T> global_pool_backward(const FeatureMap<T>& input_shape_ref,
                                   const FeatureMap<T>& grad_output);

}  // namespace spdo
