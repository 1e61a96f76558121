#pragma once

// Per-vertex least-squares estimation of chart derivatives.
//
// At vertex P with 1-ring Q_1..Q_m, each neighbor is mapped into P's chart,
// x_i = phi_P(Q_i), and the second-order Taylor model
//     f(Q_i) - f(P) ~ V_P * D_P,
//     V_P row i = (x_i1, x_i2, x_i1^2/2, x_i1 x_i2, x_i2^2/2),
//     D_P = (d1, d2, d11, d12, d22)
// is solved in the least-squares sense, D_hat = pinv(V_P) (f(Q) - f(P)).

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spdo/icomesh.hpp"

namespace spdo {

// Singular values below this fraction of the largest are discarded.
inline constexpr double kStencilRcond = 1e-10;

using Deriv5 = Eigen::Matrix<double, 5, 1>;

struct VertexStencil {
    int vertex = 0;
    std::vector<int> neighbor_idx;
    Eigen::Matrix<double, Eigen::Dynamic, 2> chart_xy;  // m x 2
    Eigen::Matrix<double, 5, Eigen::Dynamic> pinv;      // 5 x m
    double sigma_ratio = 0.0;                           // sigma_min / sigma_max of V_P

    int size() const { return static_cast<int>(neighbor_idx.size()); }
};

struct StencilSet {
    int mesh_level = 0;
    std::vector<VertexStencil> stencils;

    int vertex_count() const { return static_cast<int>(stencils.size()); }
};

// Design matrix rows (x1, x2, x1^2/2, x1 x2, x2^2/2).
Eigen::Matrix<double, Eigen::Dynamic, 5> design_matrix(
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& chart_xy);

// Throws NumericError naming the vertex when V_P is rank deficient.
StencilSet build_stencils(const IcoMesh& mesh);

// values = (f(P), f(Q_1), ..., f(Q_m)). Throws ShapeError on length mismatch.
Deriv5 apply_stencil(const VertexStencil& st, std::span<const double> values);

// Gathers center and neighbor samples from a per-vertex signal and applies the
// stencil.
Deriv5 apply_stencil_to_signal(const VertexStencil& st, std::span<const double> signal);

// Binary cache: magic "SPDOSTEN", u32 format version, tool version string,
// u64 seed (always 0), u32 level, u64 vertex count, then per vertex u32 m,
// m x u32 neighbor index, 5*m f64 pinv entries in row-major order. All
// little-endian.
void save_stencils(const StencilSet& set, const std::filesystem::path& path);
StencilSet load_stencils(const std::filesystem::path& path);

// Loads "<dir>/stencils_L<level>.bin" when present and matching the mesh,
// otherwise builds and writes it.
StencilSet load_or_build_stencils(const IcoMesh& mesh, const std::filesystem::path& cache_dir);

// Flattened stencil for the layer kernels:
//   D_hat_k(v) = center[5v + k] * f(v) + sum_j weight[5(offset[v] + j) + k] * f(nbr[offset[v] + j])
template <typename T>
struct CompactStencil {
    int vertices = 0;
    std::vector<int> offset;  // vertices + 1
    std::vector<int> nbr;
    std::vector<T> weight;
    std::vector<T> center;

    static CompactStencil from(const StencilSet& set);
};

}  // namespace spdo
