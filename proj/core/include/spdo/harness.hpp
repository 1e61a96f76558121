#pragma once

// Convergence and equivariance measurements against the continuous oracle.
// Every "exact" baseline here comes from oracle.hpp, never from a finer mesh.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spdo/icomesh.hpp"
#include "spdo/oracle.hpp"
#include "spdo/stencil.hpp"

namespace spdo {

struct ReportRow {
    double x = 0.0;        // level or N
    double max_err = 0.0;
    double mean_err = 0.0;
    double ratio = 0.0;    // previous max_err / this max_err (0 for the first row)
    double rho = 0.0;      // mean grid scale when x is a level, 0 otherwise
    double rho_max = 0.0;
};

struct ConvergenceReport {
    std::string quantity;
    std::string axis;  // "level" or "n"
    std::vector<ReportRow> rows;

    // Least-squares slope of log2(max_err) against x (level) or log2(x) (n).
    double log2_slope() const;
    void finalize();  // fills ratios

    bool strictly_decreasing() const;
    double min_ratio() const;
    double max_ratio() const;
};

// CSV: "# key=value" header lines (tool and format versions, seed, quantity),
// then columns level_or_n,max_err,mean_err,ratio,rho,rho_max.
std::string report_csv(const ConvergenceReport& r, std::uint64_t seed);
void print_report_table(std::ostream& os, const ConvergenceReport& r);

/// Meshes and stencils for a range of levels, built once.
struct LevelData {
    IcoMesh mesh;
    StencilSet stencils;
    CompactStencil<double> compact;
    GridScaleStats rho;
};
LevelData make_level(int level);

struct ConsistencyResult {
    ConvergenceReport first;   // max over vertices of |D_hat - D| for d1, d2
    ConvergenceReport second;  // same for d11, d12, d22
};

// Stencil derivative error against the oracle's chart derivatives of f at
// every vertex. Levels must lie in [0, kMaxMeshLevel].
ConsistencyResult stencil_consistency(const std::vector<int>& levels, const SmoothTestFn& f);

// Max over vertices of the stencil error on random chart quadratics (should be
// round-off only).
double stencil_quadratic_exactness(const LevelData& level, std::uint64_t seed);

struct PsiDefectOptions {
    int n = 16;
    int trials = 20;
    std::uint64_t seed = 7;
    bool value_only = false;  // w = (1, 0, ..., 0)
    bool identity = false;    // R~ = I
};

// max_{P,i} |Psi_tilde[pi_R~ I](P, i) - Psi[pi_R~ s](P, A_i)| where the right
// side is the exact oracle value at R = Pbar_P Z(2 pi i / N), which equals
// the rotated continuous output there. Inputs are Gaussian bumps with random
// centers, weights are random 6-vectors; one (R~, s, w) draw per trial.
ConvergenceReport psi_equivariance_error(const std::vector<int>& levels, const PsiDefectOptions& opt);

struct PhiQuadratureOptions {
    int level = 5;
    std::vector<int> n_values{2, 4, 8, 16, 32};
    int reference_n = kReferenceQuadrature;
    int trials = 4;
    int vertex_stride = 1;  // evaluate every k-th vertex
    std::uint64_t seed = 7;
    enum class Family { Constant, Cosine, Poisson } family = Family::Poisson;
};

// Quadrature component of the hidden-layer defect: |Phi_N - Phi_ref| at the
// mesh vertices and the N discrete orientations, using exact chart derivatives.
ConvergenceReport phi_quadrature_error(const PhiQuadratureOptions& opt);

struct PhiLevelOptions {
    int n = 8;
    int trials = 4;
    std::uint64_t seed = 7;
    bool identity = false;
};

// Discretization component: phi_layer on a transported family sampled on the
// mesh against the N-point continuous quadrature with exact derivatives.
ConvergenceReport phi_level_error(const std::vector<int>& levels, const PhiLevelOptions& opt);

struct SmokeOptions {
    int n = 8;
    int channels = 2;
    int trials = 3;
    bool relu = true;
    bool identity_mix = false;  // 1x1-only stack with identity weights
    double polar_cap = 0.35;    // radians excluded around each pole
    // Feed the second layer exact first-layer samples instead of psi_layer's
    // output; isolates the second layer's own discretization error.
    bool exact_first_layer = false;
    std::uint64_t seed = 7;
};

struct SmokeRow {
    int level = 0;
    std::vector<double> max_defect_per_depth;  // [0] after psi, [1] after phi
};

// Psi -> (relu) -> Phi stack on the sampled rotated input against the same
// stack evaluated on the continuous rotated input (exact Psi; Phi from
// fourth-order differences of the continuous first layer through the charts).
std::vector<SmokeRow> network_equivariance_smoke(const std::vector<int>& levels, const SmokeOptions& opt);

}  // namespace spdo
