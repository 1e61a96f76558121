#include "spdo/stencil.hpp"

#include <sstream>

#include "spdo/error.hpp"
#include "spdo/io.hpp"
#include "spdo/version.hpp"

namespace spdo {

Eigen::Matrix<double, Eigen::Dynamic, 5> design_matrix(
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& xy) {
    Eigen::Matrix<double, Eigen::Dynamic, 5> v(xy.rows(), 5);
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
        const double x1 = xy(i, 0), x2 = xy(i, 1);
        v(i, 0) = x1;
        v(i, 1) = x2;
        v(i, 2) = 0.5 * x1 * x1;
        v(i, 3) = x1 * x2;
        v(i, 4) = 0.5 * x2 * x2;
    }
    return v;
}

StencilSet build_stencils(const IcoMesh& mesh) {
    StencilSet set;
    set.mesh_level = mesh.level;
    set.stencils.resize(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        VertexStencil& st = set.stencils[v];
        st.vertex = v;
        st.neighbor_idx = mesh.neighbors[v];
        const int m = st.size();
        const ChartFrame frame = ChartFrame::at(mesh.point(v));
        st.chart_xy.resize(m, 2);
        for (int i = 0; i < m; ++i) {
            st.chart_xy.row(i) = chart_forward(frame, mesh.point(st.neighbor_idx[i])).transpose();
        }
        const auto vp = design_matrix(st.chart_xy);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(vp, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        const double cutoff = kStencilRcond * sv(0);
        Eigen::Index rank = 0;
        for (Eigen::Index k = 0; k < sv.size(); ++k)
            if (sv(k) > cutoff) ++rank;
        if (rank < 5) {
            std::ostringstream os;
            os << "build_stencils: V_P at vertex " << v << " has numerical rank " << rank
               << " < 5";
            throw NumericError(os.str());
        }
        st.sigma_ratio = sv(sv.size() - 1) / sv(0);
        // pinv = V S^-1 U^T
        const Eigen::MatrixXd p =
            svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
        st.pinv = p;
    }
    return set;
}

Deriv5 apply_stencil(const VertexStencil& st, std::span<const double> values) {
    const int m = st.size();
    if (values.size() != static_cast<std::size_t>(m + 1)) {
        std::ostringstream os;
        os << "apply_stencil: expected " << (m + 1) << " values at vertex " << st.vertex << ", got "
           << values.size();
        throw ShapeError(os.str());
    }
    Eigen::VectorXd diff(m);
    for (int i = 0; i < m; ++i) diff(i) = values[i + 1] - values[0];
    return st.pinv * diff;
}

Deriv5 apply_stencil_to_signal(const VertexStencil& st, std::span<const double> signal) {
    std::vector<double> vals;
    vals.reserve(st.neighbor_idx.size() + 1);
    vals.push_back(signal[st.vertex]);
    for (int q : st.neighbor_idx) vals.push_back(signal[q]);
    return apply_stencil(st, vals);
}

namespace {
constexpr std::string_view kStencilMagic = "SPDOSTEN";
}

void save_stencils(const StencilSet& set, const std::filesystem::path& path) {
    io::BinaryWriter w;
    w.magic(kStencilMagic);
    w.u32(kStencilFormatVersion);
    w.str(kToolVersion);
    w.u64(0);
    w.u32(static_cast<std::uint32_t>(set.mesh_level));
    w.u64(static_cast<std::uint64_t>(set.vertex_count()));
    for (const auto& st : set.stencils) {
        w.u32(static_cast<std::uint32_t>(st.size()));
        for (int q : st.neighbor_idx) w.u32(static_cast<std::uint32_t>(q));
        for (int k = 0; k < 5; ++k)
            for (int i = 0; i < st.size(); ++i) w.f64(st.pinv(k, i));
    }
    io::write_file_atomic(path, w.buffer());
}

StencilSet load_stencils(const std::filesystem::path& path) {
    io::BinaryReader r(io::read_file(path));
    r.expect_magic(kStencilMagic, "stencil cache");
    if (r.u32() != kStencilFormatVersion) throw FormatError("stencil cache: unsupported version");
    (void)r.str();
    (void)r.u64();
    StencilSet set;
    set.mesh_level = static_cast<int>(r.u32());
    const std::uint64_t nv = r.u64();
    if (nv > (1ULL << 24)) throw FormatError("stencil cache: implausible vertex count");
    set.stencils.resize(nv);
    for (std::uint64_t v = 0; v < nv; ++v) {
        VertexStencil& st = set.stencils[v];
        st.vertex = static_cast<int>(v);
        const std::uint32_t m = r.u32();
        if (m < 5 || m > 64) throw FormatError("stencil cache: bad stencil size");
        st.neighbor_idx.resize(m);
        for (auto& q : st.neighbor_idx) {
            q = static_cast<int>(r.u32());
            if (static_cast<std::uint64_t>(q) >= nv) throw FormatError("stencil cache: bad index");
        }
        st.pinv.resize(5, m);
        for (int k = 0; k < 5; ++k)
            for (std::uint32_t i = 0; i < m; ++i) st.pinv(k, i) = r.f64();
    }
    if (!r.at_end()) throw FormatError("stencil cache: trailing bytes");
    return set;
}

StencilSet load_or_build_stencils(const IcoMesh& mesh, const std::filesystem::path& cache_dir) {
    const auto path = cache_dir / ("stencils_L" + std::to_string(mesh.level) + ".bin");
    if (std::filesystem::exists(path)) {
        StencilSet s = load_stencils(path);
        if (s.mesh_level == mesh.level && s.vertex_count() == mesh.vertex_count()) return s;
    }
    StencilSet s = build_stencils(mesh);
    std::filesystem::create_directories(cache_dir);
    save_stencils(s, path);
    return s;
}

template <typename T>
CompactStencil<T> CompactStencil<T>::from(const StencilSet& set) {
    CompactStencil<T> c;
    c.vertices = set.vertex_count();
    c.offset.resize(c.vertices + 1, 0);
    for (int v = 0; v < c.vertices; ++v) c.offset[v + 1] = c.offset[v] + set.stencils[v].size();
    c.nbr.resize(c.offset.back());
    c.weight.resize(5 * c.offset.back());
    c.center.resize(5 * c.vertices);
    for (int v = 0; v < c.vertices; ++v) {
        const auto& st = set.stencils[v];
        for (int k = 0; k < 5; ++k) {
            double sum = 0.0;
            for (int j = 0; j < st.size(); ++j) {
                c.weight[5 * (c.offset[v] + j) + k] = static_cast<T>(st.pinv(k, j));
                sum += st.pinv(k, j);
            }
            c.center[5 * v + k] = static_cast<T>(-sum);
        }
        for (int j = 0; j < st.size(); ++j) c.nbr[c.offset[v] + j] = st.neighbor_idx[j];
    }
    return c;
}

template struct CompactStencil<float>;
template struct CompactStencil<double>;

}  // namespace spdo
