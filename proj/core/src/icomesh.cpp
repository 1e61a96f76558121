#include "spdo/icomesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "spdo/error.hpp"
#include "spdo/io.hpp"
#include "spdo/version.hpp"

namespace spdo {

namespace {

IcoMesh make_level0() {
    IcoMesh m;
    m.level = 0;
    const double z = 1.0 / std::sqrt(5.0);
    const double r = 2.0 / std::sqrt(5.0);
    m.vertices.emplace_back(0.0, 0.0, 1.0);
    for (int k = 0; k < 5; ++k) {
        const double lon = kTwoPi * k / 5.0;
        m.vertices.emplace_back(r * std::cos(lon), r * std::sin(lon), z);
    }
    for (int k = 0; k < 5; ++k) {
        const double lon = kTwoPi * k / 5.0 + kPi / 5.0;
        m.vertices.emplace_back(r * std::cos(lon), r * std::sin(lon), -z);
    }
    m.vertices.emplace_back(0.0, 0.0, -1.0);

    auto up = [](int k) { return 1 + (k % 5); };
    auto lo = [](int k) { return 6 + (k % 5); };
    for (int k = 0; k < 5; ++k) m.faces.push_back({0, up(k), up(k + 1)});
    for (int k = 0; k < 5; ++k) m.faces.push_back({up(k), lo(k), up(k + 1)});
    for (int k = 0; k < 5; ++k) m.faces.push_back({up(k + 1), lo(k), lo(k + 1)});
    for (int k = 0; k < 5; ++k) m.faces.push_back({11, lo(k + 1), lo(k)});

    for (auto& f : m.faces) {
        const Vec3& a = m.vertices[f[0]];
        const Vec3& b = m.vertices[f[1]];
        const Vec3& c = m.vertices[f[2]];
        if ((b - a).cross(c - a).dot(a + b + c) < 0.0) std::swap(f[1], f[2]);
    }
    return m;
}

void build_neighbors(IcoMesh& m) {
    const int nv = m.vertex_count();
    // next[v][u] = w when (v, u, w) is a counterclockwise corner of some face.
    std::vector<std::map<int, int>> next(nv);
    for (const auto& f : m.faces) {
        for (int c = 0; c < 3; ++c) {
            next[f[c]][f[(c + 1) % 3]] = f[(c + 2) % 3];
        }
    }
    m.neighbors.assign(nv, {});
    for (int v = 0; v < nv; ++v) {
        const auto& nx = next[v];
        const int start = nx.begin()->first;  // smallest neighbor index
        std::vector<int> ring{start};
        int cur = nx.at(start);
        while (cur != start) {
            ring.push_back(cur);
            cur = nx.at(cur);
            if (ring.size() > nx.size()) throw std::logic_error("icomesh: non-manifold vertex ring");
        }
        m.neighbors[v] = std::move(ring);
    }
}

IcoMesh subdivide(const IcoMesh& coarse) {
    IcoMesh fine;
    fine.level = coarse.level + 1;
    fine.vertices = coarse.vertices;
    fine.parent_vertex.resize(coarse.vertices.size());
    std::iota(fine.parent_vertex.begin(), fine.parent_vertex.end(), 0);

    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const int idx = static_cast<int>(fine.vertices.size());
        fine.vertices.push_back((coarse.vertices[a] + coarse.vertices[b]).normalized());
        fine.midpoint_parents.push_back({key.first, key.second});
        midpoint.emplace(key, idx);
        return idx;
    };

    fine.faces.reserve(coarse.faces.size() * 4);
    for (const auto& f : coarse.faces) {
        const int a = f[0], b = f[1], c = f[2];
        const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        fine.faces.push_back({a, ab, ca});
        fine.faces.push_back({ab, b, bc});
        fine.faces.push_back({ca, bc, c});
        fine.faces.push_back({ab, bc, ca});
    }
    fine.edge_children.reserve(midpoint.size());
    for (const auto& [key, child] : midpoint) {
        fine.edge_children.push_back({key.first, key.second, child});
    }
    build_neighbors(fine);
    return fine;
}

void check_level(int level) {
    if (level < 0 || level > kMaxMeshLevel) {
        std::ostringstream os;
        os << "mesh level " << level << " outside [0, " << kMaxMeshLevel << "]";
        throw DomainError(os.str());
    }
}

}  // namespace

int IcoMesh::edge_count() const {
    std::size_t deg = 0;
    for (const auto& n : neighbors) deg += n.size();
    return static_cast<int>(deg / 2);
}

long long expected_vertex_count(int level) { return 10LL * (1LL << (2 * level)) + 2; }
long long expected_edge_count(int level) { return 30LL * (1LL << (2 * level)); }
long long expected_face_count(int level) { return 20LL * (1LL << (2 * level)); }

std::vector<IcoMesh> build_mesh_hierarchy(int level) {
    check_level(level);
    std::vector<IcoMesh> out;
    out.reserve(level + 1);
    IcoMesh m0 = make_level0();
    build_neighbors(m0);
    out.push_back(std::move(m0));
    for (int l = 1; l <= level; ++l) out.push_back(subdivide(out.back()));
    return out;
}

IcoMesh build_mesh(int level) {
    check_level(level);
    IcoMesh m = make_level0();
    build_neighbors(m);
    for (int l = 1; l <= level; ++l) m = subdivide(m);
    return m;
}

GridScaleStats grid_scale_stats(const IcoMesh& mesh) {
    GridScaleStats s;
    const int nv = mesh.vertex_count();
    for (int v = 0; v < nv; ++v) {
        const ChartFrame frame = ChartFrame::at(mesh.point(v));
        double acc = 0.0;
        for (int q : mesh.neighbors[v]) acc += chart_forward(frame, mesh.point(q)).norm();
        const double r = acc / static_cast<double>(mesh.neighbors[v].size());
        s.mean += r;
        s.max = std::max(s.max, r);
    }
    s.mean /= nv;
    return s;
}

double grid_scale(const IcoMesh& mesh) { return grid_scale_stats(mesh).mean; }

namespace {

void check_adjacent_levels(const IcoMesh& fine, const IcoMesh& coarse, const char* what) {
    if (fine.level != coarse.level + 1 ||
        fine.parent_vertex.size() != static_cast<std::size_t>(coarse.vertex_count())) {
        std::ostringstream os;
        os << what << ": fine level " << fine.level << " is not coarse level " << coarse.level
           << " + 1 (or fine mesh lacks refinement data)";
        throw ShapeError(os.str());
    }
}

}  // namespace

std::vector<std::vector<int>> pool_map(const IcoMesh& fine, const IcoMesh& coarse) {
    check_adjacent_levels(fine, coarse, "pool_map");
    std::vector<std::vector<int>> out(coarse.vertex_count());
    for (int c = 0; c < coarse.vertex_count(); ++c) {
        const int f = fine.parent_vertex[c];
        out[c].push_back(f);
        out[c].insert(out[c].end(), fine.neighbors[f].begin(), fine.neighbors[f].end());
    }
    return out;
}

std::vector<std::vector<InterpSource>> unpool_map(const IcoMesh& coarse, const IcoMesh& fine) {
    check_adjacent_levels(fine, coarse, "unpool_map");
    const int nc = coarse.vertex_count();
    std::vector<std::vector<InterpSource>> out(fine.vertex_count());
    for (int c = 0; c < nc; ++c) out[fine.parent_vertex[c]] = {{c, 1.0}};
    for (std::size_t k = 0; k < fine.midpoint_parents.size(); ++k) {
        const auto& [a, b] = fine.midpoint_parents[k];
        out[nc + k] = {{a, 0.5}, {b, 0.5}};
    }
    return out;
}

std::string mesh_to_json(const IcoMesh& mesh) {
    // Hand-written so that doubles carry exactly 17 significant digits.
    std::ostringstream os;
    os << "{\n";
    os << "  \"format\": \"spdo-icomesh\",\n";
    os << "  \"format_version\": " << kMeshFormatVersion << ",\n";
    os << "  \"tool_version\": \"" << kToolVersion << "\",\n";
    os << "  \"seed\": 0,\n";
    os << "  \"level\": " << mesh.level << ",\n";
    os << "  \"vertices\": [";
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Vec3& p = mesh.vertices[v];
        os << (v ? ",\n    " : "\n    ") << '[' << io::format_double(p.x()) << ", "
           << io::format_double(p.y()) << ", " << io::format_double(p.z()) << ']';
    }
    os << "\n  ],\n  \"neighbors\": [";
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        os << (v ? ",\n    " : "\n    ") << '[';
        for (std::size_t k = 0; k < mesh.neighbors[v].size(); ++k)
            os << (k ? ", " : "") << mesh.neighbors[v][k];
        os << ']';
    }
    os << "\n  ],\n  \"faces\": [";
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        os << (f ? ",\n    " : "\n    ") << '[' << t[0] << ", " << t[1] << ", " << t[2] << ']';
    }
    os << "\n  ]\n}\n";
    return os.str();
}

IcoMesh mesh_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("mesh json: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "spdo-icomesh")
            throw FormatError("mesh json: not an spdo-icomesh document");
        if (j.at("format_version").get<std::uint32_t>() != kMeshFormatVersion)
            throw FormatError("mesh json: unsupported format_version");
        IcoMesh m;
        m.level = j.at("level").get<int>();
        for (const auto& p : j.at("vertices")) m.vertices.emplace_back(p.at(0), p.at(1), p.at(2));
        m.neighbors = j.at("neighbors").get<std::vector<std::vector<int>>>();
        m.faces = j.at("faces").get<std::vector<std::array<int, 3>>>();
        if (m.neighbors.size() != m.vertices.size())
            throw FormatError("mesh json: neighbors/vertices length mismatch");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("mesh json: ") + e.what());
    }
}

void save_mesh_json(const IcoMesh& mesh, const std::filesystem::path& path) {
    io::write_file_atomic(path, mesh_to_json(mesh));
}

IcoMesh load_mesh_json(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return mesh_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace spdo
