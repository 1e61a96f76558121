#pragma once

// Multi-level icosahedral spherical meshes.
//
// Level 0 is the unit icosahedron with a vertex on each pole:
//   0        north pole (0, 0, 1)
//   1..5     upper ring, z = 1/sqrt(5), longitude 2*pi*k/5
//   6..10    lower ring, z = -1/sqrt(5), longitude 2*pi*k/5 + pi/5
//   11       south pole
// Each further level splits every face into four and pushes edge midpoints
// back onto the unit sphere. Vertices of level L-1 keep their indices at
// level L; new midpoints are appended in order of first appearance while
// walking the coarse faces in order.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "spdo/geom.hpp"

namespace spdo {

inline constexpr int kMaxMeshLevel = 8;

struct EdgeChild {
    int a = 0;  // a < b, coarse vertex indices
    int b = 0;
    int child = 0;  // fine vertex index of the midpoint
};

struct IcoMesh {
    int level = 0;
    std::vector<Vec3> vertices;
    // 1-ring, counterclockwise seen from outside, starting at the smallest index.
    std::vector<std::vector<int>> neighbors;
    // Counterclockwise (outward normal) triangles.
    std::vector<std::array<int, 3>> faces;
    // level >= 1: coarse vertex i -> identical fine vertex (always i).
    std::vector<int> parent_vertex;
    // level >= 1: sorted by (a, b).
    std::vector<EdgeChild> edge_children;
    // level >= 1: for fine vertex v >= parent_vertex.size(), the coarse edge
    // endpoints it was spawned from.
    std::vector<std::array<int, 2>> midpoint_parents;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    int edge_count() const;
    SpherePoint point(int v) const { return SpherePoint::normalized(vertices[v]); }
};

// Expected combinatorics at a level: 10*4^L + 2, 30*4^L, 20*4^L.
long long expected_vertex_count(int level);
long long expected_edge_count(int level);
long long expected_face_count(int level);

// Throws DomainError outside [0, kMaxMeshLevel].
IcoMesh build_mesh(int level);

// Meshes for levels 0..level (index = level).
std::vector<IcoMesh> build_mesh_hierarchy(int level);

struct GridScaleStats {
    double mean = 0.0;  // mean over vertices of the mean neighbor chart radius
    double max = 0.0;   // max over vertices of the same per-vertex mean
};

GridScaleStats grid_scale_stats(const IcoMesh& mesh);

// Characteristic chart distance rho (the mean in grid_scale_stats).
double grid_scale(const IcoMesh& mesh);

// For each coarse vertex: its identical fine vertex followed by that vertex's
// fine 1-ring. Throws ShapeError unless fine.level == coarse.level + 1.
std::vector<std::vector<int>> pool_map(const IcoMesh& fine, const IcoMesh& coarse);

struct InterpSource {
    int index = 0;
    double weight = 0.0;
};

// For each fine vertex: copy (inherited vertex) or the average of the two
// endpoints of the coarse edge it subdivides.
std::vector<std::vector<InterpSource>> unpool_map(const IcoMesh& coarse, const IcoMesh& fine);

// Versioned JSON document {level, vertices, neighbors, faces}; doubles are
// written with 17 significant digits.
std::string mesh_to_json(const IcoMesh& mesh);
IcoMesh mesh_from_json(const std::string& text);
void save_mesh_json(const IcoMesh& mesh, const std::filesystem::path& path);
IcoMesh load_mesh_json(const std::filesystem::path& path);

}  // namespace spdo
