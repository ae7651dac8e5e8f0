#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "meshflow/types.hpp"

namespace meshflow {

/// Fixed-connectivity triangle mesh with per-vertex/per-face organ labels.
/// Vertex order is the correspondence identity: every operation that deforms a
/// mesh must return the faces array unchanged, element for element.
struct TriMesh {
  MatX3 vertices;        // V x 3, mm
  MatX3i faces;          // F x 3, indices into vertices
  VecXi organ_of_vertex; // V
  VecXi organ_of_face;   // F

  Index num_vertices() const { return vertices.rows(); }
  Index num_faces() const { return faces.rows(); }
  bool empty() const { return vertices.rows() == 0; }

  /// Sorted unique organ ids present on faces.
  std::vector<int> organs() const;

  /// Faces/vertices restricted to one organ, with `vertex_map[new] = old`.
  TriMesh organ_submesh(int organ, std::vector<Index>* vertex_map = nullptr) const;

  /// Throws Error(shape_mismatch/...) when indices are out of range, a face
  /// repeats a vertex, or a face references vertices of another organ.
  void validate() const;
};

struct SurfaceSamples {
  MatX3 points;   // n x 3, mm
  int organ = 0;
  std::uint64_t seed = 0;
  MatX3 normals;  // n x 3 unit face normals of the generating faces; 0 rows if absent
};

/// Sample-to-face assignment that makes surface sampling differentiable: the
/// face index and barycentric weights are held fixed while the vertex
/// positions move, so the sampled points are a linear map of the vertices.
struct SampleAssignment {
  int organ = 0;
  VecXi face;  // n
  MatX3 bary;  // n x 3, rows sum to 1
};

struct MeshComponents {
  std::vector<std::vector<Index>> faces;     // face indices per component
  std::vector<std::vector<Index>> vertices;  // sorted vertex indices per component
};

/// Partition by face adjacency (shared undirected edge); components ordered by
/// their smallest vertex index.
MeshComponents connected_components(const TriMesh& mesh);

/// V - E + F per connected component, E counted over unique undirected edges.
std::vector<int> euler_characteristic(const TriMesh& mesh);

/// Unique undirected edges as (i, j) with i < j, lexicographically sorted.
std::vector<std::pair<int, int>> edge_set(const TriMesh& mesh);

/// Area-weighted face selection, uniform barycentric placement. Deterministic
/// for a fixed seed; the generator is keyed by (seed, organ, sample index) for
/// face selection and (seed, face, point index) for placement.
std::vector<SampleAssignment> assign_samples(const TriMesh& mesh, Index n_per_organ,
                                             std::uint64_t seed);
SampleAssignment assign_samples_organ(const TriMesh& mesh, int organ, Index n,
                                      std::uint64_t seed);

MatX3 realize_samples(const TriMesh& mesh, const SampleAssignment& assignment);

/// Scatter d(loss)/d(points) back to vertices through the barycentric weights.
void scatter_sample_gradient(const TriMesh& mesh, const SampleAssignment& assignment,
                             const MatX3& grad_points, MatX3& grad_vertices);

/// assign_samples + realize_samples, with generating-face normals recorded.
std::vector<SurfaceSamples> sample_surface(const TriMesh& mesh, Index n_per_organ,
                                           std::uint64_t seed);

double total_area(const TriMesh& mesh);

/// Sum of signed tetrahedron volumes; positive for outward-oriented closed
/// surfaces.
double enclosed_volume(const TriMesh& mesh);

/// true when every undirected edge of every organ has exactly two incident
/// faces.
bool is_closed(const TriMesh& mesh);

/// Angle-unweighted, area-weighted per-vertex normals (normalized; zero for
/// isolated vertices).
MatX3 vertex_normals(const TriMesh& mesh);

/// Append `other` (vertices renumbered); organ labels kept.
void append_mesh(TriMesh& base, const TriMesh& other);

// --- ASCII OBJ I/O. Vertex order is preserved exactly; organ ids travel as
// --- "g organ_<id>" groups emitted whenever the face organ changes.
void save_obj(const TriMesh& mesh, const std::string& path);
TriMesh load_obj(const std::string& path);

/// Sidecar "organ id -> name" table, one "<id> <name>" line per organ.
void save_organ_names(const std::vector<std::pair<int, std::string>>& names,
                      const std::string& path);
std::vector<std::pair<int, std::string>> load_organ_names(const std::string& path);

}  // namespace meshflow
