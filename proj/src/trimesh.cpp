#include "meshflow/trimesh.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "meshflow/rng.hpp"

namespace meshflow {

std::vector<int> TriMesh::organs() const {
  std::set<int> ids(organ_of_face.begin(), organ_of_face.end());
  return {ids.begin(), ids.end()};
}

TriMesh TriMesh::organ_submesh(int organ, std::vector<Index>* vertex_map) const {
  std::vector<Index> old_of_new;
  std::vector<Index> new_of_old(num_vertices(), -1);
  TriMesh out;

  Index nf = 0;
  for (Index f = 0; f < num_faces(); ++f)
    if (organ_of_face[f] == organ) ++nf;
  out.faces.resize(nf, 3);
  out.organ_of_face = VecXi::Constant(nf, organ);

  Index fi = 0;
  for (Index f = 0; f < num_faces(); ++f) {
    if (organ_of_face[f] != organ) continue;
    for (int k = 0; k < 3; ++k) {
      const Index v = faces(f, k);
      if (new_of_old[v] < 0) {
        new_of_old[v] = Index(old_of_new.size());
        old_of_new.push_back(v);
      }
      out.faces(fi, k) = int(new_of_old[v]);
    }
    ++fi;
  }

  out.vertices.resize(Index(old_of_new.size()), 3);
  out.organ_of_vertex = VecXi::Constant(Index(old_of_new.size()), organ);
  for (Index i = 0; i < Index(old_of_new.size()); ++i)
    out.vertices.row(i) = vertices.row(old_of_new[i]);
  if (vertex_map) *vertex_map = std::move(old_of_new);
  return out;
}

void TriMesh::validate() const {
  if (organ_of_vertex.size() != num_vertices() || organ_of_face.size() != num_faces())
    raise(errc::shape_mismatch, "organ label arrays do not match mesh sizes");
  for (Index f = 0; f < num_faces(); ++f) {
    const int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
    if (a < 0 || b < 0 || c < 0 || a >= num_vertices() || b >= num_vertices() ||
        c >= num_vertices())
      raise(errc::shape_mismatch, "face index out of range");
    if (a == b || b == c || a == c) raise(errc::shape_mismatch, "degenerate face indices");
    const int organ = organ_of_face[f];
    if (organ_of_vertex[a] != organ || organ_of_vertex[b] != organ || organ_of_vertex[c] != organ)
      raise(errc::organ_mismatch, "face references vertices of another organ");
  }
}

std::vector<std::pair<int, int>> edge_set(const TriMesh& mesh) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(mesh.num_faces() * 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int i = mesh.faces(f, k), j = mesh.faces(f, (k + 1) % 3);
      if (i > j) std::swap(i, j);
      edges.emplace_back(i, j);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

namespace {

// union-find over faces through shared undirected edges
struct DisjointSet {
  std::vector<Index> parent;
  explicit DisjointSet(Index n) : parent(n) { std::iota(parent.begin(), parent.end(), Index(0)); }
  Index find(Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

MeshComponents connected_components(const TriMesh& mesh) {
  const Index nf = mesh.num_faces();
  DisjointSet ds(nf);

  std::unordered_map<std::uint64_t, Index> first_face_of_edge;
  first_face_of_edge.reserve(nf * 3);
  for (Index f = 0; f < nf; ++f) {
    for (int k = 0; k < 3; ++k) {
      int i = mesh.faces(f, k), j = mesh.faces(f, (k + 1) % 3);
      if (i > j) std::swap(i, j);
      const std::uint64_t key = (std::uint64_t(std::uint32_t(i)) << 32) | std::uint32_t(j);
      auto [it, inserted] = first_face_of_edge.emplace(key, f);
      if (!inserted) ds.unite(it->second, f);
    }
  }

  // group faces by root; order components by their smallest vertex index
  std::map<Index, std::vector<Index>> by_root;
  for (Index f = 0; f < nf; ++f) by_root[ds.find(f)].push_back(f);

  struct Comp {
    Index min_vertex;
    std::vector<Index> faces;
  };
  std::vector<Comp> comps;
  comps.reserve(by_root.size());
  for (auto& [root, face_list] : by_root) {
    Index min_v = mesh.num_vertices();
    for (Index f : face_list)
      for (int k = 0; k < 3; ++k) min_v = std::min(min_v, Index(mesh.faces(f, k)));
    comps.push_back({min_v, std::move(face_list)});
  }
  std::sort(comps.begin(), comps.end(),
            [](const Comp& a, const Comp& b) { return a.min_vertex < b.min_vertex; });

  MeshComponents out;
  for (auto& comp : comps) {
    std::set<Index> verts;
    for (Index f : comp.faces)
      for (int k = 0; k < 3; ++k) verts.insert(Index(mesh.faces(f, k)));
    out.faces.push_back(std::move(comp.faces));
    out.vertices.emplace_back(verts.begin(), verts.end());
  }
  return out;
}

std::vector<int> euler_characteristic(const TriMesh& mesh) {
  const MeshComponents comps = connected_components(mesh);
  std::vector<int> chi;
  chi.reserve(comps.faces.size());
  for (size_t c = 0; c < comps.faces.size(); ++c) {
    std::set<std::pair<int, int>> edges;
    for (Index f : comps.faces[c]) {
      for (int k = 0; k < 3; ++k) {
        int i = mesh.faces(f, k), j = mesh.faces(f, (k + 1) % 3);
        if (i > j) std::swap(i, j);
        edges.emplace(i, j);
      }
    }
    chi.push_back(int(comps.vertices[c].size()) - int(edges.size()) + int(comps.faces[c].size()));
  }
  return chi;
}

double total_area(const TriMesh& mesh) {
  double area = 0.0;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

double enclosed_volume(const TriMesh& mesh) {
  double six_vol = 0.0;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
    six_vol += a.dot(b.cross(c));
  }
  return six_vol / 6.0;
}

bool is_closed(const TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> incidence;
  incidence.reserve(mesh.num_faces() * 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int i = mesh.faces(f, k), j = mesh.faces(f, (k + 1) % 3);
      if (i > j) std::swap(i, j);
      ++incidence[(std::uint64_t(std::uint32_t(i)) << 32) | std::uint32_t(j)];
    }
  }
  for (const auto& [key, count] : incidence)
    if (count != 2) return false;
  return true;
}

MatX3 vertex_normals(const TriMesh& mesh) {
  MatX3 normals = MatX3::Zero(mesh.num_vertices(), 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
    const Vec3 fn = (b - a).cross(c - a);  // area-weighted
    for (int k = 0; k < 3; ++k) normals.row(mesh.faces(f, k)) += fn.transpose();
  }
  for (Index v = 0; v < normals.rows(); ++v) {
    const double len = normals.row(v).norm();
    if (len > 0.0) normals.row(v) /= len;
  }
  return normals;
}

void append_mesh(TriMesh& base, const TriMesh& other) {
  const Index v0 = base.num_vertices(), f0 = base.num_faces();
  base.vertices.conservativeResize(v0 + other.num_vertices(), 3);
  base.vertices.bottomRows(other.num_vertices()) = other.vertices;
  base.faces.conservativeResize(f0 + other.num_faces(), 3);
  base.faces.bottomRows(other.num_faces()) = other.faces.array() + int(v0);
  base.organ_of_vertex.conservativeResize(v0 + other.num_vertices());
  base.organ_of_vertex.tail(other.num_vertices()) = other.organ_of_vertex;
  base.organ_of_face.conservativeResize(f0 + other.num_faces());
  base.organ_of_face.tail(other.num_faces()) = other.organ_of_face;
}

// --- sampling ---------------------------------------------------------------

SampleAssignment assign_samples_organ(const TriMesh& mesh, int organ, Index n,
                                      std::uint64_t seed) {
  // area CDF over this organ's faces, in face order
  std::vector<Index> organ_faces;
  std::vector<double> cdf;
  double total = 0.0;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    if (mesh.organ_of_face[f] != organ) continue;
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
    total += 0.5 * (b - a).cross(c - a).norm();
    organ_faces.push_back(f);
    cdf.push_back(total);
  }
  if (total <= 0.0) raise(errc::zero_area, "organ " + std::to_string(organ) + " has zero area");

  SampleAssignment assignment;
  assignment.organ = organ;
  assignment.face.resize(n);
  assignment.bary.resize(n, 3);

  std::vector<Index> count_on_face(organ_faces.size(), 0);
  for (Index s = 0; s < n; ++s) {
    const double u = uniform01(seed, std::uint64_t(organ), std::uint64_t(s), 0xFACE) * total;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const Index pos = std::min<Index>(Index(it - cdf.begin()), Index(cdf.size()) - 1);
    const Index face = organ_faces[pos];
    const Index k = count_on_face[pos]++;
    // uniform barycentric placement, keyed (seed, face, point-within-face)
    const double r1 = uniform01(seed, std::uint64_t(face), std::uint64_t(k), 1);
    const double r2 = uniform01(seed, std::uint64_t(face), std::uint64_t(k), 2);
    const double s1 = std::sqrt(r1);
    assignment.face[s] = int(face);
    assignment.bary(s, 0) = 1.0 - s1;
    assignment.bary(s, 1) = s1 * (1.0 - r2);
    assignment.bary(s, 2) = s1 * r2;
  }
  return assignment;
}

std::vector<SampleAssignment> assign_samples(const TriMesh& mesh, Index n_per_organ,
                                             std::uint64_t seed) {
  std::vector<SampleAssignment> out;
  for (int organ : mesh.organs())
    out.push_back(assign_samples_organ(mesh, organ, n_per_organ, seed));
  return out;
}

MatX3 realize_samples(const TriMesh& mesh, const SampleAssignment& assignment) {
  MatX3 points(assignment.face.size(), 3);
  for (Index s = 0; s < assignment.face.size(); ++s) {
    const Index f = assignment.face[s];
    points.row(s) = assignment.bary(s, 0) * mesh.vertices.row(mesh.faces(f, 0)) +
                    assignment.bary(s, 1) * mesh.vertices.row(mesh.faces(f, 1)) +
                    assignment.bary(s, 2) * mesh.vertices.row(mesh.faces(f, 2));
  }
  return points;
}

void scatter_sample_gradient(const TriMesh& mesh, const SampleAssignment& assignment,
                             const MatX3& grad_points, MatX3& grad_vertices) {
  for (Index s = 0; s < assignment.face.size(); ++s) {
    const Index f = assignment.face[s];
    for (int k = 0; k < 3; ++k)
      grad_vertices.row(mesh.faces(f, k)) += assignment.bary(s, k) * grad_points.row(s);
  }
}

std::vector<SurfaceSamples> sample_surface(const TriMesh& mesh, Index n_per_organ,
                                           std::uint64_t seed) {
  std::vector<SurfaceSamples> out;
  for (const SampleAssignment& assignment : assign_samples(mesh, n_per_organ, seed)) {
    SurfaceSamples samples;
    samples.organ = assignment.organ;
    samples.seed = seed;
    samples.points = realize_samples(mesh, assignment);
    samples.normals.resize(assignment.face.size(), 3);
    for (Index s = 0; s < assignment.face.size(); ++s) {
      const Index f = assignment.face[s];
      const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
      const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
      const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
      Vec3 n = (b - a).cross(c - a);
      const double len = n.norm();
      if (len > 0.0) n /= len;
      samples.normals.row(s) = n.transpose();
    }
    out.push_back(std::move(samples));
  }
  return out;
}

// --- OBJ I/O -----------------------------------------------------------------

void save_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(errc::io_error, "cannot open " + path + " for writing");
  char buf[128];
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", mesh.vertices(v, 0),
                  mesh.vertices(v, 1), mesh.vertices(v, 2));
    out << buf;
  }
  int current_organ = std::numeric_limits<int>::min();
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    if (mesh.organ_of_face[f] != current_organ) {
      current_organ = mesh.organ_of_face[f];
      out << "g organ_" << current_organ << "\n";
    }
    out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' '
        << mesh.faces(f, 2) + 1 << "\n";
  }
  if (!out) raise(errc::io_error, "write failed: " + path);
}

TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot open " + path);

  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::vector<int> face_organ;
  int current_organ = 1;

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      ss >> p.x() >> p.y() >> p.z();
      if (!ss) raise(errc::io_error, "malformed vertex line in " + path);
      verts.push_back(p);
    } else if (tag == "g") {
      std::string name;
      ss >> name;
      if (name.rfind("organ_", 0) == 0) {
        try {
          current_organ = std::stoi(name.substr(6));
        } catch (const std::exception&) {
          raise(errc::io_error, "bad group name '" + name + "' in " + path);
        }
      }
    } else if (tag == "f") {
      std::array<int, 3> f {};
      for (int k = 0; k < 3; ++k) {
        std::string token;
        ss >> token;
        if (token.empty()) raise(errc::io_error, "malformed face line in " + path);
        // tolerate v/vt/vn references
        f[k] = std::stoi(token.substr(0, token.find('/'))) - 1;
      }
      faces.push_back(f);
      face_organ.push_back(current_organ);
    }
  }

  TriMesh mesh;
  mesh.vertices.resize(Index(verts.size()), 3);
  for (Index v = 0; v < Index(verts.size()); ++v) mesh.vertices.row(v) = verts[v].transpose();
  mesh.faces.resize(Index(faces.size()), 3);
  mesh.organ_of_face.resize(Index(faces.size()));
  for (Index f = 0; f < Index(faces.size()); ++f) {
    for (int k = 0; k < 3; ++k) mesh.faces(f, k) = faces[f][k];
    mesh.organ_of_face[f] = face_organ[f];
  }
  mesh.organ_of_vertex = VecXi::Zero(Index(verts.size()));
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (int k = 0; k < 3; ++k) mesh.organ_of_vertex[mesh.faces(f, k)] = mesh.organ_of_face[f];
  mesh.validate();
  return mesh;
}

void save_organ_names(const std::vector<std::pair<int, std::string>>& names,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(errc::io_error, "cannot open " + path + " for writing");
  for (const auto& [id, name] : names) out << id << ' ' << name << "\n";
}

std::vector<std::pair<int, std::string>> load_organ_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot open " + path);
  std::vector<std::pair<int, std::string>> names;
  int id;
  std::string name;
  while (in >> id >> name) names.emplace_back(id, name);
  return names;
}

}  // namespace meshflow
