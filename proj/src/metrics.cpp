#include "meshflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "meshflow/bvh.hpp"
#include "meshflow/marching_cubes.hpp"
#include "meshflow/parallel.hpp"
#include "meshflow/tri_geometry.hpp"
#include "meshflow/voxelize.hpp"

namespace meshflow {

double dice(const VoxelGrid& a, const VoxelGrid& b, int cls) {
  if (a.kind != GridKind::label || b.kind != GridKind::label)
    raise(errc::shape_mismatch, "dice expects label grids");
  if (a.dims != b.dims) raise(errc::shape_mismatch, "dice dims differ");
  long na = 0, nb = 0, overlap = 0;
  for (size_t i = 0; i < a.labels.size(); ++i) {
    const bool ia = a.labels[i] == cls, ib = b.labels[i] == cls;
    na += ia;
    nb += ib;
    overlap += ia && ib;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(overlap) / double(na + nb);
}

namespace {

// distances from sampled points of `from` to the surface of `to`
std::vector<double> surface_distances(const TriMesh& from, const TriBvh& to_bvh, Index n_samples,
                                      std::uint64_t seed) {
  std::vector<double> dists;
  for (const SurfaceSamples& samples : sample_surface(from, n_samples, seed)) {
    const Index base = Index(dists.size());
    dists.resize(size_t(base + samples.points.rows()));
    parallel_for(samples.points.rows(), [&](std::int64_t begin, std::int64_t end) {
      for (std::int64_t i = begin; i < end; ++i)
        dists[size_t(base + i)] =
            std::sqrt(to_bvh.closest_sq_dist(samples.points.row(i).transpose()));
    });
  }
  return dists;
}

void check_meshes(const TriMesh& a, const TriMesh& b) {
  if (a.num_faces() == 0 || b.num_faces() == 0) raise(errc::empty_mesh, "metric on empty mesh");
}

}  // namespace

double assd(const TriMesh& a, const TriMesh& b, Index n_samples, std::uint64_t seed) {
  check_meshes(a, b);
  const TriBvh bvh_a(a), bvh_b(b);
  const std::vector<double> ab = surface_distances(a, bvh_b, n_samples, seed);
  const std::vector<double> ba = surface_distances(b, bvh_a, n_samples, seed);
  double sum = 0.0;
  for (double d : ab) sum += d;
  for (double d : ba) sum += d;
  return sum / double(ab.size() + ba.size());
}

double hd99(const TriMesh& a, const TriMesh& b, Index n_samples, std::uint64_t seed) {
  check_meshes(a, b);
  const TriBvh bvh_a(a), bvh_b(b);
  std::vector<double> pooled = surface_distances(a, bvh_b, n_samples, seed);
  const std::vector<double> ba = surface_distances(b, bvh_a, n_samples, seed);
  pooled.insert(pooled.end(), ba.begin(), ba.end());
  std::sort(pooled.begin(), pooled.end());
  // nearest-rank percentile: smallest value with rank >= ceil(p * N)
  const size_t rank = size_t(std::ceil(0.99 * double(pooled.size())));
  return pooled[std::min(pooled.size() - 1, rank == 0 ? 0 : rank - 1)];
}

namespace {

bool faces_share_vertex(const TriMesh& mesh, Index f, Index g) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (mesh.faces(f, i) == mesh.faces(g, j)) return true;
  return false;
}

// marks faces of `sub` that properly intersect a non-adjacent face of `sub`
std::vector<char> self_intersection_flags(const TriMesh& sub) {
  const TriBvh bvh(sub);
  std::vector<char> flags(size_t(sub.num_faces()), 0);
  std::vector<std::vector<Index>> partner_lists(size_t(sub.num_faces()));

  parallel_for(sub.num_faces(), [&](std::int64_t begin, std::int64_t end) {
    std::vector<Index> candidates;
    for (std::int64_t f = begin; f < end; ++f) {
      bvh.collect_overlaps(bvh.face_box(Index(f)), candidates);
      for (Index g : candidates) {
        if (g <= f) continue;  // each unordered pair once
        if (faces_share_vertex(sub, Index(f), g)) continue;
        const Vec3 a0 = sub.vertices.row(sub.faces(Index(f), 0)).transpose();
        const Vec3 a1 = sub.vertices.row(sub.faces(Index(f), 1)).transpose();
        const Vec3 a2 = sub.vertices.row(sub.faces(Index(f), 2)).transpose();
        const Vec3 b0 = sub.vertices.row(sub.faces(g, 0)).transpose();
        const Vec3 b1 = sub.vertices.row(sub.faces(g, 1)).transpose();
        const Vec3 b2 = sub.vertices.row(sub.faces(g, 2)).transpose();
        if (tri_tri_intersect(a0, a1, a2, b0, b1, b2)) partner_lists[size_t(f)].push_back(g);
      }
    }
  });
  for (Index f = 0; f < sub.num_faces(); ++f) {
    for (Index g : partner_lists[size_t(f)]) {
      flags[size_t(f)] = 1;
      flags[size_t(g)] = 1;
    }
  }
  return flags;
}

}  // namespace

double sif_percent(const TriMesh& mesh) {
  if (mesh.num_faces() == 0) return 0.0;
  long intersecting = 0;
  for (int organ : mesh.organs()) {
    const TriMesh sub = mesh.organ_submesh(organ);
    for (char flag : self_intersection_flags(sub)) intersecting += flag;
  }
  return 100.0 * double(intersecting) / double(mesh.num_faces());
}

long inter_mesh_intersections(const TriMesh& mesh) {
  const std::vector<int> organs = mesh.organs();
  if (organs.size() < 2) return 0;

  std::vector<TriMesh> subs;
  std::vector<TriBvh> bvhs;
  subs.reserve(organs.size());
  for (int organ : organs) subs.push_back(mesh.organ_submesh(organ));
  bvhs.reserve(subs.size());
  for (const TriMesh& sub : subs) bvhs.emplace_back(sub);

  long pairs = 0;
  for (size_t a = 0; a < subs.size(); ++a) {
    for (size_t b = a + 1; b < subs.size(); ++b) {
      std::vector<long> per_face(size_t(subs[a].num_faces()), 0);
      parallel_for(subs[a].num_faces(), [&](std::int64_t begin, std::int64_t end) {
        std::vector<Index> candidates;
        for (std::int64_t f = begin; f < end; ++f) {
          const TriBvh& bvh_a = bvhs[a];
          bvhs[b].collect_overlaps(bvh_a.face_box(Index(f)), candidates);
          const Vec3 a0 = subs[a].vertices.row(subs[a].faces(Index(f), 0)).transpose();
          const Vec3 a1 = subs[a].vertices.row(subs[a].faces(Index(f), 1)).transpose();
          const Vec3 a2 = subs[a].vertices.row(subs[a].faces(Index(f), 2)).transpose();
          for (Index g : candidates) {
            const Vec3 b0 = subs[b].vertices.row(subs[b].faces(g, 0)).transpose();
            const Vec3 b1 = subs[b].vertices.row(subs[b].faces(g, 1)).transpose();
            const Vec3 b2 = subs[b].vertices.row(subs[b].faces(g, 2)).transpose();
            if (tri_tri_intersect(a0, a1, a2, b0, b1, b2)) ++per_face[size_t(f)];
          }
        }
      });
      for (long c : per_face) pairs += c;
    }
  }
  return pairs;
}

MetricReport evaluate_mesh(const TriMesh& pred, const std::optional<TriMesh>& gt_mesh,
                           const std::optional<VoxelGrid>& gt_labels, Index n_samples,
                           std::uint64_t seed) {
  pred.validate();
  MetricReport report;

  std::optional<VoxelGrid> pred_vox;
  if (gt_labels) pred_vox = voxelize(pred, *gt_labels);

  for (int organ : pred.organs()) {
    OrganMetrics metrics;
    metrics.organ = organ;
    const TriMesh pred_sub = pred.organ_submesh(organ);

    TriMesh gt_sub;
    if (gt_mesh) {
      gt_sub = gt_mesh->organ_submesh(organ);
    } else if (gt_labels) {
      gt_sub = marching_cubes(class_indicator(*gt_labels, organ), 0.5, organ);
    } else {
      raise(errc::config_error, "evaluate_mesh needs a ground-truth mesh or label grid");
    }
    if (gt_sub.num_faces() == 0)
      raise(errc::organ_mismatch, "ground truth lacks organ " + std::to_string(organ));

    metrics.assd = assd(pred_sub, gt_sub, n_samples, seed);
    metrics.hd99 = hd99(pred_sub, gt_sub, n_samples, seed);
    metrics.sif = sif_percent(pred_sub);
    if (gt_labels) metrics.dice = dice(*pred_vox, *gt_labels, organ);
    report.per_organ.push_back(metrics);
  }

  OrganMetrics macro;
  macro.organ = -1;
  double dice_sum = 0.0;
  bool have_dice = true;
  for (const OrganMetrics& m : report.per_organ) {
    macro.assd += m.assd;
    macro.hd99 += m.hd99;
    macro.sif += m.sif;
    if (m.dice) dice_sum += *m.dice;
    else have_dice = false;
  }
  const double n = double(report.per_organ.size());
  macro.assd /= n;
  macro.hd99 /= n;
  macro.sif /= n;
  if (have_dice && !report.per_organ.empty()) macro.dice = dice_sum / n;
  report.macro = macro;
  return report;
}

void save_metrics_csv(const MetricReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(errc::io_error, "cannot open " + path + " for writing");
  out << "organ,dice,assd_mm,hd99_mm,sif_percent\n";
  char buf[160];
  const auto write_row = [&](const std::string& name, const OrganMetrics& m) {
    if (m.dice) {
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g\n", name.c_str(), *m.dice,
                    m.assd, m.hd99, m.sif);
    } else {
      std::snprintf(buf, sizeof buf, "%s,NA,%.17g,%.17g,%.17g\n", name.c_str(), m.assd, m.hd99,
                    m.sif);
    }
    out << buf;
  };
  for (const OrganMetrics& m : report.per_organ) write_row(std::to_string(m.organ), m);
  write_row("macro", report.macro);
  if (!out) raise(errc::io_error, "write failed: " + path);
}

std::string format_metrics_text(const MetricReport& report) {
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-8s %10s %12s %12s %12s\n", "organ", "dice", "assd[mm]",
                "hd99[mm]", "sif[%]");
  out << buf;
  const auto write_row = [&](const std::string& name, const OrganMetrics& m) {
    if (m.dice) {
      std::snprintf(buf, sizeof buf, "%-8s %10.4f %12.4f %12.4f %12.4f\n", name.c_str(), *m.dice,
                    m.assd, m.hd99, m.sif);
    } else {
      std::snprintf(buf, sizeof buf, "%-8s %10s %12.4f %12.4f %12.4f\n", name.c_str(), "NA",
                    m.assd, m.hd99, m.sif);
    }
    out << buf;
  };
  for (const OrganMetrics& m : report.per_organ) write_row(std::to_string(m.organ), m);
  write_row("macro", report.macro);
  return out.str();
}

}  // namespace meshflow
