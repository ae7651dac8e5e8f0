#include "meshflow/template_builder.hpp"

#include <set>
#include <string>

#include "meshflow/marching_cubes.hpp"

namespace meshflow {

VoxelGrid occupancy_fraction(const std::vector<VoxelGrid>& labels, int cls) {
  VoxelGrid out = VoxelGrid::make_scalar(labels[0].dims, labels[0].spacing, labels[0].origin);
  const float inv = 1.0f / float(labels.size());
  for (const VoxelGrid& grid : labels)
    for (size_t i = 0; i < grid.labels.size(); ++i)
      if (grid.labels[i] == cls) out.values[i] += inv;
  return out;
}

TriMesh build_template(const std::vector<VoxelGrid>& labels, double threshold, int smooth_steps,
                       const SmoothParams& smooth) {
  if (labels.empty()) raise(errc::config_error, "build_template needs at least one label volume");
  if (threshold <= 0.0 || threshold > 1.0)
    raise(errc::config_error, "occupancy threshold must lie in (0, 1]");
  for (const VoxelGrid& grid : labels) {
    if (grid.kind != GridKind::label) raise(errc::shape_mismatch, "build_template expects label grids");
    grid.validate();
    if (!grid.same_extent(labels[0]))
      raise(errc::shape_mismatch, "label volumes must share dims/spacing/origin");
  }

  // classes = union of labels over the cohort, background 0 excluded
  std::set<int> classes;
  for (const VoxelGrid& grid : labels)
    for (int c : grid.present_labels())
      if (c != 0) classes.insert(c);
  if (classes.empty()) raise(errc::empty_organ, "no foreground class in any input");

  TriMesh merged;
  merged.vertices.resize(0, 3);
  merged.faces.resize(0, 3);
  merged.organ_of_vertex.resize(0);
  merged.organ_of_face.resize(0);

  for (int cls : classes) {
    const VoxelGrid occ = occupancy_fraction(labels, cls);
    bool any = false;
    for (float v : occ.values)
      if (v > threshold) { any = true; break; }
    if (!any)
      raise(errc::empty_organ,
            "class " + std::to_string(cls) + " never exceeds the occupancy threshold");

    TriMesh surf = marching_cubes(occ, threshold, cls);
    surf = laplacian_smooth(surf, smooth_steps, smooth);

    for (int chi : euler_characteristic(surf))
      if (chi != 2)
        raise(errc::topology_error, "organ " + std::to_string(cls) +
                                        " component has Euler characteristic " +
                                        std::to_string(chi));
    if (!is_closed(surf))
      raise(errc::topology_error, "organ " + std::to_string(cls) + " surface is not closed");

    append_mesh(merged, surf);
  }
  return merged;
}

}  // namespace meshflow
