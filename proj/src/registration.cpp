#include "meshflow/registration.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <vector>

#include "meshflow/kdtree.hpp"
#include "meshflow/marching_cubes.hpp"
#include "meshflow/metrics.hpp"

namespace meshflow {

MatX3 RigidTransform::apply(const MatX3& points) const {
  MatX3 out = points * rotation.transpose();
  out.rowwise() += translation.transpose();
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

bool RigidTransform::orthonormal(double tol) const {
  return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(rotation.determinant() - 1.0) < tol;
}

namespace {

// Kabsch with reflection fix: least-squares rigid map source -> target.
RigidTransform solve_rigid(const MatX3& source, const MatX3& target) {
  const Eigen::RowVector3d sc = source.colwise().mean();
  const Eigen::RowVector3d tc = target.colwise().mean();
  const Mat3 h = (source.rowwise() - sc).transpose() * (target.rowwise() - tc);
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform rt;
  rt.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  rt.translation = tc.transpose() - rt.rotation * sc.transpose();
  return rt;
}

void check_not_collinear(const MatX3& points) {
  if (points.rows() < 3) raise(errc::degenerate_source, "need at least 3 source vertices");
  const Eigen::RowVector3d mean = points.colwise().mean();
  const MatX3 centered = points.rowwise() - mean;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const double scale = svd.singularValues()[0];
  if (scale <= 0.0 || svd.singularValues()[1] <= 1e-12 * scale)
    raise(errc::degenerate_source, "source vertices are collinear");
}

}  // namespace

namespace {

// Standard ICP loop from a given initial transform.
IcpResult icp_iterate(const TriMesh& source, const KdTree& target_tree, const MatX3& target,
                      const RigidTransform& init, int max_iters, double tol) {
  IcpResult result;
  result.transform = init;
  MatX3 matched(source.num_vertices(), 3);

  double prev_rms = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    result.iterations = iter + 1;
    const MatX3 current = result.transform.apply(source.vertices);
    for (Index v = 0; v < current.rows(); ++v)
      matched.row(v) = target.row(target_tree.nearest(current.row(v).transpose()));

    result.transform = solve_rigid(source.vertices, matched);
    const MatX3 aligned = result.transform.apply(source.vertices);
    result.rms = std::sqrt((aligned - matched).rowwise().squaredNorm().mean());
    if (std::abs(prev_rms - result.rms) < tol) break;
    prev_rms = result.rms;
  }
  return result;
}

// Ascending-eigenvalue principal axes of a centered point set, right-handed.
Mat3 principal_axes(const MatX3& points) {
  const Eigen::RowVector3d mean = points.colwise().mean();
  const MatX3 centered = points.rowwise() - mean;
  const Mat3 cov = centered.transpose() * centered / double(points.rows());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Mat3 axes = eig.eigenvectors();
  if (axes.determinant() < 0.0) axes.col(2) = -axes.col(2);
  return axes;
}

}  // namespace

IcpResult icp_rigid(const TriMesh& source, const SurfaceSamples& target_points, int max_iters,
                    double tol) {
  if (target_points.points.rows() == 0) raise(errc::empty_set, "no target points");
  check_not_collinear(source.vertices);

  const MatX3& target = target_points.points;
  const KdTree target_tree(target);

  // Initialization candidates: identity plus the four proper-rotation
  // principal-axes alignments; best final RMS wins. Point-to-point ICP alone
  // has a narrow rotational basin, the axes candidates cover it.
  std::vector<RigidTransform> candidates {RigidTransform {}};
  {
    const Mat3 vs = principal_axes(source.vertices);
    const Mat3 vt = principal_axes(target);
    const Vec3 sc = source.vertices.colwise().mean().transpose();
    const Vec3 tc = target.colwise().mean().transpose();
    for (int sx = -1; sx <= 1; sx += 2) {
      for (int sy = -1; sy <= 1; sy += 2) {
        // det(signs) = +1, so the product of two right-handed bases is proper
        const Mat3 signs = Vec3(double(sx), double(sy), double(sx * sy)).asDiagonal();
        RigidTransform init;
        init.rotation = vt * signs * vs.transpose();
        init.translation = tc - init.rotation * sc;
        candidates.push_back(init);
      }
    }
  }

  IcpResult best;
  best.rms = std::numeric_limits<double>::infinity();
  for (const RigidTransform& init : candidates) {
    IcpResult run = icp_iterate(source, target_tree, target, init, max_iters, tol);
    if (run.rms < best.rms) best = std::move(run);
  }
  best.aligned = source;
  best.aligned.vertices = best.transform.apply(source.vertices);
  return best;
}

void NricpParams::validate() const {
  if (stiffness_schedule.empty()) raise(errc::config_error, "empty stiffness schedule");
  for (size_t i = 0; i < stiffness_schedule.size(); ++i) {
    if (stiffness_schedule[i] <= 0.0) raise(errc::config_error, "stiffness must be positive");
    if (i > 0 && stiffness_schedule[i] >= stiffness_schedule[i - 1])
      raise(errc::config_error, "stiffness schedule must be strictly decreasing");
  }
  if (inner_iterations < 1) raise(errc::config_error, "inner_iterations must be positive");
  if (!(distance_cap > 0.0)) raise(errc::config_error, "distance cap must be positive");
}

TriMesh nricp(const TriMesh& source, const SurfaceSamples& target_points,
              const NricpParams& params) {
  params.validate();
  source.validate();
  if (target_points.points.rows() < 4) raise(errc::empty_set, "nricp needs >= 4 target points");

  const Index n = source.num_vertices();
  const auto edges = edge_set(source);
  if (edges.empty()) raise(errc::no_edges, "nricp needs a connected source mesh");

  const bool gate_normals = target_points.normals.rows() == target_points.points.rows();
  const double cos_cap = std::cos(params.normal_angle_cap_deg * 3.14159265358979323846 / 180.0);
  const KdTree target_tree(target_points.points);

  // component id per vertex, to detect fully unconstrained organs
  const MeshComponents comps = connected_components(source);
  std::vector<int> comp_of_vertex(size_t(n), -1);
  for (size_t c = 0; c < comps.vertices.size(); ++c)
    for (Index v : comps.vertices[c]) comp_of_vertex[size_t(v)] = int(c);

  // unknowns: per-vertex 4x3 affine blocks, stacked (4n x 3); X0 = identity
  Eigen::MatrixXd x(4 * n, 3);
  for (Index v = 0; v < n; ++v) {
    x.block<3, 3>(4 * v, 0) = Mat3::Identity();
    x.row(4 * v + 3).setZero();
  }

  // homogeneous source coordinates
  Eigen::Matrix<double, Eigen::Dynamic, 4> q(n, 4);
  q.leftCols<3>() = source.vertices;
  q.col(3).setOnes();

  MatX3 deformed = source.vertices;
  TriMesh current = source;

  for (double alpha : params.stiffness_schedule) {
    for (int inner = 0; inner < params.inner_iterations; ++inner) {
      // correspondences from the current deformation
      current.vertices = deformed;
      const MatX3 normals = gate_normals ? vertex_normals(current) : MatX3();
      std::vector<double> weight(size_t(n), 0.0);
      MatX3 matched = MatX3::Zero(n, 3);
      std::vector<long> retained_per_comp(comps.vertices.size(), 0);
      for (Index v = 0; v < n; ++v) {
        double sq = 0.0;
        const Index idx = target_tree.nearest(deformed.row(v).transpose(), &sq);
        if (std::sqrt(sq) > params.distance_cap) continue;
        if (gate_normals) {
          const double cosine = normals.row(v).dot(target_points.normals.row(idx));
          if (cosine < cos_cap) continue;
        }
        weight[size_t(v)] = 1.0;
        if (gate_normals) {
          // closest point on the locally reconstructed target surface: project
          // the vertex onto the matched sample's tangent plane
          const Eigen::RowVector3d nrm = target_points.normals.row(idx);
          const Eigen::RowVector3d diff = deformed.row(v) - target_points.points.row(idx);
          matched.row(v) = deformed.row(v) - diff.dot(nrm) * nrm;
        } else {
          matched.row(v) = target_points.points.row(idx);
        }
        ++retained_per_comp[size_t(comp_of_vertex[size_t(v)])];
      }
      for (size_t c = 0; c < retained_per_comp.size(); ++c)
        if (retained_per_comp[c] == 0)
          raise(errc::singular_system,
                "all correspondences of component " + std::to_string(c) + " were pruned");

      // normal equations of [alpha * M kron G; W D] X = [0; W U]
      std::vector<Eigen::Triplet<double>> triplets;
      triplets.reserve(edges.size() * 16 + size_t(n) * 16);
      const double a2 = alpha * alpha;
      const double g2[4] = {1.0, 1.0, 1.0, params.gamma * params.gamma};
      for (const auto& [i, j] : edges) {
        for (int r = 0; r < 4; ++r) {
          const double s = a2 * g2[r];
          triplets.emplace_back(4 * i + r, 4 * i + r, s);
          triplets.emplace_back(4 * j + r, 4 * j + r, s);
          triplets.emplace_back(4 * i + r, 4 * j + r, -s);
          triplets.emplace_back(4 * j + r, 4 * i + r, -s);
        }
      }
      Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(4 * n, 3);
      for (Index v = 0; v < n; ++v) {
        const double w2 = weight[size_t(v)] * weight[size_t(v)];
        if (w2 == 0.0) continue;
        const Eigen::RowVector4d qv = q.row(v);
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c)
            triplets.emplace_back(4 * v + r, 4 * v + c, w2 * qv[r] * qv[c]);
        rhs.block<4, 3>(4 * v, 0) += w2 * qv.transpose() * matched.row(v);
      }

      Eigen::SparseMatrix<double> normal(4 * n, 4 * n);
      normal.setFromTriplets(triplets.begin(), triplets.end());

      Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
      cg.setTolerance(params.cg_tol);
      cg.setMaxIterations(params.cg_max_iters);
      cg.compute(normal);
      x = cg.solveWithGuess(rhs, x);
      if (cg.info() != Eigen::Success)
        raise(errc::singular_system, "conjugate gradient failed on the nricp normal equations");

      for (Index v = 0; v < n; ++v)
        deformed.row(v) = q.row(v) * x.block<4, 3>(4 * v, 0);
    }
  }

  TriMesh out = source;
  out.vertices = deformed;
  return out;
}

AlignResult align_to_voxels(const TriMesh& pred, const VoxelGrid& seg, AlignMode mode,
                            Index n_surface_samples, std::uint64_t seed,
                            const NricpParams& params) {
  seg.validate();
  if (seg.kind != GridKind::label) raise(errc::shape_mismatch, "segmentation must be a label grid");

  AlignResult result;
  result.aligned = pred;

  for (int organ : pred.organs()) {
    std::vector<Index> vertex_map;
    const TriMesh pred_sub = pred.organ_submesh(organ, &vertex_map);

    TriMesh voxel_surface;
    try {
      voxel_surface = marching_cubes(class_indicator(seg, organ), 0.5, organ);
    } catch (const Error& err) {
      if (err.code() == errc::empty_surface)
        raise(errc::empty_organ, "segmentation lacks organ " + std::to_string(organ));
      throw;
    }
    const SurfaceSamples samples =
        sample_surface(voxel_surface, n_surface_samples, seed).front();

    result.organs.push_back(organ);
    result.pre_assd.push_back(assd(pred_sub, voxel_surface, n_surface_samples, seed));

    TriMesh aligned_sub;
    if (mode == AlignMode::rigid) {
      IcpResult icp = icp_rigid(pred_sub, samples);
      aligned_sub = std::move(icp.aligned);
      result.transforms.push_back(icp.transform);
    } else {
      aligned_sub = nricp(pred_sub, samples, params);
    }

    result.post_assd.push_back(assd(aligned_sub, voxel_surface, n_surface_samples, seed));
    for (Index v = 0; v < aligned_sub.num_vertices(); ++v)
      result.aligned.vertices.row(vertex_map[size_t(v)]) = aligned_sub.vertices.row(v);
  }
  return result;
}

}  // namespace meshflow
