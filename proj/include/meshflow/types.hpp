#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace meshflow {

using Index = Eigen::Index;
using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;
using VecXd = Eigen::VectorXd;
using VecXi = Eigen::VectorXi;

// Row-major so that .row(i) views a contiguous vertex/triple.
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class errc {
  io_error,
  empty_surface,
  degenerate_grid,
  shape_mismatch,
  invalid_class,
  open_surface,
  topology_error,
  empty_organ,
  zero_area,
  organ_mismatch,
  empty_set,
  no_edges,
  non_finite_loss,
  empty_mesh,
  degenerate_source,
  singular_system,
  config_error,
  gradient_check_failed,
};

/// Domain error carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) { throw Error(code, what); }

}  // namespace meshflow
