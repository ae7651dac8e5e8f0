#pragma once

#include "meshflow/trimesh.hpp"

namespace meshflow {

enum class SmoothScheme {
  hc,       // Vollmer HC: mean-of-1-ring move plus anti-shrink pushback
  uniform,  // plain damped umbrella operator
};

struct SmoothParams {
  SmoothScheme scheme = SmoothScheme::hc;
  double alpha = 0.0;   // HC: weight of the original points in the pushback reference
  double beta = 0.5;    // HC: own-vs-neighborhood share of the correction
  double lambda = 0.5;  // uniform: damping toward the 1-ring mean
};

/// `steps` smoothing passes; connectivity and vertex count unchanged.
/// steps == 0 returns the input bit-identically.
TriMesh laplacian_smooth(const TriMesh& mesh, int steps, const SmoothParams& params = {});

}  // namespace meshflow
