// ssp - surgical scene perception toolkit
//
// Deformable-tissue model kept as a set of surfels in the camera frame.
// Depth pixels under the (dilated) tool mask are invalidated first, then each
// remaining pixel either refines the surfel it projects onto (confidence-
// weighted running average) or seeds a new one. The model renders back to a
// depth map by z-buffered splatting for evaluation.
//
// This is a deliberately simple projective-association stand-in for a full
// nonrigid warp-field tracker; it reproduces the same fuse / re-project
// interface without the deformation solver, which is its main limitation.

#pragma once

#include "ssp/geometry.hpp"
#include "ssp/stereo.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ssp {

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // nonzero = masked

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<size_t>(w) * h, 0) {}

  [[nodiscard]] size_t idx(int r, int c) const { return static_cast<size_t>(r) * width + c; }
  [[nodiscard]] bool at(int r, int c) const { return bits[idx(r, c)] != 0; }
  void set(int r, int c, bool v = true) { bits[idx(r, c)] = v ? 1 : 0; }
};

/// Morphological dilation with a square structuring element of half-width
/// `radius` (side 2*radius + 1), done separably.
[[nodiscard]] inline BinaryMask dilate_square(const BinaryMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate_square: negative radius");
  if (radius == 0) return mask;
  BinaryMask rows(mask.width, mask.height);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const int c0 = std::max(c - radius, 0);
      const int c1 = std::min(c + radius, mask.width - 1);
      std::uint8_t v = 0;
      for (int x = c0; x <= c1 && !v; ++x) v = mask.bits[mask.idx(r, x)];
      rows.bits[rows.idx(r, c)] = v;
    }
  }
  BinaryMask out(mask.width, mask.height);
  for (int r = 0; r < mask.height; ++r) {
    const int r0 = std::max(r - radius, 0);
    const int r1 = std::min(r + radius, mask.height - 1);
    for (int c = 0; c < mask.width; ++c) {
      std::uint8_t v = 0;
      for (int y = r0; y <= r1 && !v; ++y) v = rows.bits[rows.idx(y, c)];
      out.bits[out.idx(r, c)] = v;
    }
  }
  return out;
}

/// Invalidate every depth pixel under the dilated tool mask.
[[nodiscard]] inline DepthMap subtract_mask(const DepthMap& depth, const BinaryMask& mask,
                                            int dilation_radius) {
  if (depth.width != mask.width || depth.height != mask.height)
    throw std::invalid_argument("subtract_mask: dimension mismatch");
  const BinaryMask dilated = dilate_square(mask, dilation_radius);
  DepthMap out = depth;
  for (size_t i = 0; i < out.z.size(); ++i)
    if (dilated.bits[i]) out.z[i] = 0.0;
  return out;
}

struct Surfel {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // camera frame, meters
  double radius = 0.0;      // meters
  double confidence = 0.0;  // accumulated observation count
  int last_seen = 0;        // fusion index of the last supporting observation
};

struct SurfelModel {
  std::vector<Surfel> surfels;
  int frame_count = 0;  // number of depth maps fused so far
};

struct FusionParams {
  double tau_z = 0.005;   // association depth tolerance, meters
  double c_min = 1.0;     // prune surfels below this confidence ...
  int t_stale = 30;       // ... once unseen for more than this many fusions
  int dilation_radius = 5;

  void validate() const {
    if (!(tau_z > 0.0)) throw std::invalid_argument("FusionParams: tau_z <= 0");
    if (dilation_radius < 0) throw std::invalid_argument("FusionParams: dilation_radius < 0");
    if (t_stale < 0) throw std::invalid_argument("FusionParams: t_stale < 0");
  }
};

namespace detail {

/// Back-project the center of pixel (r, c) at depth z.
[[nodiscard]] inline Eigen::Vector3d backproject(const CameraIntrinsics& K, int r, int c,
                                                 double z) {
  const double u = c + 0.5;
  const double v = r + 0.5;
  return {(u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z};
}

}  // namespace detail

/**
 * @brief Fuse one (already tool-masked) depth map into the model.
 *
 * Projective association: a valid pixel updates the nearest surfel whose
 * projection lands on it when their depths agree within tau_z, otherwise it
 * creates a new surfel with radius z/fx (one pixel footprint) and unit
 * confidence. Updates run in row-major pixel order.
 */
[[nodiscard]] inline SurfelModel fuse_depth(SurfelModel model, const DepthMap& depth,
                                            const CameraIntrinsics& K,
                                            const FusionParams& params) {
  params.validate();
  const int w = depth.width;
  const int h = depth.height;

  // Per-pixel index of the nearest surfel projecting there.
  std::vector<std::int32_t> assoc(static_cast<size_t>(w) * h, -1);
  std::vector<double> assoc_z(static_cast<size_t>(w) * h, 0.0);
  for (size_t i = 0; i < model.surfels.size(); ++i) {
    const auto m = try_project_point(K, model.surfels[i].position);
    if (!m) continue;
    const int c = static_cast<int>(std::floor(m->x()));
    const int r = static_cast<int>(std::floor(m->y()));
    if (c < 0 || c >= w || r < 0 || r >= h) continue;
    const size_t at = static_cast<size_t>(r) * w + c;
    const double z = model.surfels[i].position.z();
    if (assoc[at] < 0 || z < assoc_z[at]) {
      assoc[at] = static_cast<std::int32_t>(i);
      assoc_z[at] = z;
    }
  }

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const size_t at = static_cast<size_t>(r) * w + c;
      const double z = depth.z[at];
      if (!(z > 0.0)) continue;
      const Eigen::Vector3d p = detail::backproject(K, r, c, z);
      const std::int32_t s = assoc[at];
      if (s >= 0 && std::abs(model.surfels[s].position.z() - z) <= params.tau_z) {
        Surfel& surf = model.surfels[s];
        surf.position = (surf.confidence * surf.position + p) / (surf.confidence + 1.0);
        surf.confidence += 1.0;
        surf.last_seen = model.frame_count;
      } else {
        model.surfels.push_back({p, z / K.fx, 1.0, model.frame_count});
      }
    }
  }
  model.frame_count += 1;
  return model;
}

/**
 * @brief Z-buffer render of the model: each surfel splats a disk of its
 *        projected radius (at least one pixel); the nearest surfel wins.
 *        Uncovered pixels are invalid (0).
 */
[[nodiscard]] inline DepthMap reproject_model(const SurfelModel& model,
                                              const CameraIntrinsics& K) {
  DepthMap depth(K.width, K.height);
  // Unit-footprint splats must not bleed onto 4-neighbours (center distance
  // exactly 1) through projection round-off, hence the strict margin.
  constexpr double kSplatMargin = 1e-9;
  for (const auto& s : model.surfels) {
    const auto m = try_project_point(K, s.position);
    if (!m) continue;
    const double u = m->x();
    const double v = m->y();
    const double z = s.position.z();
    const double r_px = std::max(1.0, K.fx * s.radius / z);
    const int cc = static_cast<int>(std::floor(u));
    const int cr = static_cast<int>(std::floor(v));
    const int c0 = std::max(static_cast<int>(std::floor(u - r_px)), 0);
    const int c1 = std::min(static_cast<int>(std::floor(u + r_px)), K.width - 1);
    const int r0 = std::max(static_cast<int>(std::floor(v - r_px)), 0);
    const int r1 = std::min(static_cast<int>(std::floor(v + r_px)), K.height - 1);
    const double limit_sq = (r_px - kSplatMargin) * (r_px - kSplatMargin);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double du = (c + 0.5) - u;
        const double dv = (r + 0.5) - v;
        const bool covered = (du * du + dv * dv < limit_sq) || (r == cr && c == cc);
        if (!covered) continue;
        double& cell = depth.z[depth.idx(r, c)];
        if (cell == 0.0 || z < cell) cell = z;
      }
    }
  }
  return depth;
}

/// Drop low-confidence surfels that have gone unseen for too long.
[[nodiscard]] inline SurfelModel prune(SurfelModel model, const FusionParams& params) {
  std::erase_if(model.surfels, [&](const Surfel& s) {
    return s.confidence < params.c_min && (model.frame_count - s.last_seen) > params.t_stale;
  });
  return model;
}

}  // namespace ssp
