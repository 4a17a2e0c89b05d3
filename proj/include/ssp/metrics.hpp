// ssp - surgical scene perception toolkit
//
// Tool-mask rendering from an estimated pose plus the evaluation metrics:
// mask IoU, per-pixel RMS depth error, valid-pixel fraction, and mean L2
// feature error.

#pragma once

#include "ssp/fusion.hpp"
#include "ssp/geometry.hpp"
#include "ssp/kinematics.hpp"
#include "ssp/stereo.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssp {

/// Capsules and spheres attached to chain links approximate the tool CAD
/// model closely enough for silhouette rendering.
struct ToolPrimitive {
  enum class Kind { kSphere, kCapsule };
  Kind kind = Kind::kSphere;
  int link = 0;
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();  // sphere center / capsule end A
  Eigen::Vector3d p1 = Eigen::Vector3d::Zero();  // capsule end B
  double radius = 0.0;                           // meters
};

struct ToolGeometry {
  std::vector<ToolPrimitive> primitives;

  void validate() const {
    for (const auto& p : primitives) {
      if (!(p.radius > 0.0)) throw std::invalid_argument("ToolGeometry: radius <= 0");
      if (p.link < 0) throw std::invalid_argument("ToolGeometry: negative link index");
    }
  }
};

namespace detail {

/// Squared distance from the ray t*u (t >= 0, u unit) to the point c.
[[nodiscard]] inline double ray_point_dist_sq(const Eigen::Vector3d& u,
                                              const Eigen::Vector3d& c) {
  const double t = std::max(u.dot(c), 0.0);
  return (t * u - c).squaredNorm();
}

/// Squared distance from the ray t*u (t >= 0, u unit) to the segment [a, b].
[[nodiscard]] inline double ray_segment_dist_sq(const Eigen::Vector3d& u,
                                                const Eigen::Vector3d& a,
                                                const Eigen::Vector3d& b) {
  const Eigen::Vector3d e = b - a;
  const double ee = e.squaredNorm();
  if (ee < 1e-18) return ray_point_dist_sq(u, a);
  const double ue = u.dot(e);
  const double ua = u.dot(a);
  const double denom = ee - ue * ue;  // >= 0 (Cauchy-Schwarz), 0 when parallel
  double s = denom > 1e-15 * ee ? std::clamp((ua * ue - a.dot(e)) / denom, 0.0, 1.0) : 0.0;
  double t = ua + s * ue;
  if (t < 0.0) {
    t = 0.0;
    s = std::clamp(-a.dot(e) / ee, 0.0, 1.0);
  }
  const double d0 = (t * u - a - s * e).squaredNorm();
  // Parallel / clamped cases: the far endpoint can still be the true minimum.
  const double d1 = ray_point_dist_sq(u, b);
  return std::min(d0, d1);
}

}  // namespace detail

/**
 * @brief Silhouette of the posed tool: every primitive is placed by forward
 *        kinematics, the lumped correction and the hand-eye prior, then
 *        rasterized by per-pixel ray tests through pixel centers. Primitives
 *        fully behind the camera contribute nothing.
 */
[[nodiscard]] inline BinaryMask render_tool_mask(const ToolGeometry& geometry,
                                                 const KinematicChain& chain,
                                                 const JointState& joints,
                                                 const LumpedErrorState& lumped,
                                                 const CameraIntrinsics& K) {
  BinaryMask mask(K.width, K.height);
  const auto fk = forward_all(chain, joints);
  const Transform3D correction = chain.hand_eye_prior * to_transform(lumped);

  for (const auto& prim : geometry.primitives) {
    if (prim.link < 0 || prim.link > chain.num_joints())
      throw std::invalid_argument("render_tool_mask: primitive link out of range");
    const Transform3D pose = correction * fk[prim.link];
    const Eigen::Vector3d a = pose.apply(prim.p0);
    const Eigen::Vector3d b =
        prim.kind == ToolPrimitive::Kind::kCapsule ? pose.apply(prim.p1) : a;
    const double z_front = std::max(a.z(), b.z()) + prim.radius;
    if (z_front <= kEpsilonDepth) continue;  // fully behind the camera

    // Conservative pixel bounding box; fall back to the full image when an
    // endpoint is too close to (or behind) the camera plane.
    int c0 = 0, c1 = K.width - 1, r0 = 0, r1 = K.height - 1;
    const double f_max = std::max(K.fx, K.fy);
    if (a.z() > prim.radius + kEpsilonDepth && b.z() > prim.radius + kEpsilonDepth) {
      double u_min = 1e300, u_max = -1e300, v_min = 1e300, v_max = -1e300;
      for (const Eigen::Vector3d& p : {a, b}) {
        const double margin = f_max * prim.radius / (p.z() - prim.radius) + 2.0;
        const double u = K.fx * p.x() / p.z() + K.cx;
        const double v = K.fy * p.y() / p.z() + K.cy;
        u_min = std::min(u_min, u - margin);
        u_max = std::max(u_max, u + margin);
        v_min = std::min(v_min, v - margin);
        v_max = std::max(v_max, v + margin);
      }
      c0 = std::max(static_cast<int>(std::floor(u_min)), 0);
      c1 = std::min(static_cast<int>(std::ceil(u_max)), K.width - 1);
      r0 = std::max(static_cast<int>(std::floor(v_min)), 0);
      r1 = std::min(static_cast<int>(std::ceil(v_max)), K.height - 1);
    }

    const double rad_sq = prim.radius * prim.radius;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (mask.at(r, c)) continue;
        Eigen::Vector3d dir((c + 0.5 - K.cx) / K.fx, (r + 0.5 - K.cy) / K.fy, 1.0);
        dir.normalize();
        const double dist_sq = prim.kind == ToolPrimitive::Kind::kCapsule
                                   ? detail::ray_segment_dist_sq(dir, a, b)
                                   : detail::ray_point_dist_sq(dir, a);
        if (dist_sq <= rad_sq) mask.set(r, c);
      }
    }
  }
  return mask;
}

/// Jaccard index |a AND b| / |a OR b|. Two empty masks compare as 1; the
/// optional flag reports that degenerate case.
[[nodiscard]] inline double iou(const BinaryMask& a, const BinaryMask& b,
                                bool* both_empty = nullptr) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("iou: dimension mismatch");
  long long inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    const bool pa = a.bits[i] != 0;
    const bool pb = b.bits[i] != 0;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  if (both_empty != nullptr) *both_empty = (uni == 0);
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Root-mean-square depth error over pixels valid in both maps.
[[nodiscard]] inline double depth_rmse(const DepthMap& est, const DepthMap& gt) {
  if (est.width != gt.width || est.height != gt.height)
    throw std::invalid_argument("depth_rmse: dimension mismatch");
  double sum_sq = 0.0;
  long long n = 0;
  for (size_t i = 0; i < est.z.size(); ++i) {
    if (est.z[i] > 0.0 && gt.z[i] > 0.0) {
      const double d = est.z[i] - gt.z[i];
      sum_sq += d * d;
      ++n;
    }
  }
  if (n == 0) throw std::runtime_error("depth_rmse: no overlapping valid pixels");
  return std::sqrt(sum_sq / static_cast<double>(n));
}

/// Fraction of valid (nonzero) pixels.
[[nodiscard]] inline double valid_fraction(const DepthMap& map) {
  long long n = 0;
  for (double z : map.z) n += z > 0.0 ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(map.z.size());
}

/// Feature locations keyed by feature id, one entry per frame.
using FrameFeatures = std::map<std::string, Eigen::Vector2d>;

/// Mean L2 pixel error of one feature over the frames where both the
/// prediction and the ground truth contain it.
[[nodiscard]] inline double feature_error(const std::vector<FrameFeatures>& pred,
                                          const std::vector<FrameFeatures>& gt,
                                          const std::string& feature_id) {
  const size_t frames = std::min(pred.size(), gt.size());
  double sum = 0.0;
  long long n = 0;
  for (size_t i = 0; i < frames; ++i) {
    const auto p = pred[i].find(feature_id);
    const auto g = gt[i].find(feature_id);
    if (p == pred[i].end() || g == gt[i].end()) continue;
    sum += (p->second - g->second).norm();
    ++n;
  }
  if (n == 0)
    throw std::runtime_error("feature_error: no frame contains '" + feature_id +
                             "' in both tracks");
  return sum / static_cast<double>(n);
}

}  // namespace ssp
