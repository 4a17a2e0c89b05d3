// ssp - surgical scene perception toolkit
//
// Rigid-body transforms, axis-angle parameterization and pinhole projection.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <stdexcept>

namespace ssp {

/// Depth below which a camera-frame point counts as behind the camera (meters).
inline constexpr double kEpsilonDepth = 1e-6;

struct PointBehindCamera : std::runtime_error {
  explicit PointBehindCamera(double z)
      : std::runtime_error("point behind camera (z = " + std::to_string(z) + ")") {}
};

[[nodiscard]] inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

/**
 * @brief SO(3) exponential map (Rodrigues' formula) on an unnormalized
 *        axis-angle vector. A zero vector maps to the identity exactly.
 */
[[nodiscard]] inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  const double theta2 = omega.squaredNorm();
  double a;  // sin(t)/t
  double b;  // (1-cos(t))/t^2
  if (theta2 < 1e-16) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Eigen::Matrix3d w = skew(omega);
  return Eigen::Matrix3d::Identity() + a * w + b * (w * w);
}

/**
 * @brief SO(3) logarithmic map. Returns an axis-angle vector with norm in
 *        [0, pi]. R must be a rotation matrix.
 */
[[nodiscard]] inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
  const double cos_theta = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Eigen::Vector3d vee(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (theta < 1e-10) {
    return 0.5 * vee;
  }
  if (theta < M_PI - 1e-6) {
    return (theta / (2.0 * std::sin(theta))) * vee;
  }
  // Near pi the vee part vanishes; recover the axis from R + I.
  const Eigen::Matrix3d S = 0.5 * (R + Eigen::Matrix3d::Identity());
  int k = 0;
  S.diagonal().maxCoeff(&k);
  Eigen::Vector3d axis = S.col(k) / std::sqrt(S(k, k));
  axis.normalize();
  // Pick the sign consistent with the (possibly tiny) vee part.
  if (axis.dot(vee) < 0.0) axis = -axis;
  return theta * axis;
}

/**
 * @brief Rigid transform: p' = rotation * p + translation.
 *
 * The rotation block is expected to be orthonormal with determinant +1;
 * loaders enforce this, composition preserves it to numerical precision.
 */
struct Transform3D {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  [[nodiscard]] static Transform3D identity() { return {}; }

  [[nodiscard]] Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  [[nodiscard]] Transform3D operator*(const Transform3D& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  [[nodiscard]] Transform3D inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  [[nodiscard]] bool is_rigid(double tol = 1e-9) const {
    const double ortho =
        (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm();
    return rotation.allFinite() && translation.allFinite() && ortho < tol &&
           std::abs(rotation.determinant() - 1.0) < tol;
  }
};

/**
 * @brief Re-wrap an axis-angle vector so its norm lies in [0, pi].
 *
 * Rotations by theta about u and by 2*pi - theta about -u are identical;
 * keeping the short representative makes particle statistics unambiguous.
 */
[[nodiscard]] inline Eigen::Vector3d canonicalize_axis_angle(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta <= M_PI) return omega;
  const Eigen::Vector3d axis = omega / theta;
  double wrapped = std::fmod(theta, 2.0 * M_PI);
  if (wrapped > M_PI) wrapped -= 2.0 * M_PI;  // negative: flips the axis
  return wrapped * axis;
}

/**
 * @brief The tracked correction: an axis-angle rotation plus a translation.
 *
 * Construction canonicalizes omega to [0, pi] and rejects non-finite input.
 */
struct LumpedErrorState {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();    // radians * unit axis
  Eigen::Vector3d b_trans = Eigen::Vector3d::Zero();  // meters

  LumpedErrorState() = default;
  LumpedErrorState(const Eigen::Vector3d& w, const Eigen::Vector3d& b) {
    if (!w.allFinite() || !b.allFinite())
      throw std::invalid_argument("LumpedErrorState: non-finite component");
    omega = canonicalize_axis_angle(w);
    b_trans = b;
  }
};

/// Builds the rigid transform T(omega, b) from axis-angle and translation.
[[nodiscard]] inline Transform3D axis_angle_to_transform(const Eigen::Vector3d& omega,
                                                         const Eigen::Vector3d& b_trans) {
  if (!omega.allFinite() || !b_trans.allFinite())
    throw std::invalid_argument("axis_angle_to_transform: non-finite component");
  return {so3_exp(omega), b_trans};
}

[[nodiscard]] inline Transform3D to_transform(const LumpedErrorState& s) {
  return {so3_exp(s.omega), s.b_trans};
}

struct CameraIntrinsics {
  double fx = 0.0;        // pixels
  double fy = 0.0;        // pixels
  double cx = 0.0;        // pixels
  double cy = 0.0;        // pixels
  double baseline = 0.0;  // meters, horizontal stereo offset
  int width = 0;          // pixels
  int height = 0;         // pixels

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !(baseline > 0.0))
      throw std::invalid_argument("CameraIntrinsics: fx, fy, baseline must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw std::invalid_argument("CameraIntrinsics: principal point outside image");
  }
};

/// Pinhole projection; nullopt when the point is at or behind the camera.
[[nodiscard]] inline std::optional<Eigen::Vector2d> try_project_point(
    const CameraIntrinsics& K, const Eigen::Vector3d& p_cam,
    double epsilon_depth = kEpsilonDepth) {
  if (!(p_cam.z() > epsilon_depth)) return std::nullopt;
  return Eigen::Vector2d(K.fx * p_cam.x() / p_cam.z() + K.cx,
                         K.fy * p_cam.y() / p_cam.z() + K.cy);
}

/// Pinhole projection; throws PointBehindCamera when z <= epsilon_depth.
[[nodiscard]] inline Eigen::Vector2d project_point(const CameraIntrinsics& K,
                                                   const Eigen::Vector3d& p_cam,
                                                   double epsilon_depth = kEpsilonDepth) {
  const auto m = try_project_point(K, p_cam, epsilon_depth);
  if (!m) throw PointBehindCamera(p_cam.z());
  return *m;
}

}  // namespace ssp
