// ssp - surgical scene perception toolkit
//
// Kinematic chains and the full feature-projection pipeline: a feature point
// attached to link j is mapped through forward kinematics, the tracked
// lumped-error correction and the hand-eye prior, then projected.

#pragma once

#include "ssp/geometry.hpp"

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssp {

struct UnknownFeature : std::invalid_argument {
  explicit UnknownFeature(const std::string& id)
      : std::invalid_argument("unknown feature id: " + id) {}
};

enum class JointType { kRevolute, kPrismatic };

/**
 * @brief One joint: a fixed pre-transform followed by motion about an axis.
 *
 * Covers DH-style chains: revolute joints rotate about `axis` by theta
 * (radians), prismatic joints translate along `axis` by theta (meters).
 */
struct Joint {
  JointType type = JointType::kRevolute;
  Transform3D pre;                              // fixed link offset
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit motion axis
};

/// A named feature point rigidly attached to a link (link-frame coordinates).
struct FeaturePoint {
  std::string id;
  int link = 0;  // 0 = base frame, i = frame after joint i
  Eigen::Vector3d point = Eigen::Vector3d::Zero();  // meters
};

struct JointState {
  Eigen::VectorXd theta;  // radians (revolute) or meters (prismatic)

  JointState() = default;
  explicit JointState(Eigen::VectorXd values) : theta(std::move(values)) {}
};

struct KinematicChain {
  std::vector<Joint> joints;
  Transform3D hand_eye_prior;  // camera <- base(-) prior
  std::vector<FeaturePoint> features;

  [[nodiscard]] int num_joints() const { return static_cast<int>(joints.size()); }

  [[nodiscard]] const FeaturePoint* find_feature(const std::string& id) const {
    for (const auto& f : features)
      if (f.id == id) return &f;
    return nullptr;
  }

  void validate() const {
    for (const auto& j : joints) {
      if (std::abs(j.axis.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("KinematicChain: joint axis is not a unit vector");
      if (!j.pre.is_rigid())
        throw std::invalid_argument("KinematicChain: joint pre-transform is not rigid");
    }
    if (!hand_eye_prior.is_rigid())
      throw std::invalid_argument("KinematicChain: hand-eye prior is not rigid");
    for (const auto& f : features) {
      if (f.link < 0 || f.link > num_joints())
        throw std::invalid_argument("KinematicChain: feature '" + f.id +
                                    "' attached past the last link");
      if (!f.point.allFinite())
        throw std::invalid_argument("KinematicChain: feature '" + f.id +
                                    "' has a non-finite point");
    }
  }
};

/// Transform generated by one joint at value theta (pre-transform included).
[[nodiscard]] inline Transform3D joint_transform(const Joint& joint, double theta) {
  Transform3D motion;
  if (joint.type == JointType::kRevolute) {
    motion.rotation = so3_exp(joint.axis * theta);
  } else {
    motion.translation = joint.axis * theta;
  }
  return joint.pre * motion;
}

/**
 * @brief Pose of link `link_index` in the base frame: the composition of the
 *        first link_index joint transforms. link_index 0 is the identity.
 */
[[nodiscard]] inline Transform3D forward_kinematics(const KinematicChain& chain,
                                                    const JointState& joints,
                                                    int link_index) {
  if (link_index < 0 || link_index > chain.num_joints())
    throw std::invalid_argument("forward_kinematics: link index out of range");
  if (joints.theta.size() != chain.num_joints())
    throw std::invalid_argument("forward_kinematics: joint vector length mismatch");
  Transform3D t;
  for (int i = 0; i < link_index; ++i)
    t = t * joint_transform(chain.joints[i], joints.theta[i]);
  return t;
}

/// Cumulative link poses [I, T_1, T_1*T_2, ...]; size num_joints() + 1.
[[nodiscard]] inline std::vector<Transform3D> forward_all(const KinematicChain& chain,
                                                          const JointState& joints) {
  if (joints.theta.size() != chain.num_joints())
    throw std::invalid_argument("forward_all: joint vector length mismatch");
  std::vector<Transform3D> out(chain.joints.size() + 1);
  for (size_t i = 0; i < chain.joints.size(); ++i)
    out[i + 1] = out[i] * joint_transform(chain.joints[i], joints.theta[static_cast<int>(i)]);
  return out;
}

/// Feature points lifted into the base frame at the given joint state,
/// ordered as chain.features. Shared by the tracker and the projection below.
[[nodiscard]] inline std::vector<Eigen::Vector3d> feature_base_points(
    const KinematicChain& chain, const JointState& joints) {
  const auto fk = forward_all(chain, joints);
  std::vector<Eigen::Vector3d> out;
  out.reserve(chain.features.size());
  for (const auto& f : chain.features) out.push_back(fk[f.link].apply(f.point));
  return out;
}

/// Base-frame point -> pixel through the lumped correction and hand-eye prior.
[[nodiscard]] inline std::optional<Eigen::Vector2d> try_project_base_point(
    const CameraIntrinsics& K, const Transform3D& hand_eye, const Transform3D& lumped,
    const Eigen::Vector3d& base_point, double epsilon_depth = kEpsilonDepth) {
  return try_project_point(K, hand_eye.apply(lumped.apply(base_point)), epsilon_depth);
}

/**
 * @brief Projects the named feature: forward kinematics to its link, lumped
 *        correction, hand-eye prior, pinhole projection, in that order.
 *
 * Throws UnknownFeature / PointBehindCamera.
 */
[[nodiscard]] inline Eigen::Vector2d project_feature(
    const CameraIntrinsics& K, const KinematicChain& chain, const JointState& joints,
    const LumpedErrorState& lumped, const std::string& feature_id,
    double epsilon_depth = kEpsilonDepth) {
  const FeaturePoint* f = chain.find_feature(feature_id);
  if (f == nullptr) throw UnknownFeature(feature_id);
  const Eigen::Vector3d base_point =
      forward_kinematics(chain, joints, f->link).apply(f->point);
  const Eigen::Vector3d p_cam =
      chain.hand_eye_prior.apply(to_transform(lumped).apply(base_point));
  return project_point(K, p_cam, epsilon_depth);
}

/// Non-throwing variant; nullopt when behind the camera.
[[nodiscard]] inline std::optional<Eigen::Vector2d> try_project_feature(
    const CameraIntrinsics& K, const KinematicChain& chain, const JointState& joints,
    const LumpedErrorState& lumped, const std::string& feature_id,
    double epsilon_depth = kEpsilonDepth) {
  const FeaturePoint* f = chain.find_feature(feature_id);
  if (f == nullptr) throw UnknownFeature(feature_id);
  const Eigen::Vector3d base_point =
      forward_kinematics(chain, joints, f->link).apply(f->point);
  return try_project_base_point(K, chain.hand_eye_prior, to_transform(lumped), base_point,
                                epsilon_depth);
}

}  // namespace ssp
