#include "ssp/geometry.hpp"
#include "ssp/kinematics.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using Catch::Approx;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

const ssp::CameraIntrinsics kCamera{500.0, 500.0, 320.0, 240.0, 0.005, 640, 480};

}  // namespace

TEST_CASE("axis_angle_to_transform: zero vector is the exact identity") {
  const auto t = ssp::axis_angle_to_transform(Vector3d::Zero(), Vector3d::Zero());
  REQUIRE((t.rotation - Eigen::Matrix3d::Identity()).norm() == 0.0);
  REQUIRE(t.translation.norm() == 0.0);
}

TEST_CASE("axis_angle_to_transform: quarter turn about z") {
  const auto t = ssp::axis_angle_to_transform(Vector3d(0, 0, M_PI_2), Vector3d::Zero());
  const Vector3d p = t.apply(Vector3d(1, 0, 0));
  REQUIRE((p - Vector3d(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("axis_angle_to_transform: half turn about x plus translation") {
  const auto t = ssp::axis_angle_to_transform(Vector3d(M_PI, 0, 0), Vector3d(1, 2, 3));
  const Vector3d p = t.apply(Vector3d(0, 1, 0));
  REQUIRE((p - Vector3d(1, 1, 3)).norm() < 1e-12);
}

TEST_CASE("axis_angle_to_transform: rejects non-finite input") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(ssp::axis_angle_to_transform(Vector3d(nan, 0, 0), Vector3d::Zero()),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(ssp::LumpedErrorState(Vector3d::Zero(), Vector3d(0, nan, 0)),
                    std::invalid_argument);
}

TEST_CASE("composition of rigid transforms stays orthonormal") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto a = oracle::random_transform(rng);
    const auto b = oracle::random_transform(rng);
    REQUIRE((a * b).is_rigid(1e-9));
  }
}

TEST_CASE("Rodrigues round trip over the wrap-safe angle range") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> angle(1e-6, M_PI - 1e-3);
  for (int i = 0; i < 200; ++i) {
    const Vector3d omega = angle(rng) * oracle::random_unit(rng);
    const Eigen::Matrix3d r = ssp::so3_exp(omega);
    const Vector3d back = ssp::so3_log(r);
    REQUIRE((ssp::so3_exp(back) - r).norm() < 1e-9);
    REQUIRE((back - omega).norm() < 1e-9);
  }
}

TEST_CASE("canonicalize_axis_angle wraps to [0, pi] preserving the rotation") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> angle(0.0, 12.0);
  for (int i = 0; i < 200; ++i) {
    const Vector3d omega = angle(rng) * oracle::random_unit(rng);
    const Vector3d wrapped = ssp::canonicalize_axis_angle(omega);
    REQUIRE(wrapped.norm() <= M_PI + 1e-12);
    REQUIRE((ssp::so3_exp(omega) - ssp::so3_exp(wrapped)).norm() < 1e-9);
  }
}

TEST_CASE("project_point: optical axis and lateral offset") {
  REQUIRE((ssp::project_point(kCamera, Vector3d(0, 0, 2)) - Vector2d(320, 240)).norm() <
          1e-12);
  REQUIRE((ssp::project_point(kCamera, Vector3d(0.1, 0, 1)) - Vector2d(370, 240)).norm() <
          1e-12);
}

TEST_CASE("project_point: behind-camera is an error") {
  REQUIRE_THROWS_AS(ssp::project_point(kCamera, Vector3d(0, 0, -1)), ssp::PointBehindCamera);
  REQUIRE_THROWS_AS(ssp::project_point(kCamera, Vector3d(0, 0, 0)), ssp::PointBehindCamera);
  REQUIRE_FALSE(ssp::try_project_point(kCamera, Vector3d(0, 0, 1e-9)).has_value());
}

TEST_CASE("projection is invariant to homogeneous scaling") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> unif(-0.3, 0.3);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int i = 0; i < 200; ++i) {
    const Vector3d p(unif(rng), unif(rng), 0.5 + scale(rng));
    const double s = scale(rng);
    const Vector2d a = ssp::project_point(kCamera, p);
    const Vector2d b = ssp::project_point(kCamera, s * p);
    REQUIRE((a - b).norm() < 1e-9);
  }
}

TEST_CASE("forward_kinematics: link 0 is the identity") {
  std::mt19937_64 rng(15);
  const auto chain = oracle::random_chain(rng, 4, 2);
  const auto joints = oracle::random_joints(rng, 4);
  const auto t = ssp::forward_kinematics(chain, joints, 0);
  REQUIRE((t.rotation - Eigen::Matrix3d::Identity()).norm() == 0.0);
  REQUIRE(t.translation.norm() == 0.0);
}

TEST_CASE("forward_kinematics: single revolute joint about z") {
  ssp::KinematicChain chain;
  chain.joints.push_back({ssp::JointType::kRevolute, {}, Vector3d::UnitZ()});
  const auto t = ssp::forward_kinematics(chain, ssp::JointState(Eigen::VectorXd::Constant(1, M_PI_2)), 1);
  REQUIRE((t.rotation - ssp::so3_exp(Vector3d(0, 0, M_PI_2))).norm() < 1e-15);
  REQUIRE(t.translation.norm() == 0.0);
}

TEST_CASE("forward_kinematics: two-joint chain matches dense 4x4 oracle") {
  std::mt19937_64 rng(16);
  ssp::KinematicChain chain;
  chain.joints.push_back(
      {ssp::JointType::kRevolute, oracle::random_transform(rng, 0.1), Vector3d::UnitY()});
  chain.joints.push_back(
      {ssp::JointType::kRevolute, oracle::random_transform(rng, 0.1), Vector3d::UnitX()});
  const ssp::JointState joints((Eigen::VectorXd(2) << 0.3, -0.2).finished());
  const auto t = ssp::forward_kinematics(chain, joints, 2);
  const auto m = oracle::fk_mat4(chain, joints, 2);
  REQUIRE((t.rotation - m.topLeftCorner<3, 3>()).norm() < 1e-12);
  REQUIRE((t.translation - m.topRightCorner<3, 1>()).norm() < 1e-12);
}

TEST_CASE("forward_kinematics: index and length validation") {
  std::mt19937_64 rng(17);
  const auto chain = oracle::random_chain(rng, 3, 1);
  const auto joints = oracle::random_joints(rng, 3);
  REQUIRE_THROWS_AS(ssp::forward_kinematics(chain, joints, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(ssp::forward_kinematics(chain, joints, -1), std::invalid_argument);
  REQUIRE_THROWS_AS(ssp::forward_kinematics(chain, oracle::random_joints(rng, 2), 1),
                    std::invalid_argument);
}

TEST_CASE("project_feature: reduces to project_point on a trivial chain") {
  ssp::KinematicChain chain;  // no joints, identity hand-eye
  chain.features.push_back({"tip", 0, Vector3d(0, 0, 1)});
  const ssp::JointState joints{Eigen::VectorXd(0)};

  const Vector2d a = ssp::project_feature(kCamera, chain, joints, {}, "tip");
  REQUIRE((a - Vector2d(320, 240)).norm() < 1e-12);

  const ssp::LumpedErrorState shifted(Vector3d::Zero(), Vector3d(0.1, 0, 0));
  const Vector2d b = ssp::project_feature(kCamera, chain, joints, shifted, "tip");
  REQUIRE((b - Vector2d(370, 240)).norm() < 1e-12);

  REQUIRE_THROWS_AS(ssp::project_feature(kCamera, chain, joints, {}, "nope"),
                    ssp::UnknownFeature);
  const ssp::LumpedErrorState behind(Vector3d::Zero(), Vector3d(0, 0, -2.0));
  REQUIRE_THROWS_AS(ssp::project_feature(kCamera, chain, joints, behind, "tip"),
                    ssp::PointBehindCamera);
}

TEST_CASE("project_feature: matches the dense matrix-chain oracle") {
  std::mt19937_64 rng(18);
  int checked = 0;
  while (checked < 100) {
    const auto chain = oracle::random_chain(rng, 5, 3);
    const auto joints = oracle::random_joints(rng, 5);
    const auto lumped = oracle::random_lumped(rng);
    for (const auto& f : chain.features) {
      if (oracle::feature_depth(chain, joints, lumped, f) < 0.05) continue;
      const Vector2d expected = oracle::project_feature(kCamera, chain, joints, lumped, f);
      const Vector2d got = ssp::project_feature(kCamera, chain, joints, lumped, f.id);
      REQUIRE((got - expected).norm() < 1e-9);
      ++checked;
    }
  }
}

TEST_CASE("project_feature: zero lumped error equals the raw kinematic chain") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int checked = 0;
  while (checked < 100) {
    // Identity hand-eye and gentle forward-leaning links keep features in view.
    ssp::KinematicChain chain;
    for (int i = 0; i < 4; ++i) {
      ssp::Joint j;
      j.type = i % 2 == 0 ? ssp::JointType::kRevolute : ssp::JointType::kPrismatic;
      j.pre = {ssp::so3_exp(0.2 * unif(rng) * oracle::random_unit(rng)),
               Vector3d(0.01 * unif(rng), 0.01 * unif(rng), 0.05 + 0.02 * unif(rng))};
      j.axis = oracle::random_unit(rng);
      chain.joints.push_back(j);
    }
    for (int i = 0; i < 2; ++i)
      chain.features.push_back({"f" + std::to_string(i), 1 + (i * 3) % 4,
                                Vector3d(0.01 * unif(rng), 0.01 * unif(rng), 0.01 * unif(rng))});
    const auto joints = oracle::random_joints(rng, 4);
    for (const auto& f : chain.features) {
      const ssp::Transform3D fk = ssp::forward_kinematics(chain, joints, f.link);
      const Vector3d p_cam = fk.apply(f.point);
      if (p_cam.z() < 0.05) continue;
      const Vector2d raw = ssp::project_point(kCamera, p_cam);
      const Vector2d full = ssp::project_feature(kCamera, chain, joints, {}, f.id);
      REQUIRE((full - raw).norm() < 1e-9);
      ++checked;
    }
  }
}

TEST_CASE("camera intrinsics validation") {
  ssp::CameraIntrinsics bad = kCamera;
  bad.fx = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = kCamera;
  bad.cx = 640.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  REQUIRE_NOTHROW(kCamera.validate());
}
