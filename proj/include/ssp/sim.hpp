// ssp - surgical scene perception toolkit
//
// Synthetic ground truth: an articulated tool scene with an injected lumped
// error, noisy feature detections and encoder readings, a deforming tissue
// height field, and rendered stereo pairs. Everything is a pure function of
// (scenario, frame), so frames can be generated in any order and the same
// seed always reproduces the same data.

#pragma once

#include "ssp/geometry.hpp"
#include "ssp/kinematics.hpp"
#include "ssp/metrics.hpp"
#include "ssp/stereo.hpp"
#include "ssp/tracker.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ssp {

struct JointTrajectory {
  Eigen::VectorXd base;       // rad / m per joint
  Eigen::VectorXd amplitude;  // sinusoidal sweep per joint
  double period_frames = 70.0;
};

struct DetectionNoiseModel {
  double sigma_px = 1.0;            // Gaussian pixel noise
  double rho_base = 0.9;            // confidence of a nominal detection
  double misdetect_prob = 0.0;      // probability of a low-confidence outlier
  double misdetect_offset_px = 40.0;  // outlier displacement magnitude
};

/// Tissue surface in camera coordinates: a tilted plane plus a sinusoidal
/// bump whose amplitude breathes over time,
///   z(x, y) = z0 + sx*x + sy*y + A * sin(2*pi*frame/period) * bump(x, y)
/// with |bump| <= 1.
struct TissueSurface {
  double z0 = 0.105;          // meters
  double slope_x = 0.0;       // dz/dx
  double slope_y = 0.0;       // dz/dy
  double amplitude = 0.003;   // meters
  double period_frames = 40.0;
  double wavelength_x = 0.030;  // meters
  double wavelength_y = 0.024;  // meters
};

struct SimScenario {
  KinematicChain chain;
  ToolGeometry geometry;
  CameraIntrinsics camera;
  LumpedErrorState true_lumped_start;
  Vector6d lumped_drift = Vector6d::Zero();  // (omega, b) increment per frame
  JointTrajectory joint_trajectory;
  DetectionNoiseModel detection;
  TissueSurface surface;
  /// Filter tuning matched to this rig (prior spread and motion noise are
  /// scene-scale parameters; the library defaults carry dVRK-scale values).
  FilterConfig filter;
  double texture_contrast = 1.0;  // 0 = untextured (constant) surface
  int frames = 100;
  int stereo_stride = 25;  // stereo pairs are emitted every this many frames
  std::uint64_t rng_seed = 7;

  void validate() const {
    chain.validate();
    geometry.validate();
    camera.validate();
    if (frames < 1) throw std::invalid_argument("SimScenario: frames must be >= 1");
    if (stereo_stride < 1) throw std::invalid_argument("SimScenario: stereo_stride < 1");
    if (!(detection.sigma_px >= 0.0))
      throw std::invalid_argument("SimScenario: sigma_px < 0");
    if (detection.misdetect_prob < 0.0 || detection.misdetect_prob > 1.0)
      throw std::invalid_argument("SimScenario: misdetect_prob outside [0, 1]");
    if (detection.rho_base < 0.0 || detection.rho_base > 1.0)
      throw std::invalid_argument("SimScenario: rho_base outside [0, 1]");
    if (joint_trajectory.base.size() != chain.num_joints() ||
        joint_trajectory.amplitude.size() != chain.num_joints())
      throw std::invalid_argument("SimScenario: trajectory length != joint count");
  }
};

namespace detail {

[[nodiscard]] inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent, reproducible RNG stream per (seed, frame, stream).
[[nodiscard]] inline std::mt19937_64 frame_rng(std::uint64_t seed, int frame, int stream) {
  const std::uint64_t mix =
      splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(frame) * 8 + stream + 1);
  return std::mt19937_64(splitmix64(mix));
}

[[nodiscard]] inline double lattice_value(std::uint64_t seed, std::int64_t ix,
                                          std::int64_t iy) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) *
                                                           0x8DA6B34340AB5F9FULL ^
                                                       static_cast<std::uint64_t>(iy) *
                                                           0xD81638412A6C34F1ULL));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // [0, 1)
}

[[nodiscard]] inline double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double gx = x / cell;
  const double gy = y / cell;
  const auto ix = static_cast<std::int64_t>(std::floor(gx));
  const auto iy = static_cast<std::int64_t>(std::floor(gy));
  const double fx = gx - static_cast<double>(ix);
  const double fy = gy - static_cast<double>(iy);
  const double sx = fx * fx * (3.0 - 2.0 * fx);
  const double sy = fy * fy * (3.0 - 2.0 * fy);
  const double v00 = lattice_value(seed, ix, iy);
  const double v10 = lattice_value(seed, ix + 1, iy);
  const double v01 = lattice_value(seed, ix, iy + 1);
  const double v11 = lattice_value(seed, ix + 1, iy + 1);
  return (1.0 - sy) * ((1.0 - sx) * v00 + sx * v10) + sy * ((1.0 - sx) * v01 + sx * v11);
}

/// Procedural tissue texture over surface (x, y), two octaves of value noise.
[[nodiscard]] inline double surface_texture(std::uint64_t seed, double x, double y,
                                            double contrast) {
  const double coarse = value_noise(seed ^ 0x51ED2700FFA3C1ULL, x, y, 0.0030);
  const double fine = value_noise(seed ^ 0xA3C159D2EB1807ULL, x, y, 0.0008);
  const double v = 0.5 + 1.4 * contrast * (0.65 * (coarse - 0.5) + 0.35 * (fine - 0.5));
  return std::clamp(v, 0.0, 1.0);
}

[[nodiscard]] inline double surface_phase(const TissueSurface& s, int frame) {
  return 2.0 * M_PI * static_cast<double>(frame) / s.period_frames;
}

[[nodiscard]] inline double surface_height(const TissueSurface& s, double phase, double x,
                                           double y) {
  const double bump =
      std::sin(2.0 * M_PI * x / s.wavelength_x) * std::sin(2.0 * M_PI * y / s.wavelength_y);
  return s.z0 + s.slope_x * x + s.slope_y * y + s.amplitude * std::sin(phase) * bump;
}

/// Depth along the ray (ox + a*z, b*z, z) to the height field, via Newton.
[[nodiscard]] inline double raycast_surface(const TissueSurface& s, double phase, double a,
                                            double b, double ox) {
  const double amp = s.amplitude * std::sin(phase);
  const double kx = 2.0 * M_PI / s.wavelength_x;
  const double ky = 2.0 * M_PI / s.wavelength_y;
  double z = s.z0;
  for (int it = 0; it < 60; ++it) {
    const double x = ox + a * z;
    const double y = b * z;
    const double sx = std::sin(kx * x);
    const double sy = std::sin(ky * y);
    const double f = z - (s.z0 + s.slope_x * x + s.slope_y * y + amp * sx * sy);
    if (std::abs(f) < 1e-13) break;
    const double dgx = s.slope_x + amp * kx * std::cos(kx * x) * sy;
    const double dgy = s.slope_y + amp * ky * sx * std::cos(ky * y);
    double fp = 1.0 - (dgx * a + dgy * b);
    if (std::abs(fp) < 0.05) fp = fp < 0.0 ? -0.05 : 0.05;
    z -= f / fp;
  }
  return z;
}

}  // namespace detail

/// Injected lumped error at a frame (start plus per-frame drift, re-wrapped).
[[nodiscard]] inline LumpedErrorState true_lumped(const SimScenario& scenario, int frame) {
  const Vector6d d = scenario.lumped_drift * static_cast<double>(frame);
  return {scenario.true_lumped_start.omega + d.head<3>(),
          scenario.true_lumped_start.b_trans + d.tail<3>()};
}

/// Encoder readings at a frame (noise-free sinusoidal sweep).
[[nodiscard]] inline JointState joint_state(const SimScenario& scenario, int frame) {
  const double phase =
      2.0 * M_PI * static_cast<double>(frame) / scenario.joint_trajectory.period_frames;
  return JointState(scenario.joint_trajectory.base +
                    std::sin(phase) * scenario.joint_trajectory.amplitude);
}

/**
 * @brief Noisy detections for one frame: ground-truth projections under the
 *        injected lumped error plus Gaussian pixel noise. With probability
 *        misdetect_prob a detection is displaced by the configured offset in
 *        a random direction and reported with low confidence (< 0.3),
 *        mimicking a detector confusing symmetric tool parts. Features behind
 *        the camera are omitted.
 */
[[nodiscard]] inline std::vector<FeatureDetection> simulate_detections(
    const SimScenario& scenario, int frame) {
  if (frame < 0 || frame >= scenario.frames)
    throw std::invalid_argument("simulate_detections: frame out of range");
  auto rng = detail::frame_rng(scenario.rng_seed, frame, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const JointState joints = joint_state(scenario, frame);
  const LumpedErrorState lumped = true_lumped(scenario, frame);
  const Transform3D lumped_t = to_transform(lumped);
  const auto base_points = feature_base_points(scenario.chain, joints);

  std::vector<FeatureDetection> out;
  out.reserve(scenario.chain.features.size());
  for (size_t i = 0; i < scenario.chain.features.size(); ++i) {
    const auto m = try_project_base_point(scenario.camera, scenario.chain.hand_eye_prior,
                                          lumped_t, base_points[i]);
    if (!m) continue;
    Eigen::Vector2d h =
        *m + scenario.detection.sigma_px * Eigen::Vector2d(gauss(rng), gauss(rng));
    double rho = scenario.detection.rho_base;
    if (unit(rng) < scenario.detection.misdetect_prob) {
      const double angle = 2.0 * M_PI * unit(rng);
      h += scenario.detection.misdetect_offset_px *
           Eigen::Vector2d(std::cos(angle), std::sin(angle));
      rho = 0.05 + 0.25 * unit(rng);  // low confidence, in [0.05, 0.3)
    }
    out.push_back({scenario.chain.features[i].id, h, rho});
  }
  return out;
}

/// Ground-truth depth of the tissue surface seen from the left camera.
[[nodiscard]] inline DepthMap simulate_depth(const SimScenario& scenario, int frame) {
  if (frame < 0 || frame >= scenario.frames)
    throw std::invalid_argument("simulate_depth: frame out of range");
  const CameraIntrinsics& K = scenario.camera;
  const double phase = detail::surface_phase(scenario.surface, frame);
  DepthMap depth(K.width, K.height);
  for (int r = 0; r < K.height; ++r) {
    const double b = (r + 0.5 - K.cy) / K.fy;
    for (int c = 0; c < K.width; ++c) {
      const double a = (c + 0.5 - K.cx) / K.fx;
      depth.z[depth.idx(r, c)] = detail::raycast_surface(scenario.surface, phase, a, b, 0.0);
    }
  }
  return depth;
}

/// Ground-truth tool mask at a frame (rendered from the true pose).
[[nodiscard]] inline BinaryMask simulate_tool_mask(const SimScenario& scenario, int frame) {
  return render_tool_mask(scenario.geometry, scenario.chain, joint_state(scenario, frame),
                          true_lumped(scenario, frame), scenario.camera);
}

/**
 * @brief Rectified stereo pair of the textured height field. Both views ray-
 *        cast the same surface and sample the same world-anchored texture, so
 *        the pair is geometrically exact: disparity = baseline * fx / z.
 */
[[nodiscard]] inline std::pair<ImageGray, ImageGray> render_stereo_pair(
    const SimScenario& scenario, int frame, const CameraIntrinsics& K) {
  if (frame < 0 || frame >= scenario.frames)
    throw std::invalid_argument("render_stereo_pair: frame out of range");
  const double phase = detail::surface_phase(scenario.surface, frame);
  ImageGray left(K.width, K.height);
  ImageGray right(K.width, K.height);
  for (int view = 0; view < 2; ++view) {
    ImageGray& img = view == 0 ? left : right;
    const double ox = view == 0 ? 0.0 : K.baseline;  // right camera sits at +x
    for (int r = 0; r < K.height; ++r) {
      const double b = (r + 0.5 - K.cy) / K.fy;
      for (int c = 0; c < K.width; ++c) {
        const double a = (c + 0.5 - K.cx) / K.fx;
        const double z = detail::raycast_surface(scenario.surface, phase, a, b, ox);
        const double x = ox + a * z;
        const double y = b * z;
        img.at(r, c) =
            detail::surface_texture(scenario.rng_seed, x, y, scenario.texture_contrast);
      }
    }
  }
  return {std::move(left), std::move(right)};
}

/**
 * @brief The canonical test scenario: a 6-joint arm in the dVRK style
 *        (yaw, pitch, insertion, roll, wrist pitch, gripper yaw) carrying
 *        seven named features, viewed by a 640x480 stereo camera about 10 cm
 *        away. Mirrors data/scenarios/default.json.
 */
[[nodiscard]] inline SimScenario default_scenario() {
  SimScenario s;

  s.camera = {520.0, 520.0, 320.0, 240.0, 0.0075, 640, 480};

  KinematicChain chain;
  const Eigen::Vector3d ux = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d uy = Eigen::Vector3d::UnitY();
  const Eigen::Vector3d uz = Eigen::Vector3d::UnitZ();
  chain.joints.push_back({JointType::kRevolute, Transform3D::identity(), uy});
  chain.joints.push_back({JointType::kRevolute, Transform3D::identity(), ux});
  chain.joints.push_back({JointType::kPrismatic, Transform3D::identity(), uz});
  chain.joints.push_back({JointType::kRevolute, Transform3D::identity(), uz});
  chain.joints.push_back(
      {JointType::kRevolute, {Eigen::Matrix3d::Identity(), {0.0, 0.0, 0.005}}, ux});
  chain.joints.push_back(
      {JointType::kRevolute, {Eigen::Matrix3d::Identity(), {0.0, 0.0, 0.006}}, uy});
  chain.hand_eye_prior = {so3_exp(Eigen::Vector3d(-0.15, 0.25, 0.0)),
                          {-0.030, -0.020, 0.020}};
  chain.features = {
      {"shaft_1", 3, {0.0, 0.0, -0.020}},   {"shaft_2", 3, {0.0, 0.0, -0.008}},
      {"Roll_1", 4, {0.0045, 0.0, 0.002}},  {"Pitch_1", 5, {0.0, 0.004, 0.001}},
      {"Pitch_2", 5, {0.0, -0.004, 0.004}}, {"Yaw_1", 6, {0.0, 0.0035, 0.003}},
      {"Yaw_2", 6, {0.003, 0.0, 0.006}},
  };
  s.chain = std::move(chain);

  s.geometry.primitives = {
      {ToolPrimitive::Kind::kCapsule, 3, {0.0, 0.0, -0.028}, {0.0, 0.0, 0.0}, 0.006},
      {ToolPrimitive::Kind::kSphere, 4, {0.0, 0.0, 0.002}, {0.0, 0.0, 0.0}, 0.006},
      {ToolPrimitive::Kind::kCapsule, 5, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.006}, 0.0045},
      {ToolPrimitive::Kind::kCapsule, 6, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.008}, 0.004},
  };

  s.true_lumped_start = {0.05 * Eigen::Vector3d(0.3, -0.5, 0.8).normalized(),
                         0.02 * Eigen::Vector3d(-0.4, 0.3, 0.5).normalized()};

  s.joint_trajectory.base = (Eigen::VectorXd(6) << 0.12, -0.10, 0.088, 0.40, 0.25, -0.30)
                                .finished();
  s.joint_trajectory.amplitude =
      (Eigen::VectorXd(6) << 0.12, 0.10, 0.008, 0.20, 0.18, 0.22).finished();
  s.joint_trajectory.period_frames = 70.0;

  s.detection = {1.0, 0.9, 0.0, 40.0};
  s.surface = {0.105, 0.0, 0.0, 0.003, 40.0, 0.030, 0.024};

  // Desk-scale filter tuning; the gamma / covariance pair is the method's
  // per-rig knob, and the 10 cm scene needs a far tighter prior than the
  // dVRK-scale library defaults.
  s.filter.n_particles = 1000;
  s.filter.sigma0 << 9e-4, 9e-4, 9e-4, 2.25e-4, 2.25e-4, 2.25e-4;
  s.filter.motion_scale = 0.0015;
  s.filter.gamma = 0.02;
  s.filter.resample_threshold = 500.0;

  s.frames = 100;
  s.stereo_stride = 25;
  s.rng_seed = 7;
  return s;
}

}  // namespace ssp
