// ssp - surgical scene perception toolkit
//
// JSON serialization for chains, calibrations, tool geometry, configs,
// scenarios, detection/encoder streams and pose records. Load errors name
// the file, the offending field, and (for parse errors) the line.

#pragma once

#include "ssp/geometry.hpp"
#include "ssp/kinematics.hpp"
#include "ssp/metrics.hpp"
#include "ssp/sim.hpp"
#include "ssp/stereo.hpp"
#include "ssp/tracker.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssp {

using Json = nlohmann::json;

namespace detail {

[[nodiscard]] inline int byte_offset_to_line(const std::string& text, size_t offset) {
  int line = 1;
  for (size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

/// Parses a JSON file; parse errors report "<path>:<line>: <reason>".
[[nodiscard]] inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path + ":" +
                             std::to_string(detail::byte_offset_to_line(text, e.byte)) +
                             ": " + e.what());
  }
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error(path + ": write failed");
}

/// Field access that names the missing field and its surrounding context.
[[nodiscard]] inline const Json& require_field(const Json& j, const std::string& key,
                                               const std::string& context) {
  const auto it = j.find(key);
  if (it == j.end())
    throw std::runtime_error(context + ": missing field '" + key + "'");
  return *it;
}

// ---------------------------------------------------------------------------
// Basic math types
// ---------------------------------------------------------------------------

[[nodiscard]] inline Json to_json(const Eigen::Vector3d& v) {
  return Json::array({v.x(), v.y(), v.z()});
}

[[nodiscard]] inline Eigen::Vector3d vector3_from_json(const Json& j,
                                                       const std::string& context) {
  if (!j.is_array() || j.size() != 3)
    throw std::runtime_error(context + ": expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

[[nodiscard]] inline Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

[[nodiscard]] inline Eigen::VectorXd vectorx_from_json(const Json& j,
                                                       const std::string& context) {
  if (!j.is_array()) throw std::runtime_error(context + ": expected an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

[[nodiscard]] inline Json to_json(const Transform3D& t) {
  Json rows = Json::array();
  for (int r = 0; r < 3; ++r)
    rows.push_back(Json::array({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)}));
  return Json{{"rotation", rows}, {"translation", to_json(t.translation)}};
}

/// Accepts either {"rotation": [[3x3]], ...} or {"axis_angle": [3], ...};
/// the axis-angle form is exactly orthonormal by construction and is the
/// friendlier one to write by hand.
[[nodiscard]] inline Transform3D transform_from_json(const Json& j,
                                                     const std::string& context) {
  Transform3D t;
  t.translation = vector3_from_json(require_field(j, "translation", context),
                                    context + ".translation");
  if (j.contains("axis_angle")) {
    t.rotation = so3_exp(vector3_from_json(j["axis_angle"], context + ".axis_angle"));
  } else {
    const Json& rows = require_field(j, "rotation", context);
    if (!rows.is_array() || rows.size() != 3)
      throw std::runtime_error(context + ".rotation: expected 3 rows");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = rows[r][c].get<double>();
  }
  if (!t.is_rigid(1e-9))
    throw std::runtime_error(context + ": rotation is not orthonormal (use axis_angle "
                                       "for hand-written transforms)");
  return t;
}

// ---------------------------------------------------------------------------
// Camera, chain, tool geometry
// ---------------------------------------------------------------------------

[[nodiscard]] inline Json to_json(const CameraIntrinsics& k) {
  return Json{{"fx", k.fx},       {"fy", k.fy},           {"cx", k.cx},
              {"cy", k.cy},       {"baseline", k.baseline}, {"width", k.width},
              {"height", k.height}};
}

[[nodiscard]] inline CameraIntrinsics intrinsics_from_json(const Json& j,
                                                           const std::string& context) {
  CameraIntrinsics k;
  k.fx = require_field(j, "fx", context).get<double>();
  k.fy = require_field(j, "fy", context).get<double>();
  k.cx = require_field(j, "cx", context).get<double>();
  k.cy = require_field(j, "cy", context).get<double>();
  k.baseline = require_field(j, "baseline", context).get<double>();
  k.width = require_field(j, "width", context).get<int>();
  k.height = require_field(j, "height", context).get<int>();
  k.validate();
  return k;
}

[[nodiscard]] inline Json to_json(const KinematicChain& chain) {
  Json joints = Json::array();
  for (const auto& j : chain.joints) {
    joints.push_back(Json{{"type", j.type == JointType::kRevolute ? "revolute" : "prismatic"},
                          {"pre", to_json(j.pre)},
                          {"axis", to_json(j.axis)}});
  }
  Json features = Json::array();
  for (const auto& f : chain.features)
    features.push_back(Json{{"id", f.id}, {"link", f.link}, {"point", to_json(f.point)}});
  return Json{{"joints", joints},
              {"hand_eye_prior", to_json(chain.hand_eye_prior)},
              {"features", features}};
}

[[nodiscard]] inline KinematicChain chain_from_json(const Json& j,
                                                    const std::string& context) {
  KinematicChain chain;
  for (const auto& joint_json : require_field(j, "joints", context)) {
    Joint joint;
    const std::string type = require_field(joint_json, "type", context + ".joints").get<std::string>();
    if (type == "revolute") {
      joint.type = JointType::kRevolute;
    } else if (type == "prismatic") {
      joint.type = JointType::kPrismatic;
    } else {
      throw std::runtime_error(context + ".joints: unknown type '" + type + "'");
    }
    joint.pre = transform_from_json(require_field(joint_json, "pre", context + ".joints"),
                                    context + ".joints.pre");
    joint.axis = vector3_from_json(require_field(joint_json, "axis", context + ".joints"),
                                   context + ".joints.axis");
    chain.joints.push_back(joint);
  }
  chain.hand_eye_prior = transform_from_json(
      require_field(j, "hand_eye_prior", context), context + ".hand_eye_prior");
  for (const auto& f : require_field(j, "features", context)) {
    chain.features.push_back(
        {require_field(f, "id", context + ".features").get<std::string>(),
         require_field(f, "link", context + ".features").get<int>(),
         vector3_from_json(require_field(f, "point", context + ".features"),
                           context + ".features.point")});
  }
  chain.validate();
  return chain;
}

[[nodiscard]] inline Json to_json(const ToolGeometry& geom) {
  Json prims = Json::array();
  for (const auto& p : geom.primitives) {
    Json prim{{"link", p.link}, {"radius", p.radius}};
    if (p.kind == ToolPrimitive::Kind::kSphere) {
      prim["kind"] = "sphere";
      prim["center"] = to_json(p.p0);
    } else {
      prim["kind"] = "capsule";
      prim["p0"] = to_json(p.p0);
      prim["p1"] = to_json(p.p1);
    }
    prims.push_back(prim);
  }
  return Json{{"primitives", prims}};
}

[[nodiscard]] inline ToolGeometry geometry_from_json(const Json& j,
                                                     const std::string& context) {
  ToolGeometry geom;
  for (const auto& p : require_field(j, "primitives", context)) {
    ToolPrimitive prim;
    prim.link = require_field(p, "link", context).get<int>();
    prim.radius = require_field(p, "radius", context).get<double>();
    const std::string kind = require_field(p, "kind", context).get<std::string>();
    if (kind == "sphere") {
      prim.kind = ToolPrimitive::Kind::kSphere;
      prim.p0 = vector3_from_json(require_field(p, "center", context), context + ".center");
    } else if (kind == "capsule") {
      prim.kind = ToolPrimitive::Kind::kCapsule;
      prim.p0 = vector3_from_json(require_field(p, "p0", context), context + ".p0");
      prim.p1 = vector3_from_json(require_field(p, "p1", context), context + ".p1");
    } else {
      throw std::runtime_error(context + ": unknown primitive kind '" + kind + "'");
    }
    geom.primitives.push_back(prim);
  }
  geom.validate();
  return geom;
}

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

[[nodiscard]] inline Json to_json(const FilterConfig& c) {
  Json sigma = Json::array();
  for (int i = 0; i < 6; ++i) sigma.push_back(c.sigma0[i]);
  return Json{{"n_particles", c.n_particles},   {"sigma0", sigma},
              {"motion_scale", c.motion_scale}, {"gamma", c.gamma},
              {"resample_threshold", c.resample_threshold}, {"rng_seed", c.rng_seed}};
}

/// Missing fields keep their defaults, so config files can be partial.
[[nodiscard]] inline FilterConfig filter_from_json(const Json& j, const std::string& context) {
  FilterConfig c;
  if (j.contains("n_particles")) c.n_particles = j["n_particles"].get<int>();
  if (j.contains("sigma0")) {
    const auto v = vectorx_from_json(j["sigma0"], context + ".sigma0");
    if (v.size() != 6) throw std::runtime_error(context + ".sigma0: expected 6 entries");
    c.sigma0 = v;
  }
  if (j.contains("motion_scale")) c.motion_scale = j["motion_scale"].get<double>();
  if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
  if (j.contains("resample_threshold"))
    c.resample_threshold = j["resample_threshold"].get<double>();
  if (j.contains("rng_seed")) c.rng_seed = j["rng_seed"].get<std::uint64_t>();
  c.validate();
  return c;
}

[[nodiscard]] inline Json to_json(const StereoParams& p) {
  return Json{{"d_max", p.d_max},
              {"window", p.window},
              {"readout", p.readout == DisparityReadout::kSoftArgmin ? "soft" : "wta"},
              {"cost_scale", p.cost_scale},
              {"ambiguity_threshold", p.ambiguity_threshold},
              {"disp_min", p.disp_min}};
}

[[nodiscard]] inline StereoParams stereo_from_json(const Json& j, const std::string& context) {
  StereoParams p;
  if (j.contains("d_max")) p.d_max = j["d_max"].get<int>();
  if (j.contains("window")) p.window = j["window"].get<int>();
  if (j.contains("readout")) {
    const std::string mode = j["readout"].get<std::string>();
    if (mode == "soft") {
      p.readout = DisparityReadout::kSoftArgmin;
    } else if (mode == "wta") {
      p.readout = DisparityReadout::kWinnerTakeAll;
    } else {
      throw std::runtime_error(context + ".readout: expected 'soft' or 'wta'");
    }
  }
  if (j.contains("cost_scale")) p.cost_scale = j["cost_scale"].get<double>();
  if (j.contains("ambiguity_threshold"))
    p.ambiguity_threshold = j["ambiguity_threshold"].get<double>();
  if (j.contains("disp_min")) p.disp_min = j["disp_min"].get<double>();
  p.validate();
  return p;
}

[[nodiscard]] inline Json to_json(const FusionParams& p) {
  return Json{{"tau_z", p.tau_z},
              {"c_min", p.c_min},
              {"t_stale", p.t_stale},
              {"dilation_radius", p.dilation_radius}};
}

[[nodiscard]] inline FusionParams fusion_from_json(const Json& j, const std::string&) {
  FusionParams p;
  if (j.contains("tau_z")) p.tau_z = j["tau_z"].get<double>();
  if (j.contains("c_min")) p.c_min = j["c_min"].get<double>();
  if (j.contains("t_stale")) p.t_stale = j["t_stale"].get<int>();
  if (j.contains("dilation_radius")) p.dilation_radius = j["dilation_radius"].get<int>();
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Simulation scenario
// ---------------------------------------------------------------------------

[[nodiscard]] inline Json to_json(const SimScenario& s) {
  return Json{
      {"frames", s.frames},
      {"rng_seed", s.rng_seed},
      {"stereo_stride", s.stereo_stride},
      {"texture_contrast", s.texture_contrast},
      {"camera", to_json(s.camera)},
      {"chain", to_json(s.chain)},
      {"geometry", to_json(s.geometry)},
      {"true_lumped",
       Json{{"omega", to_json(s.true_lumped_start.omega)},
            {"b_trans", to_json(s.true_lumped_start.b_trans)}}},
      {"lumped_drift",
       Json{{"omega", to_json(Eigen::Vector3d(s.lumped_drift.head<3>()))},
            {"b_trans", to_json(Eigen::Vector3d(s.lumped_drift.tail<3>()))}}},
      {"joint_trajectory",
       Json{{"base", to_json(s.joint_trajectory.base)},
            {"amplitude", to_json(s.joint_trajectory.amplitude)},
            {"period_frames", s.joint_trajectory.period_frames}}},
      {"detection_noise",
       Json{{"sigma_px", s.detection.sigma_px},
            {"rho_base", s.detection.rho_base},
            {"misdetect_prob", s.detection.misdetect_prob},
            {"misdetect_offset_px", s.detection.misdetect_offset_px}}},
      {"surface",
       Json{{"z0", s.surface.z0},
            {"slope_x", s.surface.slope_x},
            {"slope_y", s.surface.slope_y},
            {"amplitude", s.surface.amplitude},
            {"period_frames", s.surface.period_frames},
            {"wavelength_x", s.surface.wavelength_x},
            {"wavelength_y", s.surface.wavelength_y}}},
      {"filter", to_json(s.filter)},
  };
}

[[nodiscard]] inline SimScenario scenario_from_json(const Json& j,
                                                    const std::string& context) {
  SimScenario s;
  s.frames = require_field(j, "frames", context).get<int>();
  s.rng_seed = require_field(j, "rng_seed", context).get<std::uint64_t>();
  if (j.contains("stereo_stride")) s.stereo_stride = j["stereo_stride"].get<int>();
  if (j.contains("texture_contrast"))
    s.texture_contrast = j["texture_contrast"].get<double>();
  s.camera = intrinsics_from_json(require_field(j, "camera", context), context + ".camera");
  s.chain = chain_from_json(require_field(j, "chain", context), context + ".chain");
  s.geometry =
      geometry_from_json(require_field(j, "geometry", context), context + ".geometry");

  const Json& lumped = require_field(j, "true_lumped", context);
  s.true_lumped_start = LumpedErrorState(
      vector3_from_json(require_field(lumped, "omega", context), context + ".true_lumped"),
      vector3_from_json(require_field(lumped, "b_trans", context), context + ".true_lumped"));
  if (j.contains("lumped_drift")) {
    s.lumped_drift.head<3>() =
        vector3_from_json(require_field(j["lumped_drift"], "omega", context),
                          context + ".lumped_drift");
    s.lumped_drift.tail<3>() =
        vector3_from_json(require_field(j["lumped_drift"], "b_trans", context),
                          context + ".lumped_drift");
  }

  const Json& traj = require_field(j, "joint_trajectory", context);
  s.joint_trajectory.base = vectorx_from_json(require_field(traj, "base", context),
                                              context + ".joint_trajectory.base");
  s.joint_trajectory.amplitude =
      vectorx_from_json(require_field(traj, "amplitude", context),
                        context + ".joint_trajectory.amplitude");
  s.joint_trajectory.period_frames =
      require_field(traj, "period_frames", context).get<double>();

  const Json& noise = require_field(j, "detection_noise", context);
  s.detection.sigma_px = require_field(noise, "sigma_px", context).get<double>();
  s.detection.rho_base = require_field(noise, "rho_base", context).get<double>();
  s.detection.misdetect_prob = require_field(noise, "misdetect_prob", context).get<double>();
  s.detection.misdetect_offset_px =
      require_field(noise, "misdetect_offset_px", context).get<double>();

  const Json& surf = require_field(j, "surface", context);
  s.surface.z0 = require_field(surf, "z0", context).get<double>();
  s.surface.slope_x = require_field(surf, "slope_x", context).get<double>();
  s.surface.slope_y = require_field(surf, "slope_y", context).get<double>();
  s.surface.amplitude = require_field(surf, "amplitude", context).get<double>();
  s.surface.period_frames = require_field(surf, "period_frames", context).get<double>();
  s.surface.wavelength_x = require_field(surf, "wavelength_x", context).get<double>();
  s.surface.wavelength_y = require_field(surf, "wavelength_y", context).get<double>();

  if (j.contains("filter")) s.filter = filter_from_json(j["filter"], context + ".filter");
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Frame streams: detections, encoders, poses
// ---------------------------------------------------------------------------

struct DetectionStream {
  /// Stored pixel coordinates are divided by this on write and multiplied
  /// back on read, mirroring detectors that run on downsampled input.
  double coordinate_scale = 2.0;
  std::vector<int> frame_ids;
  std::vector<std::vector<FeatureDetection>> frames;  // full-resolution pixels
};

inline void save_detections(const std::string& path, const DetectionStream& stream) {
  Json frames = Json::array();
  for (size_t i = 0; i < stream.frames.size(); ++i) {
    Json dets = Json::array();
    for (const auto& d : stream.frames[i]) {
      dets.push_back(Json{{"feature_id", d.feature_id},
                          {"u", d.h.x() / stream.coordinate_scale},
                          {"v", d.h.y() / stream.coordinate_scale},
                          {"rho", d.rho}});
    }
    frames.push_back(Json{{"frame_id", stream.frame_ids[i]}, {"detections", dets}});
  }
  save_json(path, Json{{"coordinate_scale", stream.coordinate_scale}, {"frames", frames}});
}

[[nodiscard]] inline DetectionStream load_detections(const std::string& path) {
  const Json j = load_json(path);
  DetectionStream stream;
  stream.coordinate_scale =
      j.contains("coordinate_scale") ? j["coordinate_scale"].get<double>() : 1.0;
  if (!(stream.coordinate_scale > 0.0))
    throw std::runtime_error(path + ": coordinate_scale must be positive");
  for (const auto& frame : require_field(j, "frames", path)) {
    stream.frame_ids.push_back(require_field(frame, "frame_id", path).get<int>());
    std::vector<FeatureDetection> dets;
    for (const auto& d : require_field(frame, "detections", path)) {
      FeatureDetection det;
      det.feature_id = require_field(d, "feature_id", path).get<std::string>();
      det.h.x() = require_field(d, "u", path).get<double>() * stream.coordinate_scale;
      det.h.y() = require_field(d, "v", path).get<double>() * stream.coordinate_scale;
      det.rho = require_field(d, "rho", path).get<double>();
      if (det.rho < 0.0 || det.rho > 1.0 || !det.h.allFinite())
        throw std::runtime_error(path + ": detection for '" + det.feature_id +
                                 "' out of range");
      dets.push_back(std::move(det));
    }
    stream.frames.push_back(std::move(dets));
  }
  return stream;
}

struct EncoderStream {
  std::vector<int> frame_ids;
  std::vector<JointState> frames;
};

inline void save_encoders(const std::string& path, const EncoderStream& stream) {
  Json frames = Json::array();
  for (size_t i = 0; i < stream.frames.size(); ++i)
    frames.push_back(Json{{"frame_id", stream.frame_ids[i]},
                          {"theta", to_json(stream.frames[i].theta)}});
  save_json(path, Json{{"frames", frames}});
}

[[nodiscard]] inline EncoderStream load_encoders(const std::string& path) {
  const Json j = load_json(path);
  EncoderStream stream;
  for (const auto& frame : require_field(j, "frames", path)) {
    stream.frame_ids.push_back(require_field(frame, "frame_id", path).get<int>());
    Eigen::VectorXd theta =
        vectorx_from_json(require_field(frame, "theta", path), path + ".theta");
    if (!theta.allFinite()) throw std::runtime_error(path + ": non-finite encoder value");
    stream.frames.push_back(JointState(std::move(theta)));
  }
  return stream;
}

struct PoseRecord {
  int frame_id = 0;
  LumpedErrorState state;
  double n_eff = 0.0;
  bool resampled = false;
  bool degenerate = false;
  bool skipped_update = false;
};

inline void save_poses(const std::string& path, const std::vector<PoseRecord>& poses,
                       bool with_filter_fields) {
  Json frames = Json::array();
  for (const auto& p : poses) {
    Json rec{{"frame_id", p.frame_id},
             {"omega", to_json(p.state.omega)},
             {"b_trans", to_json(p.state.b_trans)}};
    if (with_filter_fields) {
      rec["n_eff"] = p.n_eff;
      rec["resampled"] = p.resampled;
      rec["degenerate"] = p.degenerate;
      rec["skipped_update"] = p.skipped_update;
    }
    frames.push_back(rec);
  }
  save_json(path, Json{{"frames", frames}});
}

[[nodiscard]] inline std::vector<PoseRecord> load_poses(const std::string& path) {
  const Json j = load_json(path);
  std::vector<PoseRecord> poses;
  for (const auto& frame : require_field(j, "frames", path)) {
    PoseRecord rec;
    rec.frame_id = require_field(frame, "frame_id", path).get<int>();
    rec.state = LumpedErrorState(
        vector3_from_json(require_field(frame, "omega", path), path + ".omega"),
        vector3_from_json(require_field(frame, "b_trans", path), path + ".b_trans"));
    if (frame.contains("n_eff")) rec.n_eff = frame["n_eff"].get<double>();
    if (frame.contains("resampled")) rec.resampled = frame["resampled"].get<bool>();
    if (frame.contains("degenerate")) rec.degenerate = frame["degenerate"].get<bool>();
    if (frame.contains("skipped_update"))
      rec.skipped_update = frame["skipped_update"].get<bool>();
    poses.push_back(rec);
  }
  return poses;
}

}  // namespace ssp
