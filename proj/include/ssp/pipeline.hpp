// ssp - surgical scene perception toolkit
//
// Batch pipeline stages behind the CLI: synthetic dataset generation, tool
// tracking, stereo depth, tissue fusion, and offline evaluation. Every stage
// reads/writes the documented file formats, processes frames in order, and
// embeds the config hash and seed in its report for reproducibility. No
// timestamps: identical inputs and seed give bit-identical output trees.

#pragma once

#include "ssp/fusion.hpp"
#include "ssp/io/json_io.hpp"
#include "ssp/io/pfm.hpp"
#include "ssp/io/pgm.hpp"
#include "ssp/io/ply.hpp"
#include "ssp/metrics.hpp"
#include "ssp/sim.hpp"
#include "ssp/stereo.hpp"
#include "ssp/tracker.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ssp {

namespace fs = std::filesystem;

struct PipelineConfig {
  // inputs (resolved to absolute paths on load; empty = not provided)
  std::string calibration;
  std::string chain;
  std::string geometry;
  std::string detections;
  std::string encoders;
  std::string left_dir;
  std::string right_dir;
  std::string disparity_dir;
  std::string depth_dir;
  std::string masks_dir;
  std::string poses;
  std::string gt_depth_dir;
  std::string gt_masks_dir;
  std::string gt_poses;
  std::string gt_detections;
  std::string out_dir;

  FilterConfig filter;
  StereoParams stereo;
  FusionParams fusion;
  /// Detector downsample factor recorded into emitted detection files; the
  /// files are self-describing, so readers never consult this.
  double detection_scale = 2.0;
  int resize_width = 640;
  int resize_height = 480;
  int snapshot_every = 10;
  int frame_limit = 0;  // 0 = every frame
};

[[nodiscard]] inline Json to_json(const PipelineConfig& c) {
  return Json{{"calibration", c.calibration},
              {"chain", c.chain},
              {"geometry", c.geometry},
              {"detections", c.detections},
              {"encoders", c.encoders},
              {"left_dir", c.left_dir},
              {"right_dir", c.right_dir},
              {"disparity_dir", c.disparity_dir},
              {"depth_dir", c.depth_dir},
              {"masks_dir", c.masks_dir},
              {"poses", c.poses},
              {"gt_depth_dir", c.gt_depth_dir},
              {"gt_masks_dir", c.gt_masks_dir},
              {"gt_poses", c.gt_poses},
              {"gt_detections", c.gt_detections},
              {"filter", to_json(c.filter)},
              {"stereo", to_json(c.stereo)},
              {"fusion", to_json(c.fusion)},
              {"detection_scale", c.detection_scale},
              {"resize", Json::array({c.resize_width, c.resize_height})},
              {"snapshot_every", c.snapshot_every},
              {"frame_limit", c.frame_limit}};
}

/// Loads a pipeline config; relative paths resolve against the config file.
[[nodiscard]] inline PipelineConfig load_pipeline_config(const std::string& path) {
  const Json j = load_json(path);
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  PipelineConfig c;
  auto resolve = [&](const char* key) -> std::string {
    if (!j.contains(key) || j[key].get<std::string>().empty()) return {};
    const fs::path p = j[key].get<std::string>();
    return (p.is_absolute() ? p : base / p).lexically_normal().string();
  };
  c.calibration = resolve("calibration");
  c.chain = resolve("chain");
  c.geometry = resolve("geometry");
  c.detections = resolve("detections");
  c.encoders = resolve("encoders");
  c.left_dir = resolve("left_dir");
  c.right_dir = resolve("right_dir");
  c.disparity_dir = resolve("disparity_dir");
  c.depth_dir = resolve("depth_dir");
  c.masks_dir = resolve("masks_dir");
  c.poses = resolve("poses");
  c.gt_depth_dir = resolve("gt_depth_dir");
  c.gt_masks_dir = resolve("gt_masks_dir");
  c.gt_poses = resolve("gt_poses");
  c.gt_detections = resolve("gt_detections");
  c.out_dir = resolve("out_dir");
  if (j.contains("filter")) c.filter = filter_from_json(j["filter"], path + ":filter");
  if (j.contains("stereo")) c.stereo = stereo_from_json(j["stereo"], path + ":stereo");
  if (j.contains("fusion")) c.fusion = fusion_from_json(j["fusion"], path + ":fusion");
  if (j.contains("detection_scale")) c.detection_scale = j["detection_scale"].get<double>();
  if (j.contains("resize")) {
    c.resize_width = j["resize"][0].get<int>();
    c.resize_height = j["resize"][1].get<int>();
  }
  if (j.contains("snapshot_every")) c.snapshot_every = j["snapshot_every"].get<int>();
  if (j.contains("frame_limit")) c.frame_limit = j["frame_limit"].get<int>();
  return c;
}

/// The parameter portion of a config: paths are machine-specific and stay
/// out of the reproducibility fingerprint.
[[nodiscard]] inline Json parameter_fingerprint(const PipelineConfig& c) {
  return Json{{"filter", to_json(c.filter)},
              {"stereo", to_json(c.stereo)},
              {"fusion", to_json(c.fusion)},
              {"detection_scale", c.detection_scale},
              {"resize", Json::array({c.resize_width, c.resize_height})},
              {"snapshot_every", c.snapshot_every},
              {"frame_limit", c.frame_limit}};
}

namespace detail {

[[nodiscard]] inline std::string frame_name(int frame_id, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.%s", frame_id, ext);
  return buf;
}

/// FNV-1a over the canonical config dump.
[[nodiscard]] inline std::string config_hash(const Json& j) {
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Frames named NNNNNN.<ext> in a directory, sorted by frame id.
[[nodiscard]] inline std::vector<std::pair<int, fs::path>> list_frames(const std::string& dir,
                                                                       const char* ext) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir + ": not a directory");
  std::vector<std::pair<int, fs::path>> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (p.extension() != std::string(".") + ext) continue;
    const std::string stem = p.stem().string();
    if (stem.size() != 6 || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
    frames.emplace_back(std::stoi(stem), p);
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

struct Aggregate {
  double mean = 0.0;
  double stdev = 0.0;
  size_t count = 0;
};

[[nodiscard]] inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - a.mean) * (v - a.mean);
    a.stdev = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return a;
}

/// Per-frame metric records plus the mean +- stdev CSV next to them.
class MetricsWriter {
 public:
  void add(int frame_id, const std::string& metric, double value) {
    records_.push_back(Json{{"frame_id", frame_id}, {"metric", metric}, {"value", value}});
    values_[metric].push_back(value);
  }

  void override_mean(const std::string& metric, double mean) { mean_override_[metric] = mean; }

  [[nodiscard]] bool empty() const { return records_.empty(); }

  [[nodiscard]] std::optional<Aggregate> aggregate_of(const std::string& metric) const {
    const auto it = values_.find(metric);
    if (it == values_.end()) return std::nullopt;
    auto a = aggregate(it->second);
    const auto m = mean_override_.find(metric);
    if (m != mean_override_.end()) a.mean = m->second;
    return a;
  }

  void write(const fs::path& out_dir) const {
    save_json((out_dir / "metrics.json").string(), Json{{"records", records_}});
    std::ofstream csv(out_dir / "aggregate.csv");
    csv << "metric,mean,stdev,count\n";
    csv.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& [metric, vals] : values_) {
      const auto a = *aggregate_of(metric);
      csv << metric << "," << a.mean << "," << a.stdev << "," << a.count << "\n";
    }
  }

 private:
  std::vector<Json> records_;
  std::map<std::string, std::vector<double>> values_;
  std::map<std::string, double> mean_override_;
};

inline void write_report(const fs::path& out_dir, Json report) {
  save_json((out_dir / "report.json").string(), std::move(report));
}

[[nodiscard]] inline CameraIntrinsics load_calibration(const std::string& path) {
  if (path.empty()) throw std::runtime_error("config: missing 'calibration'");
  return intrinsics_from_json(load_json(path), path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimReport {
  int frames = 0;
  int stereo_pairs = 0;
};

/// Writes the full synthetic dataset: detections, encoders, stereo pairs,
/// ground-truth depth / masks / poses, per-stream JSON inputs, and a ready
/// pipeline config pointing at all of it.
inline SimReport run_sim(const SimScenario& scenario, const std::string& out_dir,
                         double detection_scale = 2.0) {
  scenario.validate();
  const fs::path out(out_dir);
  fs::create_directories(out / "gt_depth");
  fs::create_directories(out / "gt_masks");
  fs::create_directories(out / "left");
  fs::create_directories(out / "right");

  const Json scenario_json = to_json(scenario);
  save_json((out / "scenario.json").string(), scenario_json);
  save_json((out / "calibration.json").string(), to_json(scenario.camera));
  save_json((out / "chain.json").string(), to_json(scenario.chain));
  save_json((out / "geometry.json").string(), to_json(scenario.geometry));

  DetectionStream detections;
  detections.coordinate_scale = detection_scale;
  EncoderStream encoders;
  std::vector<PoseRecord> poses;
  SimReport report;
  for (int f = 0; f < scenario.frames; ++f) {
    detections.frame_ids.push_back(f);
    detections.frames.push_back(simulate_detections(scenario, f));
    encoders.frame_ids.push_back(f);
    encoders.frames.push_back(joint_state(scenario, f));
    poses.push_back({f, true_lumped(scenario, f), 0.0, false, false, false});

    write_depth_pfm((out / "gt_depth" / detail::frame_name(f, "pfm")).string(),
                    simulate_depth(scenario, f));
    write_mask_pgm((out / "gt_masks" / detail::frame_name(f, "pgm")).string(),
                   simulate_tool_mask(scenario, f));
    if (f % scenario.stereo_stride == 0) {
      const auto [left, right] = render_stereo_pair(scenario, f, scenario.camera);
      write_pgm((out / "left" / detail::frame_name(f, "pgm")).string(), left);
      write_pgm((out / "right" / detail::frame_name(f, "pgm")).string(), right);
      ++report.stereo_pairs;
    }
  }
  save_detections((out / "detections.json").string(), detections);
  save_encoders((out / "encoders.json").string(), encoders);
  save_poses((out / "gt_poses.json").string(), poses, false);

  // A config that runs track / depth / fuse / eval on this dataset as-is.
  PipelineConfig pipeline;
  pipeline.calibration = "calibration.json";
  pipeline.chain = "chain.json";
  pipeline.geometry = "geometry.json";
  pipeline.detections = "detections.json";
  pipeline.encoders = "encoders.json";
  pipeline.left_dir = "left";
  pipeline.right_dir = "right";
  pipeline.depth_dir = "gt_depth";
  pipeline.masks_dir = "gt_masks";
  pipeline.gt_depth_dir = "gt_depth";
  pipeline.gt_masks_dir = "gt_masks";
  pipeline.gt_poses = "gt_poses.json";
  pipeline.filter = scenario.filter;
  pipeline.filter.rng_seed = scenario.rng_seed;
  pipeline.detection_scale = detection_scale;
  pipeline.resize_width = scenario.camera.width;
  pipeline.resize_height = scenario.camera.height;
  // keep the disparity search inside the image at small test resolutions
  pipeline.stereo.d_max = std::min(pipeline.stereo.d_max, scenario.camera.width / 2);
  save_json((out / "pipeline_config.json").string(), to_json(pipeline));

  report.frames = scenario.frames;
  detail::write_report(out, Json{{"command", "simulate"},
                                 {"config_hash", detail::config_hash(scenario_json)},
                                 {"seed", scenario.rng_seed},
                                 {"frames", report.frames},
                                 {"stereo_pairs", report.stereo_pairs}});
  return report;
}

// ---------------------------------------------------------------------------
// track
// ---------------------------------------------------------------------------

struct TrackReport {
  int frames = 0;
  int degenerate_frames = 0;
  int skipped_frames = 0;
  std::optional<double> mean_iou;
  std::optional<double> mean_reprojection_px;
};

inline TrackReport run_track(const PipelineConfig& config) {
  const CameraIntrinsics camera = detail::load_calibration(config.calibration);
  if (config.chain.empty()) throw std::runtime_error("config: missing 'chain'");
  if (config.detections.empty()) throw std::runtime_error("config: missing 'detections'");
  if (config.encoders.empty()) throw std::runtime_error("config: missing 'encoders'");
  const KinematicChain chain = chain_from_json(load_json(config.chain), config.chain);
  const DetectionStream detections = load_detections(config.detections);
  const EncoderStream encoders = load_encoders(config.encoders);
  if (detections.frames.size() != encoders.frames.size())
    throw std::runtime_error("frame count mismatch: " +
                             std::to_string(detections.frames.size()) + " detection frames vs " +
                             std::to_string(encoders.frames.size()) + " encoder frames");
  std::optional<ToolGeometry> geometry;
  if (!config.geometry.empty())
    geometry = geometry_from_json(load_json(config.geometry), config.geometry);
  std::optional<std::vector<PoseRecord>> gt_poses;
  if (!config.gt_poses.empty()) gt_poses = load_poses(config.gt_poses);

  const fs::path out(config.out_dir);
  fs::create_directories(out);
  if (geometry) fs::create_directories(out / "masks");

  int frames = static_cast<int>(detections.frames.size());
  if (config.frame_limit > 0) frames = std::min(frames, config.frame_limit);

  TrackingSession session(chain, camera, config.filter);
  detail::MetricsWriter metrics;
  std::vector<PoseRecord> estimates;
  TrackReport report;
  for (int i = 0; i < frames; ++i) {
    if (detections.frame_ids[i] != encoders.frame_ids[i])
      throw std::runtime_error("frame id mismatch at index " + std::to_string(i) + ": " +
                               std::to_string(detections.frame_ids[i]) + " vs " +
                               std::to_string(encoders.frame_ids[i]));
    const int frame_id = detections.frame_ids[i];
    TrackFrame frame{detections.frames[i], encoders.frames[i]};
    const TrackStepResult step = session.step(frame);
    estimates.push_back({frame_id, step.state, step.n_eff, step.resampled, step.degenerate,
                         step.skipped_update});
    report.degenerate_frames += step.degenerate ? 1 : 0;
    report.skipped_frames += step.skipped_update ? 1 : 0;

    std::optional<BinaryMask> mask;
    if (geometry) {
      mask = render_tool_mask(*geometry, chain, frame.joints, step.state, camera);
      write_mask_pgm((out / "masks" / detail::frame_name(frame_id, "pgm")).string(), *mask);
    }
    if (mask && !config.gt_masks_dir.empty()) {
      const fs::path gt_path =
          fs::path(config.gt_masks_dir) / detail::frame_name(frame_id, "pgm");
      if (fs::exists(gt_path))
        metrics.add(frame_id, "iou", iou(*mask, read_mask(gt_path.string())));
    }
    if (gt_poses && i < static_cast<int>(gt_poses->size())) {
      double err = 0.0;
      int n = 0;
      for (const auto& f : chain.features) {
        const auto truth = try_project_feature(camera, chain, frame.joints,
                                               (*gt_poses)[i].state, f.id);
        const auto est = try_project_feature(camera, chain, frame.joints, step.state, f.id);
        if (truth && est) {
          err += (*truth - *est).norm();
          ++n;
        }
      }
      if (n > 0) metrics.add(frame_id, "reprojection_px", err / n);
    }
  }
  save_poses((out / "estimates.json").string(), estimates, true);
  if (!metrics.empty()) metrics.write(out);
  if (const auto a = metrics.aggregate_of("iou")) report.mean_iou = a->mean;
  if (const auto a = metrics.aggregate_of("reprojection_px"))
    report.mean_reprojection_px = a->mean;

  report.frames = frames;
  Json rj{{"command", "track"},
          {"config_hash", detail::config_hash(parameter_fingerprint(config))},
          {"seed", config.filter.rng_seed},
          {"frames", frames},
          {"degenerate_frames", report.degenerate_frames},
          {"skipped_frames", report.skipped_frames}};
  if (report.mean_iou) rj["mean_iou"] = *report.mean_iou;
  if (report.mean_reprojection_px) rj["mean_reprojection_px"] = *report.mean_reprojection_px;
  detail::write_report(out, rj);
  return report;
}

// ---------------------------------------------------------------------------
// depth
// ---------------------------------------------------------------------------

struct DepthReport {
  int frames = 0;
  std::optional<double> mean_rmse;
  std::optional<double> mean_valid_fraction;
};

inline DepthReport run_depth(const PipelineConfig& config) {
  const CameraIntrinsics calibration = detail::load_calibration(config.calibration);
  const bool external = !config.disparity_dir.empty();
  if (!external && (config.left_dir.empty() || config.right_dir.empty()))
    throw std::runtime_error("config: need 'left_dir' + 'right_dir' or 'disparity_dir'");

  const fs::path out(config.out_dir);
  fs::create_directories(out / "depth");
  fs::create_directories(out / "disparity");

  auto frames = external ? detail::list_frames(config.disparity_dir, "pfm")
                         : detail::list_frames(config.left_dir, "pgm");
  if (config.frame_limit > 0 && static_cast<int>(frames.size()) > config.frame_limit)
    frames.resize(config.frame_limit);

  detail::MetricsWriter metrics;
  DepthReport report;
  for (const auto& [frame_id, path] : frames) {
    CameraIntrinsics camera = calibration;
    DisparityMap disp;
    if (external) {
      disp = read_disparity_pfm(path.string());
    } else {
      const fs::path right_path =
          fs::path(config.right_dir) / detail::frame_name(frame_id, "pgm");
      if (!fs::exists(right_path))
        throw std::runtime_error(right_path.string() + ": missing right image");
      ImageGray left = read_pgm(path.string());
      ImageGray right = read_pgm(right_path.string());
      if (left.width != right.width || left.height != right.height)
        throw std::runtime_error("stereo pair size mismatch at frame " +
                                 std::to_string(frame_id));
      if (left.width != config.resize_width || left.height != config.resize_height) {
        // bring the pair to the working resolution and scale the intrinsics
        const double sx = static_cast<double>(config.resize_width) / left.width;
        const double sy = static_cast<double>(config.resize_height) / left.height;
        left = resize_bilinear(left, config.resize_width, config.resize_height);
        right = resize_bilinear(right, config.resize_width, config.resize_height);
        camera.fx *= sx;
        camera.cx *= sx;
        camera.fy *= sy;
        camera.cy *= sy;
        camera.width = config.resize_width;
        camera.height = config.resize_height;
      }
      const CostVolume volume =
          build_cost_volume(left, right, config.stereo.d_max, config.stereo.window);
      disp = config.stereo.readout == DisparityReadout::kSoftArgmin
                 ? soft_argmin(volume, config.stereo.cost_scale)
                 : winner_take_all(volume, config.stereo.ambiguity_threshold);
      // quantize to PFM precision so the on-disk disparity and the depth
      // below stay exactly consistent (external re-ingestion is bit-equal)
      for (auto& d : disp.disp) d = static_cast<double>(static_cast<float>(d));
      write_disparity_pfm((out / "disparity" / detail::frame_name(frame_id, "pfm")).string(),
                          disp);
    }
    const DepthMap depth = disparity_to_depth(disp, camera, config.stereo.disp_min);
    write_depth_pfm((out / "depth" / detail::frame_name(frame_id, "pfm")).string(), depth);

    if (!config.gt_depth_dir.empty()) {
      const fs::path gt_path =
          fs::path(config.gt_depth_dir) / detail::frame_name(frame_id, "pfm");
      if (fs::exists(gt_path)) {
        const DepthMap gt = read_depth_pfm(gt_path.string());
        metrics.add(frame_id, "depth_rmse", depth_rmse(depth, gt));
        metrics.add(frame_id, "valid_fraction", valid_fraction(depth));
      }
    }
    ++report.frames;
  }
  if (!metrics.empty()) {
    metrics.write(out);
    std::ofstream csv(out / "depth_metrics.csv");
    csv << "frame,rmse,valid_fraction\n";
    // re-read the records from the writer-owned aggregates is awkward;
    // the per-frame CSV mirrors metrics.json for spreadsheet use
    const Json mj = load_json((out / "metrics.json").string());
    std::map<int, std::pair<double, double>> rows;
    for (const auto& rec : mj["records"]) {
      const int f = rec["frame_id"].get<int>();
      if (rec["metric"] == "depth_rmse") rows[f].first = rec["value"].get<double>();
      if (rec["metric"] == "valid_fraction") rows[f].second = rec["value"].get<double>();
    }
    csv.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& [f, vals] : rows)
      csv << f << "," << vals.first << "," << vals.second << "\n";
  }
  if (const auto a = metrics.aggregate_of("depth_rmse")) report.mean_rmse = a->mean;
  if (const auto a = metrics.aggregate_of("valid_fraction"))
    report.mean_valid_fraction = a->mean;

  Json rj{{"command", "depth"},
          {"config_hash", detail::config_hash(parameter_fingerprint(config))},
          {"seed", config.filter.rng_seed},
          {"frames", report.frames},
          {"source", external ? "external_disparity" : "stereo_pairs"}};
  if (report.mean_rmse) rj["mean_rmse"] = *report.mean_rmse;
  if (report.mean_valid_fraction) rj["mean_valid_fraction"] = *report.mean_valid_fraction;
  detail::write_report(out, rj);
  return report;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseReport {
  int frames = 0;
  size_t surfels = 0;
  std::optional<double> reprojection_rmse;
  bool unmasked = false;
};

inline FuseReport run_fuse(const PipelineConfig& config) {
  const CameraIntrinsics camera = detail::load_calibration(config.calibration);
  if (config.depth_dir.empty()) throw std::runtime_error("config: missing 'depth_dir'");

  // Masks come from files, or are rendered from a pose stream, or are absent.
  std::optional<std::vector<PoseRecord>> poses;
  std::optional<KinematicChain> chain;
  std::optional<ToolGeometry> geometry;
  std::optional<EncoderStream> encoders;
  const bool masks_from_files = !config.masks_dir.empty();
  if (!masks_from_files && !config.poses.empty()) {
    if (config.chain.empty() || config.geometry.empty() || config.encoders.empty())
      throw std::runtime_error(
          "config: rendering masks from poses needs 'chain', 'geometry' and 'encoders'");
    poses = load_poses(config.poses);
    chain = chain_from_json(load_json(config.chain), config.chain);
    geometry = geometry_from_json(load_json(config.geometry), config.geometry);
    encoders = load_encoders(config.encoders);
  }

  const fs::path out(config.out_dir);
  fs::create_directories(out / "snapshots");

  auto frames = detail::list_frames(config.depth_dir, "pfm");
  if (config.frame_limit > 0 && static_cast<int>(frames.size()) > config.frame_limit)
    frames.resize(config.frame_limit);

  FuseReport report;
  SurfelModel model;
  DepthMap last_masked;
  for (const auto& [frame_id, path] : frames) {
    DepthMap depth = read_depth_pfm(path.string());
    if (depth.width != camera.width || depth.height != camera.height)
      throw std::runtime_error(path.string() + ": depth size does not match calibration");
    std::optional<BinaryMask> mask;
    if (masks_from_files) {
      const fs::path mask_path =
          fs::path(config.masks_dir) / detail::frame_name(frame_id, "pgm");
      if (!fs::exists(mask_path))
        throw std::runtime_error(mask_path.string() + ": missing tool mask");
      mask = read_mask(mask_path.string());
    } else if (poses) {
      const auto pose = std::find_if(poses->begin(), poses->end(),
                                     [&](const PoseRecord& p) { return p.frame_id == frame_id; });
      const auto enc = std::find(encoders->frame_ids.begin(), encoders->frame_ids.end(),
                                 frame_id);
      if (pose == poses->end() || enc == encoders->frame_ids.end())
        throw std::runtime_error("no pose/encoders for frame " + std::to_string(frame_id));
      mask = render_tool_mask(*geometry, *chain,
                              encoders->frames[enc - encoders->frame_ids.begin()],
                              pose->state, camera);
    } else {
      report.unmasked = true;
    }
    const DepthMap masked =
        mask ? subtract_mask(depth, *mask, config.fusion.dilation_radius) : depth;
    model = fuse_depth(std::move(model), masked, camera, config.fusion);
    model = prune(std::move(model), config.fusion);
    last_masked = masked;
    if (config.snapshot_every > 0 && report.frames % config.snapshot_every == 0)
      write_surfel_ply((out / "snapshots" / detail::frame_name(frame_id, "ply")).string(),
                       model);
    ++report.frames;
  }
  write_surfel_ply((out / "model.ply").string(), model);
  report.surfels = model.surfels.size();

  detail::MetricsWriter metrics;
  if (report.frames > 0) {
    const DepthMap reprojected = reproject_model(model, camera);
    write_depth_pfm((out / "reprojection.pfm").string(), reprojected);
    // reference: ground truth when available, else the last masked input
    // (depth_rmse only scores mutually valid pixels, so the missing tool
    // region drops out either way)
    DepthMap reference = last_masked;
    if (!config.gt_depth_dir.empty()) {
      const fs::path gt =
          fs::path(config.gt_depth_dir) / detail::frame_name(frames.back().first, "pfm");
      if (fs::exists(gt)) reference = read_depth_pfm(gt.string());
    }
    report.reprojection_rmse = depth_rmse(reprojected, reference);
    metrics.add(frames.back().first, "reprojection_rmse", *report.reprojection_rmse);
  }
  if (!metrics.empty()) metrics.write(out);

  Json rj{{"command", "fuse"},
          {"config_hash", detail::config_hash(parameter_fingerprint(config))},
          {"seed", config.filter.rng_seed},
          {"frames", report.frames},
          {"surfels", report.surfels},
          {"warnings", Json::array()}};
  if (report.frames == 0) rj["warnings"].push_back("no depth frames found; model is empty");
  if (report.unmasked) rj["warnings"].push_back("fused without tool masks");
  if (report.reprojection_rmse) rj["reprojection_rmse"] = *report.reprojection_rmse;
  detail::write_report(out, rj);
  return report;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalReport {
  std::optional<double> mean_iou;
  std::optional<double> mean_rmse;
  std::optional<double> mean_valid_fraction;
  std::map<std::string, double> feature_errors;
};

/// Offline metric computation over saved artifacts: rendered masks vs ground
/// truth (IoU), depth maps vs ground truth (RMSE, valid fraction), detection
/// streams vs ground truth (per-feature mean L2 error).
inline EvalReport run_eval(const PipelineConfig& config) {
  const fs::path out(config.out_dir);
  fs::create_directories(out);
  detail::MetricsWriter metrics;
  EvalReport report;
  int both_empty_frames = 0;

  if (!config.masks_dir.empty() && !config.gt_masks_dir.empty()) {
    for (const auto& [frame_id, path] : detail::list_frames(config.masks_dir, "pgm")) {
      const fs::path gt = fs::path(config.gt_masks_dir) / detail::frame_name(frame_id, "pgm");
      if (!fs::exists(gt)) continue;
      bool both_empty = false;
      metrics.add(frame_id, "iou",
                  iou(read_mask(path.string()), read_mask(gt.string()), &both_empty));
      both_empty_frames += both_empty ? 1 : 0;
    }
  }
  if (!config.depth_dir.empty() && !config.gt_depth_dir.empty()) {
    for (const auto& [frame_id, path] : detail::list_frames(config.depth_dir, "pfm")) {
      const fs::path gt = fs::path(config.gt_depth_dir) / detail::frame_name(frame_id, "pfm");
      if (!fs::exists(gt)) continue;
      const DepthMap est = read_depth_pfm(path.string());
      metrics.add(frame_id, "depth_rmse", depth_rmse(est, read_depth_pfm(gt.string())));
      metrics.add(frame_id, "valid_fraction", valid_fraction(est));
    }
  }
  if (!config.detections.empty() && !config.gt_detections.empty()) {
    const DetectionStream est = load_detections(config.detections);
    const DetectionStream gt = load_detections(config.gt_detections);
    std::vector<FrameFeatures> est_tracks, gt_tracks;
    std::set<std::string> ids;
    for (size_t i = 0; i < std::min(est.frames.size(), gt.frames.size()); ++i) {
      FrameFeatures e, g;
      for (const auto& d : est.frames[i]) e[d.feature_id] = d.h;
      for (const auto& d : gt.frames[i]) {
        g[d.feature_id] = d.h;
        ids.insert(d.feature_id);
      }
      est_tracks.push_back(std::move(e));
      gt_tracks.push_back(std::move(g));
    }
    for (const auto& id : ids) {
      for (size_t i = 0; i < est_tracks.size(); ++i) {
        const auto e = est_tracks[i].find(id);
        const auto g = gt_tracks[i].find(id);
        if (e != est_tracks[i].end() && g != gt_tracks[i].end())
          metrics.add(est.frame_ids[i], "feature_error_" + id,
                      (e->second - g->second).norm());
      }
      // the aggregate mean is the Eq-level definition, computed by the metric op
      report.feature_errors[id] = feature_error(est_tracks, gt_tracks, id);
      metrics.override_mean("feature_error_" + id, report.feature_errors[id]);
    }
  }
  if (metrics.empty())
    throw std::runtime_error("eval: no overlapping artifacts to evaluate (need masks, "
                             "depth maps, or detection streams plus ground truth)");
  metrics.write(out);
  if (const auto a = metrics.aggregate_of("iou")) report.mean_iou = a->mean;
  if (const auto a = metrics.aggregate_of("depth_rmse")) report.mean_rmse = a->mean;
  if (const auto a = metrics.aggregate_of("valid_fraction"))
    report.mean_valid_fraction = a->mean;

  Json rj{{"command", "eval"},
          {"config_hash", detail::config_hash(parameter_fingerprint(config))},
          {"seed", config.filter.rng_seed}};
  if (report.mean_iou) rj["mean_iou"] = *report.mean_iou;
  if (both_empty_frames > 0) rj["both_empty_mask_frames"] = both_empty_frames;
  if (report.mean_rmse) rj["mean_depth_rmse"] = *report.mean_rmse;
  if (report.mean_valid_fraction) rj["mean_valid_fraction"] = *report.mean_valid_fraction;
  for (const auto& [id, err] : report.feature_errors) rj["feature_error_" + id] = err;
  detail::write_report(out, rj);
  return report;
}

}  // namespace ssp
