// ssp - surgical scene perception toolkit
//
// Bootstrap particle filter over the lumped error. The motion model perturbs
// each particle with zero-mean Gaussian noise; the observation model scores a
// particle as the confidence-weighted sum of per-feature Gaussian kernels
//
//   P(h, rho | omega, b)  ~  sum_i rho_i * exp(-gamma * ||h_i - m_i(omega, b)||^2)
//
// kept unnormalized (the weight renormalization absorbs the constant). Note
// the sum over features: a misdetected feature can only fail to add support,
// it cannot zero out the whole score the way a product would.

#pragma once

#include "ssp/geometry.hpp"
#include "ssp/kinematics.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssp {

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// One 2D feature detection with its confidence score, as a detector emits it.
struct FeatureDetection {
  std::string feature_id;
  Eigen::Vector2d h = Eigen::Vector2d::Zero();  // pixels
  double rho = 1.0;                             // confidence in [0, 1]
};

struct ParticleSet {
  std::vector<LumpedErrorState> states;
  std::vector<double> weights;

  [[nodiscard]] int size() const { return static_cast<int>(states.size()); }
};

struct FilterConfig {
  int n_particles = 1000;
  /// Diagonal of the initial covariance (variances: rad^2 x3, m^2 x3).
  Vector6d sigma0 = (Vector6d() << 0.005, 0.005, 0.005, 0.025, 0.025, 0.025).finished();
  /// Motion covariance = motion_scale * diag(sigma0).
  double motion_scale = 0.1;
  double gamma = 0.1;
  double resample_threshold = 500.0;  // resample when N_eff drops below this
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (n_particles < 1) throw std::invalid_argument("FilterConfig: n_particles < 1");
    if (!sigma0.allFinite() || (sigma0.array() < 0.0).any())
      throw std::invalid_argument("FilterConfig: sigma0 must be finite and nonnegative");
    if (!(motion_scale >= 0.0)) throw std::invalid_argument("FilterConfig: motion_scale < 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("FilterConfig: gamma must be positive");
    if (!(resample_threshold >= 1.0) || resample_threshold > n_particles)
      throw std::invalid_argument("FilterConfig: resample_threshold out of [1, n_particles]");
  }
};

/// N particles drawn from N(0, diag(sigma0)), uniform weights.
[[nodiscard]] inline ParticleSet init_particles(const FilterConfig& config,
                                                std::mt19937_64& rng) {
  config.validate();
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vector6d stddev = config.sigma0.cwiseSqrt();
  ParticleSet set;
  set.states.reserve(config.n_particles);
  set.weights.assign(config.n_particles, 1.0 / config.n_particles);
  for (int i = 0; i < config.n_particles; ++i) {
    Vector6d x;
    for (int c = 0; c < 6; ++c) x[c] = stddev[c] * gauss(rng);
    set.states.emplace_back(x.head<3>(), x.tail<3>());
  }
  return set;
}

/// Motion model: perturb each particle by N(0, motion_scale * diag(sigma0)).
/// Weights are untouched.
[[nodiscard]] inline ParticleSet predict(const ParticleSet& particles,
                                         const FilterConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vector6d stddev = (config.motion_scale * config.sigma0).cwiseSqrt();
  ParticleSet out;
  out.states.reserve(particles.states.size());
  out.weights = particles.weights;
  for (const auto& s : particles.states) {
    Vector6d x;
    for (int c = 0; c < 6; ++c) x[c] = stddev[c] * gauss(rng);
    out.states.emplace_back(s.omega + x.head<3>(), s.b_trans + x.tail<3>());
  }
  return out;
}

namespace detail {

/// A detection resolved against the chain: target pixel plus the feature
/// point already lifted into the base frame (shared across all particles).
struct ResolvedDetection {
  Eigen::Vector2d h;
  double rho;
  Eigen::Vector3d base_point;
};

[[nodiscard]] inline std::vector<ResolvedDetection> resolve_detections(
    const std::vector<FeatureDetection>& detections, const KinematicChain& chain,
    const JointState& joints) {
  if (detections.empty())
    throw std::invalid_argument("observation model: empty detection list");
  const auto fk = forward_all(chain, joints);
  std::vector<ResolvedDetection> out;
  out.reserve(detections.size());
  for (const auto& d : detections) {
    const FeaturePoint* f = chain.find_feature(d.feature_id);
    if (f == nullptr) throw UnknownFeature(d.feature_id);
    out.push_back({d.h, d.rho, fk[f->link].apply(f->point)});
  }
  return out;
}

/// The observation-model sum for one particle. Features projecting behind
/// the camera contribute 0.
[[nodiscard]] inline double likelihood_sum(const CameraIntrinsics& K,
                                           const Transform3D& hand_eye,
                                           const Transform3D& lumped,
                                           const std::vector<ResolvedDetection>& resolved,
                                           double gamma) {
  double sum = 0.0;
  for (const auto& r : resolved) {
    const auto m = try_project_base_point(K, hand_eye, lumped, r.base_point);
    if (!m) continue;
    sum += r.rho * std::exp(-gamma * (r.h - *m).squaredNorm());
  }
  return sum;
}

}  // namespace detail

/// Unnormalized observation likelihood of one state given a frame's detections.
[[nodiscard]] inline double likelihood(const LumpedErrorState& state,
                                       const std::vector<FeatureDetection>& detections,
                                       const JointState& joints, const KinematicChain& chain,
                                       const CameraIntrinsics& K, const FilterConfig& config) {
  const auto resolved = detail::resolve_detections(detections, chain, joints);
  return detail::likelihood_sum(K, chain.hand_eye_prior, to_transform(state), resolved,
                                config.gamma);
}

struct UpdateResult {
  ParticleSet particles;
  /// True when every particle scored 0 and the weights were reset to uniform.
  bool degenerate = false;
};

/// Bootstrap weight update: w' ~ w * likelihood, renormalized in fixed order.
[[nodiscard]] inline UpdateResult update(const ParticleSet& particles,
                                         const std::vector<FeatureDetection>& detections,
                                         const JointState& joints,
                                         const KinematicChain& chain,
                                         const CameraIntrinsics& K,
                                         const FilterConfig& config) {
  const auto resolved = detail::resolve_detections(detections, chain, joints);
  UpdateResult result;
  result.particles.states = particles.states;
  result.particles.weights.resize(particles.weights.size());
  double total = 0.0;
  for (size_t i = 0; i < particles.states.size(); ++i) {
    const double w = particles.weights[i] *
                     detail::likelihood_sum(K, chain.hand_eye_prior,
                                            to_transform(particles.states[i]), resolved,
                                            config.gamma);
    result.particles.weights[i] = w;
    total += w;
  }
  if (total > 0.0) {
    for (auto& w : result.particles.weights) w /= total;
  } else {
    const double uniform = 1.0 / static_cast<double>(particles.states.size());
    for (auto& w : result.particles.weights) w = uniform;
    result.degenerate = true;
  }
  return result;
}

/// N_eff = 1 / sum(w_i^2); expects normalized weights.
[[nodiscard]] inline double effective_count(const ParticleSet& particles) {
  double sum_sq = 0.0;
  for (double w : particles.weights) sum_sq += w * w;
  return 1.0 / sum_sq;
}

/// Stratified resampling: one uniform draw per stratum [k/N, (k+1)/N) inverted
/// through the cumulative weights. Output weights are uniform. output_size 0
/// keeps the input particle count.
[[nodiscard]] inline ParticleSet stratified_resample(const ParticleSet& particles,
                                                     std::mt19937_64& rng,
                                                     int output_size = 0) {
  const int n = particles.size();
  const int n_out = output_size > 0 ? output_size : n;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> cumulative(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += particles.weights[i];
    cumulative[i] = acc;
  }
  ParticleSet out;
  out.states.reserve(n_out);
  out.weights.assign(n_out, 1.0 / n_out);
  int j = 0;
  for (int k = 0; k < n_out; ++k) {
    const double u = (k + unit(rng)) / n_out;
    while (j < n - 1 && cumulative[j] <= u) ++j;
    out.states.push_back(particles.states[j]);
  }
  return out;
}

/// Weighted-mean point estimate. The rotation mean is taken directly in the
/// axis-angle chart and re-wrapped; valid while the filter keeps ||omega||
/// far from pi, which sigma0 guarantees by construction.
[[nodiscard]] inline LumpedErrorState estimate(const ParticleSet& particles) {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < particles.states.size(); ++i) {
    omega += particles.weights[i] * particles.states[i].omega;
    b += particles.weights[i] * particles.states[i].b_trans;
  }
  return {omega, b};
}

/// One frame of tracking input: detections plus the encoder readings.
struct TrackFrame {
  std::vector<FeatureDetection> detections;
  JointState joints;
};

struct TrackStepResult {
  ParticleSet particles;
  LumpedErrorState state;
  double n_eff = 0.0;
  bool resampled = false;
  bool degenerate = false;
  /// True when the frame carried no detections and the update was skipped.
  bool skipped_update = false;
};

/// predict -> update -> resample (when N_eff < threshold) -> estimate.
/// A frame without detections skips the update and is flagged.
[[nodiscard]] inline TrackStepResult track_step(const ParticleSet& particles,
                                                const TrackFrame& frame,
                                                const KinematicChain& chain,
                                                const CameraIntrinsics& K,
                                                const FilterConfig& config,
                                                std::mt19937_64& rng) {
  TrackStepResult result;
  result.particles = predict(particles, config, rng);
  if (frame.detections.empty()) {
    result.skipped_update = true;
  } else {
    auto updated = update(result.particles, frame.detections, frame.joints, chain, K, config);
    result.particles = std::move(updated.particles);
    result.degenerate = updated.degenerate;
  }
  result.n_eff = effective_count(result.particles);
  if (result.n_eff < config.resample_threshold) {
    result.particles = stratified_resample(result.particles, rng);
    result.resampled = true;
  }
  result.state = estimate(result.particles);
  return result;
}

/// Owns the particle set and RNG stream for one tool-tracking run.
/// Deterministic: identical frames and rng_seed give bit-identical output.
class TrackingSession {
 public:
  TrackingSession(KinematicChain chain, const CameraIntrinsics& K, const FilterConfig& config)
      : chain_(std::move(chain)), K_(K), config_(config), rng_(config.rng_seed) {
    chain_.validate();
    K_.validate();
    particles_ = init_particles(config_, rng_);
  }

  TrackStepResult step(const TrackFrame& frame) {
    auto result = track_step(particles_, frame, chain_, K_, config_, rng_);
    particles_ = result.particles;
    return result;
  }

  [[nodiscard]] const ParticleSet& particles() const { return particles_; }
  [[nodiscard]] const KinematicChain& chain() const { return chain_; }

 private:
  KinematicChain chain_;
  CameraIntrinsics K_;
  FilterConfig config_;
  std::mt19937_64 rng_;
  ParticleSet particles_;
};

}  // namespace ssp
