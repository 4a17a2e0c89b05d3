// ssp - surgical scene perception toolkit
//
// Disparity from rectified stereo pairs: a sum-of-absolute-differences cost
// volume read out either by soft-argmin
//
//   d_hat(i,j) = sum_d softmax(-S(i,j,:))[d] * d
//
// or by plain winner-take-all, then inverted to metric depth z = b*f/d.
// Cost volumes produced elsewhere (e.g. network output written to disk) flow
// through the identical readout and inversion path.

#pragma once

#include "ssp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ssp {

struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, intensities in [0, 1]

  ImageGray() = default;
  ImageGray(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("ImageGray: nonpositive dimensions");
  }

  [[nodiscard]] double& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
  [[nodiscard]] double at(int r, int c) const {
    return values[static_cast<size_t>(r) * width + c];
  }
};

/// Matching cost per (row, col, disparity); lower cost = better match.
/// Stores d_max + 1 planes, d = 0 .. d_max, contiguous per pixel.
struct CostVolume {
  int width = 0;
  int height = 0;
  int d_max = 0;
  std::vector<float> cost;

  CostVolume() = default;
  CostVolume(int w, int h, int dmax)
      : width(w), height(h), d_max(dmax),
        cost(static_cast<size_t>(w) * h * (dmax + 1), 0.0f) {
    if (w <= 0 || h <= 0 || dmax < 1)
      throw std::invalid_argument("CostVolume: bad dimensions");
  }

  [[nodiscard]] size_t planes() const { return static_cast<size_t>(d_max) + 1; }
  [[nodiscard]] float& at(int r, int c, int d) {
    return cost[(static_cast<size_t>(r) * width + c) * planes() + d];
  }
  [[nodiscard]] float at(int r, int c, int d) const {
    return cost[(static_cast<size_t>(r) * width + c) * planes() + d];
  }
};

struct DisparityMap {
  int width = 0;
  int height = 0;
  std::vector<double> disp;     // pixels, nonnegative where valid
  std::vector<std::uint8_t> valid;

  DisparityMap() = default;
  DisparityMap(int w, int h)
      : width(w), height(h), disp(static_cast<size_t>(w) * h, 0.0),
        valid(static_cast<size_t>(w) * h, 0) {}

  [[nodiscard]] size_t idx(int r, int c) const { return static_cast<size_t>(r) * width + c; }
};

/// Depth in meters per pixel; invalid pixels carry z = 0.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> z;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), z(static_cast<size_t>(w) * h, 0.0) {}

  [[nodiscard]] size_t idx(int r, int c) const { return static_cast<size_t>(r) * width + c; }
  [[nodiscard]] bool valid(int r, int c) const { return z[idx(r, c)] > 0.0; }
};

enum class DisparityReadout { kSoftArgmin, kWinnerTakeAll };

struct StereoParams {
  int d_max = 192;
  int window = 7;  // odd SAD window side length
  DisparityReadout readout = DisparityReadout::kSoftArgmin;
  /// Softmax sharpness applied by the pipeline readout: softmax(-cost_scale * S).
  /// 1.0 is the plain readout; SAD costs live in [0, 1] and need sharpening,
  /// network-style volumes arrive pre-scaled and use 1.0.
  double cost_scale = 120.0;
  /// Winner-take-all pixels whose best cost reaches this are marked invalid.
  double ambiguity_threshold = 1.0;
  /// Disparities at or below this (pixels) produce invalid depth.
  double disp_min = 0.5;

  void validate() const {
    if (d_max < 1) throw std::invalid_argument("StereoParams: d_max < 1");
    if (window < 1 || window % 2 == 0)
      throw std::invalid_argument("StereoParams: window must be odd and positive");
    if (!(cost_scale > 0.0)) throw std::invalid_argument("StereoParams: cost_scale <= 0");
    if (!(disp_min >= 0.0)) throw std::invalid_argument("StereoParams: disp_min < 0");
  }
};

/**
 * @brief Left-referenced SAD cost volume: cost(r, c, d) is the mean absolute
 *        intensity difference between the window at left(r, c) and the window
 *        at right(r, c - d). Any comparison that falls outside either image
 *        contributes the maximum cost 1.
 */
[[nodiscard]] inline CostVolume build_cost_volume(const ImageGray& left,
                                                  const ImageGray& right, int d_max,
                                                  int window) {
  if (left.width != right.width || left.height != right.height)
    throw std::invalid_argument("build_cost_volume: image size mismatch");
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("build_cost_volume: window must be odd and positive");
  if (d_max < 1 || d_max >= left.width)
    throw std::invalid_argument("build_cost_volume: d_max must be in [1, width)");

  const int w = left.width;
  const int h = left.height;
  const int k = window / 2;
  const double win_area = static_cast<double>(window) * window;

  CostVolume volume(w, h, d_max);
  std::vector<double> diff(static_cast<size_t>(w) * h);
  // (h+1) x (w+1) summed-area table of the per-disparity difference image.
  std::vector<double> integral(static_cast<size_t>(w + 1) * (h + 1), 0.0);

  for (int d = 0; d <= d_max; ++d) {
    for (int r = 0; r < h; ++r) {
      const size_t row = static_cast<size_t>(r) * w;
      for (int c = 0; c < w; ++c)
        diff[row + c] = (c >= d) ? std::abs(left.values[row + c] - right.values[row + c - d])
                                 : 1.0;
    }
    for (int r = 0; r < h; ++r) {
      const double* src = diff.data() + static_cast<size_t>(r) * w;
      const double* above = integral.data() + static_cast<size_t>(r) * (w + 1);
      double* out = integral.data() + static_cast<size_t>(r + 1) * (w + 1);
      double run = 0.0;
      for (int c = 0; c < w; ++c) {
        run += src[c];
        out[c + 1] = above[c + 1] + run;
      }
    }
    for (int r = 0; r < h; ++r) {
      const int r0 = std::max(r - k, 0);
      const int r1 = std::min(r + k, h - 1);
      for (int c = 0; c < w; ++c) {
        const int c0 = std::max(c - k, 0);
        const int c1 = std::min(c + k, w - 1);
        const double inside =
            integral[static_cast<size_t>(r1 + 1) * (w + 1) + (c1 + 1)] -
            integral[static_cast<size_t>(r0) * (w + 1) + (c1 + 1)] -
            integral[static_cast<size_t>(r1 + 1) * (w + 1) + c0] +
            integral[static_cast<size_t>(r0) * (w + 1) + c0];
        const double n_inside = static_cast<double>(r1 - r0 + 1) * (c1 - c0 + 1);
        // window positions clipped off the image count as max-cost comparisons
        volume.at(r, c, d) = static_cast<float>((inside + (win_area - n_inside)) / win_area);
      }
    }
  }
  return volume;
}

/**
 * @brief Soft-argmin readout: per pixel, the softmax over the negated costs
 *        taken as a distribution over disparities, read out as its mean.
 *        Every pixel is valid; the result lies in [0, d_max].
 *
 * `sharpness` scales costs before the softmax; 1.0 is the plain readout.
 */
[[nodiscard]] inline DisparityMap soft_argmin(const CostVolume& volume,
                                              double sharpness = 1.0) {
  DisparityMap map(volume.width, volume.height);
  const int n = volume.d_max + 1;
  for (int r = 0; r < volume.height; ++r) {
    for (int c = 0; c < volume.width; ++c) {
      const float* costs = &volume.cost[(static_cast<size_t>(r) * volume.width + c) *
                                        static_cast<size_t>(n)];
      double min_cost = costs[0];
      for (int d = 1; d < n; ++d) min_cost = std::min(min_cost, static_cast<double>(costs[d]));
      double norm = 0.0;
      double mean = 0.0;
      for (int d = 0; d < n; ++d) {
        const double e = std::exp(-sharpness * (static_cast<double>(costs[d]) - min_cost));
        norm += e;
        mean += e * d;
      }
      map.disp[map.idx(r, c)] = mean / norm;
      map.valid[map.idx(r, c)] = 1;
    }
  }
  return map;
}

/// Per-pixel argmin of cost, ties broken toward the smaller disparity.
/// A pixel is valid only when its best cost beats the ambiguity threshold.
[[nodiscard]] inline DisparityMap winner_take_all(const CostVolume& volume,
                                                  double ambiguity_threshold = 1.0) {
  DisparityMap map(volume.width, volume.height);
  const int n = volume.d_max + 1;
  for (int r = 0; r < volume.height; ++r) {
    for (int c = 0; c < volume.width; ++c) {
      const float* costs = &volume.cost[(static_cast<size_t>(r) * volume.width + c) *
                                        static_cast<size_t>(n)];
      int best = 0;
      for (int d = 1; d < n; ++d)
        if (costs[d] < costs[best]) best = d;
      map.disp[map.idx(r, c)] = best;
      map.valid[map.idx(r, c)] = costs[best] < ambiguity_threshold ? 1 : 0;
    }
  }
  return map;
}

/// Triangulation z = baseline * fx / d. Invalid or near-zero disparities
/// (d <= disp_min) give invalid depth (0).
[[nodiscard]] inline DepthMap disparity_to_depth(const DisparityMap& disp,
                                                 const CameraIntrinsics& K,
                                                 double disp_min = 0.5) {
  K.validate();
  DepthMap depth(disp.width, disp.height);
  const double bf = K.baseline * K.fx;
  for (size_t i = 0; i < disp.disp.size(); ++i)
    depth.z[i] = (disp.valid[i] && disp.disp[i] > disp_min) ? bf / disp.disp[i] : 0.0;
  return depth;
}

/// Full stereo path: SAD volume -> readout -> depth. No post-filtering.
[[nodiscard]] inline DepthMap estimate_depth(const ImageGray& left, const ImageGray& right,
                                             const CameraIntrinsics& K,
                                             const StereoParams& params) {
  params.validate();
  const CostVolume volume = build_cost_volume(left, right, params.d_max, params.window);
  const DisparityMap disp = params.readout == DisparityReadout::kSoftArgmin
                                ? soft_argmin(volume, params.cost_scale)
                                : winner_take_all(volume, params.ambiguity_threshold);
  return disparity_to_depth(disp, K, params.disp_min);
}

/// Bilinear resize used to bring inputs to the pipeline's working resolution.
[[nodiscard]] inline ImageGray resize_bilinear(const ImageGray& src, int new_w, int new_h) {
  if (new_w <= 0 || new_h <= 0)
    throw std::invalid_argument("resize_bilinear: nonpositive target size");
  ImageGray out(new_w, new_h);
  const double sx = static_cast<double>(src.width) / new_w;
  const double sy = static_cast<double>(src.height) / new_h;
  for (int r = 0; r < new_h; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < new_w; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      out.at(r, c) = (1.0 - wy) * ((1.0 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                     wy * ((1.0 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
    }
  }
  return out;
}

}  // namespace ssp
