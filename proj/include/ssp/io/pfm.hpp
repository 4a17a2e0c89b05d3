// ssp - surgical scene perception toolkit
//
// Portable Float Map (grayscale "Pf"): 32-bit floats, rows stored bottom to
// top, negative scale = little-endian. Depth and disparity maps use 0 (or
// any nonpositive value) for invalid pixels.

#pragma once

#include "ssp/stereo.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssp {

namespace detail {

inline void write_pfm_values(const std::string& path, int width, int height,
                             const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "Pf\n" << width << " " << height << "\n-1.0\n";
  std::vector<float> row(width);
  for (int r = height - 1; r >= 0; --r) {  // bottom-up raster
    for (int c = 0; c < width; ++c)
      row[c] = static_cast<float>(values[static_cast<size_t>(r) * width + c]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline std::vector<double> read_pfm_values(const std::string& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string magic;
  in >> magic;
  if (magic != "Pf") throw std::runtime_error(path + ": not a grayscale PFM (Pf)");
  double scale = 0.0;
  in >> width >> height >> scale;
  if (!in || width <= 0 || height <= 0 || scale == 0.0)
    throw std::runtime_error(path + ": malformed PFM header");
  in.get();  // single whitespace before the raster
  const bool little_endian = scale < 0.0;
  std::vector<float> raw(static_cast<size_t>(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in) throw std::runtime_error(path + ": truncated PFM raster");
  if (little_endian != (std::endian::native == std::endian::little)) {
    for (float& f : raw) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = ((u & 0xff) << 24) | ((u & 0xff00) << 8) | ((u >> 8) & 0xff00) | (u >> 24);
      std::memcpy(&f, &u, 4);
    }
  }
  std::vector<double> values(raw.size());
  for (int r = 0; r < height; ++r)  // flip back to top-down
    for (int c = 0; c < width; ++c)
      values[static_cast<size_t>(r) * width + c] =
          raw[static_cast<size_t>(height - 1 - r) * width + c];
  return values;
}

}  // namespace detail

inline void write_depth_pfm(const std::string& path, const DepthMap& depth) {
  detail::write_pfm_values(path, depth.width, depth.height, depth.z);
}

[[nodiscard]] inline DepthMap read_depth_pfm(const std::string& path) {
  int w = 0, h = 0;
  auto values = detail::read_pfm_values(path, w, h);
  DepthMap depth(w, h);
  for (size_t i = 0; i < values.size(); ++i)
    depth.z[i] = std::isfinite(values[i]) && values[i] > 0.0 ? values[i] : 0.0;
  return depth;
}

/// Invalid disparities are stored as 0; nonpositive values read as invalid.
inline void write_disparity_pfm(const std::string& path, const DisparityMap& disp) {
  std::vector<double> values(disp.disp.size());
  for (size_t i = 0; i < values.size(); ++i) values[i] = disp.valid[i] ? disp.disp[i] : 0.0;
  detail::write_pfm_values(path, disp.width, disp.height, values);
}

[[nodiscard]] inline DisparityMap read_disparity_pfm(const std::string& path) {
  int w = 0, h = 0;
  auto values = detail::read_pfm_values(path, w, h);
  DisparityMap disp(w, h);
  for (size_t i = 0; i < values.size(); ++i) {
    const bool ok = std::isfinite(values[i]) && values[i] > 0.0;
    disp.valid[i] = ok ? 1 : 0;
    disp.disp[i] = ok ? values[i] : 0.0;
  }
  return disp;
}

}  // namespace ssp
