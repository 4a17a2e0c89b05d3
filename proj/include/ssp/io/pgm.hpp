// ssp - surgical scene perception toolkit
//
// Netpbm grayscale (PGM, 8/16-bit) and bitmap (PBM) readers and writers.
// Images map to [0, 1] intensities; masks use 0/255 in PGM or packed bits
// in PBM (1 = masked, following PBM's 1 = black).

#pragma once

#include "ssp/fusion.hpp"
#include "ssp/stereo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

namespace ssp {

namespace detail {

inline void skip_pnm_whitespace(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline long read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_whitespace(in);
  long v = 0;
  if (!(in >> v)) throw std::runtime_error(path + ": malformed PNM header");
  return v;
}

}  // namespace detail

/// 16-bit (default) or 8-bit binary PGM. Intensities are clamped to [0, 1].
inline void write_pgm(const std::string& path, const ImageGray& img, int bits = 16) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("write_pgm: bits must be 8 or 16");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  const int maxval = bits == 8 ? 255 : 65535;
  out << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
  for (double v : img.values) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * maxval);
    if (bits == 8) {
      out.put(static_cast<char>(q));
    } else {
      out.put(static_cast<char>(q >> 8));  // big-endian per Netpbm
      out.put(static_cast<char>(q & 0xff));
    }
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

[[nodiscard]] inline ImageGray read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5") throw std::runtime_error(path + ": not a binary PGM (P5)");
  const long w = detail::read_pnm_int(in, path);
  const long h = detail::read_pnm_int(in, path);
  const long maxval = detail::read_pnm_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw std::runtime_error(path + ": bad PGM dimensions");
  in.get();  // single whitespace after maxval
  ImageGray img(static_cast<int>(w), static_cast<int>(h));
  const int bytes = maxval > 255 ? 2 : 1;
  std::string raw(static_cast<size_t>(w) * h * bytes, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in) throw std::runtime_error(path + ": truncated PGM raster");
  for (size_t i = 0; i < img.values.size(); ++i) {
    const auto hi = static_cast<unsigned char>(raw[i * bytes]);
    const long q = bytes == 1
                       ? hi
                       : (static_cast<long>(hi) << 8) |
                             static_cast<unsigned char>(raw[i * bytes + 1]);
    img.values[i] = static_cast<double>(q) / static_cast<double>(maxval);
  }
  return img;
}

/// Mask as an 8-bit PGM with values 0 / 255.
inline void write_mask_pgm(const std::string& path, const BinaryMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  for (auto b : mask.bits) out.put(b ? static_cast<char>(255) : 0);
  if (!out) throw std::runtime_error(path + ": write failed");
}

/// Mask as a packed-bit PBM (1 = masked).
inline void write_mask_pbm(const std::string& path, const BinaryMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "P4\n" << mask.width << " " << mask.height << "\n";
  const int row_bytes = (mask.width + 7) / 8;
  for (int r = 0; r < mask.height; ++r) {
    for (int byte = 0; byte < row_bytes; ++byte) {
      unsigned char packed = 0;
      for (int bit = 0; bit < 8; ++bit) {
        const int c = byte * 8 + bit;
        if (c < mask.width && mask.at(r, c)) packed |= 0x80 >> bit;
      }
      out.put(static_cast<char>(packed));
    }
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

/// Reads a mask from PGM (nonzero = masked) or PBM.
[[nodiscard]] inline BinaryMask read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic == "P5") {
    in.close();
    const ImageGray img = read_pgm(path);
    BinaryMask mask(img.width, img.height);
    for (size_t i = 0; i < img.values.size(); ++i) mask.bits[i] = img.values[i] > 0.0 ? 1 : 0;
    return mask;
  }
  if (magic != "P4") throw std::runtime_error(path + ": not a PGM/PBM mask");
  const long w = detail::read_pnm_int(in, path);
  const long h = detail::read_pnm_int(in, path);
  if (w <= 0 || h <= 0) throw std::runtime_error(path + ": bad PBM dimensions");
  in.get();
  BinaryMask mask(static_cast<int>(w), static_cast<int>(h));
  const int row_bytes = (static_cast<int>(w) + 7) / 8;
  std::string raw(static_cast<size_t>(row_bytes) * h, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in) throw std::runtime_error(path + ": truncated PBM raster");
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const unsigned char byte =
          static_cast<unsigned char>(raw[static_cast<size_t>(r) * row_bytes + c / 8]);
      mask.bits[mask.idx(r, c)] = (byte >> (7 - c % 8)) & 1;
    }
  return mask;
}

}  // namespace ssp
