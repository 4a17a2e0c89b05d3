// ssp - surgical scene perception toolkit
//
// ASCII PLY snapshots of the surfel model: one vertex per surfel with
// x y z confidence, printed with enough digits to round-trip exactly.

#pragma once

#include "ssp/fusion.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ssp {

inline void write_surfel_ply(const std::string& path, const SurfelModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << model.surfels.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property double confidence\n";
  out << "end_header\n";
  out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : model.surfels) {
    out << s.position.x() << " " << s.position.y() << " " << s.position.z() << " "
        << s.confidence << "\n";
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

/// Reads a snapshot written by write_surfel_ply. Only position and
/// confidence are stored in the file; radius and last_seen come back zero.
[[nodiscard]] inline SurfelModel read_surfel_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw std::runtime_error(path + ": not a PLY file");
  size_t count = 0;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex", 0) == 0) {
      std::istringstream fields(line);
      std::string tok;
      fields >> tok >> tok >> count;
    } else if (line == "end_header") {
      break;
    }
  }
  SurfelModel model;
  model.surfels.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Surfel s;
    if (!(in >> s.position.x() >> s.position.y() >> s.position.z() >> s.confidence))
      throw std::runtime_error(path + ": truncated vertex list");
    model.surfels.push_back(s);
  }
  return model;
}

}  // namespace ssp
