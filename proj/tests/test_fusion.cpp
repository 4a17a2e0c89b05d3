#include "ssp/fusion.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using Catch::Approx;

namespace {

// 40x30 camera for compact fusion scenes
const ssp::CameraIntrinsics kCam{500.0, 500.0, 20.0, 15.0, 0.005, 40, 30};

/// Smooth sloped depth map with a rectangular invalid hole.
ssp::DepthMap smooth_map(double z0 = 0.5) {
  ssp::DepthMap d(kCam.width, kCam.height);
  for (int r = 0; r < d.height; ++r)
    for (int c = 0; c < d.width; ++c)
      d.z[d.idx(r, c)] = z0 + 1e-4 * r + 5e-5 * c;
  for (int r = 10; r < 14; ++r)
    for (int c = 25; c < 31; ++c) d.z[d.idx(r, c)] = 0.0;
  return d;
}

}  // namespace

TEST_CASE("dilate_square: single pixel grows to an exact square block") {
  ssp::BinaryMask mask(40, 30);
  mask.set(15, 20);
  const auto grown = ssp::dilate_square(mask, 5);
  int count = 0;
  for (int r = 0; r < 30; ++r) {
    for (int c = 0; c < 40; ++c) {
      const bool inside = std::abs(r - 15) <= 5 && std::abs(c - 20) <= 5;
      REQUIRE(grown.at(r, c) == inside);
      count += grown.at(r, c) ? 1 : 0;
    }
  }
  REQUIRE(count == 11 * 11);
}

TEST_CASE("subtract_mask: empty and full masks") {
  const auto depth = smooth_map();
  const ssp::BinaryMask empty(kCam.width, kCam.height);
  const auto untouched = ssp::subtract_mask(depth, empty, 5);
  REQUIRE(untouched.z == depth.z);

  ssp::BinaryMask full(kCam.width, kCam.height);
  for (auto& b : full.bits) b = 1;
  const auto wiped = ssp::subtract_mask(depth, full, 0);
  for (double z : wiped.z) REQUIRE(z == 0.0);

  ssp::BinaryMask wrong(kCam.width + 1, kCam.height);
  REQUIRE_THROWS_AS(ssp::subtract_mask(depth, wrong, 5), std::invalid_argument);
}

TEST_CASE("fuse_depth: one map produces one surfel per valid pixel, round trip exact") {
  const auto depth = smooth_map();
  ssp::FusionParams params;
  const auto model = ssp::fuse_depth({}, depth, kCam, params);

  size_t valid = 0;
  for (double z : depth.z) valid += z > 0.0 ? 1 : 0;
  REQUIRE(model.surfels.size() == valid);
  REQUIRE(model.frame_count == 1);

  const auto back = ssp::reproject_model(model, kCam);
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const double z = depth.z[depth.idx(r, c)];
      if (z > 0.0) {
        REQUIRE(std::abs(back.z[back.idx(r, c)] - z) < 1e-9);
      } else {
        REQUIRE(back.z[back.idx(r, c)] == 0.0);
      }
    }
  }
}

TEST_CASE("fuse_depth: re-fusing the identical map is idempotent") {
  const auto depth = smooth_map();
  ssp::FusionParams params;
  auto model = ssp::fuse_depth({}, depth, kCam, params);
  const auto first = model;
  for (int k = 0; k < 3; ++k) model = ssp::fuse_depth(std::move(model), depth, kCam, params);

  REQUIRE(model.surfels.size() == first.surfels.size());
  for (size_t i = 0; i < model.surfels.size(); ++i) {
    REQUIRE((model.surfels[i].position - first.surfels[i].position).norm() < 1e-9);
    REQUIRE(model.surfels[i].confidence == 4.0);
  }
}

TEST_CASE("fuse_depth: within-tolerance observations average by confidence") {
  ssp::FusionParams params;  // tau_z = 5 mm
  const auto map_a = smooth_map(0.5);
  const auto map_b = smooth_map(0.5 + params.tau_z / 2.0);
  auto model = ssp::fuse_depth({}, map_a, kCam, params);
  model = ssp::fuse_depth(std::move(model), map_b, kCam, params);

  // brute-force per-pixel expectation: equal-confidence mean of the two depths
  REQUIRE(model.surfels.size() > 0);
  for (const auto& s : model.surfels) {
    REQUIRE(s.confidence == 2.0);
    const auto m = ssp::try_project_point(kCam, s.position);
    REQUIRE(m.has_value());
    const int c = static_cast<int>(std::floor(m->x()));
    const int r = static_cast<int>(std::floor(m->y()));
    const double expected = 0.5 * (map_a.z[map_a.idx(r, c)] + map_b.z[map_b.idx(r, c)]);
    REQUIRE(s.position.z() == Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("fuse_depth: out-of-tolerance observations create new surfels") {
  ssp::FusionParams params;
  const auto map_a = smooth_map(0.5);
  const auto map_b = smooth_map(0.5 + 3.0 * params.tau_z);
  auto model = ssp::fuse_depth({}, map_a, kCam, params);
  const size_t before = model.surfels.size();
  model = ssp::fuse_depth(std::move(model), map_b, kCam, params);
  REQUIRE(model.surfels.size() == 2 * before);
}

TEST_CASE("fuse_depth: total confidence never decreases") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  ssp::FusionParams params;
  ssp::SurfelModel model;
  double previous = 0.0;
  for (int frame = 0; frame < 6; ++frame) {
    const auto depth = smooth_map(0.5 + jitter(rng));
    model = ssp::fuse_depth(std::move(model), depth, kCam, params);
    double total = 0.0;
    for (const auto& s : model.surfels) total += s.confidence;
    REQUIRE(total >= previous);
    previous = total;
  }
}

TEST_CASE("fuse_depth: no surfel is born or updated under the dilated mask") {
  ssp::FusionParams params;
  params.dilation_radius = 3;
  ssp::BinaryMask mask(kCam.width, kCam.height);
  for (int r = 8; r < 20; ++r)
    for (int c = 5; c < 12; ++c) mask.set(r, c);
  const auto dilated = ssp::dilate_square(mask, params.dilation_radius);

  ssp::SurfelModel model;
  for (int frame = 0; frame < 4; ++frame) {
    const auto masked =
        ssp::subtract_mask(smooth_map(0.5 + 1e-3 * frame), mask, params.dilation_radius);
    model = ssp::fuse_depth(std::move(model), masked, kCam, params);
    for (const auto& s : model.surfels) {
      if (s.last_seen != frame) continue;  // touched this round
      const auto m = ssp::try_project_point(kCam, s.position);
      REQUIRE(m.has_value());
      const int c = static_cast<int>(std::floor(m->x()));
      const int r = static_cast<int>(std::floor(m->y()));
      REQUIRE_FALSE(dilated.at(r, c));
    }
  }
}

TEST_CASE("reproject_model: empty model and z-buffer ordering") {
  const auto blank = ssp::reproject_model({}, kCam);
  for (double z : blank.z) REQUIRE(z == 0.0);

  ssp::CameraIntrinsics K{500.0, 500.0, 320.0, 240.0, 0.005, 640, 480};
  ssp::SurfelModel model;
  model.surfels.push_back({{0.0, 0.0, 2.0}, 0.001, 1.0, 0});
  auto depth = ssp::reproject_model(model, K);
  REQUIRE(depth.z[depth.idx(240, 320)] == 2.0);

  model.surfels.push_back({{0.0, 0.0, 1.0}, 0.001, 1.0, 0});
  depth = ssp::reproject_model(model, K);
  REQUIRE(depth.z[depth.idx(240, 320)] == 1.0);  // nearer surfel wins
}

TEST_CASE("reproject_model: splat radius covers at least the center pixel") {
  ssp::CameraIntrinsics K{500.0, 500.0, 320.0, 240.0, 0.005, 640, 480};
  ssp::SurfelModel model;
  model.surfels.push_back({{0.0123, -0.0317, 1.7}, 1e-6, 1.0, 0});  // sub-pixel radius
  const auto depth = ssp::reproject_model(model, K);
  const auto m = ssp::try_project_point(K, model.surfels[0].position);
  const int c = static_cast<int>(std::floor(m->x()));
  const int r = static_cast<int>(std::floor(m->y()));
  REQUIRE(depth.z[depth.idx(r, c)] == 1.7);
}

TEST_CASE("prune: staleness and confidence rules") {
  ssp::FusionParams params;  // c_min = 1, t_stale = 30
  ssp::SurfelModel model;
  model.frame_count = 32;
  model.surfels.push_back({{0, 0, 1.0}, 0.01, 0.5, 1});   // stale and weak: goes
  model.surfels.push_back({{0, 0, 1.1}, 0.01, 10.0, 1});  // stale but strong: stays
  model.surfels.push_back({{0, 0, 1.2}, 0.01, 0.5, 31});  // weak but fresh: stays
  const auto pruned = ssp::prune(model, params);
  REQUIRE(pruned.surfels.size() == 2);
  REQUIRE(pruned.surfels[0].confidence == 10.0);
  REQUIRE(pruned.surfels[1].position.z() == 1.2);

  ssp::SurfelModel fresh;
  fresh = ssp::fuse_depth(std::move(fresh), smooth_map(), kCam, params);
  const size_t n = fresh.surfels.size();
  REQUIRE(ssp::prune(fresh, params).surfels.size() == n);
}
