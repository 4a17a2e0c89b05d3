#include "ssp/stereo.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using Catch::Approx;

namespace {

const ssp::CameraIntrinsics kCamera{500.0, 500.0, 320.0, 240.0, 0.005, 640, 480};

ssp::ImageGray random_image(int w, int h, std::mt19937_64& rng) {
  ssp::ImageGray img(w, h);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& v : img.values) v = unif(rng);
  return img;
}

/// right(r, c) = scene(r, c + shift): a fronto-parallel scene at disparity
/// `shift` under the left-referenced convention left(r, c) ~ right(r, c - shift).
std::pair<ssp::ImageGray, ssp::ImageGray> shifted_pair(int w, int h, int shift,
                                                       std::mt19937_64& rng) {
  ssp::ImageGray wide = random_image(w + shift, h, rng);
  ssp::ImageGray left(w, h);
  ssp::ImageGray right(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      left.at(r, c) = wide.at(r, c);
      right.at(r, c) = wide.at(r, c + shift);
    }
  }
  return {left, right};
}

ssp::CostVolume random_volume(int w, int h, int d_max, std::mt19937_64& rng) {
  ssp::CostVolume v(w, h, d_max);
  std::uniform_real_distribution<float> unif(0.0f, 1.0f);
  for (auto& c : v.cost) c = unif(rng);
  return v;
}

}  // namespace

TEST_CASE("build_cost_volume: identical images have zero cost at d = 0") {
  std::mt19937_64 rng(41);
  const auto img = random_image(64, 32, rng);
  const auto volume = ssp::build_cost_volume(img, img, 8, 5);
  for (int r = 2; r < 30; ++r)
    for (int c = 2; c < 62; ++c) REQUIRE(volume.at(r, c, 0) == 0.0f);
}

TEST_CASE("build_cost_volume: shifted pair has zero cost at the true disparity") {
  std::mt19937_64 rng(42);
  const auto [left, right] = shifted_pair(64, 32, 5, rng);
  const auto volume = ssp::build_cost_volume(left, right, 12, 5);
  for (int r = 2; r < 30; ++r) {
    for (int c = 14; c < 56; ++c) {  // interior: window and d_max margins
      REQUIRE(volume.at(r, c, 5) == 0.0f);
      // and d = 5 is the argmin plane
      for (int d = 0; d <= 12; ++d) REQUIRE(volume.at(r, c, d) >= volume.at(r, c, 5));
    }
  }
}

TEST_CASE("build_cost_volume: constant images are ambiguous everywhere inside") {
  ssp::ImageGray flat(64, 32, 0.5);
  const auto volume = ssp::build_cost_volume(flat, flat, 8, 3);
  for (int d = 0; d <= 8; ++d) REQUIRE(volume.at(16, 40, d) == 0.0f);
  const auto disp = ssp::soft_argmin(volume);
  REQUIRE(disp.disp[disp.idx(16, 40)] == 4.0);  // symmetric mean of 0..8
}

TEST_CASE("build_cost_volume: matches the brute-force window oracle") {
  std::mt19937_64 rng(43);
  const auto left = random_image(40, 24, rng);
  const auto right = random_image(40, 24, rng);
  const auto volume = ssp::build_cost_volume(left, right, 10, 5);
  std::uniform_int_distribution<int> rr(0, 23), cc(0, 39), dd(0, 10);
  for (int i = 0; i < 500; ++i) {
    const int r = rr(rng), c = cc(rng), d = dd(rng);
    const double expected = oracle::sad_cost(left, right, r, c, d, 5);
    REQUIRE(volume.at(r, c, d) == Approx(expected).margin(1e-6));
  }
}

TEST_CASE("build_cost_volume: input validation") {
  std::mt19937_64 rng(44);
  const auto a = random_image(32, 16, rng);
  const auto b = random_image(31, 16, rng);
  REQUIRE_THROWS_AS(ssp::build_cost_volume(a, b, 8, 5), std::invalid_argument);
  REQUIRE_THROWS_AS(ssp::build_cost_volume(a, a, 8, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(ssp::build_cost_volume(a, a, 32, 5), std::invalid_argument);
}

TEST_CASE("soft_argmin: one-hot volume reads out the hot plane") {
  ssp::CostVolume volume(4, 3, 192);
  for (auto& c : volume.cost) c = 50.0f;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) volume.at(r, c, 7) = 0.0f;
  const auto disp = ssp::soft_argmin(volume);
  for (double d : disp.disp) REQUIRE(d == Approx(7.0).margin(1e-3));
}

TEST_CASE("soft_argmin: uniform costs give exactly the midpoint") {
  ssp::CostVolume volume(3, 2, 8);
  for (auto& c : volume.cost) c = 0.37f;
  const auto disp = ssp::soft_argmin(volume);
  for (double d : disp.disp) REQUIRE(d == 4.0);
}

TEST_CASE("soft_argmin: two equal minima average") {
  ssp::CostVolume volume(2, 2, 192);
  for (auto& c : volume.cost) c = 60.0f;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      volume.at(r, c, 5) = 0.0f;
      volume.at(r, c, 9) = 0.0f;
    }
  }
  const auto disp = ssp::soft_argmin(volume);
  for (double d : disp.disp) REQUIRE(d == Approx(7.0).margin(1e-3));
}

TEST_CASE("soft_argmin: output lies in [0, d_max] and every pixel is valid") {
  std::mt19937_64 rng(45);
  const auto volume = random_volume(16, 12, 24, rng);
  const auto disp = ssp::soft_argmin(volume);
  for (size_t i = 0; i < disp.disp.size(); ++i) {
    REQUIRE(disp.valid[i] == 1);
    REQUIRE(disp.disp[i] >= 0.0);
    REQUIRE(disp.disp[i] <= 24.0);
  }
}

TEST_CASE("soft_argmin: invariant to a per-pixel constant cost shift") {
  std::mt19937_64 rng(46);
  ssp::CostVolume volume(8, 6, 16);
  std::uniform_int_distribution<int> grid(0, 127);
  // costs on a 1/64 grid so the +0.5 shift is exact in float
  for (auto& c : volume.cost) c = static_cast<float>(grid(rng)) / 64.0f;
  ssp::CostVolume shifted = volume;
  for (auto& c : shifted.cost) c += 0.5f;
  const auto a = ssp::soft_argmin(volume);
  const auto b = ssp::soft_argmin(shifted);
  REQUIRE(a.disp == b.disp);
}

TEST_CASE("soft_argmin: approaches winner-take-all as the cost gap grows") {
  std::mt19937_64 rng(47);
  std::uniform_int_distribution<int> hot(0, 24);
  ssp::CostVolume volume(6, 4, 24);
  std::vector<int> hot_d(6 * 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 6; ++c) {
      const int h = hot(rng);
      hot_d[r * 6 + c] = h;
      for (int d = 0; d <= 24; ++d) volume.at(r, c, d) = d == h ? 0.0f : 20.0f;
    }
  }
  const auto soft = ssp::soft_argmin(volume);
  const auto wta = ssp::winner_take_all(volume);
  for (size_t i = 0; i < soft.disp.size(); ++i) {
    REQUIRE(wta.disp[i] == hot_d[i]);
    REQUIRE(std::abs(soft.disp[i] - wta.disp[i]) < 1e-6);
  }
}

TEST_CASE("soft_argmin: matches the naive softmax oracle") {
  std::mt19937_64 rng(48);
  for (double sharpness : {1.0, 50.0}) {
    const auto volume = random_volume(16, 12, 24, rng);
    const auto got = ssp::soft_argmin(volume, sharpness);
    const auto expected = oracle::soft_argmin(volume, sharpness);
    for (size_t i = 0; i < got.disp.size(); ++i)
      REQUIRE(got.disp[i] == Approx(expected.disp[i]).epsilon(1e-9));
  }
}

TEST_CASE("winner_take_all: exact argmin with low-d tie break") {
  ssp::CostVolume volume(2, 1, 12);
  for (auto& c : volume.cost) c = 0.8f;
  volume.at(0, 0, 7) = 0.1f;
  volume.at(0, 1, 5) = 0.2f;
  volume.at(0, 1, 9) = 0.2f;
  const auto disp = ssp::winner_take_all(volume);
  REQUIRE(disp.disp[0] == 7.0);
  REQUIRE(disp.disp[1] == 5.0);  // tie broken toward the smaller disparity
}

TEST_CASE("winner_take_all: ambiguous pixels are invalid") {
  ssp::CostVolume volume(2, 1, 4);
  for (auto& c : volume.cost) c = 1.0f;
  volume.at(0, 0, 2) = 0.3f;
  const auto disp = ssp::winner_take_all(volume, 1.0);
  REQUIRE(disp.valid[0] == 1);
  REQUIRE(disp.valid[1] == 0);
}

TEST_CASE("winner_take_all: matches the per-pixel scan oracle") {
  std::mt19937_64 rng(49);
  const auto volume = random_volume(20, 14, 16, rng);
  const auto got = ssp::winner_take_all(volume, 0.9);
  const auto expected = oracle::winner_take_all(volume, 0.9);
  REQUIRE(got.disp == expected.disp);
  REQUIRE(got.valid == expected.valid);
}

TEST_CASE("disparity_to_depth: triangulation arithmetic") {
  ssp::CameraIntrinsics K = kCamera;
  K.baseline = 0.01;
  ssp::DisparityMap disp(2, 1);
  disp.disp = {10.0, 0.0};
  disp.valid = {1, 1};
  const auto depth = ssp::disparity_to_depth(disp, K);
  REQUIRE(depth.z[0] == 0.5);  // 0.01 * 500 / 10
  REQUIRE(depth.z[1] == 0.0);  // zero disparity is invalid
}

TEST_CASE("disparity_to_depth: depth -> disparity -> depth round trip") {
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> unif(0.02, 2.0);
  const double bf = kCamera.baseline * kCamera.fx;
  ssp::DisparityMap disp(32, 8);
  for (size_t i = 0; i < disp.disp.size(); ++i) {
    const double z = unif(rng);
    disp.disp[i] = bf / z;
    disp.valid[i] = 1;
  }
  const auto depth = ssp::disparity_to_depth(disp, kCamera);
  for (size_t i = 0; i < disp.disp.size(); ++i) {
    const double z = bf / disp.disp[i];
    const double back = bf / depth.z[i];
    REQUIRE(std::abs(depth.z[i] - z) <= 1e-12 * z);
    REQUIRE(std::abs(back - disp.disp[i]) <= 1e-12 * disp.disp[i]);
  }
}

TEST_CASE("disparity_to_depth: strictly decreasing in disparity") {
  ssp::DisparityMap disp(64, 1);
  for (int c = 0; c < 64; ++c) {
    disp.disp[c] = 1.0 + c;
    disp.valid[c] = 1;
  }
  const auto depth = ssp::disparity_to_depth(disp, kCamera);
  for (int c = 1; c < 64; ++c) REQUIRE(depth.z[c] < depth.z[c - 1]);
}

TEST_CASE("estimate_depth: shifted pair recovers the analytic depth") {
  std::mt19937_64 rng(51);
  const auto [left, right] = shifted_pair(96, 48, 5, rng);
  ssp::StereoParams params;
  params.d_max = 24;
  params.window = 7;
  const auto depth = ssp::estimate_depth(left, right, kCamera, params);
  // baseline * fx / 5 = 0.005 * 500 / 5 = 0.5 m
  for (int r = 6; r < 42; ++r)
    for (int c = 30; c < 88; ++c) REQUIRE(depth.z[depth.idx(r, c)] == Approx(0.5).margin(1e-3));
}

TEST_CASE("estimate_depth: identical images yield an all-invalid map") {
  std::mt19937_64 rng(52);
  const auto img = random_image(64, 32, rng);
  ssp::StereoParams params;
  params.d_max = 16;
  const auto depth = ssp::estimate_depth(img, img, kCamera, params);
  for (double z : depth.z) REQUIRE(z == 0.0);
}

TEST_CASE("cost volume: d_max planes are inclusive (192 -> 193 planes)") {
  ssp::CostVolume volume(200, 2, 192);
  REQUIRE(volume.planes() == 193);
  REQUIRE(volume.cost.size() == 200u * 2u * 193u);
}

TEST_CASE("resize_bilinear: preserves constants and size") {
  ssp::ImageGray img(20, 10, 0.375);
  const auto out = ssp::resize_bilinear(img, 13, 7);
  REQUIRE(out.width == 13);
  REQUIRE(out.height == 7);
  for (double v : out.values) REQUIRE(v == Approx(0.375).margin(1e-12));
}
