#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fcvsr/metrics.hpp"
#include "fcvsr/synth.hpp"

using namespace fcvsr;

namespace {

Tensor<float> solid(float r, float g, float b, int h = 8, int w = 8) {
  Tensor<float> f(3, h, w);
  std::fill_n(f.plane(0), f.plane_size(), r);
  std::fill_n(f.plane(1), f.plane_size(), g);
  std::fill_n(f.plane(2), f.plane_size(), b);
  return f;
}

// Straightforward per-window SSIM, no separable filtering, as an oracle.
double ssim_direct(const Tensor<double>& a, const Tensor<double>& b) {
  const auto w = gaussian_window_11();
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= a.height; ++y)
    for (int x = 0; x + 11 <= a.width; ++x) {
      double ma = 0, mb = 0, eaa = 0, ebb = 0, eab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wij = w[i] * w[j];
          const double va = a.at(0, y + i, x + j), vb = b.at(0, y + i, x + j);
          ma += wij * va;
          mb += wij * vb;
          eaa += wij * va * va;
          ebb += wij * vb * vb;
          eab += wij * va * vb;
        }
      const double vara = eaa - ma * ma, varb = ebb - mb * mb, cov = eab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (vara + varb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("luma endpoints are exact in the studio range") {
  CHECK(rgb_to_y(solid(1, 1, 1)).data[0] == 235.0 / 255.0);
  CHECK(rgb_to_y(solid(0, 0, 0)).data[0] == 16.0 / 255.0);
  CHECK(rgb_to_y(solid(0.5f, 0.5f, 0.5f)).data[0] == 125.5 / 255.0);
}

TEST_CASE("luma weights match the BT.601 definition") {
  const double y = rgb_to_y(solid(0.25f, 0.5f, 0.75f)).data[0];
  const double expect = (65.481 * 0.25 + 128.553 * 0.5 + 24.966 * 0.75 + 16.0) / 255.0;
  CHECK(y == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("psnr of identical frames is infinite, reported as 'inf'") {
  const auto f = make_frame<float>(3);
  CHECK(std::isinf(psnr_y(f, f)));
  CHECK(format_db(psnr_y(f, f)) == "inf");
}

TEST_CASE("psnr of a known uniform offset") {
  const auto a = solid(0.5f, 0.5f, 0.5f);
  const auto b = solid(0.6f, 0.6f, 0.6f);
  const double dy = (219000.0 * 0.6 + 16000.0) / 255000.0 - (219000.0 * 0.5 + 16000.0) / 255000.0;
  // frames quantize 0.6f etc. through float, so recompute from the stored data
  const double dyf = luma601(a.plane(0)[0], a.plane(1)[0], a.plane(2)[0]) -
                     luma601(b.plane(0)[0], b.plane(1)[0], b.plane(2)[0]);
  CHECK(psnr_y(a, b) == Catch::Approx(10.0 * std::log10(1.0 / (dyf * dyf))).epsilon(1e-12));
  CHECK(std::fabs(dyf) == Catch::Approx(std::fabs(dy)).epsilon(1e-6));
  CHECK(psnr_y(a, b) == psnr_y(b, a));
}

TEST_CASE("psnr decreases as distortion grows") {
  const auto ref = make_frame<float>(17, 32, 32);
  Tensor<float> mild = ref, strong = ref;
  Rng rng(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double n = noise(rng);
    mild.data[i] = clamp01(mild.data[i] + static_cast<float>(0.01 * n));
    strong.data[i] = clamp01(strong.data[i] + static_cast<float>(0.08 * n));
  }
  CHECK(psnr_y(mild, ref) > psnr_y(strong, ref) + 6.0);
}

TEST_CASE("ssim equals one exactly for identical frames") {
  const auto f = make_frame<float>(9, 24, 24);
  CHECK(ssim_y(f, f) == 1.0);
}

TEST_CASE("ssim matches the direct window oracle") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto a = make_frame<float>(seed, 20, 26);
    Tensor<float> b = a;
    Rng rng(seed * 77);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (auto& v : b.data) v = clamp01(v + static_cast<float>(noise(rng)));
    const double fast = ssim_y(a, b);
    const double slow = ssim_direct(rgb_to_y(a), rgb_to_y(b));
    CHECK(fast == Catch::Approx(slow).margin(1e-9));
    CHECK(fast < 1.0);
    CHECK(fast > 0.0);
  }
}

TEST_CASE("ssim needs at least one full window") {
  const auto small = make_frame<float>(1, 8, 8);
  CHECK_THROWS_AS(ssim_y(small, small), ShapeError);
}

TEST_CASE("sequence metrics average finite frames and flag infinite ones") {
  VideoSequence<float> ref, test;
  for (int t = 0; t < 3; ++t) {
    ref.frames.push_back(make_frame<float>(40 + t, 16, 16));
    test.frames.push_back(ref.frames.back());
  }
  for (auto& v : test.frames[1].data) v = clamp01(v + 0.05f);
  const auto rep = sequence_metrics(test, ref);
  REQUIRE(rep.frames.size() == 3);
  CHECK(rep.infinite_psnr_frames == 2);
  CHECK(std::isfinite(rep.mean_psnr));
  CHECK(rep.mean_psnr == Catch::Approx(rep.frames[1].psnr));
  CHECK(rep.frames[0].ssim == 1.0);
}

TEST_CASE("rgb_to_y rejects non-rgb input") {
  Tensor<float> gray(1, 8, 8);
  CHECK_THROWS_AS(rgb_to_y(gray), ShapeError);
}
