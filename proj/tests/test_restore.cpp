#include <cmath>
#include <limits>

#include "diffiq/errors.hpp"
#include "diffiq/metrics.hpp"
#include "diffiq/restore.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace diffiq;
using testutil::scene8;

TEST_CASE("default thresholds follow the target kind") {
  CHECK(default_threshold(RestoreTarget::FUSED) == 100.0);
  CHECK(default_threshold(RestoreTarget::PSNR) == 50.0);
  CHECK(default_threshold(RestoreTarget::VIF0) == 1.0);
  CHECK(default_threshold(RestoreTarget::VIF3) == 1.0);
  CHECK(default_threshold(RestoreTarget::ADM) == 1.0);
}

TEST_CASE("init_noise is seeded, bounded, and roughly centered") {
  const ImagePlane a = init_noise(96, 96, 5);
  const ImagePlane b = init_noise(96, 96, 5);
  const ImagePlane c = init_noise(96, 96, 6);
  CHECK(testutil::bit_identical(a, b));
  CHECK_FALSE(testutil::bit_identical(a, c));
  CHECK(plane_min(a) >= 0.0);
  CHECK(plane_max(a) <= 255.0);
  CHECK(plane_mean(a) == doctest::Approx(127.5).epsilon(0.04));
  CHECK_THROWS_AS(init_noise(0, 4, 1), ShapeError);
}

TEST_CASE("adam first step matches the bias-corrected closed form") {
  for (double g : {2.0, -0.7, 1e-3}) {
    AdamState st;
    st.m = ImagePlane(1, 1, 0.0);
    st.v = ImagePlane(1, 1, 0.0);
    ImagePlane x(1, 1, 10.0);
    const ImagePlane grad(1, 1, g);
    adam_step(st, x, grad, 0.5, 0.9, 0.999, 1e-8);
    const double expected = 10.0 + 0.5 * g / (std::fabs(g) + 1e-8);
    CHECK(x.at(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(st.t == 1);
  }
}

TEST_CASE("adam ascends a 1-d quadratic to its maximum") {
  AdamState st;
  st.m = ImagePlane(1, 1, 0.0);
  st.v = ImagePlane(1, 1, 0.0);
  ImagePlane x(1, 1, 0.0);
  const double target = 3.0;
  for (int i = 0; i < 2000; ++i) {
    const ImagePlane grad(1, 1, -2.0 * (x.at(0, 0) - target));
    adam_step(st, x, grad, 0.05, 0.9, 0.999, 1e-8);
  }
  CHECK(x.at(0, 0) == doctest::Approx(target).epsilon(0.01));
}

TEST_CASE("adam validates shapes and finiteness") {
  AdamState st;
  st.m = ImagePlane(2, 2, 0.0);
  st.v = ImagePlane(2, 2, 0.0);
  ImagePlane x(2, 2, 0.0);
  CHECK_THROWS_AS(adam_step(st, x, ImagePlane(3, 2, 0.0), 0.1, 0.9, 0.999, 1e-8),
                  ShapeError);
  CHECK_THROWS_AS(
      adam_step(st, x, ImagePlane(2, 2, std::numeric_limits<double>::quiet_NaN()), 0.1, 0.9,
                0.999, 1e-8),
      NumericError);
}

TEST_CASE("psnr-target restoration climbs from a noisy start to the threshold") {
  const ImagePlane r = scene8(48, 48, 80);
  const ImagePlane init = testutil::noisy_copy(r, 8.0, 81);
  RestoreConfig cfg;
  cfg.target = RestoreTarget::PSNR;
  cfg.threshold = 40.0;
  cfg.max_steps = 3000;
  auto [restored, trace] = restore(r, init, cfg, default_fusion_model());
  CHECK(trace.reached_threshold);
  CHECK_FALSE(trace.hit_max_steps);
  CHECK(psnr(r, restored) >= 40.0);
  REQUIRE_FALSE(trace.points.empty());
  CHECK(trace.points.front().step == 1);
  CHECK(trace.points.front().score == doctest::Approx(psnr(r, init)).epsilon(1e-12));
  CHECK(trace.points.back().score >= 40.0);
  CHECK(trace.points.back().step == (int)trace.points.size());
}

TEST_CASE("an already perfect init satisfies the threshold immediately") {
  const ImagePlane r = scene8(32, 32, 82);
  RestoreConfig cfg;
  cfg.target = RestoreTarget::PSNR;  // psnr(r, r) is +inf
  auto [restored, trace] = restore(r, r, cfg, default_fusion_model());
  CHECK(trace.reached_threshold);
  CHECK(trace.points.size() == 1);
  CHECK(testutil::bit_identical(restored, r));
}

TEST_CASE("fused convergence-mode restoration is deterministic and improves") {
  const ImagePlane r = scene8(41, 41, 83);
  RestoreConfig cfg;
  cfg.target = RestoreTarget::FUSED;
  cfg.stop_mode = StopMode::Convergence;
  cfg.conv_window = 20;
  cfg.max_steps = 400;
  auto [a, ta] = restore_from_compressed(r, cfg, default_fusion_model());
  auto [b, tb] = restore_from_compressed(r, cfg, default_fusion_model());
  CHECK(testutil::bit_identical(a, b));
  REQUIRE(ta.points.size() == tb.points.size());
  CHECK(ta.points.back().score == tb.points.back().score);
  CHECK(ta.points.back().score > ta.points.front().score);

  // Matches a manual run from the same init.
  auto [c, tc] = restore(r, compression_proxy(r), cfg, default_fusion_model());
  CHECK(testutil::bit_identical(a, c));
}

TEST_CASE("compression proxy blurs then quantizes to multiples of 17") {
  const ImagePlane r = scene8(40, 40, 84);
  const ImagePlane p = compression_proxy(r);
  REQUIRE(p.same_shape(r));
  for (double v : p.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 255.0);
    const double levels = v / 17.0;
    CHECK(levels == doctest::Approx(std::round(levels)).epsilon(1e-12));
  }
  CHECK(testutil::bit_identical(p, compression_proxy(r)));
  CHECK_FALSE(testutil::bit_identical(p, r));
}

TEST_CASE("restore validates its configuration") {
  const ImagePlane r = scene8(41, 41, 85);
  const FusionModel m = default_fusion_model();
  RestoreConfig cfg;
  CHECK_THROWS_AS(restore(r, ImagePlane(40, 41, 0.0), cfg, m), ShapeError);
  cfg.max_steps = 0;
  CHECK_THROWS_AS(restore(r, r, cfg, m), ConfigError);
  cfg.max_steps = 10;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(restore(r, r, cfg, m), ConfigError);
  cfg.lr = 0.5;
  cfg.beta1 = 0.999;
  cfg.beta2 = 0.9;
  CHECK_THROWS_AS(restore(r, r, cfg, m), ConfigError);
}
