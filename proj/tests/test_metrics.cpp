#include <cmath>
#include <limits>
#include <string>

#include "diffiq/errors.hpp"
#include "diffiq/metrics.hpp"
#include "diffiq/reference.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace diffiq;
using testutil::scene8;

namespace {

refimpl::Plane<double> ref_of(const ImagePlane& img) {
  return refimpl::from_image<double>(img);
}

}  // namespace

TEST_CASE("mse and psnr match hand values") {
  const ImagePlane r = scene8(16, 16, 1);
  ImagePlane d = r;
  for (double& v : d.data) v += 1.0;
  CHECK(mse(r, d) == 1.0);
  CHECK(psnr(r, d) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-13));
  CHECK(psnr(r, r) == std::numeric_limits<double>::infinity());
  CHECK(mse(r, r) == 0.0);
  CHECK_THROWS_AS(mse(r, ImagePlane(15, 16)), ShapeError);
}

TEST_CASE("vif minimum sides are 17 25 33 41") {
  CHECK(vif_min_side(0) == 17);
  CHECK(vif_min_side(1) == 25);
  CHECK(vif_min_side(2) == 33);
  CHECK(vif_min_side(3) == 41);
  for (int s = 0; s < 4; ++s) {
    const int side = vif_min_side(s);
    const ImagePlane ok = scene8(side, side, 10 + s);
    CHECK_NOTHROW(vif_scale(ok, ok, s));
    const ImagePlane small = scene8(side - 1, side - 1, 10 + s);
    CHECK_THROWS_AS(vif_scale(small, small, s), ShapeError);
  }
  CHECK_THROWS_AS(vif_scale(scene8(48, 48, 0), scene8(48, 48, 0), 4), NumericError);
}

TEST_CASE("identity pairs score one on every submetric") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const ImagePlane r = scene8(64, 64, seed);
    for (int s = 0; s < 4; ++s)
      CHECK(vif_scale(r, r, s) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(adm(r, r) == 1.0);  // exact for integral planes
    const FeatureVector f = extract_features(r, r);
    CHECK(fused_score(f, default_fusion_model()) == doctest::Approx(97.4).epsilon(1e-11));
  }
}

TEST_CASE("metrics agree with the independent reference implementation") {
  const ImagePlane r = scene8(48, 48, 21);
  SUBCASE("noisy pair") {
    const ImagePlane d = testutil::noisy_copy(r, 6.0, 22);
    for (int s = 0; s < 4; ++s)
      CHECK(vif_scale(r, d, s) ==
            doctest::Approx(refimpl::vif_scale(ref_of(r), ref_of(d), s)).epsilon(1e-9));
    CHECK(adm(r, d) == doctest::Approx(refimpl::adm(ref_of(r), ref_of(d))).epsilon(1e-9));
    const FeatureVector f = extract_features(r, d);
    CHECK(fused_score(f, default_fusion_model()) ==
          doctest::Approx(refimpl::fused(ref_of(r), ref_of(d), default_fusion_model()))
              .epsilon(1e-9));
    CHECK(mse(r, d) == doctest::Approx(refimpl::mse(ref_of(r), ref_of(d))).epsilon(1e-12));
  }
  SUBCASE("affine pair") {
    ImagePlane d = r;
    for (double& v : d.data) v = 0.8 * v + 3.0;
    for (int s = 0; s < 4; ++s)
      CHECK(vif_scale(r, d, s) ==
            doctest::Approx(refimpl::vif_scale(ref_of(r), ref_of(d), s)).epsilon(1e-9));
    CHECK(adm(r, d) == doctest::Approx(refimpl::adm(ref_of(r), ref_of(d))).epsilon(1e-9));
  }
}

TEST_CASE("adm tracks a pure detail attenuation and clamps enhancement") {
  const ImagePlane r = scene8(48, 48, 33);
  ImagePlane att = r, amp = r;
  for (double& v : att.data) v = 0.8 * v + 3.0;
  for (double& v : amp.data) v = 1.3 * v - 2.0;
  // Every wavelet detail of 0.8 R + 3 is exactly 0.8x the reference detail, so
  // the restored fraction is 0.8 in each subband.
  CHECK(adm(r, att) == doctest::Approx(0.8).epsilon(1e-9));
  // Amplified details are clamped back to the reference level.
  CHECK(adm(r, amp) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("degenerate references hit the guarded constant paths") {
  const ImagePlane flat(48, 48, 128.0);
  const ImagePlane d = scene8(48, 48, 2);
  for (int s = 0; s < 4; ++s) CHECK(vif_scale(flat, d, s) == 1.0);
  CHECK(adm(flat, d) == 1.0);
}

TEST_CASE("motion is zero for still or identical frames and exact on constants") {
  const ImagePlane r = scene8(32, 32, 7);
  CHECK(motion(nullptr, r) == 0.0);
  CHECK(motion(&r, r) == 0.0);
  const ImagePlane c1(16, 16, 40.0), c2(16, 16, 47.5);
  CHECK(motion(&c1, c2) == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("extract_features matches the standalone metrics and zero motion") {
  const ImagePlane r = scene8(48, 48, 13);
  const ImagePlane d = testutil::noisy_copy(r, 4.0, 14);
  const FeatureVector f = extract_features(r, d);
  CHECK(f.vif0 == vif_scale(r, d, 0));
  CHECK(f.vif1 == vif_scale(r, d, 1));
  CHECK(f.vif2 == vif_scale(r, d, 2));
  CHECK(f.vif3 == vif_scale(r, d, 3));
  CHECK(f.adm == adm(r, d));
  CHECK(f.motion == 0.0);
}

TEST_CASE("fused_score is the documented linear blend with optional clipping") {
  FeatureVector f;
  f.vif0 = f.vif1 = f.vif2 = f.vif3 = f.adm = 1.0;
  f.motion = 0.0;
  FusionModel m = default_fusion_model();
  CHECK(fused_score(f, m) == doctest::Approx(97.4).epsilon(1e-12));

  m.intercept = -200.0;
  m.clip_enabled = true;
  CHECK(fused_score(f, m) == 0.0);
  m.intercept = 50.0;
  CHECK(fused_score(f, m) == 100.0);
  m.clip_enabled = false;
  CHECK(fused_score(f, m) == doctest::Approx(147.4).epsilon(1e-12));

  FusionModel zero;
  zero.weights = {0, 0, 0, 0, 0, 0};
  zero.intercept = 12.5;
  CHECK(fused_score(f, zero) == 12.5);
}

TEST_CASE("score_and_gradient is consistent with features and the gradient path") {
  const ImagePlane r = scene8(48, 48, 17);
  const ImagePlane d = testutil::noisy_copy(r, 5.0, 18);
  const FusionModel m = default_fusion_model();
  const ScoreAndGradient sg = score_and_gradient(r, d, m);
  CHECK(sg.score ==
        doctest::Approx(fused_score(extract_features(r, d), m)).epsilon(1e-12));
  const ImagePlane g = score_gradient(r, d, m);
  CHECK(testutil::bit_identical(sg.gradient, g));
  double norm = 0.0;
  for (double v : g.data) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("fusion model text round trips exactly and rejects malformed input") {
  FusionModel m;
  m.weights = {1.25, -0.75, 3.14159265358979312, 0.0, 48.7, 10.0};
  m.intercept = -6.6566659999999997;
  m.clip_enabled = true;
  const FusionModel back = load_fusion_model(save_fusion_model(m));
  for (int i = 0; i < 6; ++i) CHECK(back.weights[(std::size_t)i] == m.weights[(std::size_t)i]);
  CHECK(back.intercept == m.intercept);
  CHECK(back.clip_enabled == m.clip_enabled);

  const std::string good =
      "# comment\n"
      "w_vif0 = 1\nw_vif1 = 2\nw_vif2 = 3\nw_vif3 = 4\n"
      "  w_adm =   5   # trailing comment\n"
      "w_motion = 6\nintercept = -7.5\nclip = false\n";
  const FusionModel g = load_fusion_model(good);
  CHECK(g.weights[4] == 5.0);
  CHECK(g.intercept == -7.5);
  CHECK(g.clip_enabled == false);

  // Malformed model text is a format problem, same family as a bad image file.
  CHECK_THROWS_AS(load_fusion_model("w_vif0 = 1\n"), FormatError);  // missing keys
  CHECK_THROWS_AS(load_fusion_model(good + "bogus = 1\n"), FormatError);
  CHECK_THROWS_AS(load_fusion_model(good + "w_vif0 = 2\n"), FormatError);  // duplicate
  CHECK_THROWS_AS(
      load_fusion_model("w_vif0 = nope\nw_vif1 = 2\nw_vif2 = 3\nw_vif3 = 4\n"
                        "w_adm = 5\nw_motion = 6\nintercept = 0\nclip = false\n"),
      FormatError);
  CHECK_THROWS_AS(
      load_fusion_model("w_vif0 = 1\nw_vif1 = 2\nw_vif2 = 3\nw_vif3 = 4\n"
                        "w_adm = 5\nw_motion = 6\nintercept = 0\nclip = maybe\n"),
      FormatError);
  CHECK_THROWS_AS(load_fusion_model_file("/nonexistent/model.txt"), IoError);
}

TEST_CASE("custom vif guards change the value smoothly") {
  const ImagePlane r = scene8(48, 48, 40);
  const ImagePlane d = testutil::noisy_copy(r, 6.0, 41);
  VifGuards loud;
  loud.noise_var = 10.0;
  const double base = vif_scale(r, d, 0);
  const double relaxed = vif_scale(r, d, 0, loud);
  CHECK(base > 0.0);
  CHECK(base < 1.0);
  // A larger assumed noise variance forgives distortion: the ratio moves up.
  CHECK(relaxed > base);
}
