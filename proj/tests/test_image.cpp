#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "diffiq/errors.hpp"
#include "diffiq/image.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace diffiq;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) {
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

std::vector<std::uint8_t> pgm_2x2(std::uint8_t a, std::uint8_t b, std::uint8_t c,
                                  std::uint8_t d) {
  std::vector<std::uint8_t> out = bytes_of("P5\n2 2\n255\n");
  out.push_back(a);
  out.push_back(b);
  out.push_back(c);
  out.push_back(d);
  return out;
}

}  // namespace

TEST_CASE("pgm parse reads dimensions and pixel values") {
  const ImagePlane img = read_pgm(pgm_2x2(0, 17, 128, 255));
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.at(0, 0) == 0.0);
  CHECK(img.at(0, 1) == 17.0);
  CHECK(img.at(1, 0) == 128.0);
  CHECK(img.at(1, 1) == 255.0);
}

TEST_CASE("pgm parse accepts comments and flexible whitespace") {
  std::vector<std::uint8_t> hdr = bytes_of("P5 # kind\n# a comment line\n 3\t1 # w\n255\n");
  hdr.push_back(9);
  hdr.push_back(10);  // '\n' as pixel data, must not terminate anything
  hdr.push_back(11);
  const ImagePlane img = read_pgm(hdr);
  CHECK(img.width == 3);
  CHECK(img.height == 1);
  CHECK(img.at(0, 1) == 10.0);
}

TEST_CASE("pgm parse keeps raw sample values under a sub-255 maxval") {
  std::vector<std::uint8_t> data = bytes_of("P5\n2 1\n51\n");
  data.push_back(51);
  data.push_back(17);
  const ImagePlane img = read_pgm(data);
  CHECK(img.at(0, 0) == 51.0);
  CHECK(img.at(0, 1) == 17.0);
}

TEST_CASE("pgm parse rejects malformed inputs with byte offsets") {
  CHECK_THROWS_AS(read_pgm(bytes_of("P6\n1 1\n255\nx")), FormatError);
  CHECK_THROWS_AS(read_pgm(bytes_of("P5\n1 1\n256\n")), FormatError);
  CHECK_THROWS_AS(read_pgm(bytes_of("P5\n0 1\n255\n")), FormatError);
  CHECK_THROWS_AS(read_pgm(bytes_of("P5\n1 1\n255")), FormatError);   // no terminator
  CHECK_THROWS_AS(read_pgm(bytes_of("P5\n2 2\n255\nab")), FormatError);  // short payload
  try {
    read_pgm(bytes_of("P5\n1 x\n255\n"));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("pgm write rounds half away from zero and clamps") {
  ImagePlane img(2, 2);
  img.at(0, 0) = 10.5;
  img.at(0, 1) = 10.4999;
  img.at(1, 0) = -3.0;
  img.at(1, 1) = 300.0;
  const ImagePlane back = read_pgm(write_pgm(img));
  CHECK(back.at(0, 0) == 11.0);
  CHECK(back.at(0, 1) == 10.0);
  CHECK(back.at(1, 0) == 0.0);
  CHECK(back.at(1, 1) == 255.0);
}

TEST_CASE("pgm round trip preserves integral planes exactly") {
  const ImagePlane img = testutil::scene8(23, 17, 99);
  const ImagePlane back = read_pgm(write_pgm(img));
  REQUIRE(back.same_shape(img));
  CHECK(testutil::max_abs_diff(img, back) == 0.0);
}

TEST_CASE("ppm decodes channels and luma uses the 601 weights") {
  std::vector<std::uint8_t> data = bytes_of("P6\n2 1\n255\n");
  const std::uint8_t px[6] = {255, 0, 0, 10, 20, 30};
  data.insert(data.end(), px, px + 6);
  ImagePlane r, g, b;
  read_ppm(data, r, g, b);
  CHECK(r.at(0, 0) == 255.0);
  CHECK(g.at(0, 1) == 20.0);
  CHECK(b.at(0, 1) == 30.0);
  const ImagePlane y = rgb_to_luma(r, g, b);
  CHECK(y.at(0, 0) == doctest::Approx(0.299 * 255.0).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.299 * 10 + 0.587 * 20 + 0.114 * 30).epsilon(1e-12));
  ImagePlane small(1, 1);
  CHECK_THROWS_AS(rgb_to_luma(r, g, small), ShapeError);
}

TEST_CASE("crop extracts the requested window and rejects out-of-bounds") {
  ImagePlane img(4, 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) img.at(r, c) = r * 10 + c;
  const ImagePlane sub = crop(img, 1, 2, 2, 2);
  CHECK(sub.height == 2);
  CHECK(sub.width == 2);
  CHECK(sub.at(0, 0) == 12.0);
  CHECK(sub.at(1, 1) == 23.0);
  CHECK_THROWS_AS(crop(img, 2, 0, 2, 2), ShapeError);
  CHECK_THROWS_AS(crop(img, 0, 3, 1, 2), ShapeError);
}

TEST_CASE("plane statistics match hand values") {
  ImagePlane img(2, 2);
  img.at(0, 0) = 1.0;
  img.at(0, 1) = 3.0;
  img.at(1, 0) = 5.0;
  img.at(1, 1) = 7.0;
  CHECK(plane_min(img) == 1.0);
  CHECK(plane_max(img) == 7.0);
  CHECK(plane_mean(img) == 4.0);
  CHECK(plane_std(img) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
}

TEST_CASE("pearson is exact on affine relations") {
  const ImagePlane a = testutil::scene8(16, 16, 5);
  ImagePlane up = a, down = a;
  for (double& v : up.data) v = 3.0 * v + 7.0;
  for (double& v : down.data) v = -2.0 * v + 1.0;
  CHECK(pearson(a, up) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(a, down) == doctest::Approx(-1.0).epsilon(1e-12));
  ImagePlane other(15, 16);
  CHECK_THROWS_AS(pearson(a, other), ShapeError);
}

TEST_CASE("file io round trips and reports missing paths") {
  testutil::TempDir tmp("diffiq_img");
  const ImagePlane img = testutil::scene8(12, 9, 3);
  save_pgm(tmp.file("x.pgm"), img);
  const ImagePlane back = load_image(tmp.file("x.pgm"));
  CHECK(testutil::max_abs_diff(img, back) == 0.0);
  CHECK_THROWS_AS(load_image(tmp.file("missing.pgm")), IoError);
}

TEST_CASE("load_image rejects corrupt files as format errors") {
  testutil::TempDir tmp("diffiq_imgbad");
  std::ofstream(tmp.file("bad.pgm"), std::ios::binary) << "not a pgm";
  CHECK_THROWS_AS(load_image(tmp.file("bad.pgm")), FormatError);
}

TEST_CASE("dataset loads sorted, filters by pattern, and rejects empty matches") {
  testutil::TempDir tmp("diffiq_ds");
  save_pgm(tmp.file("b_scene.pgm"), testutil::scene8(8, 8, 1));
  save_pgm(tmp.file("a_scene.pgm"), testutil::scene8(8, 8, 2));
  save_pgm(tmp.file("c_other.pgm"), testutil::scene8(8, 8, 3));
  std::ofstream(tmp.file("notes.txt")) << "ignored";

  const Dataset all = load_dataset(tmp.path().string());
  REQUIRE(all.entries.size() == 3);
  CHECK(all.entries[0].id == "a_scene");
  CHECK(all.entries[1].id == "b_scene");
  CHECK(all.entries[2].id == "c_other");

  const Dataset scenes = load_dataset(tmp.path().string(), "*_scene*");
  REQUIRE(scenes.entries.size() == 2);
  CHECK(scenes.entries[0].id == "a_scene");

  CHECK_THROWS_AS(load_dataset(tmp.path().string(), "zz*"), IoError);
  CHECK_THROWS_AS(load_dataset(tmp.file("nope"), "*"), IoError);
}
