#pragma once

// Shared helpers for the unit suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "diffiq/image.hpp"
#include "diffiq/rng.hpp"
#include "diffiq/synth.hpp"

namespace testutil {

using diffiq::ImagePlane;

// Integer-valued synthetic scene, as if decoded from an 8-bit file.
inline ImagePlane scene8(int w, int h, std::uint64_t seed) {
  ImagePlane img = diffiq::synthetic_scene(w, h, seed);
  for (double& v : img.data) v = std::round(v);
  return img;
}

// Adds clamped Gaussian noise, reproducible by seed.
inline ImagePlane noisy_copy(const ImagePlane& img, double sigma, std::uint64_t seed) {
  diffiq::Rng g(seed);
  ImagePlane out = img;
  for (double& v : out.data)
    v = std::min(255.0, std::max(0.0, v + sigma * g.normal()));
  return out;
}

inline double max_abs_diff(const ImagePlane& a, const ImagePlane& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

inline bool bit_identical(const ImagePlane& a, const ImagePlane& b) {
  if (a.width != b.width || a.height != b.height) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

// Unique fresh directory under the system temp root; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path();
    for (int i = 0;; ++i) {
      fs::path candidate = base / (tag + "_" + std::to_string(i));
      std::error_code ec;
      if (fs::create_directory(candidate, ec)) {
        path_ = candidate;
        break;
      }
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
