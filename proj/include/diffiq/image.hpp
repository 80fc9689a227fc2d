#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace diffiq {

// Single-channel raster with real-valued pixels, row-major storage.
// File I/O clamps and quantizes to 8 bits; everything in between stays in
// double precision so the optimization loops can work on continuous values.
struct ImagePlane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ImagePlane() = default;
  ImagePlane(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const ImagePlane& o) const { return width == o.width && height == o.height; }
};

// Binary PGM (P5), maxval <= 255. Parse errors name the byte offset.
ImagePlane read_pgm(const std::vector<std::uint8_t>& bytes);

// Rounds half away from zero, clamps to [0,255], emits P5 with maxval 255.
std::vector<std::uint8_t> write_pgm(const ImagePlane& img);

// BT.601: Y = 0.299 R + 0.587 G + 0.114 B.
ImagePlane rgb_to_luma(const ImagePlane& r, const ImagePlane& g, const ImagePlane& b);

// Binary PPM (P6) decoded to its three channels.
void read_ppm(const std::vector<std::uint8_t>& bytes, ImagePlane& r, ImagePlane& g,
              ImagePlane& b);

struct DatasetEntry {
  std::string id;
  ImagePlane image;
};

// Entries are unique by id and sorted lexicographically, so dataset order
// never depends on filesystem enumeration order.
struct Dataset {
  std::vector<DatasetEntry> entries;
};

// Loads every PGM/PPM in `dir` whose filename matches `pattern` ('*' and '?'
// wildcards). PPM is converted to luma. Empty match is an error.
Dataset load_dataset(const std::string& dir, const std::string& pattern = "*");

// Single file: .pgm directly, .ppm through rgb_to_luma.
ImagePlane load_image(const std::string& path);
void save_pgm(const std::string& path, const ImagePlane& img);

ImagePlane crop(const ImagePlane& img, int r0, int c0, int h, int w);

double plane_min(const ImagePlane& img);
double plane_max(const ImagePlane& img);
double plane_mean(const ImagePlane& img);
double plane_std(const ImagePlane& img);

// Pearson correlation of two equally-shaped planes.
double pearson(const ImagePlane& a, const ImagePlane& b);

}  // namespace diffiq
