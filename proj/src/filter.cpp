#include "diffiq/filter.hpp"

#include <algorithm>
#include <cmath>

#include "diffiq/errors.hpp"

namespace diffiq {

std::vector<double> gaussian_kernel_1d(int n, double sigma) {
  if (n < 1 || n % 2 == 0) throw NumericError("gaussian_kernel_1d: n must be odd and positive");
  std::vector<double> k(n);
  const int half = n / 2;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = i - half;
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    s += k[i];
  }
  for (double& v : k) v /= s;
  return k;
}

ImagePlane kernel_row(const std::vector<double>& k) {
  ImagePlane p(static_cast<int>(k.size()), 1);
  p.data = k;
  return p;
}

ImagePlane kernel_col(const std::vector<double>& k) {
  ImagePlane p(1, static_cast<int>(k.size()));
  p.data = k;
  return p;
}

ImagePlane correlate_valid(const ImagePlane& img, const ImagePlane& kernel) {
  if (kernel.height > img.height || kernel.width > img.width)
    throw ShapeError("correlate_valid: kernel larger than image");
  ImagePlane out(img.width - kernel.width + 1, img.height - kernel.height + 1);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      double s = 0.0;
      for (int i = 0; i < kernel.height; ++i)
        for (int j = 0; j < kernel.width; ++j)
          s += kernel.at(i, j) * img.at(r + i, c + j);
      out.at(r, c) = s;
    }
  }
  return out;
}

ImagePlane correlate_sep_valid(const ImagePlane& img, const std::vector<double>& k) {
  return correlate_valid(correlate_valid(img, kernel_row(k)), kernel_col(k));
}

ImagePlane blur_replicate(const ImagePlane& img, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int half = n / 2;
  ImagePlane tmp(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double s = 0.0;
      for (int j = 0; j < n; ++j)
        s += k[j] * img.at(r, std::clamp(c + j - half, 0, img.width - 1));
      tmp.at(r, c) = s;
    }
  }
  ImagePlane out(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        s += k[i] * tmp.at(std::clamp(r + i - half, 0, img.height - 1), c);
      out.at(r, c) = s;
    }
  }
  return out;
}

}  // namespace diffiq
