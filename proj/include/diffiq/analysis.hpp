#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "diffiq/image.hpp"

namespace diffiq {

using ComplexGrid = std::vector<std::complex<double>>;

// In-place radix-2 FFT; n must be a power of two. Forward is unnormalized,
// inverse applies the 1/n factor.
void fft1d(std::complex<double>* data, int n, bool inverse);

// Forward 2-D DFT of a square power-of-two plane (row-major, unnormalized).
ComplexGrid fft2d(const ImagePlane& plane);

// Inverse of fft2d (scales by 1/n^2), returning the real part.
ImagePlane ifft2d_real(const ComplexGrid& grid, int n);

struct SpectrumCurve {
  std::vector<double> freq;   // cycles/pixel, bin centers, in (0, 0.5]
  std::vector<double> power;  // mean |F|^2 / N^2 per annulus
  int n_patches = 0;
  int patch_size = 0;
};

// Radially averaged power spectrum over seeded random patches. Patch mean is
// subtracted before the FFT; the DC bin is excluded; annuli are indexed by the
// integer-rounded radius 1..N/2. If the image is smaller than `patch`, the
// patch shrinks to the largest fitting power of two.
SpectrumCurve power_spectrum_1d(const ImagePlane& img, int n_patches = 100, int patch = 256,
                                std::uint64_t seed = 0);

// Least-squares slope of log(power) vs log(freq) within [f_lo, f_hi].
double spectral_slope(const SpectrumCurve& curve, double f_lo, double f_hi);

// Valid-mode 4-neighbor Laplacian: [[0,1,0],[1,-4,1],[0,1,0]].
ImagePlane laplacian(const ImagePlane& img);

// 1 where |laplacian| > k * std(img), else 0; shaped like the valid Laplacian
// region ((h-2) x (w-2)).
ImagePlane edge_mask(const ImagePlane& img, double k = 1.0);

struct BrightnessCurve {
  // Only non-empty bins appear, in increasing intensity order.
  std::vector<int> intensity;
  std::vector<double> mean_delta;
  std::vector<double> mean_abs_delta;
  std::vector<double> std_delta;
  std::vector<std::int64_t> count;
};

// Perturbation statistics grouped by round(R). With a mask (shaped like
// edge_mask output, aligned to R's interior), only masked pixels contribute.
BrightnessCurve brightness_delta_curve(const ImagePlane& r, const ImagePlane& delta,
                                       const ImagePlane* mask = nullptr);

// Least-squares slope of mean_abs_delta vs intensity over the curve's bins.
double brightness_slope(const BrightnessCurve& curve);

}  // namespace diffiq
