#include "diffiq/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "diffiq/errors.hpp"
#include "diffiq/filter.hpp"
#include "diffiq/rng.hpp"

namespace diffiq {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

constexpr double kPi = 3.14159265358979323846;

}  // namespace

void fft1d(std::complex<double>* data, int n, bool inverse) {
  if (!is_pow2(n)) throw ShapeError("fft1d: length must be a power of two");
  // Bit-reversal permutation.
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = data[i + k];
        const std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (int i = 0; i < n; ++i) data[i] /= static_cast<double>(n);
}

ComplexGrid fft2d(const ImagePlane& plane) {
  if (plane.width != plane.height || !is_pow2(plane.width))
    throw ShapeError("fft2d: plane must be square with power-of-two side");
  const int n = plane.width;
  ComplexGrid grid(static_cast<std::size_t>(n) * n);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = plane.data[i];
  // Rows, then columns.
  for (int r = 0; r < n; ++r) fft1d(&grid[static_cast<std::size_t>(r) * n], n, false);
  std::vector<std::complex<double>> col(n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) col[r] = grid[static_cast<std::size_t>(r) * n + c];
    fft1d(col.data(), n, false);
    for (int r = 0; r < n; ++r) grid[static_cast<std::size_t>(r) * n + c] = col[r];
  }
  return grid;
}

ImagePlane ifft2d_real(const ComplexGrid& grid, int n) {
  if (!is_pow2(n) || grid.size() != static_cast<std::size_t>(n) * n)
    throw ShapeError("ifft2d_real: bad grid size");
  ComplexGrid work = grid;
  for (int r = 0; r < n; ++r) fft1d(&work[static_cast<std::size_t>(r) * n], n, true);
  std::vector<std::complex<double>> col(n);
  ImagePlane out(n, n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) col[r] = work[static_cast<std::size_t>(r) * n + c];
    fft1d(col.data(), n, true);
    for (int r = 0; r < n; ++r) out.at(r, c) = col[r].real();
  }
  return out;
}

SpectrumCurve power_spectrum_1d(const ImagePlane& img, int n_patches, int patch,
                                std::uint64_t seed) {
  if (n_patches < 1) throw ConfigError("power_spectrum_1d: need at least one patch");
  if (!is_pow2(patch)) throw ShapeError("power_spectrum_1d: patch must be a power of two");
  const int min_dim = std::min(img.width, img.height);
  while (patch > min_dim) patch /= 2;  // shrink to fit
  if (patch < 2)
    throw ShapeError("power_spectrum_1d: image too small for any power-of-two patch");

  const int n = patch;
  Rng rng(seed);
  std::vector<double> acc(static_cast<std::size_t>(n) * n, 0.0);
  ImagePlane patch_img(n, n);
  for (int p = 0; p < n_patches; ++p) {
    const int r0 = static_cast<int>(rng.uniform_int(0, img.height - n));
    const int c0 = static_cast<int>(rng.uniform_int(0, img.width - n));
    double mean = 0.0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) mean += img.at(r0 + r, c0 + c);
    mean /= static_cast<double>(n) * n;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) patch_img.at(r, c) = img.at(r0 + r, c0 + c) - mean;
    const ComplexGrid f = fft2d(patch_img);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::norm(f[i]);
  }
  // Mean over patches; |F|^2 / N^2 so the bin-mean equals the patch variance.
  const double scale = 1.0 / (static_cast<double>(n_patches) * n * n);
  for (double& v : acc) v *= scale;

  const int n_bins = n / 2;
  std::vector<double> bin_sum(n_bins + 1, 0.0);
  std::vector<std::int64_t> bin_cnt(n_bins + 1, 0);
  for (int u = 0; u < n; ++u) {
    const int fu = u <= n / 2 ? u : u - n;
    for (int v = 0; v < n; ++v) {
      if (u == 0 && v == 0) continue;  // DC excluded
      const int fv = v <= n / 2 ? v : v - n;
      const int rbin = static_cast<int>(
          std::lround(std::sqrt(static_cast<double>(fu) * fu + static_cast<double>(fv) * fv)));
      if (rbin < 1 || rbin > n_bins) continue;
      bin_sum[rbin] += acc[static_cast<std::size_t>(u) * n + v];
      ++bin_cnt[rbin];
    }
  }

  SpectrumCurve curve;
  curve.n_patches = n_patches;
  curve.patch_size = n;
  for (int rbin = 1; rbin <= n_bins; ++rbin) {
    if (bin_cnt[rbin] == 0) continue;
    curve.freq.push_back(static_cast<double>(rbin) / n);
    curve.power.push_back(bin_sum[rbin] / static_cast<double>(bin_cnt[rbin]));
  }
  return curve;
}

double spectral_slope(const SpectrumCurve& curve, double f_lo, double f_hi) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < curve.freq.size(); ++i) {
    if (curve.freq[i] < f_lo || curve.freq[i] > f_hi) continue;
    if (!(curve.power[i] > 0.0))
      throw NumericError("spectral_slope: non-positive power inside band");
    lx.push_back(std::log(curve.freq[i]));
    ly.push_back(std::log(curve.power[i]));
  }
  if (lx.size() < 3) throw NumericError("spectral_slope: fewer than 3 bins inside band");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(lx.size());
  my /= static_cast<double>(lx.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  return sxy / sxx;
}

ImagePlane laplacian(const ImagePlane& img) {
  if (img.width < 3 || img.height < 3) throw ShapeError("laplacian: image smaller than 3x3");
  ImagePlane k(3, 3, 0.0);
  k.at(0, 1) = 1.0;
  k.at(1, 0) = 1.0;
  k.at(1, 1) = -4.0;
  k.at(1, 2) = 1.0;
  k.at(2, 1) = 1.0;
  return correlate_valid(img, k);
}

ImagePlane edge_mask(const ImagePlane& img, double k) {
  const ImagePlane lap = laplacian(img);
  const double thr = k * plane_std(img);
  ImagePlane mask(lap.width, lap.height);
  for (std::size_t i = 0; i < lap.size(); ++i)
    mask.data[i] = std::fabs(lap.data[i]) > thr ? 1.0 : 0.0;
  return mask;
}

BrightnessCurve brightness_delta_curve(const ImagePlane& r, const ImagePlane& delta,
                                       const ImagePlane* mask) {
  if (!r.same_shape(delta)) throw ShapeError("brightness_delta_curve: shape mismatch");
  if (mask && (mask->width != r.width - 2 || mask->height != r.height - 2))
    throw ShapeError("brightness_delta_curve: mask must match the valid Laplacian region");

  struct Acc {
    double sum = 0.0, sum_abs = 0.0, sum_sq = 0.0;
    std::int64_t n = 0;
  };
  std::vector<Acc> bins(256);
  auto feed = [&](double rv, double dv) {
    int b = static_cast<int>(std::lround(rv));
    b = std::clamp(b, 0, 255);
    bins[b].sum += dv;
    bins[b].sum_abs += std::fabs(dv);
    bins[b].sum_sq += dv * dv;
    ++bins[b].n;
  };
  if (mask) {
    for (int mr = 0; mr < mask->height; ++mr)
      for (int mc = 0; mc < mask->width; ++mc)
        if (mask->at(mr, mc) != 0.0) feed(r.at(mr + 1, mc + 1), delta.at(mr + 1, mc + 1));
  } else {
    for (std::size_t i = 0; i < r.size(); ++i) feed(r.data[i], delta.data[i]);
  }

  BrightnessCurve curve;
  for (int b = 0; b < 256; ++b) {
    if (bins[b].n == 0) continue;
    const double n = static_cast<double>(bins[b].n);
    const double mean = bins[b].sum / n;
    const double var = std::max(0.0, bins[b].sum_sq / n - mean * mean);
    curve.intensity.push_back(b);
    curve.mean_delta.push_back(mean);
    curve.mean_abs_delta.push_back(bins[b].sum_abs / n);
    curve.std_delta.push_back(std::sqrt(var));
    curve.count.push_back(bins[b].n);
  }
  return curve;
}

double brightness_slope(const BrightnessCurve& curve) {
  const std::size_t n = curve.intensity.size();
  if (n < 2) throw NumericError("brightness_slope: fewer than 2 bins");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += curve.intensity[i];
    my += curve.mean_abs_delta[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = curve.intensity[i] - mx;
    sxx += dx * dx;
    sxy += dx * (curve.mean_abs_delta[i] - my);
  }
  if (sxx == 0.0) throw NumericError("brightness_slope: single intensity bin");
  return sxy / sxx;
}

}  // namespace diffiq
