#include "diffiq/synth.hpp"

#include <algorithm>
#include <cmath>

#include "diffiq/analysis.hpp"
#include "diffiq/errors.hpp"
#include "diffiq/rng.hpp"

namespace diffiq {

namespace {

// Power-law-spectrum noise (P(f) ~ f^-2.2) on an n x n grid, unit variance.
ImagePlane spectral_noise(int n, Rng& rng) {
  ImagePlane white(n, n);
  for (double& v : white.data) v = rng.normal();
  ComplexGrid f = fft2d(white);
  for (int u = 0; u < n; ++u) {
    const int fu = u <= n / 2 ? u : u - n;
    for (int v = 0; v < n; ++v) {
      const int fv = v <= n / 2 ? v : v - n;
      const double rad = std::sqrt(static_cast<double>(fu) * fu + static_cast<double>(fv) * fv);
      const double amp = rad == 0.0 ? 0.0 : std::pow(rad, -1.1);
      f[static_cast<std::size_t>(u) * n + v] *= amp;
    }
  }
  ImagePlane out = ifft2d_real(f, n);
  const double mu = plane_mean(out);
  const double sd = plane_std(out);
  for (double& v : out.data) v = (v - mu) / (sd > 0.0 ? sd : 1.0);
  return out;
}

}  // namespace

ImagePlane synthetic_scene(int width, int height, std::uint64_t seed) {
  if (width < 1 || height < 1) throw ShapeError("synthetic_scene: empty image");
  int n = 1;
  while (n < std::max(width, height)) n <<= 1;
  n = std::max(n, 8);

  Rng tex_rng(Rng::derive(seed, 1));
  Rng layout_rng(Rng::derive(seed, 2));
  const ImagePlane texture = spectral_noise(n, tex_rng);

  // Smooth illumination: low-frequency cosine mixture.
  const double ax = layout_rng.uniform(0.5, 1.5), bx = layout_rng.uniform(0.0, 6.28318);
  const double ay = layout_rng.uniform(0.5, 1.5), by = layout_rng.uniform(0.0, 6.28318);
  const double tilt_x = layout_rng.uniform(-0.3, 0.3);
  const double tilt_y = layout_rng.uniform(-0.3, 0.3);

  // Soft blobs.
  struct Blob {
    double r, c, sigma, amp;
  };
  std::vector<Blob> blobs;
  const int n_blobs = 6 + layout_rng.uniform_int(0, 3);
  for (int i = 0; i < n_blobs; ++i) {
    Blob b;
    b.r = layout_rng.uniform(0.0, height - 1.0);
    b.c = layout_rng.uniform(0.0, width - 1.0);
    b.sigma = layout_rng.uniform(0.06, 0.22) * std::min(width, height);
    b.amp = layout_rng.uniform(-55.0, 70.0);
    blobs.push_back(b);
  }

  // Sharp-ish edges: oriented tanh steps.
  struct Edge {
    double nx, ny, offset, amp, softness;
  };
  std::vector<Edge> edges;
  const int n_edges = 3 + layout_rng.uniform_int(0, 2);
  for (int i = 0; i < n_edges; ++i) {
    Edge e;
    const double theta = layout_rng.uniform(0.0, 6.28318);
    e.nx = std::cos(theta);
    e.ny = std::sin(theta);
    e.offset = layout_rng.uniform(0.2, 0.8);
    e.amp = layout_rng.uniform(18.0, 45.0) * (layout_rng.uniform() < 0.5 ? -1.0 : 1.0);
    e.softness = layout_rng.uniform(0.8, 1.6);
    edges.push_back(e);
  }

  const double diag = std::sqrt(static_cast<double>(width) * width +
                                static_cast<double>(height) * height);
  ImagePlane base(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double xn = width > 1 ? static_cast<double>(c) / (width - 1) : 0.0;
      const double yn = height > 1 ? static_cast<double>(r) / (height - 1) : 0.0;
      double v = 118.0;
      v += 26.0 * std::cos(ax * 6.28318 * xn + bx) * std::cos(ay * 6.28318 * yn + by);
      v += 70.0 * (tilt_x * (xn - 0.5) + tilt_y * (yn - 0.5));
      for (const Blob& b : blobs) {
        const double dr = r - b.r, dc = c - b.c;
        v += b.amp * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
      }
      for (const Edge& e : edges) {
        const double proj = (e.nx * c + e.ny * r) / diag;
        v += 0.5 * e.amp * std::tanh((proj - e.offset * 0.7 + 0.15) * diag / e.softness);
      }
      base.at(r, c) = v;
    }
  }

  // Texture amplitude grows with the smooth luminance (multiplicative
  // statistics of natural scenes).
  const double lmin = plane_min(base), lmax = plane_max(base);
  const double lspan = lmax > lmin ? lmax - lmin : 1.0;
  ImagePlane out(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double lum01 = (base.at(r, c) - lmin) / lspan;
      const double amp = 6.0 + 16.0 * lum01;
      out.at(r, c) = base.at(r, c) + amp * texture.at(r, c);
    }
  }

  // Normalize global statistics, then clamp into a safe range.
  const double mu = plane_mean(out);
  const double sd = plane_std(out);
  const double target_sd = 44.0;
  const double scale = sd > 0.0 ? target_sd / sd : 1.0;
  for (double& v : out.data) v = std::clamp(128.0 + (v - mu) * scale, 5.0, 250.0);
  return out;
}

}  // namespace diffiq
