#include "diffiq/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "diffiq/errors.hpp"
#include "diffiq/filter.hpp"

namespace diffiq {

ImagePlane unsharp_mask(const ImagePlane& img, double amount) {
  if (img.width < 5 || img.height < 5) throw ShapeError("unsharp_mask: image smaller than 5x5");
  if (amount < 0.0) throw ConfigError("unsharp_mask: amount must be >= 0");
  const ImagePlane blur = blur_replicate(img, gaussian_kernel_1d(5, 1.0));
  ImagePlane out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data[i] = img.data[i] + amount * (img.data[i] - blur.data[i]);
  return out;
}

namespace {

int bin_of(double v) {
  return std::clamp(static_cast<int>(std::lround(v)), 0, 255);
}

}  // namespace

ImagePlane clahe(const ImagePlane& img, int tiles_x, int tiles_y, double clip_limit) {
  if (tiles_x < 1 || tiles_y < 1) throw ConfigError("clahe: tile counts must be positive");
  if (img.width < tiles_x || img.height < tiles_y)
    throw ShapeError("clahe: image smaller than the tile grid");
  if (clip_limit < 1.0) throw ConfigError("clahe: clip_limit must be >= 1");

  // Tile spans; tile (ti, tj) covers rows [y0, y1) x cols [x0, x1).
  std::vector<int> xs(tiles_x + 1), ys(tiles_y + 1);
  for (int j = 0; j <= tiles_x; ++j)
    xs[j] = static_cast<int>((static_cast<long long>(j) * img.width) / tiles_x);
  for (int i = 0; i <= tiles_y; ++i)
    ys[i] = static_cast<int>((static_cast<long long>(i) * img.height) / tiles_y);

  // Per-tile clipped-histogram CDF mapping to [0,255].
  std::vector<std::vector<double>> maps(static_cast<std::size_t>(tiles_x) * tiles_y,
                                        std::vector<double>(256, 0.0));
  std::vector<double> cx(tiles_x), cy(tiles_y);  // tile centers
  for (int ti = 0; ti < tiles_y; ++ti) {
    for (int tj = 0; tj < tiles_x; ++tj) {
      std::vector<double> hist(256, 0.0);
      const int y0 = ys[ti], y1 = ys[ti + 1], x0 = xs[tj], x1 = xs[tj + 1];
      const double n_pix = static_cast<double>(y1 - y0) * (x1 - x0);
      for (int r = y0; r < y1; ++r)
        for (int c = x0; c < x1; ++c) hist[bin_of(img.at(r, c))] += 1.0;

      const double limit = clip_limit * n_pix / 256.0;
      double excess = 0.0;
      for (double& h : hist) {
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      }
      const double add = excess / 256.0;
      for (double& h : hist) h += add;

      std::vector<double>& map = maps[static_cast<std::size_t>(ti) * tiles_x + tj];
      double cdf = 0.0;
      for (int b = 0; b < 256; ++b) {
        cdf += hist[b];
        map[b] = 255.0 * cdf / n_pix;
      }
      cy[ti] = 0.5 * (y0 + y1 - 1);
      cx[tj] = 0.5 * (x0 + x1 - 1);
    }
  }

  // Bilinear interpolation between the four surrounding tile mappings, with
  // clamping to the nearest tile beyond the outer centers.
  const auto axis_pos = [](double coord, const std::vector<double>& centers, int& lo,
                           double& w_hi) {
    const int n = static_cast<int>(centers.size());
    if (coord <= centers[0]) {
      lo = 0;
      w_hi = 0.0;
      return;
    }
    if (coord >= centers[n - 1]) {
      lo = n - 1;
      w_hi = 0.0;
      return;
    }
    int hi = 1;
    while (centers[hi] < coord) ++hi;
    lo = hi - 1;
    w_hi = (coord - centers[lo]) / (centers[hi] - centers[lo]);
  };

  ImagePlane out(img.width, img.height);
  for (int r = 0; r < img.height; ++r) {
    int ti = 0;
    double wy = 0.0;
    axis_pos(r, cy, ti, wy);
    const int ti1 = wy > 0.0 ? ti + 1 : ti;
    for (int c = 0; c < img.width; ++c) {
      int tj = 0;
      double wx = 0.0;
      axis_pos(c, cx, tj, wx);
      const int tj1 = wx > 0.0 ? tj + 1 : tj;
      const int b = bin_of(img.at(r, c));
      const double v00 = maps[static_cast<std::size_t>(ti) * tiles_x + tj][b];
      const double v01 = maps[static_cast<std::size_t>(ti) * tiles_x + tj1][b];
      const double v10 = maps[static_cast<std::size_t>(ti1) * tiles_x + tj][b];
      const double v11 = maps[static_cast<std::size_t>(ti1) * tiles_x + tj1][b];
      out.at(r, c) = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                     wy * ((1.0 - wx) * v10 + wx * v11);
    }
  }
  return out;
}

ImagePlane gamma_correct(const ImagePlane& img, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("gamma_correct: gamma must be positive");
  ImagePlane out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data[i] = 255.0 * std::pow(std::max(img.data[i], 0.0) / 255.0, gamma);
  return out;
}

const char* baseline_method_name(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::Unsharp: return "unsharp";
    case BaselineMethod::CLAHE: return "clahe";
    default: return "gamma";
  }
}

std::vector<BaselineRow> baseline_sweep(const Dataset& data, const FusionModel& model,
                                        BaselineMethod method,
                                        const std::vector<double>& param_grid) {
  if (data.entries.empty()) throw ConfigError("baseline_sweep: empty dataset");
  if (param_grid.empty()) throw ConfigError("baseline_sweep: empty parameter grid");

  std::vector<BaselineRow> rows;
  rows.reserve(param_grid.size());
  for (const double param : param_grid) {
    BaselineRow row;
    row.method = method;
    row.param = param;
    row.n_images = static_cast<int>(data.entries.size());
    double psnr_sum = 0.0, gain_sum = 0.0;
    for (const DatasetEntry& e : data.entries) {
      ImagePlane processed;
      switch (method) {
        case BaselineMethod::Unsharp: processed = unsharp_mask(e.image, param); break;
        case BaselineMethod::CLAHE: processed = clahe(e.image, 8, 8, param); break;
        case BaselineMethod::Gamma: processed = gamma_correct(e.image, param); break;
      }
      psnr_sum += psnr(e.image, processed);
      const FusionModel unclipped = [&] {
        FusionModel m = model;
        m.clip_enabled = false;
        return m;
      }();
      const double score = fused_score(extract_features(e.image, processed), unclipped);
      const double base = fused_score(extract_features(e.image, e.image), unclipped);
      gain_sum += score - base;
    }
    row.mean_psnr = psnr_sum / static_cast<double>(data.entries.size());
    row.mean_gain = gain_sum / static_cast<double>(data.entries.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace diffiq
