#pragma once

#include <string>
#include <vector>

#include "diffiq/image.hpp"
#include "diffiq/metrics.hpp"

namespace diffiq {

enum class BaselineMethod { Unsharp, CLAHE, Gamma };

// out = img + amount * (img - blur5x5(img)), sigma-1 Gaussian, replicate pad.
ImagePlane unsharp_mask(const ImagePlane& img, double amount);

// Contrast-limited adaptive histogram equalization: per-tile 256-bin clipped
// histograms (uniform single-pass redistribution of the excess), 255*cdf tile
// mappings, bilinear interpolation between tile centers.
ImagePlane clahe(const ImagePlane& img, int tiles_x = 8, int tiles_y = 8,
                 double clip_limit = 4.0);

// out = 255 * (img/255)^gamma (inputs below 0 treated as 0).
ImagePlane gamma_correct(const ImagePlane& img, double gamma);

struct BaselineRow {
  BaselineMethod method = BaselineMethod::Unsharp;
  double param = 0.0;
  double mean_psnr = 0.0;  // +inf when every image is untouched
  double mean_gain = 0.0;
  int n_images = 0;
};

const char* baseline_method_name(BaselineMethod m);

// For each grid value: apply the method to every image, average PSNR vs the
// original and the fused-score gain.
std::vector<BaselineRow> baseline_sweep(const Dataset& data, const FusionModel& model,
                                        BaselineMethod method,
                                        const std::vector<double>& param_grid);

}  // namespace diffiq
