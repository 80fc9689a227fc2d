#pragma once

#include <vector>

#include "diffiq/image.hpp"

namespace diffiq {

// Plain (non-differentiable) filtering helpers shared by the analysis,
// baseline and motion paths. The differentiable pipeline builds its own
// correlation nodes on the tape.

// Sampled Gaussian, centered, normalized to sum 1. n must be odd.
std::vector<double> gaussian_kernel_1d(int n, double sigma);

ImagePlane kernel_row(const std::vector<double>& k);  // 1 x n plane
ImagePlane kernel_col(const std::vector<double>& k);  // n x 1 plane

// Valid-mode 2-D cross-correlation.
ImagePlane correlate_valid(const ImagePlane& img, const ImagePlane& kernel);

// Valid-mode separable correlation (row pass then column pass).
ImagePlane correlate_sep_valid(const ImagePlane& img, const std::vector<double>& k);

// Same-size separable correlation with edge-replicate padding.
ImagePlane blur_replicate(const ImagePlane& img, const std::vector<double>& k);

}  // namespace diffiq
