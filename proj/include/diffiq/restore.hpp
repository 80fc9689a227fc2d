#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "diffiq/image.hpp"
#include "diffiq/metrics.hpp"

namespace diffiq {

enum class RestoreTarget { PSNR, VIF0, VIF1, VIF2, VIF3, ADM, FUSED };
enum class StopMode { Threshold, Convergence };

struct RestoreConfig {
  RestoreTarget target = RestoreTarget::FUSED;
  double lr = 0.5;  // useful band 0.1 - 1.0
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  StopMode stop_mode = StopMode::Threshold;
  // Negative means "pick the target's default": 100 for FUSED, 50 dB for
  // PSNR, 1 for the submetrics.
  double threshold = -1.0;
  double conv_tol = 1e-4;  // relative score change over the window
  int conv_window = 50;
  int max_steps = 5000;
  std::uint64_t seed = 0;
};

double default_threshold(RestoreTarget target);

struct TracePoint {
  int step = 0;
  double score = 0.0;
};

struct RestoreTrace {
  std::vector<TracePoint> points;
  bool reached_threshold = false;  // threshold mode only
  bool hit_max_steps = false;
};

// Uniform noise on [0,255], reproducible by seed.
ImagePlane init_noise(int width, int height, std::uint64_t seed);

// Bias-corrected Adam, ascent direction. `iterate` is updated in place.
struct AdamState {
  ImagePlane m;
  ImagePlane v;
  int t = 0;
};

void adam_step(AdamState& state, ImagePlane& iterate, const ImagePlane& grad, double lr,
               double beta1, double beta2, double eps);

// Maximize the configured target metric of (R, I) over I starting at `init`.
std::pair<ImagePlane, RestoreTrace> restore(const ImagePlane& r, const ImagePlane& init,
                                            const RestoreConfig& cfg, const FusionModel& model);

// Deterministic degraded initialization: Gaussian blur (sigma 1.5) followed by
// quantization to 16 gray levels.
ImagePlane compression_proxy(const ImagePlane& img);

std::pair<ImagePlane, RestoreTrace> restore_from_compressed(const ImagePlane& r,
                                                            const RestoreConfig& cfg,
                                                            const FusionModel& model);

}  // namespace diffiq
