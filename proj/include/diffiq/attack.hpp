#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "diffiq/image.hpp"
#include "diffiq/metrics.hpp"

namespace diffiq {

enum class NormKind { Linf, L2 };

struct NormBall {
  NormKind kind = NormKind::Linf;
  double epsilon = 1.0;  // > 0
};

struct AttackConfig {
  double alpha = 0.1;        // step size
  int steps = 100;           // iterations (50-150 is the usual band)
  bool box_constrain = true; // keep R + delta inside [0,255]
  std::uint64_t seed = 0;    // reserved for randomized initializations
};

struct AttackReport {
  double score_before = 0.0;
  double score_after = 0.0;
  double gain = 0.0;
  double psnr_after = 0.0;
  double final_norm = 0.0;  // measured in the ball's own norm
  std::vector<double> score_trace;  // one entry per step
};

double norm_l2(const ImagePlane& delta);
double norm_linf(const ImagePlane& delta);

// epsilon = 255 * sqrt(m*n) * 10^(-target_psnr/20): the l2 radius whose full
// use lands exactly on the requested PSNR.
double epsilon_for_psnr(double target_psnr, int m, int n);

// Norm-ball projection; idempotent (an already-feasible delta is returned
// unchanged, with a 1-ulp-scale feasibility slack so re-projection is a no-op).
ImagePlane project(const ImagePlane& delta, const NormBall& ball);

// Pixel-box feasibility: clamp(R + delta, 0, 255) - R. Applied after the norm
// projection; never increases either norm.
ImagePlane box_project(const ImagePlane& r, const ImagePlane& delta);

// Generic objective: returns (score, d score / d D) at D.
using Objective = std::function<std::pair<double, ImagePlane>(const ImagePlane&)>;

// Projected gradient ascent of `objective` over delta with D = R + delta.
// Steps are normalized: Linf uses alpha * sign(g), L2 uses a step of l2 length
// alpha * sqrt(m*n) along g. Returns the best-scoring delta.
std::pair<ImagePlane, AttackReport> pgd_ascend(const ImagePlane& r, const Objective& objective,
                                               const NormBall& ball, const AttackConfig& cfg);

// Fused-score attack (model must have clipping disabled). Returns the
// perturbed image D = R + delta together with the report.
std::pair<ImagePlane, AttackReport> pgd_attack(const ImagePlane& r, const FusionModel& model,
                                               const NormBall& ball, const AttackConfig& cfg);

// L2 attack with epsilon chosen from a PSNR floor; same return convention as
// pgd_attack.
std::pair<ImagePlane, AttackReport> psnr_bounded_attack(const ImagePlane& r,
                                                        const FusionModel& model,
                                                        double target_psnr,
                                                        const AttackConfig& cfg);

struct GainRow {
  double epsilon = 0.0;
  double mean_gain = 0.0;
  int n_images = 0;
};
using GainTable = std::vector<GainRow>;

struct PerImageGain {
  std::string id;
  double epsilon = 0.0;
  double gain = 0.0;
  double psnr_after = 0.0;
};

GainTable sweep_epsilon(const Dataset& data, const FusionModel& model, NormKind kind,
                        const std::vector<double>& eps_list, const AttackConfig& cfg,
                        std::vector<PerImageGain>* per_image = nullptr, int jobs = 1);

struct PowerLawFit {
  double exponent = 0.0;
  double amplitude = 0.0;  // gain ~ amplitude * epsilon^exponent
  double r2 = 0.0;
  int n_used = 0;
  int n_excluded = 0;  // non-positive-gain rows dropped from the fit
};

PowerLawFit fit_power_law(const GainTable& table);

}  // namespace diffiq
