#pragma once

#include <array>
#include <string>

#include "diffiq/autodiff.hpp"
#include "diffiq/image.hpp"

namespace diffiq {

// Guard constants for the windowed VIF statistics.
struct VifGuards {
  double sigma_floor = 1e-10;  // variance floor
  double noise_var = 2.0;      // sigma_n^2 in the information ratio
};

// The six features feeding fusion, in fixed order.
struct FeatureVector {
  double vif0 = 0.0;
  double vif1 = 0.0;
  double vif2 = 0.0;
  double vif3 = 0.0;
  double adm = 0.0;
  double motion = 0.0;
};

struct FusionModel {
  // Order: vif0, vif1, vif2, vif3, adm, motion.
  std::array<double, 6> weights{12.175, 12.175, 12.175, 12.175, 48.7, 10.0};
  double intercept = 0.0;
  bool clip_enabled = false;
};

FusionModel default_fusion_model();

// Scalar (non-tape) metric evaluation.
double mse(const ImagePlane& r, const ImagePlane& d);
double psnr(const ImagePlane& r, const ImagePlane& d);  // +inf when identical
double vif_scale(const ImagePlane& r, const ImagePlane& d, int s,
                 const VifGuards& guards = VifGuards{});
double adm(const ImagePlane& r, const ImagePlane& d);
// prev == nullptr means "first frame": motion is 0 by convention.
double motion(const ImagePlane* prev, const ImagePlane& ref);
FeatureVector extract_features(const ImagePlane& r, const ImagePlane& d,
                               const VifGuards& guards = VifGuards{});
double fused_score(const FeatureVector& f, const FusionModel& model);

// Tape builders. `r` and `d` are existing tape nodes of equal shape; the
// returned node is the 1x1 metric value. Gradients flow through `d` (and `r`
// if it was created as an input).
Var vif_scale_node(Tape& t, Var r, Var d, int s, const VifGuards& guards = VifGuards{});
Var adm_node(Tape& t, Var r, Var d);
Var mse_node(Tape& t, Var r, Var d);
Var psnr_node(Tape& t, Var r, Var d);
Var fused_node(Tape& t, Var r, Var d, const FusionModel& model,
               const VifGuards& guards = VifGuards{});

// d(fused)/dD for still images (motion = 0).
ImagePlane score_gradient(const ImagePlane& r, const ImagePlane& d, const FusionModel& model);
struct ScoreAndGradient {
  double score = 0.0;
  ImagePlane gradient;
};
ScoreAndGradient score_and_gradient(const ImagePlane& r, const ImagePlane& d,
                                    const FusionModel& model);

// Smallest square side for which vif_scale is defined at scale s.
int vif_min_side(int s);

// Fusion model file format: "key = value" lines, '#' comments; required keys
// w_vif0..w_vif3, w_adm, w_motion, intercept, clip (true/false). Unknown keys
// are rejected.
FusionModel load_fusion_model(const std::string& text);
std::string save_fusion_model(const FusionModel& model);
FusionModel load_fusion_model_file(const std::string& path);

}  // namespace diffiq
