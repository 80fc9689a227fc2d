#include "diffiq/restore.hpp"

#include <algorithm>
#include <cmath>

#include "diffiq/autodiff.hpp"
#include "diffiq/errors.hpp"
#include "diffiq/filter.hpp"
#include "diffiq/rng.hpp"

namespace diffiq {

double default_threshold(RestoreTarget target) {
  switch (target) {
    case RestoreTarget::FUSED: return 100.0;
    case RestoreTarget::PSNR: return 50.0;  // dB; corresponds to MSE ~ 0.65
    default: return 1.0;
  }
}

ImagePlane init_noise(int width, int height, std::uint64_t seed) {
  if (width < 1 || height < 1) throw ShapeError("init_noise: empty image");
  Rng rng(seed);
  ImagePlane out(width, height);
  for (double& v : out.data) v = rng.uniform(0.0, 255.0);
  return out;
}

void adam_step(AdamState& state, ImagePlane& iterate, const ImagePlane& grad, double lr,
               double beta1, double beta2, double eps) {
  if (!iterate.same_shape(grad)) throw ShapeError("adam_step: shape mismatch");
  if (state.t == 0) {
    state.m = ImagePlane(iterate.width, iterate.height, 0.0);
    state.v = ImagePlane(iterate.width, iterate.height, 0.0);
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, state.t);
  const double bc2 = 1.0 - std::pow(beta2, state.t);
  for (std::size_t i = 0; i < iterate.size(); ++i) {
    const double g = grad.data[i];
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    state.m.data[i] = beta1 * state.m.data[i] + (1.0 - beta1) * g;
    state.v.data[i] = beta2 * state.v.data[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m.data[i] / bc1;
    const double vhat = state.v.data[i] / bc2;
    iterate.data[i] += lr * mhat / (std::sqrt(vhat) + eps);
  }
}

namespace {

// Score and gradient of the configured target at iterate I.
std::pair<double, ImagePlane> eval_target(const ImagePlane& r, const ImagePlane& i,
                                          RestoreTarget target, const FusionModel& model) {
  Tape t;
  Var vr = t.constant(r);
  Var vi = t.input(i);
  Var out;
  switch (target) {
    case RestoreTarget::PSNR: out = psnr_node(t, vr, vi); break;
    case RestoreTarget::VIF0: out = vif_scale_node(t, vr, vi, 0); break;
    case RestoreTarget::VIF1: out = vif_scale_node(t, vr, vi, 1); break;
    case RestoreTarget::VIF2: out = vif_scale_node(t, vr, vi, 2); break;
    case RestoreTarget::VIF3: out = vif_scale_node(t, vr, vi, 3); break;
    case RestoreTarget::ADM: out = adm_node(t, vr, vi); break;
    case RestoreTarget::FUSED: out = fused_node(t, vr, vi, model); break;
  }
  t.backward(out);
  return {t.scalar(out), t.adjoint(vi)};
}

}  // namespace

std::pair<ImagePlane, RestoreTrace> restore(const ImagePlane& r, const ImagePlane& init,
                                            const RestoreConfig& cfg, const FusionModel& model) {
  if (!r.same_shape(init)) throw ShapeError("restore: init shape differs from reference");
  if (cfg.max_steps < 1) throw ConfigError("restore: max_steps must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("restore: lr must be positive");
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < cfg.beta2 && cfg.beta2 < 1.0))
    throw ConfigError("restore: need 0 < beta1 < beta2 < 1");
  const double threshold =
      cfg.threshold >= 0.0 ? cfg.threshold : default_threshold(cfg.target);

  ImagePlane iterate = init;
  AdamState adam;
  RestoreTrace trace;
  trace.points.reserve(std::min(cfg.max_steps, 8192));

  for (int step = 1; step <= cfg.max_steps; ++step) {
    auto [score, grad] = eval_target(r, iterate, cfg.target, model);
    trace.points.push_back({step, score});

    // A +inf PSNR (exact recovery) satisfies any threshold, so the threshold
    // test runs before the finiteness guard.
    if (cfg.stop_mode == StopMode::Threshold && score >= threshold) {
      trace.reached_threshold = true;
      break;
    }
    if (!std::isfinite(score)) throw NumericError("restore: non-finite score");
    if (cfg.stop_mode == StopMode::Convergence &&
        static_cast<int>(trace.points.size()) > cfg.conv_window) {
      const double past =
          trace.points[trace.points.size() - 1 - cfg.conv_window].score;
      const double rel =
          std::fabs(score - past) / std::max(std::fabs(past), 1e-12);
      if (rel < cfg.conv_tol) break;
    }
    if (step == cfg.max_steps) {
      trace.hit_max_steps = true;
      break;
    }
    adam_step(adam, iterate, grad, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam);
  }
  return {std::move(iterate), std::move(trace)};
}

ImagePlane compression_proxy(const ImagePlane& img) {
  // 11-tap sigma-1.5 Gaussian, then 16 gray levels (multiples of 17).
  ImagePlane out = blur_replicate(img, gaussian_kernel_1d(11, 1.5));
  for (double& v : out.data) v = std::round(v / 17.0) * 17.0;
  return out;
}

std::pair<ImagePlane, RestoreTrace> restore_from_compressed(const ImagePlane& r,
                                                            const RestoreConfig& cfg,
                                                            const FusionModel& model) {
  return restore(r, compression_proxy(r), cfg, model);
}

}  // namespace diffiq
