#include "diffiq/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "diffiq/errors.hpp"

namespace diffiq {

double norm_l2(const ImagePlane& delta) {
  double s = 0.0;
  for (const double v : delta.data) s += v * v;
  return std::sqrt(s);
}

double norm_linf(const ImagePlane& delta) {
  double m = 0.0;
  for (const double v : delta.data) m = std::max(m, std::fabs(v));
  return m;
}

double epsilon_for_psnr(double target_psnr, int m, int n) {
  if (m < 1 || n < 1) throw NumericError("epsilon_for_psnr: empty image");
  return 255.0 * std::sqrt(static_cast<double>(m) * n) * std::pow(10.0, -target_psnr / 20.0);
}

ImagePlane project(const ImagePlane& delta, const NormBall& ball) {
  if (!(ball.epsilon > 0.0)) throw NumericError("project: epsilon must be positive");
  if (ball.kind == NormKind::Linf) {
    ImagePlane out = delta;
    for (double& v : out.data) v = std::clamp(v, -ball.epsilon, ball.epsilon);
    return out;
  }
  const double n = norm_l2(delta);
  // Feasibility slack keeps the projection idempotent under rounding.
  if (n <= ball.epsilon * (1.0 + 1e-12)) return delta;
  ImagePlane out = delta;
  const double scale = ball.epsilon / n;
  for (double& v : out.data) v *= scale;
  return out;
}

ImagePlane box_project(const ImagePlane& r, const ImagePlane& delta) {
  if (!r.same_shape(delta)) throw ShapeError("box_project: shape mismatch");
  ImagePlane out(r.width, r.height);
  for (std::size_t i = 0; i < r.size(); ++i)
    out.data[i] = std::clamp(r.data[i] + delta.data[i], 0.0, 255.0) - r.data[i];
  return out;
}

std::pair<ImagePlane, AttackReport> pgd_ascend(const ImagePlane& r, const Objective& objective,
                                               const NormBall& ball, const AttackConfig& cfg) {
  if (cfg.steps < 1) throw NumericError("pgd: steps must be >= 1");
  if (!(cfg.alpha > 0.0)) throw NumericError("pgd: alpha must be positive");

  const double l2_step = cfg.alpha * std::sqrt(static_cast<double>(r.size()));
  ImagePlane delta(r.width, r.height, 0.0);

  AttackReport rep;
  auto eval = [&](const ImagePlane& d) {
    ImagePlane img(r.width, r.height);
    for (std::size_t i = 0; i < r.size(); ++i) img.data[i] = r.data[i] + d.data[i];
    auto [score, grad] = objective(img);
    if (!std::isfinite(score)) throw NumericError("pgd: non-finite objective value");
    for (const double g : grad.data)
      if (!std::isfinite(g)) throw NumericError("pgd: non-finite gradient");
    return std::make_pair(score, std::move(grad));
  };

  auto [s0, grad] = eval(delta);
  rep.score_before = s0;

  ImagePlane best_delta = delta;
  double best_score = -std::numeric_limits<double>::infinity();
  rep.score_trace.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    if (ball.kind == NormKind::Linf) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        const double g = grad.data[i];
        if (g > 0.0)
          delta.data[i] += cfg.alpha;
        else if (g < 0.0)
          delta.data[i] -= cfg.alpha;
      }
    } else {
      const double gn = norm_l2(grad);
      if (gn > 0.0) {
        const double scale = l2_step / gn;
        for (std::size_t i = 0; i < delta.size(); ++i) delta.data[i] += scale * grad.data[i];
      }
    }
    delta = project(delta, ball);
    if (cfg.box_constrain) delta = box_project(r, delta);

    auto [score, g_next] = eval(delta);
    rep.score_trace.push_back(score);
    if (score > best_score) {
      best_score = score;
      best_delta = delta;
    }
    grad = std::move(g_next);
  }

  rep.score_after = best_score;
  rep.gain = rep.score_after - rep.score_before;
  rep.final_norm =
      ball.kind == NormKind::Linf ? norm_linf(best_delta) : norm_l2(best_delta);
  return {std::move(best_delta), std::move(rep)};
}

std::pair<ImagePlane, AttackReport> pgd_attack(const ImagePlane& r, const FusionModel& model,
                                               const NormBall& ball, const AttackConfig& cfg) {
  if (model.clip_enabled)
    throw ConfigError("pgd_attack: fusion model must have clipping disabled");
  Objective obj = [&r, &model](const ImagePlane& d) {
    ScoreAndGradient sg = score_and_gradient(r, d, model);
    return std::make_pair(sg.score, std::move(sg.gradient));
  };
  auto result = pgd_ascend(r, obj, ball, cfg);
  ImagePlane perturbed(r.width, r.height);
  for (std::size_t i = 0; i < r.size(); ++i)
    perturbed.data[i] = r.data[i] + result.first.data[i];
  result.second.psnr_after = psnr(r, perturbed);
  return {std::move(perturbed), std::move(result.second)};
}

std::pair<ImagePlane, AttackReport> psnr_bounded_attack(const ImagePlane& r,
                                                        const FusionModel& model,
                                                        double target_psnr,
                                                        const AttackConfig& cfg) {
  if (!(target_psnr > 0.0)) throw ConfigError("psnr_bounded_attack: target must be positive");
  NormBall ball{NormKind::L2, epsilon_for_psnr(target_psnr, r.height, r.width)};
  return pgd_attack(r, model, ball, cfg);
}

GainTable sweep_epsilon(const Dataset& data, const FusionModel& model, NormKind kind,
                        const std::vector<double>& eps_list, const AttackConfig& cfg,
                        std::vector<PerImageGain>* per_image, int jobs) {
  if (data.entries.empty()) throw ConfigError("sweep_epsilon: empty dataset");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] > eps_list[i - 1]))
      throw ConfigError("sweep_epsilon: epsilon list must be strictly increasing");

  struct Cell {
    double gain = 0.0;
    double psnr_after = 0.0;
  };
  const std::size_t n_img = data.entries.size();
  const std::size_t n_eps = eps_list.size();
  std::vector<Cell> cells(n_img * n_eps);

  // Work items are independent (image, epsilon) attacks; results land in
  // preassigned slots so the aggregation order never depends on scheduling.
  std::vector<std::pair<std::size_t, std::size_t>> work;
  work.reserve(cells.size());
  for (std::size_t ei = 0; ei < n_eps; ++ei)
    for (std::size_t ii = 0; ii < n_img; ++ii) work.emplace_back(ei, ii);

  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n_threads);
  auto worker = [&](int tid) {
    try {
      for (;;) {
        const std::size_t w = next.fetch_add(1);
        if (w >= work.size()) break;
        const auto [ei, ii] = work[w];
        NormBall ball{kind, eps_list[ei]};
        auto [adv, rep] = pgd_attack(data.entries[ii].image, model, ball, cfg);
        cells[ei * n_img + ii] = {rep.gain, rep.psnr_after};
      }
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int tid = 0; tid < n_threads; ++tid) pool.emplace_back(worker, tid);
    for (std::thread& th : pool) th.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  GainTable table;
  table.reserve(n_eps);
  for (std::size_t ei = 0; ei < n_eps; ++ei) {
    GainRow row;
    row.epsilon = eps_list[ei];
    row.n_images = static_cast<int>(n_img);
    double s = 0.0;
    for (std::size_t ii = 0; ii < n_img; ++ii) {
      const Cell& c = cells[ei * n_img + ii];
      s += c.gain;
      if (per_image)
        per_image->push_back(
            {data.entries[ii].id, eps_list[ei], c.gain, c.psnr_after});
    }
    row.mean_gain = s / static_cast<double>(n_img);
    table.push_back(row);
  }
  return table;
}

PowerLawFit fit_power_law(const GainTable& table) {
  std::vector<double> lx, ly;
  PowerLawFit fit;
  for (const GainRow& row : table) {
    if (row.mean_gain > 0.0 && row.epsilon > 0.0) {
      lx.push_back(std::log(row.epsilon));
      ly.push_back(std::log(row.mean_gain));
    } else {
      ++fit.n_excluded;
    }
  }
  const std::size_t n = lx.size();
  if (n < 3) throw NumericError("fit_power_law: fewer than 3 usable rows");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw NumericError("fit_power_law: degenerate epsilon list");
  fit.exponent = sxy / sxx;
  fit.amplitude = std::exp(my - fit.exponent * mx);
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.n_used = static_cast<int>(n);
  return fit;
}

}  // namespace diffiq
