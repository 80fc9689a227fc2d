// diffiq command-line tool.
//
// Every run that produces files also writes a manifest.json echoing the full
// resolved configuration (including the fusion model actually used), so any
// run can be reproduced byte-for-byte later with `diffiq rerun`.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "diffiq/analysis.hpp"
#include "diffiq/attack.hpp"
#include "diffiq/baseline.hpp"
#include "diffiq/errors.hpp"
#include "diffiq/gradcheck.hpp"
#include "diffiq/image.hpp"
#include "diffiq/metrics.hpp"
#include "diffiq/restore.hpp"
#include "diffiq/rng.hpp"
#include "diffiq/synth.hpp"

namespace fs = std::filesystem;
using njson = nlohmann::ordered_json;
using namespace diffiq;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open file for writing: " + path);
  std::size_t n = text.empty() ? 0 : std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
  if (n != text.size()) throw IoError("short write: " + path);
}

std::string read_text_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open file: " + path);
  std::string out;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  bool bad = std::ferror(f) != 0;
  std::fclose(f);
  if (bad) throw IoError("read error: " + path);
  return out;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string path_stem(const std::string& p) { return fs::path(p).stem().string(); }

// PSNR can be +inf (identical images); JSON has no inf, so use a sentinel.
njson json_number(double v) {
  if (std::isinf(v)) return njson(v > 0 ? "inf" : "-inf");
  return njson(v);
}

njson model_to_json(const FusionModel& m) {
  return njson{{"w_vif0", m.weights[0]}, {"w_vif1", m.weights[1]}, {"w_vif2", m.weights[2]},
               {"w_vif3", m.weights[3]}, {"w_adm", m.weights[4]},  {"w_motion", m.weights[5]},
               {"intercept", m.intercept}, {"clip", m.clip_enabled}};
}

FusionModel model_from_json(const njson& j) {
  FusionModel m;
  m.weights[0] = j.at("w_vif0").get<double>();
  m.weights[1] = j.at("w_vif1").get<double>();
  m.weights[2] = j.at("w_vif2").get<double>();
  m.weights[3] = j.at("w_vif3").get<double>();
  m.weights[4] = j.at("w_adm").get<double>();
  m.weights[5] = j.at("w_motion").get<double>();
  m.intercept = j.at("intercept").get<double>();
  m.clip_enabled = j.at("clip").get<bool>();
  return m;
}

FusionModel resolve_model(const njson& cfg) {
  if (cfg.contains("model") && !cfg.at("model").is_null()) return model_from_json(cfg.at("model"));
  return default_fusion_model();
}

NormKind norm_from_string(const std::string& s) {
  if (s == "linf") return NormKind::Linf;
  if (s == "l2") return NormKind::L2;
  throw ConfigError("unknown norm: " + s + " (expected linf or l2)");
}

RestoreTarget target_from_string(const std::string& s) {
  if (s == "psnr") return RestoreTarget::PSNR;
  if (s == "vif0") return RestoreTarget::VIF0;
  if (s == "vif1") return RestoreTarget::VIF1;
  if (s == "vif2") return RestoreTarget::VIF2;
  if (s == "vif3") return RestoreTarget::VIF3;
  if (s == "adm") return RestoreTarget::ADM;
  if (s == "fused") return RestoreTarget::FUSED;
  throw ConfigError("unknown restore target: " + s);
}

BaselineMethod method_from_string(const std::string& s) {
  if (s == "unsharp") return BaselineMethod::Unsharp;
  if (s == "clahe") return BaselineMethod::CLAHE;
  if (s == "gamma") return BaselineMethod::Gamma;
  throw ConfigError("unknown baseline method: " + s);
}

// Small work-stealing loop for dataset-level parallelism. Results must be
// written into preassigned slots by `fn`, so output never depends on timing.
void run_parallel(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (jobs > n) jobs = n;
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errs((std::size_t)jobs);
  std::vector<std::thread> pool;
  for (int k = 0; k < jobs; ++k) {
    pool.emplace_back([&, k] {
      try {
        while (true) {
          int i = next.fetch_add(1);
          if (i >= n) break;
          fn(i);
        }
      } catch (...) {
        errs[(std::size_t)k] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

std::string trace_csv(const std::vector<double>& scores) {
  std::string out = "step,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    out += fmt(scores[i]);
    out += '\n';
  }
  return out;
}

std::string spectrum_svg(const SpectrumCurve& c) {
  const double W = 640, H = 480, ml = 70, mr = 20, mt = 20, mb = 50;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < c.freq.size(); ++i)
    if (c.freq[i] > 0 && c.power[i] > 0)
      pts.push_back({std::log10(c.freq[i]), std::log10(c.power[i])});
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\">\n";
  svg += "<rect x=\"" + fmt2(ml) + "\" y=\"" + fmt2(mt) + "\" width=\"" + fmt2(W - ml - mr) +
         "\" height=\"" + fmt2(H - mt - mb) + "\" fill=\"none\" stroke=\"black\"/>\n";
  if (pts.size() >= 2) {
    double x0 = pts[0].first, x1 = pts[0].first, y0 = pts[0].second, y1 = pts[0].second;
    for (auto& p : pts) {
      x0 = std::min(x0, p.first);
      x1 = std::max(x1, p.first);
      y0 = std::min(y0, p.second);
      y1 = std::max(y1, p.second);
    }
    if (x1 - x0 < 1e-12) x1 = x0 + 1e-12;
    if (y1 - y0 < 1e-12) y1 = y0 + 1e-12;
    std::string poly;
    for (auto& p : pts) {
      double px = ml + (p.first - x0) / (x1 - x0) * (W - ml - mr);
      double py = mt + (y1 - p.second) / (y1 - y0) * (H - mt - mb);
      poly += fmt2(px) + "," + fmt2(py) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"" + poly +
           "\"/>\n";
    svg += "<text x=\"" + fmt2(ml) + "\" y=\"" + fmt2(H - 14) +
           "\" font-size=\"13\">log10 f: " + fmt3(x0) + " .. " + fmt3(x1) + "</text>\n";
    svg += "<text x=\"8\" y=\"" + fmt2(mt + 14) + "\" font-size=\"13\">log10 P: " + fmt3(y1) +
           "</text>\n";
    svg += "<text x=\"8\" y=\"" + fmt2(H - mb) + "\" font-size=\"13\">" + fmt3(y0) + "</text>\n";
  }
  svg += "<text x=\"" + fmt2(W / 2 - 90) + "\" y=\"" + fmt2(H - 14) +
         "\" font-size=\"13\">radial power spectrum</text>\n</svg>\n";
  return svg;
}

struct RunResult {
  njson results;
  std::vector<std::string> outputs;
  int exit_code = 0;
};

// ---------------------------------------------------------------------------
// score

RunResult run_score(const njson& c, const std::string& outdir) {
  ImagePlane ref = load_image(c.at("ref").get<std::string>());
  ImagePlane dist = load_image(c.at("dist").get<std::string>());
  FusionModel model = resolve_model(c);

  FeatureVector f = extract_features(ref, dist);
  FusionModel unclipped = model;
  unclipped.clip_enabled = false;
  double raw = fused_score(f, unclipped);
  double clipped = std::min(100.0, std::max(0.0, raw));
  double p = psnr(ref, dist);

  njson rep{{"features",
             njson{{"vif0", f.vif0},
                   {"vif1", f.vif1},
                   {"vif2", f.vif2},
                   {"vif3", f.vif3},
                   {"adm", f.adm},
                   {"motion", f.motion}}},
            {"fused_unclipped", raw},
            {"fused_clipped", clipped},
            {"psnr", json_number(p)}};
  std::string text = rep.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);

  RunResult rr;
  rr.results = rep;
  if (!outdir.empty()) {
    write_text_file(join_path(outdir, "report.json"), text);
    rr.outputs.push_back("report.json");
  }
  return rr;
}

// ---------------------------------------------------------------------------
// attack

RunResult run_attack(const njson& c, const std::string& outdir) {
  if (outdir.empty()) throw ConfigError("attack requires --out");
  std::string ref_path = c.value("ref", std::string());
  std::string dataset_dir = c.value("dataset", std::string());
  std::string match = c.value("match", std::string("*"));
  std::string norm = c.value("norm", std::string());
  double epsilon = c.value("epsilon", -1.0);
  double target_psnr = c.value("target_psnr", -1.0);
  AttackConfig cfg;
  cfg.alpha = c.value("alpha", 0.1);
  cfg.steps = c.value("steps", 100);
  cfg.box_constrain = c.value("box", true);
  cfg.seed = c.value("seed", (std::uint64_t)0);
  int jobs = c.value("jobs", 1);
  FusionModel model = resolve_model(c);

  if (ref_path.empty() == dataset_dir.empty())
    throw ConfigError("exactly one of --ref and --dataset is required");
  bool have_eps = epsilon > 0.0;
  bool have_psnr = target_psnr > 0.0;
  if (have_eps == have_psnr)
    throw ConfigError("exactly one of --epsilon and --target-psnr is required");
  NormKind kind = NormKind::L2;
  if (have_eps) {
    if (norm.empty()) throw ConfigError("--norm is required with --epsilon");
    kind = norm_from_string(norm);
  } else if (!norm.empty() && norm != "l2") {
    throw ConfigError("--target-psnr implies the l2 norm");
  }

  Dataset data;
  if (!ref_path.empty()) {
    data.entries.push_back(DatasetEntry{path_stem(ref_path), load_image(ref_path)});
  } else {
    data = load_dataset(dataset_dir, match);
  }

  int n = (int)data.entries.size();
  std::vector<std::pair<ImagePlane, AttackReport>> out((std::size_t)n);
  std::vector<double> eps_used((std::size_t)n, 0.0);
  run_parallel(n, jobs, [&](int i) {
    const ImagePlane& img = data.entries[(std::size_t)i].image;
    if (have_eps) {
      NormBall ball{kind, epsilon};
      out[(std::size_t)i] = pgd_attack(img, model, ball, cfg);
      eps_used[(std::size_t)i] = epsilon;
    } else {
      out[(std::size_t)i] = psnr_bounded_attack(img, model, target_psnr, cfg);
      eps_used[(std::size_t)i] = epsilon_for_psnr(target_psnr, img.height, img.width);
    }
  });

  RunResult rr;
  std::string report = "id,epsilon,score_before,score_after,gain,psnr_after,final_norm\n";
  double gain_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::string& id = data.entries[(std::size_t)i].id;
    const ImagePlane& ref = data.entries[(std::size_t)i].image;
    const ImagePlane& adv = out[(std::size_t)i].first;
    const AttackReport& rep = out[(std::size_t)i].second;
    gain_sum += rep.gain;

    ImagePlane delta_vis(ref.width, ref.height);
    for (int k = 0; k < (int)delta_vis.data.size(); ++k)
      delta_vis.data[k] = adv.data[k] - ref.data[k] + 127.5;

    save_pgm(join_path(outdir, id + "_perturbed.pgm"), adv);
    save_pgm(join_path(outdir, id + "_delta.pgm"), delta_vis);
    write_text_file(join_path(outdir, id + "_trace.csv"), trace_csv(rep.score_trace));
    rr.outputs.push_back(id + "_perturbed.pgm");
    rr.outputs.push_back(id + "_delta.pgm");
    rr.outputs.push_back(id + "_trace.csv");

    report += id + "," + fmt(eps_used[(std::size_t)i]) + "," + fmt(rep.score_before) + "," +
              fmt(rep.score_after) + "," + fmt(rep.gain) + "," + fmt(rep.psnr_after) + "," +
              fmt(rep.final_norm) + "\n";
  }
  write_text_file(join_path(outdir, "report.csv"), report);
  rr.outputs.push_back("report.csv");
  rr.results = njson{{"n_images", n}, {"mean_gain", n > 0 ? gain_sum / n : 0.0}};
  return rr;
}

// ---------------------------------------------------------------------------
// restore

RunResult run_restore(const njson& c, const std::string& outdir) {
  if (outdir.empty()) throw ConfigError("restore requires --out");
  ImagePlane ref = load_image(c.at("ref").get<std::string>());
  std::string init_kind = c.value("init", std::string("noise"));
  std::string stop = c.value("stop", std::string("threshold"));

  RestoreConfig cfg;
  cfg.target = target_from_string(c.value("target", std::string("fused")));
  cfg.lr = c.value("lr", 0.5);
  cfg.stop_mode = stop == "convergence" ? StopMode::Convergence : StopMode::Threshold;
  if (stop != "threshold" && stop != "convergence")
    throw ConfigError("unknown stop mode: " + stop);
  cfg.threshold = c.value("threshold", -1.0);
  cfg.conv_tol = c.value("conv_tol", 1e-4);
  cfg.conv_window = c.value("conv_window", 50);
  cfg.max_steps = c.value("max_steps", 5000);
  cfg.seed = c.value("seed", (std::uint64_t)0);
  FusionModel model = resolve_model(c);

  ImagePlane init;
  if (init_kind == "noise")
    init = init_noise(ref.width, ref.height, cfg.seed);
  else if (init_kind == "compressed")
    init = compression_proxy(ref);
  else
    throw ConfigError("unknown init kind: " + init_kind);

  auto [img, trace] = restore(ref, init, cfg, model);

  std::string tcsv = "step,score\n";
  for (const TracePoint& p : trace.points)
    tcsv += std::to_string(p.step) + "," + fmt(p.score) + "\n";

  save_pgm(join_path(outdir, "init.pgm"), init);
  save_pgm(join_path(outdir, "restored.pgm"), img);
  write_text_file(join_path(outdir, "trace.csv"), tcsv);

  RunResult rr;
  rr.outputs = {"init.pgm", "restored.pgm", "trace.csv"};
  double final_score = trace.points.empty() ? 0.0 : trace.points.back().score;
  rr.results = njson{{"steps", (int)trace.points.size()},
                     {"final_score", final_score},
                     {"reached_threshold", trace.reached_threshold},
                     {"hit_max_steps", trace.hit_max_steps},
                     {"mse_vs_ref", mse(ref, img)},
                     {"psnr_vs_ref", json_number(psnr(ref, img))},
                     {"pearson_vs_ref", pearson(ref, img)}};
  return rr;
}

// ---------------------------------------------------------------------------
// spectrum

RunResult run_spectrum(const njson& c, const std::string& outdir) {
  if (outdir.empty()) throw ConfigError("spectrum requires --out");
  ImagePlane img = load_image(c.at("input").get<std::string>());
  int patches = c.value("patches", 100);
  int patch = c.value("patch", 256);
  std::uint64_t seed = c.value("seed", (std::uint64_t)0);
  double band_lo = c.value("band_lo", 0.02);
  double band_hi = c.value("band_hi", 0.4);
  bool svg = c.value("svg", false);

  SpectrumCurve curve = power_spectrum_1d(img, patches, patch, seed);
  std::string csv = "freq,power\n";
  for (std::size_t i = 0; i < curve.freq.size(); ++i)
    csv += fmt(curve.freq[i]) + "," + fmt(curve.power[i]) + "\n";
  write_text_file(join_path(outdir, "spectrum.csv"), csv);

  RunResult rr;
  rr.outputs = {"spectrum.csv"};
  njson slope;
  std::string slope_error;
  try {
    slope = spectral_slope(curve, band_lo, band_hi);
  } catch (const NumericError& e) {
    slope = nullptr;
    slope_error = e.what();
  }
  if (svg) {
    write_text_file(join_path(outdir, "spectrum.svg"), spectrum_svg(curve));
    rr.outputs.push_back("spectrum.svg");
  }
  rr.results = njson{{"patch_size", curve.patch_size},
                     {"n_patches", curve.n_patches},
                     {"n_bins", (int)curve.freq.size()},
                     {"slope", slope}};
  if (!slope_error.empty()) rr.results["slope_error"] = slope_error;
  return rr;
}

// ---------------------------------------------------------------------------
// curve (brightness-vs-perturbation statistics)

RunResult run_curve(const njson& c, const std::string& outdir) {
  if (outdir.empty()) throw ConfigError("curve requires --out");
  ImagePlane ref = load_image(c.at("ref").get<std::string>());
  ImagePlane dist = load_image(c.at("dist").get<std::string>());
  bool edge_masked = c.value("edge_masked", false);
  double k = c.value("k", 1.0);
  if (!ref.same_shape(dist))
    throw ShapeError("curve: ref and dist shapes differ");

  ImagePlane delta(ref.width, ref.height);
  for (int i = 0; i < (int)delta.data.size(); ++i)
    delta.data[i] = dist.data[i] - ref.data[i];

  BrightnessCurve curve;
  if (edge_masked) {
    ImagePlane mask = edge_mask(ref, k);
    curve = brightness_delta_curve(ref, delta, &mask);
  } else {
    curve = brightness_delta_curve(ref, delta, nullptr);
  }

  std::string csv = "intensity,mean,meanabs,std,count\n";
  for (std::size_t i = 0; i < curve.intensity.size(); ++i) {
    csv += std::to_string(curve.intensity[i]) + "," + fmt(curve.mean_delta[i]) + "," +
           fmt(curve.mean_abs_delta[i]) + "," + fmt(curve.std_delta[i]) + "," +
           std::to_string((long long)curve.count[i]) + "\n";
  }
  write_text_file(join_path(outdir, "curve.csv"), csv);

  njson slope;
  std::string slope_error;
  try {
    slope = brightness_slope(curve);
  } catch (const NumericError& e) {
    slope = nullptr;
    slope_error = e.what();
  }
  RunResult rr;
  rr.outputs = {"curve.csv"};
  rr.results = njson{{"n_bins", (int)curve.intensity.size()}, {"slope", slope}};
  if (!slope_error.empty()) rr.results["slope_error"] = slope_error;
  return rr;
}

// ---------------------------------------------------------------------------
// sweep

RunResult run_sweep(const njson& c, const std::string& outdir) {
  if (outdir.empty()) throw ConfigError("sweep requires --out");
  std::string dataset_dir = c.at("dataset").get<std::string>();
  std::string match = c.value("match", std::string("*"));
  NormKind kind = norm_from_string(c.at("norm").get<std::string>());
  std::vector<double> eps = c.at("eps").get<std::vector<double>>();
  AttackConfig cfg;
  cfg.alpha = c.value("alpha", 0.1);
  cfg.steps = c.value("steps", 100);
  cfg.box_constrain = c.value("box", true);
  cfg.seed = c.value("seed", (std::uint64_t)0);
  int jobs = c.value("jobs", 1);
  FusionModel model = resolve_model(c);

  Dataset data = load_dataset(dataset_dir, match);
  std::vector<PerImageGain> per_image;
  GainTable table = sweep_epsilon(data, model, kind, eps, cfg, &per_image, jobs);

  std::string gains = "epsilon,mean_gain,n_images\n";
  for (const GainRow& row : table)
    gains += fmt(row.epsilon) + "," + fmt(row.mean_gain) + "," + std::to_string(row.n_images) +
             "\n";
  write_text_file(join_path(outdir, "gains.csv"), gains);

  std::string per = "id,epsilon,gain,psnr_after\n";
  for (const PerImageGain& row : per_image)
    per += row.id + "," + fmt(row.epsilon) + "," + fmt(row.gain) + "," + fmt(row.psnr_after) +
           "\n";
  write_text_file(join_path(outdir, "per_image.csv"), per);

  RunResult rr;
  rr.outputs = {"gains.csv", "per_image.csv"};
  njson fitj;
  std::string fit_error;
  try {
    PowerLawFit fit = fit_power_law(table);
    fitj = njson{{"exponent", fit.exponent},
                 {"amplitude", fit.amplitude},
                 {"r2", fit.r2},
                 {"n_used", fit.n_used},
                 {"n_excluded", fit.n_excluded}};
  } catch (const NumericError& e) {
    fitj = nullptr;
    fit_error = e.what();
  }
  rr.results = njson{{"n_images", (int)data.entries.size()}, {"power_law", fitj}};
  if (!fit_error.empty()) rr.results["power_law_error"] = fit_error;
  return rr;
}

// ---------------------------------------------------------------------------
// baseline

RunResult run_baseline(const njson& c, const std::string& outdir) {
  if (outdir.empty()) throw ConfigError("baseline requires --out");
  std::string dataset_dir = c.at("dataset").get<std::string>();
  std::string match = c.value("match", std::string("*"));
  BaselineMethod method = method_from_string(c.at("method").get<std::string>());
  std::vector<double> params = c.at("params").get<std::vector<double>>();
  FusionModel model = resolve_model(c);

  Dataset data = load_dataset(dataset_dir, match);
  std::vector<BaselineRow> rows = baseline_sweep(data, model, method, params);

  std::string csv = "method,param,mean_psnr,mean_gain,n_images\n";
  for (const BaselineRow& row : rows)
    csv += std::string(baseline_method_name(row.method)) + "," + fmt(row.param) + "," +
           fmt(row.mean_psnr) + "," + fmt(row.mean_gain) + "," + std::to_string(row.n_images) +
           "\n";
  write_text_file(join_path(outdir, "baseline.csv"), csv);

  RunResult rr;
  rr.outputs = {"baseline.csv"};
  rr.results = njson{{"n_images", (int)data.entries.size()}, {"n_params", (int)params.size()}};
  return rr;
}

// ---------------------------------------------------------------------------
// gradcheck

RunResult run_gradcheck(const njson& c, const std::string& outdir) {
  int pairs = c.value("pairs", 5);
  std::uint64_t seed = c.value("seed", (std::uint64_t)1);
  double h = c.value("h", 1e-3);
  double bound = c.value("bound", 1e-4);

  std::vector<GradCheckCase> cases = run_gradient_suite(pairs, seed, h);
  bool all_passed = true;
  std::string csv = "metric,size,max_rel_error,pass\n";
  njson rows = njson::array();
  std::fprintf(stdout, "%-8s %6s %14s  %s\n", "metric", "size", "max_rel_err", "pass");
  for (const GradCheckCase& cc : cases) {
    bool ok = cc.max_rel_error < bound;
    all_passed = all_passed && ok;
    std::fprintf(stdout, "%-8s %6d %14.3e  %s\n", cc.metric.c_str(), cc.size, cc.max_rel_error,
                 ok ? "yes" : "NO");
    csv += cc.metric + "," + std::to_string(cc.size) + "," + fmt(cc.max_rel_error) + "," +
           (ok ? "1" : "0") + "\n";
    rows.push_back(njson{{"metric", cc.metric}, {"size", cc.size},
                         {"max_rel_error", cc.max_rel_error}, {"pass", ok}});
  }
  RunResult rr;
  if (!outdir.empty()) {
    write_text_file(join_path(outdir, "gradcheck.csv"), csv);
    rr.outputs.push_back("gradcheck.csv");
  }
  rr.results = njson{{"bound", bound}, {"all_passed", all_passed}, {"cases", rows}};
  if (!all_passed) {
    std::fprintf(stderr, "error: gradient check exceeded the %.3g bound\n", bound);
    rr.exit_code = 5;
  }
  return rr;
}

// ---------------------------------------------------------------------------
// synth

RunResult run_synth(const njson& c, const std::string& outdir) {
  if (outdir.empty()) throw ConfigError("synth requires --out");
  int count = c.value("count", 8);
  int width = c.value("width", 512);
  int height = c.value("height", 288);
  std::uint64_t seed = c.value("seed", (std::uint64_t)7);
  if (count < 1) throw ConfigError("synth count must be >= 1");
  if (width < 1 || height < 1) throw ConfigError("synth dimensions must be positive");

  RunResult rr;
  for (int i = 0; i < count; ++i) {
    ImagePlane scene = synthetic_scene(width, height, Rng::derive(seed, (std::uint64_t)i));
    char name[64];
    std::snprintf(name, sizeof name, "scene_%03d.pgm", i);
    save_pgm(join_path(outdir, name), scene);
    rr.outputs.push_back(name);
  }
  rr.results = njson{{"count", count}, {"width", width}, {"height", height}};
  return rr;
}

// ---------------------------------------------------------------------------

RunResult run_command(const std::string& sub, const njson& cfg, const std::string& outdir) {
  if (sub == "score") return run_score(cfg, outdir);
  if (sub == "attack") return run_attack(cfg, outdir);
  if (sub == "restore") return run_restore(cfg, outdir);
  if (sub == "spectrum") return run_spectrum(cfg, outdir);
  if (sub == "curve") return run_curve(cfg, outdir);
  if (sub == "sweep") return run_sweep(cfg, outdir);
  if (sub == "baseline") return run_baseline(cfg, outdir);
  if (sub == "gradcheck") return run_gradcheck(cfg, outdir);
  if (sub == "synth") return run_synth(cfg, outdir);
  throw ConfigError("unknown subcommand: " + sub);
}

int dispatch(const std::string& sub, const njson& cfg, const std::string& outdir) {
  if (!outdir.empty()) fs::create_directories(outdir);
  RunResult rr = run_command(sub, cfg, outdir);
  if (!outdir.empty()) {
    njson manifest{{"tool", "diffiq"},   {"version", "0.1.0"},   {"subcommand", sub},
                   {"config", cfg},      {"results", rr.results}, {"outputs", rr.outputs}};
    write_text_file(join_path(outdir, "manifest.json"), manifest.dump(2) + "\n");
  }
  return rr.exit_code;
}

njson load_manifest(const std::string& path) {
  std::string text = read_text_file(path);
  try {
    return njson::parse(text);
  } catch (const std::exception& e) {
    throw FormatError("manifest parse error in " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable image-quality metrics, attacks and analysis"};
  app.require_subcommand(1);

  // Shared option storage.
  std::string ref, dist, input_path, dataset_dir, match = "*", model_path, outdir;
  std::string norm, target = "fused", init_kind = "noise", stop = "threshold";
  std::string method, manifest_path;
  double epsilon = -1.0, target_psnr = -1.0, alpha = 0.1, threshold = -1.0, lr = 0.5;
  double h = 1e-3, bound = 1e-4, k = 1.0, band_lo = 0.02, band_hi = 0.4;
  int steps = 100, max_steps = 5000, conv_window = 50, jobs = 1;
  int patches = 100, patch = 256, pairs = 5, count = 8, width = 512, height = 288;
  double conv_tol = 1e-4;
  std::uint64_t seed = 0, synth_seed = 7, grad_seed = 1;
  bool no_box = false, svg = false, edge_masked = false;
  std::vector<double> eps_list, params;

  CLI::App* sc = app.add_subcommand("score", "score a distorted image against its reference");
  sc->add_option("--ref", ref, "reference image (PGM/PPM)")->required();
  sc->add_option("--dist", dist, "distorted image")->required();
  sc->add_option("--model", model_path, "fusion model file");
  sc->add_option("--out", outdir, "output directory (report.json + manifest)");

  CLI::App* at = app.add_subcommand("attack", "projected gradient ascent on the fused score");
  at->add_option("--ref", ref, "single reference image");
  at->add_option("--dataset", dataset_dir, "directory of reference images");
  at->add_option("--match", match, "filename pattern for --dataset");
  at->add_option("--norm", norm, "ball norm")->check(CLI::IsMember({"linf", "l2"}));
  at->add_option("--epsilon", epsilon, "ball radius");
  at->add_option("--target-psnr", target_psnr, "choose the l2 radius from a PSNR floor (dB)");
  at->add_option("--alpha", alpha, "step size");
  at->add_option("--steps", steps, "iterations");
  at->add_flag("--no-box", no_box, "skip the [0,255] pixel box constraint");
  at->add_option("--seed", seed, "random seed");
  at->add_option("--jobs", jobs, "parallel workers over the dataset");
  at->add_option("--model", model_path, "fusion model file");
  at->add_option("--out", outdir, "output directory")->required();

  CLI::App* re = app.add_subcommand("restore", "recover an image by maximizing a metric");
  re->add_option("--ref", ref, "reference image")->required();
  re->add_option("--target", target, "metric to maximize")
      ->check(CLI::IsMember({"psnr", "vif0", "vif1", "vif2", "vif3", "adm", "fused"}));
  re->add_option("--init", init_kind, "starting point")
      ->check(CLI::IsMember({"noise", "compressed"}));
  re->add_option("--stop", stop, "stopping rule")
      ->check(CLI::IsMember({"threshold", "convergence"}));
  re->add_option("--threshold", threshold, "score threshold (negative = per-target default)");
  re->add_option("--lr", lr, "Adam learning rate");
  re->add_option("--conv-tol", conv_tol, "relative change tolerance (convergence mode)");
  re->add_option("--conv-window", conv_window, "window for the convergence test");
  re->add_option("--max-steps", max_steps, "iteration cap");
  re->add_option("--seed", seed, "noise init seed");
  re->add_option("--model", model_path, "fusion model file");
  re->add_option("--out", outdir, "output directory")->required();

  CLI::App* sp = app.add_subcommand("spectrum", "radially averaged power spectrum");
  sp->add_option("--input", input_path, "image to analyze")->required();
  sp->add_option("--patches", patches, "number of random patches");
  sp->add_option("--patch", patch, "patch size (shrinks to fit)");
  sp->add_option("--seed", seed, "patch placement seed");
  sp->add_option("--band-lo", band_lo, "slope fit band lower frequency");
  sp->add_option("--band-hi", band_hi, "slope fit band upper frequency");
  sp->add_flag("--svg", svg, "also write a log-log SVG plot");
  sp->add_option("--out", outdir, "output directory")->required();

  CLI::App* cu = app.add_subcommand("curve", "perturbation statistics by brightness bin");
  cu->add_option("--ref", ref, "reference image")->required();
  cu->add_option("--dist", dist, "distorted image")->required();
  cu->add_flag("--edge-masked", edge_masked, "restrict to Laplacian edge pixels");
  cu->add_option("--k", k, "edge mask threshold factor");
  cu->add_option("--out", outdir, "output directory")->required();

  CLI::App* sw = app.add_subcommand("sweep", "attack gain as a function of epsilon");
  sw->add_option("--dataset", dataset_dir, "directory of reference images")->required();
  sw->add_option("--match", match, "filename pattern");
  sw->add_option("--norm", norm, "ball norm")
      ->check(CLI::IsMember({"linf", "l2"}))
      ->required();
  sw->add_option("--eps", eps_list, "comma-separated epsilon list (increasing)")
      ->required()
      ->delimiter(',');
  sw->add_option("--alpha", alpha, "step size");
  sw->add_option("--steps", steps, "iterations per attack");
  sw->add_flag("--no-box", no_box, "skip the pixel box constraint");
  sw->add_option("--seed", seed, "random seed");
  sw->add_option("--jobs", jobs, "parallel workers");
  sw->add_option("--model", model_path, "fusion model file");
  sw->add_option("--out", outdir, "output directory")->required();

  CLI::App* ba = app.add_subcommand("baseline", "classical enhancement sweep");
  ba->add_option("--dataset", dataset_dir, "directory of reference images")->required();
  ba->add_option("--match", match, "filename pattern");
  ba->add_option("--method", method, "enhancement method")
      ->check(CLI::IsMember({"unsharp", "clahe", "gamma"}))
      ->required();
  ba->add_option("--params", params, "comma-separated parameter grid")
      ->required()
      ->delimiter(',');
  ba->add_option("--model", model_path, "fusion model file");
  ba->add_option("--out", outdir, "output directory")->required();

  CLI::App* gc = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  gc->add_option("--pairs", pairs, "image pairs per metric");
  gc->add_option("--seed", grad_seed, "pair generation seed");
  gc->add_option("--fd-h", h, "finite-difference step");
  gc->add_option("--bound", bound, "max allowed relative error");
  gc->add_option("--out", outdir, "optional output directory for gradcheck.csv");

  CLI::App* sy = app.add_subcommand("synth", "generate synthetic test scenes");
  sy->add_option("--count", count, "number of scenes");
  sy->add_option("--width", width, "scene width");
  sy->add_option("--height", height, "scene height");
  sy->add_option("--seed", synth_seed, "scene seed");
  sy->add_option("--out", outdir, "output directory")->required();

  CLI::App* rr = app.add_subcommand("rerun", "re-execute a run from its manifest");
  rr->add_option("--manifest", manifest_path, "manifest.json from a previous run")->required();
  rr->add_option("--out", outdir, "output directory for the reproduced run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  try {
    njson model_json = nullptr;
    if (app.got_subcommand(sc) || app.got_subcommand(at) || app.got_subcommand(re) ||
        app.got_subcommand(sw) || app.got_subcommand(ba)) {
      FusionModel m =
          model_path.empty() ? default_fusion_model() : load_fusion_model_file(model_path);
      model_json = model_to_json(m);
    }

    if (app.got_subcommand(sc)) {
      njson cfg{{"ref", ref}, {"dist", dist}, {"model_path", model_path}, {"model", model_json}};
      return dispatch("score", cfg, outdir);
    }
    if (app.got_subcommand(at)) {
      njson cfg{{"ref", ref},           {"dataset", dataset_dir}, {"match", match},
                {"norm", norm},         {"epsilon", epsilon},     {"target_psnr", target_psnr},
                {"alpha", alpha},       {"steps", steps},         {"box", !no_box},
                {"seed", seed},         {"jobs", jobs},           {"model_path", model_path},
                {"model", model_json}};
      return dispatch("attack", cfg, outdir);
    }
    if (app.got_subcommand(re)) {
      njson cfg{{"ref", ref},
                {"target", target},
                {"init", init_kind},
                {"stop", stop},
                {"threshold", threshold},
                {"lr", lr},
                {"conv_tol", conv_tol},
                {"conv_window", conv_window},
                {"max_steps", max_steps},
                {"seed", seed},
                {"model_path", model_path},
                {"model", model_json}};
      return dispatch("restore", cfg, outdir);
    }
    if (app.got_subcommand(sp)) {
      njson cfg{{"input", input_path}, {"patches", patches},   {"patch", patch},
                {"seed", seed},        {"band_lo", band_lo},   {"band_hi", band_hi},
                {"svg", svg}};
      return dispatch("spectrum", cfg, outdir);
    }
    if (app.got_subcommand(cu)) {
      njson cfg{{"ref", ref}, {"dist", dist}, {"edge_masked", edge_masked}, {"k", k}};
      return dispatch("curve", cfg, outdir);
    }
    if (app.got_subcommand(sw)) {
      njson cfg{{"dataset", dataset_dir}, {"match", match}, {"norm", norm},
                {"eps", eps_list},        {"alpha", alpha}, {"steps", steps},
                {"box", !no_box},         {"seed", seed},   {"jobs", jobs},
                {"model_path", model_path}, {"model", model_json}};
      return dispatch("sweep", cfg, outdir);
    }
    if (app.got_subcommand(ba)) {
      njson cfg{{"dataset", dataset_dir},   {"match", match},     {"method", method},
                {"params", params},         {"model_path", model_path}, {"model", model_json}};
      return dispatch("baseline", cfg, outdir);
    }
    if (app.got_subcommand(gc)) {
      njson cfg{{"pairs", pairs}, {"seed", grad_seed}, {"h", h}, {"bound", bound}};
      return dispatch("gradcheck", cfg, outdir);
    }
    if (app.got_subcommand(sy)) {
      njson cfg{{"count", count}, {"width", width}, {"height", height}, {"seed", synth_seed}};
      return dispatch("synth", cfg, outdir);
    }
    if (app.got_subcommand(rr)) {
      njson m = load_manifest(manifest_path);
      std::string sub;
      njson cfg;
      try {
        sub = m.at("subcommand").get<std::string>();
        cfg = m.at("config");
      } catch (const std::exception& e) {
        throw FormatError("manifest missing subcommand/config: " + manifest_path);
      }
      return dispatch(sub, cfg, outdir);
    }
    throw ConfigError("no subcommand given");
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
