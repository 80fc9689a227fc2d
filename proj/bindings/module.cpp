// Python bindings: numpy arrays in, numpy arrays out. Planes are float64
// row-major (height, width); anything convertible is accepted via forcecast.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "diffiq/analysis.hpp"
#include "diffiq/attack.hpp"
#include "diffiq/baseline.hpp"
#include "diffiq/errors.hpp"
#include "diffiq/gradcheck.hpp"
#include "diffiq/image.hpp"
#include "diffiq/metrics.hpp"
#include "diffiq/restore.hpp"
#include "diffiq/synth.hpp"

namespace py = pybind11;
using namespace diffiq;

namespace {

using NpPlane = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImagePlane to_plane(const NpPlane& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  ImagePlane p((int)a.shape(1), (int)a.shape(0));
  std::memcpy(p.data.data(), a.data(), sizeof(double) * p.data.size());
  return p;
}

py::array_t<double> to_array(const ImagePlane& p) {
  py::array_t<double> a({p.height, p.width});
  std::memcpy(a.mutable_data(), p.data.data(), sizeof(double) * p.data.size());
  return a;
}

FusionModel model_from_obj(const py::object& o) {
  if (o.is_none()) return default_fusion_model();
  py::dict d = o.cast<py::dict>();
  FusionModel m = default_fusion_model();
  if (d.contains("weights")) {
    auto w = d["weights"].cast<std::vector<double>>();
    if (w.size() != 6) throw ConfigError("model weights must have 6 entries");
    for (int i = 0; i < 6; ++i) m.weights[(std::size_t)i] = w[(std::size_t)i];
  }
  if (d.contains("intercept")) m.intercept = d["intercept"].cast<double>();
  if (d.contains("clip")) m.clip_enabled = d["clip"].cast<bool>();
  return m;
}

py::dict report_to_dict(const AttackReport& r) {
  py::dict d;
  d["score_before"] = r.score_before;
  d["score_after"] = r.score_after;
  d["gain"] = r.gain;
  d["psnr_after"] = r.psnr_after;
  d["final_norm"] = r.final_norm;
  d["score_trace"] = r.score_trace;
  return d;
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

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "differentiable image-quality metrics, attacks and analysis";

  py::register_exception<IoError>(m, "IoError");
  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<ShapeError>(m, "ShapeError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<NumericError>(m, "NumericError");

  // --- I/O -----------------------------------------------------------------
  m.def("read_image", [](const std::string& path) { return to_array(load_image(path)); },
        py::arg("path"), "Load a PGM/PPM image as a float64 luma plane.");
  m.def("write_image",
        [](const std::string& path, const NpPlane& img) { save_pgm(path, to_plane(img)); },
        py::arg("path"), py::arg("image"), "Quantize to 8 bits and write binary PGM.");
  m.def("synthetic_scene",
        [](int width, int height, std::uint64_t seed) {
          return to_array(synthetic_scene(width, height, seed));
        },
        py::arg("width"), py::arg("height"), py::arg("seed") = 7);

  // --- metrics -------------------------------------------------------------
  m.def("mse", [](const NpPlane& r, const NpPlane& d) { return mse(to_plane(r), to_plane(d)); },
        py::arg("ref"), py::arg("dist"));
  m.def("psnr",
        [](const NpPlane& r, const NpPlane& d) { return psnr(to_plane(r), to_plane(d)); },
        py::arg("ref"), py::arg("dist"));
  m.def("vif_scale",
        [](const NpPlane& r, const NpPlane& d, int s) {
          return vif_scale(to_plane(r), to_plane(d), s);
        },
        py::arg("ref"), py::arg("dist"), py::arg("scale"));
  m.def("adm",
        [](const NpPlane& r, const NpPlane& d) { return adm(to_plane(r), to_plane(d)); },
        py::arg("ref"), py::arg("dist"));
  m.def("features",
        [](const NpPlane& r, const NpPlane& d) {
          FeatureVector f = extract_features(to_plane(r), to_plane(d));
          py::dict out;
          out["vif0"] = f.vif0;
          out["vif1"] = f.vif1;
          out["vif2"] = f.vif2;
          out["vif3"] = f.vif3;
          out["adm"] = f.adm;
          out["motion"] = f.motion;
          return out;
        },
        py::arg("ref"), py::arg("dist"));
  m.def("fused_score",
        [](const NpPlane& r, const NpPlane& d, const py::object& model) {
          FusionModel mm = model_from_obj(model);
          return fused_score(extract_features(to_plane(r), to_plane(d)), mm);
        },
        py::arg("ref"), py::arg("dist"), py::arg("model") = py::none());
  m.def("score_and_gradient",
        [](const NpPlane& r, const NpPlane& d, const py::object& model) {
          ScoreAndGradient sg =
              score_and_gradient(to_plane(r), to_plane(d), model_from_obj(model));
          return py::make_tuple(sg.score, to_array(sg.gradient));
        },
        py::arg("ref"), py::arg("dist"), py::arg("model") = py::none(),
        "Fused score and its gradient with respect to the distorted image.");
  m.def("vif_min_side", &vif_min_side, py::arg("scale"));

  // --- attack --------------------------------------------------------------
  m.def("epsilon_for_psnr", &epsilon_for_psnr, py::arg("target_psnr"), py::arg("m"),
        py::arg("n"));
  m.def("pgd_attack",
        [](const NpPlane& r, const std::string& norm, double epsilon, double alpha, int steps,
           bool box, std::uint64_t seed, const py::object& model) {
          NormBall ball{norm_from_string(norm), epsilon};
          AttackConfig cfg;
          cfg.alpha = alpha;
          cfg.steps = steps;
          cfg.box_constrain = box;
          cfg.seed = seed;
          auto [img, rep] = pgd_attack(to_plane(r), model_from_obj(model), ball, cfg);
          return py::make_tuple(to_array(img), report_to_dict(rep));
        },
        py::arg("ref"), py::arg("norm"), py::arg("epsilon"), py::arg("alpha") = 0.1,
        py::arg("steps") = 100, py::arg("box") = true, py::arg("seed") = 0,
        py::arg("model") = py::none());
  m.def("psnr_bounded_attack",
        [](const NpPlane& r, double target_psnr, double alpha, int steps, bool box,
           std::uint64_t seed, const py::object& model) {
          AttackConfig cfg;
          cfg.alpha = alpha;
          cfg.steps = steps;
          cfg.box_constrain = box;
          cfg.seed = seed;
          auto [img, rep] =
              psnr_bounded_attack(to_plane(r), model_from_obj(model), target_psnr, cfg);
          return py::make_tuple(to_array(img), report_to_dict(rep));
        },
        py::arg("ref"), py::arg("target_psnr"), py::arg("alpha") = 0.1, py::arg("steps") = 100,
        py::arg("box") = true, py::arg("seed") = 0, py::arg("model") = py::none());

  // --- restoration ---------------------------------------------------------
  m.def("init_noise",
        [](int width, int height, std::uint64_t seed) {
          return to_array(init_noise(width, height, seed));
        },
        py::arg("width"), py::arg("height"), py::arg("seed") = 0);
  m.def("compression_proxy",
        [](const NpPlane& img) { return to_array(compression_proxy(to_plane(img))); },
        py::arg("image"));
  m.def("restore",
        [](const NpPlane& r, const NpPlane& init, const std::string& target, double lr,
           const std::string& stop, double threshold, double conv_tol, int conv_window,
           int max_steps, std::uint64_t seed, const py::object& model) {
          RestoreConfig cfg;
          cfg.target = target_from_string(target);
          cfg.lr = lr;
          if (stop == "threshold")
            cfg.stop_mode = StopMode::Threshold;
          else if (stop == "convergence")
            cfg.stop_mode = StopMode::Convergence;
          else
            throw ConfigError("unknown stop mode: " + stop);
          cfg.threshold = threshold;
          cfg.conv_tol = conv_tol;
          cfg.conv_window = conv_window;
          cfg.max_steps = max_steps;
          cfg.seed = seed;
          auto [img, trace] = restore(to_plane(r), to_plane(init), cfg, model_from_obj(model));
          std::vector<double> scores;
          scores.reserve(trace.points.size());
          for (const TracePoint& p : trace.points) scores.push_back(p.score);
          py::dict t;
          t["scores"] = scores;
          t["reached_threshold"] = trace.reached_threshold;
          t["hit_max_steps"] = trace.hit_max_steps;
          return py::make_tuple(to_array(img), t);
        },
        py::arg("ref"), py::arg("init"), py::arg("target") = "fused", py::arg("lr") = 0.5,
        py::arg("stop") = "threshold", py::arg("threshold") = -1.0,
        py::arg("conv_tol") = 1e-4, py::arg("conv_window") = 50, py::arg("max_steps") = 5000,
        py::arg("seed") = 0, py::arg("model") = py::none());

  // --- analysis ------------------------------------------------------------
  m.def("power_spectrum",
        [](const NpPlane& img, int patches, int patch, std::uint64_t seed) {
          SpectrumCurve c = power_spectrum_1d(to_plane(img), patches, patch, seed);
          py::dict out;
          out["freq"] = c.freq;
          out["power"] = c.power;
          out["n_patches"] = c.n_patches;
          out["patch_size"] = c.patch_size;
          return out;
        },
        py::arg("image"), py::arg("patches") = 100, py::arg("patch") = 256,
        py::arg("seed") = 0);
  m.def("spectral_slope",
        [](const std::vector<double>& freq, const std::vector<double>& power, double f_lo,
           double f_hi) {
          SpectrumCurve c;
          c.freq = freq;
          c.power = power;
          return spectral_slope(c, f_lo, f_hi);
        },
        py::arg("freq"), py::arg("power"), py::arg("f_lo") = 0.02, py::arg("f_hi") = 0.4);
  m.def("edge_mask",
        [](const NpPlane& img, double k) { return to_array(edge_mask(to_plane(img), k)); },
        py::arg("image"), py::arg("k") = 1.0);
  m.def("brightness_curve",
        [](const NpPlane& r, const NpPlane& delta, const py::object& mask) {
          BrightnessCurve c;
          if (mask.is_none()) {
            c = brightness_delta_curve(to_plane(r), to_plane(delta), nullptr);
          } else {
            ImagePlane mp = to_plane(mask.cast<NpPlane>());
            c = brightness_delta_curve(to_plane(r), to_plane(delta), &mp);
          }
          py::dict out;
          out["intensity"] = c.intensity;
          out["mean"] = c.mean_delta;
          out["meanabs"] = c.mean_abs_delta;
          out["std"] = c.std_delta;
          out["count"] = c.count;
          return out;
        },
        py::arg("ref"), py::arg("delta"), py::arg("mask") = py::none());

  // --- baselines -----------------------------------------------------------
  m.def("unsharp_mask",
        [](const NpPlane& img, double amount) {
          return to_array(unsharp_mask(to_plane(img), amount));
        },
        py::arg("image"), py::arg("amount"));
  m.def("clahe",
        [](const NpPlane& img, int tiles_x, int tiles_y, double clip_limit) {
          return to_array(clahe(to_plane(img), tiles_x, tiles_y, clip_limit));
        },
        py::arg("image"), py::arg("tiles_x") = 8, py::arg("tiles_y") = 8,
        py::arg("clip_limit") = 4.0);
  m.def("gamma_correct",
        [](const NpPlane& img, double gamma) {
          return to_array(gamma_correct(to_plane(img), gamma));
        },
        py::arg("image"), py::arg("gamma"));

  // --- gradient suite ------------------------------------------------------
  m.def("gradient_suite",
        [](int pairs, std::uint64_t seed, double h) {
          py::list out;
          for (const GradCheckCase& c : run_gradient_suite(pairs, seed, h)) {
            py::dict d;
            d["metric"] = c.metric;
            d["size"] = c.size;
            d["max_rel_error"] = c.max_rel_error;
            out.append(d);
          }
          return out;
        },
        py::arg("pairs") = 5, py::arg("seed") = 1, py::arg("h") = 1e-3);
}
