#include "diffiq/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "diffiq/errors.hpp"
#include "diffiq/filter.hpp"

namespace diffiq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Window side for scale s: 17, 9, 5, 3.
int vif_window(int s) { return (1 << (4 - s)) + 1; }

Var sep_correlate(Tape& t, Var v, const std::vector<double>& k) {
  return t.correlate(t.correlate(v, kernel_row(k)), kernel_col(k));
}

// One blur+decimate stage entering scale j (window of that scale).
Var vif_stage(Tape& t, Var v, int j) {
  const int n = vif_window(j);
  return t.down2(sep_correlate(t, v, gaussian_kernel_1d(n, n / 5.0)));
}

struct VifSums {
  Var num, den;
};

// Windowed statistics and the two log-sums for one scale. x, y are the
// (possibly pre-staged) reference and distorted maps.
VifSums vif_stats(Tape& t, Var x, Var y, int n_win, const VifGuards& g) {
  const std::vector<double> k = gaussian_kernel_1d(n_win, n_win / 5.0);
  Var mu1 = sep_correlate(t, x, k);
  Var mu2 = sep_correlate(t, y, k);
  Var s11 = t.clamp(t.sub(sep_correlate(t, t.square(x), k), t.square(mu1)), 0.0, kInf);
  Var s22 = t.clamp(t.sub(sep_correlate(t, t.square(y), k), t.square(mu2)), 0.0, kInf);
  Var s12 = t.sub(sep_correlate(t, t.mul(x, y), k), t.mul(mu1, mu2));

  // Low-energy windows are excluded from the numerator; the decision is made
  // on forward values and enters the graph as a constant mask.
  const std::vector<double>& v11 = t.value(s11);
  const std::vector<double>& v22 = t.value(s22);
  ImagePlane m(t.width(s11), t.height(s11));
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data[i] = (v11[i] >= g.sigma_floor && v22[i] >= g.sigma_floor) ? 1.0 : 0.0;
  Var mask = t.constant(m);

  Var gain = t.mul(t.clamp(t.div(s12, t.add_scalar(s11, g.sigma_floor)), 0.0, kInf), mask);
  Var sv = t.clamp(t.sub(s22, t.mul(gain, s12)), g.sigma_floor, kInf);
  Var num = t.sum(t.log(t.add_scalar(
      t.div(t.mul(t.square(gain), s11), t.add_scalar(sv, g.noise_var)), 1.0)));
  Var den = t.sum(t.log(t.add_scalar(t.mul_scalar(s11, 1.0 / g.noise_var), 1.0)));
  return {num, den};
}

Var vif_ratio(Tape& t, const VifSums& s) {
  // Fully flat reference: no informative windows, fidelity is 1 by convention.
  if (t.scalar(s.den) < 1e-12) return t.constant_scalar(1.0);
  return t.div(s.num, s.den);
}

// Returns the map side after `stages` blur+decimate stages, or -1 if the
// chain runs out of pixels.
int staged_side(int side, int stages) {
  for (int j = 1; j <= stages; ++j) {
    side -= vif_window(j) - 1;
    if (side <= 0) return -1;
    side = (side + 1) / 2;
  }
  return side;
}

void check_vif_size(const char* who, int w, int h, int s) {
  const int sw = staged_side(w, s);
  const int sh = staged_side(h, s);
  if (sw < vif_window(s) || sh < vif_window(s))
    throw ShapeError(std::string(who) + ": image " + std::to_string(w) + "x" +
                     std::to_string(h) + " too small for scale " + std::to_string(s) +
                     " (min side " + std::to_string(vif_min_side(s)) + ")");
}

}  // namespace

int vif_min_side(int s) {
  for (int side = vif_window(s);; ++side)
    if (staged_side(side, s) >= vif_window(s)) return side;
}

Var vif_scale_node(Tape& t, Var r, Var d, int s, const VifGuards& guards) {
  if (s < 0 || s > 3) throw NumericError("vif_scale: scale must be in 0..3");
  if (t.width(r) != t.width(d) || t.height(r) != t.height(d))
    throw ShapeError("vif_scale: shape mismatch");
  check_vif_size("vif_scale", t.width(r), t.height(r), s);
  Var x = r;
  Var y = d;
  for (int j = 1; j <= s; ++j) {
    x = vif_stage(t, x, j);
    y = vif_stage(t, y, j);
  }
  return vif_ratio(t, vif_stats(t, x, y, vif_window(s), guards));
}

Var adm_node(Tape& t, Var r, Var d) {
  if (t.width(r) != t.width(d) || t.height(r) != t.height(d))
    throw ShapeError("adm: shape mismatch");
  const int h = t.height(r);
  const int w = t.width(r);
  if (h < 16 || w < 16)
    throw ShapeError("adm: image " + std::to_string(w) + "x" + std::to_string(h) +
                     " smaller than 16x16");
  const int h16 = h - h % 16;
  const int w16 = w - w % 16;
  if (h16 != h || w16 != w) {
    r = t.crop(r, (h - h16) / 2, (w - w16) / 2, h16, w16);
    d = t.crop(d, (h - h16) / 2, (w - w16) / 2, h16, w16);
  }

  Var lo = r;
  Var ld = d;
  std::vector<Var> st_terms, so_terms;
  for (int level = 0; level < 4; ++level) {
    const Var bands_o[3] = {t.haar_lh(lo), t.haar_hl(lo), t.haar_hh(lo)};
    const Var bands_d[3] = {t.haar_lh(ld), t.haar_hl(ld), t.haar_hh(ld)};
    for (int b = 0; b < 3; ++b) {
      Var o = bands_o[b];
      Var dd = bands_d[b];
      // Coefficients with |o| below threshold contribute no restored detail;
      // the masked denominator avoids forming d/0 eagerly.
      const std::vector<double>& ov = t.value(o);
      ImagePlane m(t.width(o), t.height(o));
      ImagePlane inv(t.width(o), t.height(o));
      for (std::size_t i = 0; i < m.size(); ++i) {
        const bool on = std::fabs(ov[i]) >= 1e-12;
        m.data[i] = on ? 1.0 : 0.0;
        inv.data[i] = on ? 0.0 : 1.0;
      }
      Var o_safe = t.add(t.mul(o, t.constant(m)), t.constant(inv));
      Var restored = t.mul(t.mul(t.clamp(t.div(dd, o_safe), 0.0, 1.0), o), t.constant(m));
      st_terms.push_back(t.pow(t.sum(t.pow(t.abs(restored), 3.0)), 1.0 / 3.0));
      so_terms.push_back(t.pow(t.sum(t.pow(t.abs(o), 3.0)), 1.0 / 3.0));
    }
    if (level < 3) {
      lo = t.haar_ll(lo);
      ld = t.haar_ll(ld);
    }
  }

  Var st = st_terms[0];
  Var so = so_terms[0];
  for (std::size_t i = 1; i < st_terms.size(); ++i) {
    st = t.add(st, st_terms[i]);
    so = t.add(so, so_terms[i]);
  }
  if (t.scalar(so) < 1e-12) return t.constant_scalar(1.0);
  return t.div(st, so);
}

Var mse_node(Tape& t, Var r, Var d) { return t.mean(t.square(t.sub(r, d))); }

Var psnr_node(Tape& t, Var r, Var d) {
  Var m = mse_node(t, r, d);
  return t.mul_scalar(t.log(t.div(t.constant_scalar(255.0 * 255.0), m)),
                      10.0 / std::log(10.0));
}

Var fused_node(Tape& t, Var r, Var d, const FusionModel& model, const VifGuards& guards) {
  if (t.width(r) != t.width(d) || t.height(r) != t.height(d))
    throw ShapeError("fused: shape mismatch");
  check_vif_size("fused", t.width(r), t.height(r), 3);
  Var x = r;
  Var y = d;
  std::array<Var, 4> vifs;
  vifs[0] = vif_ratio(t, vif_stats(t, x, y, vif_window(0), guards));
  for (int s = 1; s <= 3; ++s) {
    x = vif_stage(t, x, s);
    y = vif_stage(t, y, s);
    vifs[s] = vif_ratio(t, vif_stats(t, x, y, vif_window(s), guards));
  }
  Var admv = adm_node(t, r, d);

  Var acc = t.mul_scalar(vifs[0], model.weights[0]);
  for (int s = 1; s <= 3; ++s) acc = t.add(acc, t.mul_scalar(vifs[s], model.weights[s]));
  acc = t.add(acc, t.mul_scalar(admv, model.weights[4]));
  // Motion is identically 0 for still images; its weighted term vanishes.
  acc = t.add_scalar(acc, model.intercept);
  if (model.clip_enabled) acc = t.clamp(acc, 0.0, 100.0);
  return acc;
}

FusionModel default_fusion_model() { return FusionModel{}; }

double mse(const ImagePlane& r, const ImagePlane& d) {
  if (!r.same_shape(d)) throw ShapeError("mse: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double e = r.data[i] - d.data[i];
    s += e * e;
  }
  return s / static_cast<double>(r.size());
}

double psnr(const ImagePlane& r, const ImagePlane& d) {
  const double m = mse(r, d);
  if (m == 0.0) return kInf;
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

double vif_scale(const ImagePlane& r, const ImagePlane& d, int s, const VifGuards& guards) {
  Tape t;
  return t.scalar(vif_scale_node(t, t.constant(r), t.constant(d), s, guards));
}

double adm(const ImagePlane& r, const ImagePlane& d) {
  Tape t;
  return t.scalar(adm_node(t, t.constant(r), t.constant(d)));
}

double motion(const ImagePlane* prev, const ImagePlane& ref) {
  if (prev == nullptr) return 0.0;
  if (!prev->same_shape(ref)) throw ShapeError("motion: shape mismatch");
  const std::vector<double> k = gaussian_kernel_1d(5, 1.0);
  const ImagePlane a = correlate_sep_valid(*prev, k);
  const ImagePlane b = correlate_sep_valid(ref, k);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.size());
}

FeatureVector extract_features(const ImagePlane& r, const ImagePlane& d,
                               const VifGuards& guards) {
  if (!r.same_shape(d)) throw ShapeError("extract_features: shape mismatch");
  check_vif_size("extract_features", r.width, r.height, 3);
  Tape t;
  Var vr = t.constant(r);
  Var vd = t.constant(d);
  FeatureVector f;
  Var x = vr;
  Var y = vd;
  f.vif0 = t.scalar(vif_ratio(t, vif_stats(t, x, y, vif_window(0), guards)));
  double* slots[3] = {&f.vif1, &f.vif2, &f.vif3};
  for (int s = 1; s <= 3; ++s) {
    x = vif_stage(t, x, s);
    y = vif_stage(t, y, s);
    *slots[s - 1] = t.scalar(vif_ratio(t, vif_stats(t, x, y, vif_window(s), guards)));
  }
  f.adm = t.scalar(adm_node(t, vr, vd));
  f.motion = 0.0;
  return f;
}

double fused_score(const FeatureVector& f, const FusionModel& model) {
  double s = model.weights[0] * f.vif0;
  s += model.weights[1] * f.vif1;
  s += model.weights[2] * f.vif2;
  s += model.weights[3] * f.vif3;
  s += model.weights[4] * f.adm;
  s += model.weights[5] * f.motion;
  s += model.intercept;
  if (model.clip_enabled) s = std::min(100.0, std::max(0.0, s));
  return s;
}

ImagePlane score_gradient(const ImagePlane& r, const ImagePlane& d, const FusionModel& model) {
  return score_and_gradient(r, d, model).gradient;
}

ScoreAndGradient score_and_gradient(const ImagePlane& r, const ImagePlane& d,
                                    const FusionModel& model) {
  Tape t;
  Var vr = t.constant(r);
  Var vd = t.input(d);
  Var s = fused_node(t, vr, vd, model);
  t.backward(s);
  return {t.scalar(s), t.adjoint(vd)};
}

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

FusionModel load_fusion_model(const std::string& text) {
  static const char* kKeys[8] = {"w_vif0", "w_vif1", "w_vif2",   "w_vif3",
                                 "w_adm",  "w_motion", "intercept", "clip"};
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("fusion model line " + std::to_string(lineno) + ": missing '='");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known)
      throw FormatError("fusion model line " + std::to_string(lineno) + ": unknown key '" +
                        key + "'");
    if (kv.count(key))
      throw FormatError("fusion model line " + std::to_string(lineno) + ": duplicate key '" +
                        key + "'");
    kv[key] = val;
  }
  for (const char* k : kKeys)
    if (!kv.count(k)) throw FormatError(std::string("fusion model: missing key '") + k + "'");

  FusionModel m;
  const auto parse_num = [&](const char* key) {
    const std::string& v = kv[key];
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      throw FormatError(std::string("fusion model: non-numeric value for '") + key + "': " + v);
    }
    if (used != v.size() || !std::isfinite(x))
      throw FormatError(std::string("fusion model: non-numeric value for '") + key + "': " + v);
    return x;
  };
  for (int i = 0; i < 6; ++i) m.weights[i] = parse_num(kKeys[i]);
  m.intercept = parse_num("intercept");
  const std::string& clip = kv["clip"];
  if (clip == "true")
    m.clip_enabled = true;
  else if (clip == "false")
    m.clip_enabled = false;
  else
    throw FormatError("fusion model: clip must be 'true' or 'false', got '" + clip + "'");
  return m;
}

std::string save_fusion_model(const FusionModel& m) {
  static const char* kNumKeys[7] = {"w_vif0", "w_vif1", "w_vif2",   "w_vif3",
                                    "w_adm",  "w_motion", "intercept"};
  const double vals[7] = {m.weights[0], m.weights[1], m.weights[2], m.weights[3],
                          m.weights[4], m.weights[5], m.intercept};
  std::string out;
  char buf[64];
  for (int i = 0; i < 7; ++i) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", kNumKeys[i], vals[i]);
    out += buf;
  }
  out += std::string("clip = ") + (m.clip_enabled ? "true" : "false") + "\n";
  return out;
}

FusionModel load_fusion_model_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open fusion model file: " + path);
  std::string text;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, n);
  std::fclose(f);
  try {
    return load_fusion_model(text);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace diffiq
