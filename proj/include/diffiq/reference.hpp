#pragma once

// Reference implementations of the metric forwards, templated on the scalar
// type and independent of the tape and the separable filter code (windows are
// accumulated directly from 2-D weights). They act as a value oracle, and
// instantiated with long double they give finite differences a far lower
// noise floor than the production evaluator.
//
// The evaluator classes freeze everything derived from the reference image at
// construction, so repeated evaluations against probe images only pay for the
// distorted-side work. VIF scale 0 additionally supports single-pixel probe
// evaluation against a captured baseline: a probe touches at most window^2
// statistics windows, and only those windows are recomputed (from exactly
// updated sums, with every guard branch re-decided).

#include <cmath>
#include <vector>

#include "diffiq/errors.hpp"
#include "diffiq/image.hpp"
#include "diffiq/metrics.hpp"

namespace diffiq {
namespace refimpl {

template <typename T>
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, T(0)) {}

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  T at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

template <typename T>
Plane<T> from_image(const ImagePlane& img) {
  Plane<T> p(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) p.data[i] = static_cast<T>(img.data[i]);
  return p;
}

template <typename T>
std::vector<T> gauss1d(int n, T sigma) {
  std::vector<T> k(static_cast<std::size_t>(n));
  const int half = n / 2;
  T s = T(0);
  for (int i = 0; i < n; ++i) {
    const T x = T(i - half);
    k[static_cast<std::size_t>(i)] = std::exp(-x * x / (T(2) * sigma * sigma));
    s += k[static_cast<std::size_t>(i)];
  }
  for (T& v : k) v /= s;
  return k;
}

// Valid-mode correlation with the outer product of a 1-D kernel, evaluated as
// one flat 2-D accumulation per output pixel.
template <typename T>
Plane<T> correlate2d(const Plane<T>& img, const std::vector<T>& k) {
  const int n = static_cast<int>(k.size());
  if (img.width < n || img.height < n) throw ShapeError("ref correlate2d: image too small");
  Plane<T> out(img.width - n + 1, img.height - n + 1);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      T acc = T(0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          acc += k[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(j)] *
                 img.at(r + i, c + j);
      out.at(r, c) = acc;
    }
  }
  return out;
}

template <typename T>
Plane<T> down2(const Plane<T>& p) {
  Plane<T> out((p.width + 1) / 2, (p.height + 1) / 2);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) out.at(r, c) = p.at(2 * r, 2 * c);
  return out;
}

inline int ref_vif_window(int s) { return (1 << (4 - s)) + 1; }

// Windowed VIF statistics for one map, with the reference side frozen.
template <typename T>
class VifStatsRef {
 public:
  VifStatsRef() = default;

  VifStatsRef(const Plane<T>& x, int n_win, const VifGuards& g)
      : n_(n_win),
        floor_(static_cast<T>(g.sigma_floor)),
        noise_(static_cast<T>(g.noise_var)),
        x_(x) {
    out_h_ = x.height - n_win + 1;
    out_w_ = x.width - n_win + 1;
    if (out_h_ < 1 || out_w_ < 1) throw ShapeError("ref vif stats: map smaller than window");
    const std::vector<T> k = gauss1d<T>(n_win, T(n_win) / T(5));
    w2d_.resize(static_cast<std::size_t>(n_win) * n_win);
    for (int i = 0; i < n_win; ++i)
      for (int j = 0; j < n_win; ++j)
        w2d_[static_cast<std::size_t>(i) * n_win + j] =
            k[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(j)];

    const std::size_t n_windows = static_cast<std::size_t>(out_h_) * out_w_;
    mu1_.resize(n_windows);
    s11_.resize(n_windows);
    live_x_.resize(n_windows);
    den_ = T(0);
    for (int r = 0; r < out_h_; ++r) {
      for (int c = 0; c < out_w_; ++c) {
        T mu = T(0), e = T(0);
        for (int i = 0; i < n_win; ++i)
          for (int j = 0; j < n_win; ++j) {
            const T w = w2d_[static_cast<std::size_t>(i) * n_win + j];
            const T a = x.at(r + i, c + j);
            mu += w * a;
            e += w * a * a;
          }
        T s11 = e - mu * mu;
        if (s11 < T(0)) s11 = T(0);
        const std::size_t wi = static_cast<std::size_t>(r) * out_w_ + c;
        mu1_[wi] = mu;
        s11_[wi] = s11;
        live_x_[wi] = s11 >= floor_ ? 1 : 0;
        den_ += std::log(T(1) + s11 / noise_);
      }
    }
  }

  T den_sum() const { return den_; }

  T num(const Plane<T>& y) const {
    T acc = T(0);
    for (int r = 0; r < out_h_; ++r)
      for (int c = 0; c < out_w_; ++c) acc += window_term(y, r, c, nullptr, nullptr, nullptr);
    return acc;
  }

  // Remembers the per-window sums and terms of a baseline distorted map.
  void capture(const Plane<T>& y) {
    const std::size_t n_windows = static_cast<std::size_t>(out_h_) * out_w_;
    mu2_.resize(n_windows);
    e22_.resize(n_windows);
    e12_.resize(n_windows);
    term_.resize(n_windows);
    num_base_ = T(0);
    for (int r = 0; r < out_h_; ++r)
      for (int c = 0; c < out_w_; ++c) {
        const std::size_t wi = static_cast<std::size_t>(r) * out_w_ + c;
        term_[wi] = window_term(y, r, c, &mu2_[wi], &e22_[wi], &e12_[wi]);
        num_base_ += term_[wi];
      }
  }

  T num_base() const { return num_base_; }

  // Change in the numerator when baseline pixel (pr, pc) moves by delta; only
  // the windows containing that pixel are re-derived, from exactly updated
  // sums.
  T num_delta(const Plane<T>& y_base, int pr, int pc, T delta) const {
    const T b = y_base.at(pr, pc);
    const T a = x_.at(pr, pc);
    const int r_lo = pr - n_ + 1 > 0 ? pr - n_ + 1 : 0;
    const int r_hi = pr < out_h_ - 1 ? pr : out_h_ - 1;
    const int c_lo = pc - n_ + 1 > 0 ? pc - n_ + 1 : 0;
    const int c_hi = pc < out_w_ - 1 ? pc : out_w_ - 1;
    T acc = T(0);
    for (int r = r_lo; r <= r_hi; ++r) {
      for (int c = c_lo; c <= c_hi; ++c) {
        const std::size_t wi = static_cast<std::size_t>(r) * out_w_ + c;
        const T w = w2d_[static_cast<std::size_t>(pr - r) * n_ + (pc - c)];
        const T mu2 = mu2_[wi] + w * delta;
        const T e22 = e22_[wi] + w * delta * (T(2) * b + delta);
        const T e12 = e12_[wi] + w * a * delta;
        acc += stats_term(wi, mu2, e22, e12) - term_[wi];
      }
    }
    return acc;
  }

 private:
  // One window's numerator term; optionally exports the raw sums.
  T window_term(const Plane<T>& y, int r, int c, T* out_mu2, T* out_e22, T* out_e12) const {
    T mu2 = T(0), e22 = T(0), e12 = T(0);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        const T w = w2d_[static_cast<std::size_t>(i) * n_ + j];
        const T b = y.at(r + i, c + j);
        mu2 += w * b;
        e22 += w * b * b;
        e12 += w * x_.at(r + i, c + j) * b;
      }
    if (out_mu2) *out_mu2 = mu2;
    if (out_e22) *out_e22 = e22;
    if (out_e12) *out_e12 = e12;
    return stats_term(static_cast<std::size_t>(r) * out_w_ + c, mu2, e22, e12);
  }

  T stats_term(std::size_t wi, T mu2, T e22, T e12) const {
    T s22 = e22 - mu2 * mu2;
    if (s22 < T(0)) s22 = T(0);
    const T s12 = e12 - mu1_[wi] * mu2;
    T gain = T(0);
    if (live_x_[wi] && s22 >= floor_) {
      gain = s12 / (s11_[wi] + floor_);
      if (gain < T(0)) gain = T(0);
    }
    T sv = s22 - gain * s12;
    if (sv < floor_) sv = floor_;
    return std::log(T(1) + gain * gain * s11_[wi] / (sv + noise_));
  }

  int n_ = 0, out_h_ = 0, out_w_ = 0;
  T floor_ = T(0), noise_ = T(0);
  Plane<T> x_;
  std::vector<T> w2d_, mu1_, s11_;
  std::vector<char> live_x_;
  T den_ = T(0);
  // capture state
  std::vector<T> mu2_, e22_, e12_, term_;
  T num_base_ = T(0);
};

template <typename T>
class VifScaleRef {
 public:
  VifScaleRef(const Plane<T>& r, int s, const VifGuards& g = VifGuards{})
      : scale_(s), width_(r.width), height_(r.height) {
    if (s < 0 || s > 3) throw NumericError("ref vif_scale: scale must be in 0..3");
    Plane<T> x = r;
    for (int j = 1; j <= s; ++j) {
      const int n = ref_vif_window(j);
      kernels_.push_back(gauss1d<T>(n, T(n) / T(5)));
      x = down2(correlate2d(x, kernels_.back()));
    }
    stats_ = VifStatsRef<T>(x, ref_vif_window(s), g);
  }

  T eval(const Plane<T>& d) const {
    if (d.width != width_ || d.height != height_)
      throw ShapeError("ref vif_scale: shape mismatch");
    Plane<T> y = d;
    for (const auto& k : kernels_) y = down2(correlate2d(y, k));
    if (stats_.den_sum() < T(1e-12)) return T(1);
    return stats_.num(y) / stats_.den_sum();
  }

  // Probe interface, scale 0 only (no decimation between pixel and window).
  void capture(const Plane<T>& d) {
    if (scale_ != 0) throw ConfigError("ref vif_scale: capture only supports scale 0");
    stats_.capture(d);
  }

  T eval_probed(const Plane<T>& d_base, int pr, int pc, T delta) const {
    if (stats_.den_sum() < T(1e-12)) return T(1);
    return (stats_.num_base() + stats_.num_delta(d_base, pr, pc, delta)) / stats_.den_sum();
  }

 private:
  int scale_ = 0, width_ = 0, height_ = 0;
  std::vector<std::vector<T>> kernels_;
  VifStatsRef<T> stats_;
};

template <typename T>
class AdmRef {
 public:
  explicit AdmRef(const Plane<T>& r) : width_(r.width), height_(r.height) {
    if (r.width < 16 || r.height < 16) throw ShapeError("ref adm: smaller than 16x16");
    h16_ = r.height - r.height % 16;
    w16_ = r.width - r.width % 16;
    r0_ = (r.height - h16_) / 2;
    c0_ = (r.width - w16_) / 2;
    Plane<T> lo = crop_center(r);
    so_ = T(0);
    for (int level = 0; level < 4; ++level) {
      for (int b = 0; b < 3; ++b) {
        bands_[static_cast<std::size_t>(level) * 3 + b] = haar_band(lo, b + 1);
        so_ += band_energy(bands_[static_cast<std::size_t>(level) * 3 + b]);
      }
      if (level < 3) lo = haar_band(lo, 0);
    }
  }

  T eval(const Plane<T>& d) const {
    if (d.width != width_ || d.height != height_) throw ShapeError("ref adm: shape mismatch");
    if (so_ < T(1e-12)) return T(1);
    Plane<T> ld = crop_center(d);
    T st = T(0);
    for (int level = 0; level < 4; ++level) {
      for (int b = 0; b < 3; ++b) {
        const Plane<T> dband = haar_band(ld, b + 1);
        const Plane<T>& o = bands_[static_cast<std::size_t>(level) * 3 + b];
        T s = T(0);
        for (std::size_t i = 0; i < o.data.size(); ++i) {
          if (std::abs(o.data[i]) >= T(1e-12)) {
            T ratio = dband.data[i] / o.data[i];
            if (ratio < T(0)) ratio = T(0);
            if (ratio > T(1)) ratio = T(1);
            const T t = std::abs(ratio * o.data[i]);
            s += t * t * t;
          }
        }
        st += std::pow(s, T(1) / T(3));
      }
      if (level < 3) ld = haar_band(ld, 0);
    }
    return st / so_;
  }

 private:
  Plane<T> crop_center(const Plane<T>& p) const {
    Plane<T> out(w16_, h16_);
    for (int r = 0; r < h16_; ++r)
      for (int c = 0; c < w16_; ++c) out.at(r, c) = p.at(r0_ + r, c0_ + c);
    return out;
  }

  // band 0 = LL, 1 = LH, 2 = HL, 3 = HH (sign patterns over the 2x2 block).
  static Plane<T> haar_band(const Plane<T>& p, int band) {
    static const int kSigns[4][4] = {
        {1, 1, 1, 1}, {1, 1, -1, -1}, {1, -1, 1, -1}, {1, -1, -1, 1}};
    const int* s = kSigns[band];
    Plane<T> out(p.width / 2, p.height / 2);
    for (int r = 0; r < out.height; ++r)
      for (int c = 0; c < out.width; ++c)
        out.at(r, c) =
            T(0.5) * (T(s[0]) * p.at(2 * r, 2 * c) + T(s[1]) * p.at(2 * r, 2 * c + 1) +
                      T(s[2]) * p.at(2 * r + 1, 2 * c) + T(s[3]) * p.at(2 * r + 1, 2 * c + 1));
    return out;
  }

  static T band_energy(const Plane<T>& band) {
    T s = T(0);
    for (const T& v : band.data) {
      const T a = std::abs(v);
      s += a * a * a;
    }
    return std::pow(s, T(1) / T(3));
  }

  int width_ = 0, height_ = 0, h16_ = 0, w16_ = 0, r0_ = 0, c0_ = 0;
  Plane<T> bands_[12];
  T so_ = T(0);
};

template <typename T>
class FusedRef {
 public:
  FusedRef(const Plane<T>& r, const FusionModel& m, const VifGuards& g = VifGuards{})
      : model_(m), adm_(r), width_(r.width), height_(r.height) {
    Plane<T> x = r;
    stats_[0] = VifStatsRef<T>(x, ref_vif_window(0), g);
    for (int s = 1; s <= 3; ++s) {
      const int n = ref_vif_window(s);
      kernels_[static_cast<std::size_t>(s) - 1] = gauss1d<T>(n, T(n) / T(5));
      x = down2(correlate2d(x, kernels_[static_cast<std::size_t>(s) - 1]));
      stats_[static_cast<std::size_t>(s)] = VifStatsRef<T>(x, n, g);
    }
  }

  T eval(const Plane<T>& d) const {
    if (d.width != width_ || d.height != height_) throw ShapeError("ref fused: shape mismatch");
    Plane<T> y = d;
    T acc = static_cast<T>(model_.weights[0]) * scale_value(0, y);
    for (int s = 1; s <= 3; ++s) {
      y = down2(correlate2d(y, kernels_[static_cast<std::size_t>(s) - 1]));
      acc += static_cast<T>(model_.weights[static_cast<std::size_t>(s)]) * scale_value(s, y);
    }
    acc += static_cast<T>(model_.weights[4]) * adm_.eval(d);
    acc += static_cast<T>(model_.intercept);
    return clip(acc);
  }

  void capture(const Plane<T>& d) { stats_[0].capture(d); }

  // `probed` must equal `base` except at (pr, pc), where it holds base+delta.
  T eval_probed(const Plane<T>& probed, const Plane<T>& base, int pr, int pc, T delta) const {
    T v0;
    if (stats_[0].den_sum() < T(1e-12))
      v0 = T(1);
    else
      v0 = (stats_[0].num_base() + stats_[0].num_delta(base, pr, pc, delta)) /
           stats_[0].den_sum();
    T acc = static_cast<T>(model_.weights[0]) * v0;
    Plane<T> y = probed;
    for (int s = 1; s <= 3; ++s) {
      y = down2(correlate2d(y, kernels_[static_cast<std::size_t>(s) - 1]));
      acc += static_cast<T>(model_.weights[static_cast<std::size_t>(s)]) * scale_value(s, y);
    }
    acc += static_cast<T>(model_.weights[4]) * adm_.eval(probed);
    acc += static_cast<T>(model_.intercept);
    return clip(acc);
  }

 private:
  T scale_value(int s, const Plane<T>& y) const {
    const VifStatsRef<T>& st = stats_[static_cast<std::size_t>(s)];
    if (st.den_sum() < T(1e-12)) return T(1);
    return st.num(y) / st.den_sum();
  }

  T clip(T acc) const {
    if (!model_.clip_enabled) return acc;
    if (acc < T(0)) return T(0);
    if (acc > T(100)) return T(100);
    return acc;
  }

  FusionModel model_;
  AdmRef<T> adm_;
  int width_ = 0, height_ = 0;
  VifStatsRef<T> stats_[4];
  std::vector<T> kernels_[3];
};

// One-shot conveniences (value-oracle use).
template <typename T>
T vif_scale(const Plane<T>& r, const Plane<T>& d, int s, const VifGuards& g = VifGuards{}) {
  return VifScaleRef<T>(r, s, g).eval(d);
}

template <typename T>
T adm(const Plane<T>& r, const Plane<T>& d) {
  return AdmRef<T>(r).eval(d);
}

template <typename T>
T fused(const Plane<T>& r, const Plane<T>& d, const FusionModel& m,
        const VifGuards& g = VifGuards{}) {
  return FusedRef<T>(r, m, g).eval(d);
}

template <typename T>
T mse(const Plane<T>& r, const Plane<T>& d) {
  if (r.width != d.width || r.height != d.height) throw ShapeError("ref mse: shape mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const T e = r.data[i] - d.data[i];
    s += e * e;
  }
  return s / T(r.data.size());
}

}  // namespace refimpl
}  // namespace diffiq
