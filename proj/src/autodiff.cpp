#include "diffiq/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffiq/errors.hpp"

namespace diffiq {

namespace {

// Compensated (Kahan) summation keeps the reduction error near one ulp; the
// metric numer/denom sums feed finite-difference checks that are sensitive to
// the reduction noise floor.
double kahan_sum(const std::vector<double>& v) {
  double s = 0.0, c = 0.0;
  for (const double x : v) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

}  // namespace

Var Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(Var a, Var b, const char* who) const {
  const Node& na = at(a);
  const Node& nb = at(b);
  if (na.width != nb.width || na.height != nb.height)
    throw ShapeError(std::string(who) + ": shape mismatch " + std::to_string(na.width) + "x" +
                     std::to_string(na.height) + " vs " + std::to_string(nb.width) + "x" +
                     std::to_string(nb.height));
}

Var Tape::input(const ImagePlane& img) {
  Node n;
  n.op = Op::Input;
  n.width = img.width;
  n.height = img.height;
  n.val = img.data;
  return push(std::move(n));
}

Var Tape::constant(const ImagePlane& img) {
  Node n;
  n.op = Op::Constant;
  n.width = img.width;
  n.height = img.height;
  n.val = img.data;
  return push(std::move(n));
}

Var Tape::constant_scalar(double v) {
  Node n;
  n.op = Op::Constant;
  n.width = 1;
  n.height = 1;
  n.val = {v};
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = Op::Add;
  n.a = a.index;
  n.b = b.index;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  const auto& vb = at(b).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] + vb[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a.index;
  n.b = b.index;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  const auto& vb = at(b).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] - vb[i];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.index;
  n.b = b.index;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  const auto& vb = at(b).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] * vb[i];
  return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
  check_same_shape(a, b, "div");
  Node n;
  n.op = Op::Div;
  n.a = a.index;
  n.b = b.index;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  const auto& vb = at(b).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] / vb[i];
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  Node n;
  n.op = Op::AddScalar;
  n.a = a.index;
  n.c0 = c;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] + c;
  return push(std::move(n));
}

Var Tape::mul_scalar(Var a, double c) {
  Node n;
  n.op = Op::MulScalar;
  n.a = a.index;
  n.c0 = c;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] * c;
  return push(std::move(n));
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::Log;
  n.a = a.index;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::log(va[i]);
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n;
  n.op = Op::Square;
  n.a = a.index;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = va[i] * va[i];
  return push(std::move(n));
}

Var Tape::abs(Var a) {
  Node n;
  n.op = Op::Abs;
  n.a = a.index;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::fabs(va[i]);
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  Node n;
  n.op = Op::Clamp;
  n.a = a.index;
  n.c0 = lo;
  n.c1 = hi;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  for (std::size_t i = 0; i < n.val.size(); ++i)
    n.val[i] = va[i] < lo ? lo : (va[i] > hi ? hi : va[i]);
  return push(std::move(n));
}

Var Tape::pow(Var a, double p) {
  if (!(p > 0.0)) throw NumericError("pow: exponent must be positive");
  Node n;
  n.op = Op::Pow;
  n.a = a.index;
  n.c0 = p;
  n.width = at(a).width;
  n.height = at(a).height;
  n.val.resize(at(a).val.size());
  const auto& va = at(a).val;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::pow(va[i], p);
  return push(std::move(n));
}

Var Tape::correlate(Var a, const ImagePlane& kernel) {
  const Node& na = at(a);
  if (kernel.height > na.height || kernel.width > na.width)
    throw ShapeError("correlate: kernel larger than image");
  Var k = constant(kernel);
  Node n;
  n.op = Op::Correlate;
  n.a = a.index;
  n.b = k.index;
  n.height = at(a).height - kernel.height + 1;
  n.width = at(a).width - kernel.width + 1;
  n.val.assign(static_cast<std::size_t>(n.width) * n.height, 0.0);
  const auto& va = at(a).val;
  const int aw = at(a).width;
  for (int r = 0; r < n.height; ++r) {
    for (int c = 0; c < n.width; ++c) {
      double s = 0.0;
      for (int i = 0; i < kernel.height; ++i) {
        const double* arow = &va[static_cast<std::size_t>(r + i) * aw + c];
        const double* krow = &kernel.data[static_cast<std::size_t>(i) * kernel.width];
        for (int j = 0; j < kernel.width; ++j) s += krow[j] * arow[j];
      }
      n.val[static_cast<std::size_t>(r) * n.width + c] = s;
    }
  }
  return push(std::move(n));
}

Var Tape::down2(Var a) {
  const Node& na = at(a);
  Node n;
  n.op = Op::Down2;
  n.a = a.index;
  n.height = (na.height + 1) / 2;
  n.width = (na.width + 1) / 2;
  n.val.resize(static_cast<std::size_t>(n.width) * n.height);
  for (int r = 0; r < n.height; ++r)
    for (int c = 0; c < n.width; ++c)
      n.val[static_cast<std::size_t>(r) * n.width + c] =
          na.val[static_cast<std::size_t>(2 * r) * na.width + 2 * c];
  return push(std::move(n));
}

namespace {

// Subband sign patterns over the 2x2 block (p00, p01, p10, p11), scaled by 1/2
// so the transform is orthonormal.
struct HaarSigns {
  double s00, s01, s10, s11;
};

HaarSigns haar_signs(Op op) {
  switch (op) {
    case Op::HaarLL: return {1, 1, 1, 1};
    case Op::HaarLH: return {1, 1, -1, -1};
    case Op::HaarHL: return {1, -1, 1, -1};
    default: return {1, -1, -1, 1};  // HaarHH
  }
}

}  // namespace

Var Tape::haar_band(Var a, Op op) {
  const Node& na = at(a);
  if (na.height % 2 != 0 || na.width % 2 != 0)
    throw ShapeError("haar: dimensions must be even");
  Node n;
  n.op = op;
  n.a = a.index;
  n.height = na.height / 2;
  n.width = na.width / 2;
  n.val.resize(static_cast<std::size_t>(n.width) * n.height);
  const HaarSigns s = haar_signs(op);
  for (int r = 0; r < n.height; ++r) {
    for (int c = 0; c < n.width; ++c) {
      const double* top = &na.val[static_cast<std::size_t>(2 * r) * na.width + 2 * c];
      const double* bot = &na.val[static_cast<std::size_t>(2 * r + 1) * na.width + 2 * c];
      n.val[static_cast<std::size_t>(r) * n.width + c] =
          0.5 * (s.s00 * top[0] + s.s01 * top[1] + s.s10 * bot[0] + s.s11 * bot[1]);
    }
  }
  return push(std::move(n));
}

Var Tape::haar_ll(Var a) { return haar_band(a, Op::HaarLL); }
Var Tape::haar_lh(Var a) { return haar_band(a, Op::HaarLH); }
Var Tape::haar_hl(Var a) { return haar_band(a, Op::HaarHL); }
Var Tape::haar_hh(Var a) { return haar_band(a, Op::HaarHH); }

Var Tape::crop(Var a, int r0, int c0, int h, int w) {
  const Node& na = at(a);
  if (r0 < 0 || c0 < 0 || h <= 0 || w <= 0 || r0 + h > na.height || c0 + w > na.width)
    throw ShapeError("crop outside bounds");
  Node n;
  n.op = Op::Crop;
  n.a = a.index;
  n.c0 = r0;
  n.c1 = c0;
  n.height = h;
  n.width = w;
  n.val.resize(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      n.val[static_cast<std::size_t>(r) * w + c] =
          na.val[static_cast<std::size_t>(r0 + r) * na.width + (c0 + c)];
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.a = a.index;
  n.width = 1;
  n.height = 1;
  n.val = {kahan_sum(at(a).val)};
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  Node n;
  n.op = Op::Mean;
  n.a = a.index;
  n.width = 1;
  n.height = 1;
  n.val = {kahan_sum(at(a).val) / static_cast<double>(at(a).val.size())};
  return push(std::move(n));
}

double Tape::scalar(Var v) const {
  const Node& n = at(v);
  if (n.width != 1 || n.height != 1) throw ShapeError("scalar: node is not 1x1");
  return n.val[0];
}

ImagePlane Tape::value_plane(Var v) const {
  const Node& n = at(v);
  ImagePlane out(n.width, n.height);
  out.data = n.val;
  return out;
}

void Tape::backward(Var output) {
  const Node& out = at(output);
  if (out.width != 1 || out.height != 1) throw ShapeError("backward: output is not scalar");

  // Mark ancestors of the output.
  std::vector<char> mark(nodes_.size(), 0);
  std::vector<int> stack{output.index};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    if (mark[i]) continue;
    mark[i] = 1;
    if (nodes_[i].a >= 0) stack.push_back(nodes_[i].a);
    if (nodes_[i].b >= 0) stack.push_back(nodes_[i].b);
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (mark[i])
      nodes_[i].adj.assign(nodes_[i].val.size(), 0.0);
    else
      nodes_[i].adj.clear();
  }
  nodes_[output.index].adj[0] = 1.0;

  // Reverse creation-order sweep: every marked node has all of its adjoint
  // contributions accumulated before its own VJP runs.
  for (int i = output.index; i >= 0; --i) {
    if (!mark[i]) continue;
    Node& n = nodes_[i];
    switch (n.op) {
      case Op::Input:
      case Op::Constant:
        break;
      case Op::Add: {
        auto& pa = nodes_[n.a].adj;
        auto& pb = nodes_[n.b].adj;
        for (std::size_t k = 0; k < n.adj.size(); ++k) {
          pa[k] += n.adj[k];
          pb[k] += n.adj[k];
        }
        break;
      }
      case Op::Sub: {
        auto& pa = nodes_[n.a].adj;
        auto& pb = nodes_[n.b].adj;
        for (std::size_t k = 0; k < n.adj.size(); ++k) {
          pa[k] += n.adj[k];
          pb[k] -= n.adj[k];
        }
        break;
      }
      case Op::Mul: {
        auto& pa = nodes_[n.a].adj;
        auto& pb = nodes_[n.b].adj;
        const auto& va = nodes_[n.a].val;
        const auto& vb = nodes_[n.b].val;
        for (std::size_t k = 0; k < n.adj.size(); ++k) {
          pa[k] += n.adj[k] * vb[k];
          pb[k] += n.adj[k] * va[k];
        }
        break;
      }
      case Op::Div: {
        auto& pa = nodes_[n.a].adj;
        auto& pb = nodes_[n.b].adj;
        const auto& va = nodes_[n.a].val;
        const auto& vb = nodes_[n.b].val;
        for (std::size_t k = 0; k < n.adj.size(); ++k) {
          pa[k] += n.adj[k] / vb[k];
          pb[k] -= n.adj[k] * va[k] / (vb[k] * vb[k]);
        }
        break;
      }
      case Op::AddScalar: {
        auto& pa = nodes_[n.a].adj;
        for (std::size_t k = 0; k < n.adj.size(); ++k) pa[k] += n.adj[k];
        break;
      }
      case Op::MulScalar: {
        auto& pa = nodes_[n.a].adj;
        for (std::size_t k = 0; k < n.adj.size(); ++k) pa[k] += n.adj[k] * n.c0;
        break;
      }
      case Op::Log: {
        auto& pa = nodes_[n.a].adj;
        const auto& va = nodes_[n.a].val;
        for (std::size_t k = 0; k < n.adj.size(); ++k) pa[k] += n.adj[k] / va[k];
        break;
      }
      case Op::Square: {
        auto& pa = nodes_[n.a].adj;
        const auto& va = nodes_[n.a].val;
        for (std::size_t k = 0; k < n.adj.size(); ++k) pa[k] += n.adj[k] * 2.0 * va[k];
        break;
      }
      case Op::Abs: {
        auto& pa = nodes_[n.a].adj;
        const auto& va = nodes_[n.a].val;
        for (std::size_t k = 0; k < n.adj.size(); ++k) {
          if (va[k] > 0.0)
            pa[k] += n.adj[k];
          else if (va[k] < 0.0)
            pa[k] -= n.adj[k];
          // |x| at 0: subgradient 0
        }
        break;
      }
      case Op::Clamp: {
        auto& pa = nodes_[n.a].adj;
        const auto& va = nodes_[n.a].val;
        for (std::size_t k = 0; k < n.adj.size(); ++k)
          if (va[k] > n.c0 && va[k] < n.c1) pa[k] += n.adj[k];
        break;
      }
      case Op::Pow: {
        auto& pa = nodes_[n.a].adj;
        const auto& va = nodes_[n.a].val;
        const double p = n.c0;
        for (std::size_t k = 0; k < n.adj.size(); ++k) {
          if (va[k] == 0.0) {
            // x^p at 0: derivative 0 for p != 1 (subgradient choice for p < 1)
            if (p == 1.0) pa[k] += n.adj[k];
          } else {
            pa[k] += n.adj[k] * p * std::pow(va[k], p - 1.0);
          }
        }
        break;
      }
      case Op::Correlate: {
        auto& pa = nodes_[n.a].adj;
        const Node& kn = nodes_[n.b];
        const int aw = nodes_[n.a].width;
        for (int r = 0; r < n.height; ++r) {
          for (int c = 0; c < n.width; ++c) {
            const double g = n.adj[static_cast<std::size_t>(r) * n.width + c];
            if (g == 0.0) continue;
            for (int ki = 0; ki < kn.height; ++ki) {
              double* arow = &pa[static_cast<std::size_t>(r + ki) * aw + c];
              const double* krow = &kn.val[static_cast<std::size_t>(ki) * kn.width];
              for (int kj = 0; kj < kn.width; ++kj) arow[kj] += g * krow[kj];
            }
          }
        }
        break;
      }
      case Op::Down2: {
        auto& pa = nodes_[n.a].adj;
        const int aw = nodes_[n.a].width;
        for (int r = 0; r < n.height; ++r)
          for (int c = 0; c < n.width; ++c)
            pa[static_cast<std::size_t>(2 * r) * aw + 2 * c] +=
                n.adj[static_cast<std::size_t>(r) * n.width + c];
        break;
      }
      case Op::HaarLL:
      case Op::HaarLH:
      case Op::HaarHL:
      case Op::HaarHH: {
        auto& pa = nodes_[n.a].adj;
        const int aw = nodes_[n.a].width;
        const HaarSigns s = haar_signs(n.op);
        for (int r = 0; r < n.height; ++r) {
          for (int c = 0; c < n.width; ++c) {
            const double g = 0.5 * n.adj[static_cast<std::size_t>(r) * n.width + c];
            double* top = &pa[static_cast<std::size_t>(2 * r) * aw + 2 * c];
            double* bot = &pa[static_cast<std::size_t>(2 * r + 1) * aw + 2 * c];
            top[0] += s.s00 * g;
            top[1] += s.s01 * g;
            bot[0] += s.s10 * g;
            bot[1] += s.s11 * g;
          }
        }
        break;
      }
      case Op::Crop: {
        auto& pa = nodes_[n.a].adj;
        const int aw = nodes_[n.a].width;
        const int r0 = static_cast<int>(n.c0);
        const int c0 = static_cast<int>(n.c1);
        for (int r = 0; r < n.height; ++r)
          for (int c = 0; c < n.width; ++c)
            pa[static_cast<std::size_t>(r0 + r) * aw + (c0 + c)] +=
                n.adj[static_cast<std::size_t>(r) * n.width + c];
        break;
      }
      case Op::Sum: {
        auto& pa = nodes_[n.a].adj;
        const double g = n.adj[0];
        for (std::size_t k = 0; k < pa.size(); ++k) pa[k] += g;
        break;
      }
      case Op::Mean: {
        auto& pa = nodes_[n.a].adj;
        const double g = n.adj[0] / static_cast<double>(pa.size());
        for (std::size_t k = 0; k < pa.size(); ++k) pa[k] += g;
        break;
      }
    }
  }
}

ImagePlane Tape::adjoint(Var v) const {
  const Node& n = at(v);
  ImagePlane out(n.width, n.height);
  if (n.adj.size() == out.data.size())
    out.data = n.adj;
  else
    throw NumericError("adjoint: node unreachable from last backward() output");
  return out;
}

GradientReport finite_diff_check(const std::function<double(const ImagePlane&)>& f,
                                 const std::function<ImagePlane(const ImagePlane&)>& grad_f,
                                 const ImagePlane& x, double h, bool scale_by_magnitude) {
  GradientReport rep;
  rep.analytic = grad_f(x);
  rep.numeric = ImagePlane(x.width, x.height);
  ImagePlane probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double hi = scale_by_magnitude ? h * std::max(1.0, std::fabs(x.data[i])) : h;
    const double orig = x.data[i];
    probe.data[i] = orig + hi;
    const double fp = f(probe);
    probe.data[i] = orig - hi;
    const double fm = f(probe);
    probe.data[i] = orig;
    rep.numeric.data[i] = (fp - fm) / (2.0 * hi);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double err = std::fabs(rep.analytic.data[i] - rep.numeric.data[i]);
    const double rel = err / std::max(std::fabs(rep.numeric.data[i]), 1e-8);
    if (rel > rep.max_rel_error) rep.max_rel_error = rel;
  }
  return rep;
}

}  // namespace diffiq
