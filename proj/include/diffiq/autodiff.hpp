#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diffiq/image.hpp"

namespace diffiq {

// Reverse-mode tape over image-shaped values. Values are computed eagerly as
// the graph is built; backward() then fills adjoints in reverse creation
// order, which makes gradient accumulation deterministic.

enum class Op : std::uint8_t {
  Input,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  AddScalar,
  MulScalar,
  Log,
  Square,
  Abs,
  Clamp,
  Pow,
  Correlate,  // valid mode; kernel is a (constant) parent node
  Down2,      // keep even-indexed rows/cols
  HaarLL,
  HaarLH,
  HaarHL,
  HaarHH,
  Crop,
  Sum,
  Mean,
};

struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

class Tape {
 public:
  // Leaves.
  Var input(const ImagePlane& img);
  Var constant(const ImagePlane& img);
  Var constant_scalar(double v);

  // Elementwise binary (equal shapes required).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);  // caller guarantees denominator bounded away from 0

  // Elementwise unary.
  Var add_scalar(Var a, double c);
  Var mul_scalar(Var a, double c);
  Var log(Var a);  // natural log; caller guards the argument
  Var square(Var a);
  Var abs(Var a);
  Var clamp(Var a, double lo, double hi);
  Var pow(Var a, double p);  // p > 0, argument >= 0

  // Structured ops.
  Var correlate(Var a, const ImagePlane& kernel);  // valid mode
  Var down2(Var a);
  Var haar_ll(Var a);
  Var haar_lh(Var a);
  Var haar_hl(Var a);
  Var haar_hh(Var a);
  Var crop(Var a, int r0, int c0, int h, int w);

  // Reductions to a 1x1 scalar node (compensated summation).
  Var sum(Var a);
  Var mean(Var a);

  int width(Var v) const { return nodes_[v.index].width; }
  int height(Var v) const { return nodes_[v.index].height; }
  const std::vector<double>& value(Var v) const { return nodes_[v.index].val; }
  double scalar(Var v) const;  // requires a 1x1 node
  ImagePlane value_plane(Var v) const;

  // Backward from a scalar output; adjoints of all ancestors become available
  // through adjoint(). Repeated calls reset previous adjoints.
  void backward(Var output);
  ImagePlane adjoint(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int width = 0;
    int height = 0;
    double c0 = 0.0;  // AddScalar/MulScalar constant, Clamp lo, Pow exponent, Crop r0
    double c1 = 0.0;  // Clamp hi, Crop c0
    std::vector<double> val;
    std::vector<double> adj;
  };

  Var push(Node&& n);
  Var haar_band(Var a, Op op);
  Node& at(Var v) { return nodes_[v.index]; }
  const Node& at(Var v) const { return nodes_[v.index]; }
  void check_same_shape(Var a, Var b, const char* who) const;

  std::vector<Node> nodes_;
};

// Gradient verification against central finite differences.
// numeric[i] = (f(x + h_i e_i) - f(x - h_i e_i)) / (2 h_i), where h_i = h, or
// h * max(1, |x_i|) when scale_by_magnitude is set.
// max_rel_error = max_i |analytic_i - numeric_i| / max(|numeric_i|, 1e-8).
struct GradientReport {
  ImagePlane analytic;
  ImagePlane numeric;
  double max_rel_error = 0.0;
};

GradientReport finite_diff_check(const std::function<double(const ImagePlane&)>& f,
                                 const std::function<ImagePlane(const ImagePlane&)>& grad_f,
                                 const ImagePlane& x, double h,
                                 bool scale_by_magnitude = false);

}  // namespace diffiq
