#pragma once

#include <nci/diff.hpp>
#include <nci/rng.hpp>

#include <string>
#include <vector>

namespace nci {

struct Dense {
  Tensor w;  // in x out
  Tensor b;  // 1 x out
};

/// Fully connected stack: tanh between layers, linear output.
struct Mlp {
  std::vector<Dense> layers;

  /// widths = {in, hidden..., out}. Weights ~ N(0, 1/fan_in), biases zero.
  static Mlp init(const std::vector<Index>& widths, Rng& rng);

  Tensor forward(const Tensor& x) const;
  /// Penultimate activations (everything but the last layer).
  Tensor features(const Tensor& x) const;

  std::vector<Tensor> parameters() const;
  /// Fresh parameter tensors holding copies of the current values.
  Mlp clone() const;
  Index in_dim() const { return layers.front().w.rows(); }
  Index out_dim() const { return layers.back().w.cols(); }
};

}  // namespace nci
