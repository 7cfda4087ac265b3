#include <nci/mlp.hpp>

namespace nci {

Mlp Mlp::init(const std::vector<Index>& widths, Rng& rng) {
  if (widths.size() < 2) throw UsageError("Mlp::init: need at least input and output widths");
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Index in = widths[l];
    const Index out = widths[l + 1];
    if (in <= 0 || out <= 0) throw UsageError("Mlp::init: widths must be positive");
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, out);
    for (Index j = 0; j < out; ++j)
      for (Index i = 0; i < in; ++i) w(i, j) = rng.normal(0.0, sd);
    net.layers.push_back({Tensor::parameter(std::move(w)), Tensor::parameter(Matrix::Zero(1, out))});
  }
  return net;
}

Tensor Mlp::features(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    h = tanh(add_row_broadcast(matmul(h, layers[l].w), layers[l].b));
  }
  return h;
}

Tensor Mlp::forward(const Tensor& x) const {
  const Dense& last = layers.back();
  return add_row_broadcast(matmul(features(x), last.w), last.b);
}

std::vector<Tensor> Mlp::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    out.push_back(l.w);
    out.push_back(l.b);
  }
  return out;
}

Mlp Mlp::clone() const {
  Mlp c;
  for (const auto& l : layers) c.layers.push_back({Tensor::parameter(l.w.value()), Tensor::parameter(l.b.value())});
  return c;
}

}  // namespace nci
