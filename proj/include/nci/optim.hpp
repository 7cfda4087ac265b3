#pragma once

#include <nci/diff.hpp>

#include <vector>

namespace nci {

struct AdamWConfig {
  double lr = 5e-4;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments and step counter for one parameter list.
struct AdamWState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long t = 0;
  AdamWConfig config;
};

AdamWState make_adamw_state(std::span<const Matrix> params, const AdamWConfig& config);

/// One decoupled-weight-decay Adam step, in place. Increments state.t by one.
void adamw_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamWState& state);

/// Convenience wrapper that steps a set of Tensor parameters from their
/// accumulated gradients.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  void step();
  void zero_grad();
  const AdamWState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamWState state_;
};

}  // namespace nci
