#include <nci/optim.hpp>

namespace nci {

AdamWState make_adamw_state(std::span<const Matrix> params, const AdamWConfig& config) {
  AdamWState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adamw_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamWState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adamw_step: parameter/gradient/state counts differ");
  }
  const auto& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = params[k];
    const Matrix& g = grads[k];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[k].rows() != p.rows() ||
        state.m[k].cols() != p.cols()) {
      throw DimensionError("adamw_step: shape mismatch at parameter " + std::to_string(k));
    }
    p -= (c.lr * c.weight_decay) * p;
    state.m[k] = c.beta1 * state.m[k] + (1.0 - c.beta1) * g;
    state.v[k] = c.beta2 * state.v[k] + (1.0 - c.beta2) * g.cwiseAbs2();
    const auto mhat = state.m[k].array() / bc1;
    const auto vhat = state.v[k].array() / bc2;
    p.array() -= c.lr * mhat / (vhat.sqrt() + c.eps);
  }
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config) : params_(std::move(params)) {
  std::vector<Matrix> values;
  for (const auto& p : params_) values.push_back(p.value());
  state_ = make_adamw_state(values, config);
}

void AdamW::step() {
  std::vector<Matrix> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) grads.push_back(p.grad());
  std::vector<Matrix> values;
  values.reserve(params_.size());
  for (auto& p : params_) values.push_back(std::move(p.mutable_value()));
  adamw_step(values, grads, state_);
  for (std::size_t k = 0; k < params_.size(); ++k) params_[k].mutable_value() = std::move(values[k]);
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace nci
