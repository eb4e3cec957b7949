#include "udkit/optim.hpp"

#include <cmath>

namespace udkit {

void AdamW::step(Parameter& p, double lr) {
  auto& s = state_[&p];
  if (s.t == 0) {
    s.m = Matrix::Zero(p.value.rows(), p.value.cols());
    s.v = Matrix::Zero(p.value.rows(), p.value.cols());
  }
  ++s.t;
  const auto& c = config_;
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * p.grad;
  s.v = c.beta2 * s.v + (1.0 - c.beta2) * p.grad.cwiseProduct(p.grad);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
  if (p.decay() && c.weight_decay != 0.0) p.value *= 1.0 - lr * c.weight_decay;
  p.value.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + c.eps);
}

long AdamW::steps_taken(const Parameter& p) const {
  auto it = state_.find(&p);
  return it == state_.end() ? 0 : it->second.t;
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (Parameter* p : params) p->grad *= factor;
  return factor;
}

}  // namespace udkit
