#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "udkit/tensor.hpp"

namespace udkit {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Parameters with decay() == false skip the
// decay term. State is created lazily per parameter.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const { return config_; }

  // One update of `p` from p.grad with learning rate `lr`.
  void step(Parameter& p, double lr);

  long steps_taken(const Parameter& p) const;

 private:
  struct State {
    Matrix m;
    Matrix v;
    long t = 0;
  };
  AdamWConfig config_;
  std::unordered_map<const Parameter*, State> state_;
};

// Global L2 norm of all gradients.
double global_grad_norm(std::span<Parameter* const> params);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// factor applied (1 when no clipping was needed).
double clip_gradients(std::span<Parameter* const> params, double max_norm);

}  // namespace udkit
