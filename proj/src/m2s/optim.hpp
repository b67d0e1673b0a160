#pragma once

#include <cstdint>
#include <vector>

#include "m2s/model.hpp"

namespace m2s {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

// v <- m*v + g + wd*p ; p <- p - lr*v
class Sgd {
 public:
  Sgd(std::vector<Parameter>& params, SgdConfig cfg);

  // Backbone parameters use lr_backbone, everything else lr_head.
  void step(double lr_backbone, double lr_head);
  void step(double lr) { step(lr, lr); }

  const std::vector<std::vector<Real>>& velocity() const { return velocity_; }

 private:
  std::vector<Parameter>* params_;
  SgdConfig cfg_;
  std::vector<std::vector<Real>> velocity_;
};

// Scales all trainable gradients so their global L2 norm is at most max_norm.
// Returns the norm before scaling; max_norm <= 0 only measures.
double clip_grad_norm(std::vector<Parameter>& params, double max_norm);

struct ScheduleConfig {
  double lr_head = 0.05;
  double lr_backbone = 0.005;
  double warmup_fraction = 0.1;
};

struct LearningRates {
  double backbone = 0;
  double head = 0;
};

// Linear ramp from 0 to the maxima over round(warmup_fraction * total) steps,
// then linear decay to 0 at `total`.
LearningRates lr_schedule(std::int64_t step, std::int64_t total, const ScheduleConfig& cfg);
std::int64_t warmup_steps(std::int64_t total, double warmup_fraction);

}  // namespace m2s
