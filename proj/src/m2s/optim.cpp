#include "m2s/optim.hpp"

#include <cmath>

namespace m2s {

Sgd::Sgd(std::vector<Parameter>& params, SgdConfig cfg) : params_(&params), cfg_(cfg) {
  velocity_.reserve(params.size());
  for (const auto& p : params) velocity_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), Real(0));
}

void Sgd::step(double lr_backbone, double lr_head) {
  auto& params = *params_;
  M2S_CHECK(params.size() == velocity_.size(), Contract, "sgd: parameter table changed size");
  const Real m = static_cast<Real>(cfg_.momentum);
  const Real wd = static_cast<Real>(cfg_.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    M2S_CHECK(p.tensor.has_grad(), Contract, "sgd: parameter '", p.name, "' has no gradient");
    const Real lr = static_cast<Real>(p.backbone ? lr_backbone : lr_head);
    auto data = p.tensor.data();
    auto grad = p.tensor.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = m * v[j] + grad[j] + wd * data[j];
      data[j] -= lr * v[j];
    }
  }
}

double clip_grad_norm(std::vector<Parameter>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (Real g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Real s = static_cast<Real>(max_norm / norm);
    for (auto& p : params) {
      if (!p.trainable || !p.tensor.has_grad()) continue;
      for (Real& g : p.tensor.grad_mut()) g *= s;
    }
  }
  return norm;
}

std::int64_t warmup_steps(std::int64_t total, double warmup_fraction) {
  return static_cast<std::int64_t>(std::llround(warmup_fraction * static_cast<double>(total)));
}

LearningRates lr_schedule(std::int64_t step, std::int64_t total, const ScheduleConfig& cfg) {
  M2S_CHECK(total >= 1, Contract, "lr_schedule: total steps must be >= 1");
  M2S_CHECK(cfg.warmup_fraction >= 0 && cfg.warmup_fraction < 0.5, Config,
            "warmup_fraction must be in [0, 0.5), got ", cfg.warmup_fraction);
  const std::int64_t warm = warmup_steps(total, cfg.warmup_fraction);
  double f;
  if (step <= 0 && warm > 0) {
    f = 0.0;
  } else if (step < warm) {
    f = static_cast<double>(step) / static_cast<double>(warm);
  } else if (step >= total) {
    f = 0.0;
  } else {
    f = static_cast<double>(total - step) / static_cast<double>(total - warm);
  }
  return {cfg.lr_backbone * f, cfg.lr_head * f};
}

}  // namespace m2s
