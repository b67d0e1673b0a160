#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "m2s/config.hpp"
#include "m2s/dataset.hpp"
#include "m2s/loss.hpp"
#include "m2s/metrics.hpp"
#include "m2s/model.hpp"
#include "m2s/optim.hpp"

namespace m2s {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 4;
  ScheduleConfig schedule;
  SgdConfig sgd;
  std::vector<double> scales{0.75, 1.0, 1.25};
  bool augment = true;
  int max_angle = 15;
  double grad_clip = 1;         // global gradient norm bound, 0 = off
  std::int64_t max_steps = 0;  // 0 = epochs * batches
  std::uint64_t seed = 1;
  bool write_best = true;

  void validate() const;
};

TrainConfig train_config(const Config& cfg);

struct EpochRecord {
  int epoch = 0;
  double wbce = 0;
  double wiou = 0;
  double lf = 0;
  double total = 0;
  double val_mdice = 0;  // NaN without a validation set
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::int64_t steps = 0;
  int best_epoch = 0;
  double best_val = 0;
  std::string log;  // the exact text written to train.log
};

using EpochHook = std::function<void(const EpochRecord&, const M2SModel&)>;
using StepHook = std::function<void(std::int64_t step, const LossBundle&)>;

struct TrainHooks {
  EpochHook on_epoch;
  StepHook on_step;
};

// Scale * base rounded to a multiple of 32, at least 32.
int scaled_size(int base, double scale);

// Builds the N x 3 x H x W batch and N x 1 x H x W target at the given size.
std::pair<Tensor, Tensor> make_batch(const std::vector<const Sample*>& samples, int h, int w, int num_classes);

// Writes train.log, best.m2sn and final.m2sn under out_dir (skipped when empty).
TrainResult train(M2SModel& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& tcfg, const LossConfig& lcfg, const std::filesystem::path& out_dir = {},
                  const TrainHooks& hooks = {});

// Probability map (binary head) at the model input size, resized back to the image size.
Grid predict_prob(const M2SModel& model, const Image8& image);
// Per-pixel argmax label (multi-class head), nearest-resized back to the image size.
LabelGrid predict_labels(const M2SModel& model, const Image8& image);

Grid mask_grid(const Image8& mask);
LabelGrid label_grid(const Image8& mask);

// Binary head: evaluate_dataset; multi-class head: evaluate_layers.
MetricReport evaluate(const M2SModel& model, const std::vector<Sample>& samples, const MetricParams& params);
// Validation score logged during training: mDice for both head types.
double validation_mdice(const M2SModel& model, const std::vector<Sample>& samples);

}  // namespace m2s
