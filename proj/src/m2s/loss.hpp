#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2s/checkpoint.hpp"
#include "m2s/tensor.hpp"

namespace m2s {

enum class FeatureDistance { MeanSquared, L2Norm };

struct LossConfig {
  double weight_amplification = 5.0;
  int window = 15;
  bool lossnet_enabled = true;
  int lossnet_levels = 4;
  std::string lossnet_weights;  // empty: seeded frozen extractor
  std::uint64_t lossnet_seed = 7;
  FeatureDistance distance = FeatureDistance::MeanSquared;
  double epsilon = 1e-6;

  void validate() const;
};

// Frozen conv stack used to compare prediction and ground-truth masks in
// feature space. Its weights never enter a parameter table.
class LossNetExtractor {
 public:
  static constexpr int kMaxLevels = 4;
  static constexpr int kInputChannels = 3;

  LossNetExtractor(int levels, std::uint64_t seed);
  // Reads "lossnet.stage{i}.weight" / "lossnet.stage{i}.bias".
  LossNetExtractor(int levels, const Checkpoint& weights);
  static LossNetExtractor from_config(const LossConfig& cfg);

  int levels() const { return static_cast<int>(weights_.size()); }
  // `masks` is N x 1 x H x W; it is replicated across the input channels.
  std::vector<Tensor> features(const Tensor& masks) const;
  Checkpoint to_checkpoint() const;

 private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

struct LossBundle {
  Real wbce = 0;
  Real wiou = 0;
  std::vector<Real> lf_terms;
  Real total = 0;
  Tensor total_tensor;  // on the tape; backward from here

  Real lf() const;
};

// 1 + amplification * |mean_window(G) - G|; the mean counts in-image pixels only.
Tensor pixel_weights(const Tensor& mask, double amplification, int window);

// Per-(image, channel) weighted mean of BCE-with-logits, averaged over planes.
Tensor weighted_bce(const Tensor& logits, const Tensor& mask, const Tensor& weights);
// 1 - (sum w p G + eps) / (sum w (p + G - pG) + eps), averaged over planes.
Tensor weighted_iou(const Tensor& logits, const Tensor& mask, const Tensor& weights, double eps);

struct FeatureLoss {
  std::vector<Tensor> terms;
  Tensor total;
};
// Gradients flow through `prob` only.
FeatureLoss lossnet_loss(const Tensor& prob, const Tensor& mask, const LossNetExtractor& net,
                         FeatureDistance distance);

// `target` is N x 1 x H x W: binary {0,1} when logits have one channel,
// label indices otherwise (one-vs-rest terms averaged over classes).
LossBundle total_loss(const Tensor& logits, const Tensor& target, const LossConfig& cfg,
                      const LossNetExtractor* net);

}  // namespace m2s
