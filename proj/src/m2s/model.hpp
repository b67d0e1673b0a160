#pragma once

// Multi-scale subtraction segmentation network.
//
// Five stride-2 encoder stages feed per-level channel reduction, a triangular
// pyramid of fusion units (subtraction, multi-scale subtraction or addition),
// a per-level aggregation conv and an upsample-add decoder.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "m2s/checkpoint.hpp"
#include "m2s/tensor.hpp"

namespace m2s {

inline constexpr int kLevels = 5;

enum class FusionVariant { SU, MSU, AU };

const char* to_string(FusionVariant v);
FusionVariant parse_fusion(const std::string& s);

struct ModelConfig {
  FusionVariant fusion = FusionVariant::MSU;
  int pyramid_depth = 5;
  std::array<int, kLevels> encoder_channels{16, 32, 32, 64, 64};
  int reduced_channels = 16;
  int num_classes = 1;
  int input_h = 64;
  int input_w = 64;
  bool msu_normalize = true;

  void validate() const;
  // "key=value" lines, stored in checkpoints so evaluation can rebuild the net.
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);
};

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
  bool backbone = false;
};

struct ConvLayer {
  std::string name;
  std::size_t weight = 0;  // indices into the parameter table
  std::size_t bias = 0;
  int kernel = 3;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  int level = 0;  // output resolution is input / 2^level
};

// ms[i][n] holds MS^{i+1}_{n+1}; ce[i] holds CE^{i+1}.
struct PyramidFeatures {
  std::array<std::vector<Tensor>, kLevels> ms;
  std::array<Tensor, kLevels> ce;
  std::size_t entry_count() const;
};

// Pre-conv fusion input: |A-B| (SU), sum over k in {1,3,5} of |box_k(A)-box_k(B)| (MSU),
// or A+B (AU). `b` is resized to `a`'s resolution first. With msu_normalize the MSU sum
// is divided by 35, the combined weight of the three all-ones windows.
Tensor fusion_input(const Tensor& a, const Tensor& b, FusionVariant variant, bool msu_normalize = true);

struct MacReport {
  struct Row {
    std::string module;
    std::int64_t params = 0;
    std::int64_t macs = 0;
    std::int64_t fixed_filter_ops = 0;
  };
  std::vector<Row> rows;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
  std::int64_t total_fixed_filter_ops = 0;
};

class M2SModel {
 public:
  M2SModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }

  Tensor forward(const Tensor& images) const;

  std::array<Tensor, kLevels> encode(const Tensor& images) const;
  std::array<Tensor, kLevels> channel_reduce(const std::array<Tensor, kLevels>& encoded) const;
  PyramidFeatures build_pyramid(const std::array<Tensor, kLevels>& reduced) const;
  void complementarity_enhance(PyramidFeatures& pyramid) const;
  Tensor decode(const std::array<Tensor, kLevels>& ce, std::int64_t out_h, std::int64_t out_w) const;

  Tensor fuse(const Tensor& a, const Tensor& b, const ConvLayer& conv) const;
  const ConvLayer& layer(const std::string& name) const;

  void zero_grad();

  Checkpoint to_checkpoint() const;
  static M2SModel from_checkpoint(const Checkpoint& ckpt);
  void load_parameters(const Checkpoint& ckpt);

 private:
  std::size_t add_conv(const std::string& name, int cin, int cout, int k, int stride, int level,
                       bool backbone);
  Tensor apply(const ConvLayer& conv, const Tensor& x, bool activate) const;
  void initialize(std::uint64_t seed);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<ConvLayer> layers_;
};

std::int64_t count_params(const M2SModel& model);
MacReport count_flops(const M2SModel& model, std::int64_t h, std::int64_t w);

}  // namespace m2s
