#include "m2s/model.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace m2s {

const char* to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::SU: return "SU";
    case FusionVariant::MSU: return "MSU";
    case FusionVariant::AU: return "AU";
  }
  return "?";
}

FusionVariant parse_fusion(const std::string& s) {
  if (s == "SU" || s == "su") return FusionVariant::SU;
  if (s == "MSU" || s == "msu") return FusionVariant::MSU;
  if (s == "AU" || s == "au") return FusionVariant::AU;
  M2S_THROW(Config, "unknown fusion variant '", s, "' (expected SU, MSU or AU)");
}

void ModelConfig::validate() const {
  M2S_CHECK(pyramid_depth >= 1 && pyramid_depth <= kLevels, Config, "pyramid_depth must be in [1,5], got ",
            pyramid_depth);
  for (int c : encoder_channels) M2S_CHECK(c >= 1, Config, "encoder channel counts must be >= 1");
  M2S_CHECK(reduced_channels >= 1, Config, "reduced_channels must be >= 1");
  M2S_CHECK(num_classes >= 1, Config, "num_classes must be >= 1");
  M2S_CHECK(input_h >= 32 && input_w >= 32 && input_h % 32 == 0 && input_w % 32 == 0, Config,
            "input size must be a positive multiple of 32, got ", input_h, "x", input_w);
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "fusion=" << to_string(fusion) << "\n";
  os << "pyramid_depth=" << pyramid_depth << "\n";
  os << "encoder_channels=";
  for (int i = 0; i < kLevels; ++i) os << (i ? "," : "") << encoder_channels[static_cast<std::size_t>(i)];
  os << "\n";
  os << "reduced_channels=" << reduced_channels << "\n";
  os << "num_classes=" << num_classes << "\n";
  os << "input_size=" << input_h << "," << input_w << "\n";
  os << "msu_normalize=" << (msu_normalize ? 1 : 0) << "\n";
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  auto ints = [](const std::string& v) {
    std::vector<int> out;
    std::istringstream s(v);
    std::string item;
    while (std::getline(s, item, ',')) out.push_back(std::stoi(item));
    return out;
  };
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      M2S_CHECK(eq != std::string::npos, Format, "bad model config line '", line, "'");
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "fusion") {
        cfg.fusion = parse_fusion(value);
      } else if (key == "pyramid_depth") {
        cfg.pyramid_depth = std::stoi(value);
      } else if (key == "encoder_channels") {
        auto v = ints(value);
        M2S_CHECK(v.size() == kLevels, Format, "encoder_channels needs 5 entries");
        for (std::size_t i = 0; i < kLevels; ++i) cfg.encoder_channels[i] = v[i];
      } else if (key == "reduced_channels") {
        cfg.reduced_channels = std::stoi(value);
      } else if (key == "num_classes") {
        cfg.num_classes = std::stoi(value);
      } else if (key == "input_size") {
        auto v = ints(value);
        M2S_CHECK(v.size() == 2, Format, "input_size needs 2 entries");
        cfg.input_h = v[0];
        cfg.input_w = v[1];
      } else if (key == "msu_normalize") {
        M2S_CHECK(value == "0" || value == "1", Format, "msu_normalize must be 0 or 1");
        cfg.msu_normalize = value == "1";
      } else {
        M2S_THROW(Format, "unknown model config key '", key, "'");
      }
    }
  } catch (const std::logic_error&) {
    M2S_THROW(Format, "malformed model config payload");
  }
  cfg.validate();
  return cfg;
}

std::size_t PyramidFeatures::entry_count() const {
  std::size_t n = 0;
  for (const auto& row : ms) n += row.size();
  return n;
}

Tensor fusion_input(const Tensor& a, const Tensor& b, FusionVariant variant, bool msu_normalize) {
  M2S_CHECK(a.shape().c == b.shape().c, Dimension, "fuse: channel mismatch (axis 1) ", a.shape().c,
            " vs ", b.shape().c);
  M2S_CHECK(a.shape().n == b.shape().n, Dimension, "fuse: batch mismatch (axis 0) ", a.shape().n, " vs ",
            b.shape().n);
  Tensor bb = b;
  if (b.shape().h != a.shape().h || b.shape().w != a.shape().w) {
    bb = bilinear_resize(b, a.shape().h, a.shape().w);
  }
  switch (variant) {
    case FusionVariant::SU:
      return abs(sub(a, bb));
    case FusionVariant::AU:
      return add(a, bb);
    case FusionVariant::MSU: {
      Tensor acc = abs(sub(a, bb));
      for (int k : {3, 5}) acc = add(acc, abs(sub(box_filter(a, k), box_filter(bb, k))));
      // 1 + 9 + 25: total weight of the three window sums.
      return msu_normalize ? mul_scalar(acc, Real(1) / 35) : acc;
    }
  }
  M2S_THROW(Contract, "unreachable fusion variant");
}

// ---------------------------------------------------------------------------

namespace {

std::string cell_name(int level, int order) {
  return "mmsm.cell" + std::to_string(level) + "_" + std::to_string(order);
}

}  // namespace

M2SModel::M2SModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int r = config_.reduced_channels;
  int cin = 3;
  for (int i = 1; i <= kLevels; ++i) {
    const int cout = config_.encoder_channels[static_cast<std::size_t>(i - 1)];
    const std::string stage = "encoder.stage" + std::to_string(i);
    add_conv(stage + ".conv1", cin, cout, 3, 2, i, true);
    add_conv(stage + ".conv2", cout, cout, 3, 1, i, true);
    cin = cout;
  }
  for (int i = 1; i <= kLevels; ++i) {
    add_conv("reduce.level" + std::to_string(i), config_.encoder_channels[static_cast<std::size_t>(i - 1)], r,
             3, 1, i, false);
  }
  for (int n = 2; n <= config_.pyramid_depth; ++n) {
    for (int i = 1; i <= kLevels + 1 - n; ++i) add_conv(cell_name(i, n), r, r, 3, 1, i, false);
  }
  for (int i = 1; i <= kLevels; ++i) add_conv("ce.level" + std::to_string(i), r, r, 3, 1, i, false);
  for (int i = kLevels - 1; i >= 1; --i) add_conv("decoder.block" + std::to_string(i), r, r, 3, 1, i, false);
  add_conv("head", r, config_.num_classes, 1, 1, 1, false);
  initialize(seed);
}

std::size_t M2SModel::add_conv(const std::string& name, int cin, int cout, int k, int stride, int level,
                               bool backbone) {
  ConvLayer layer;
  layer.name = name;
  layer.kernel = k;
  layer.stride = stride;
  layer.in_channels = cin;
  layer.out_channels = cout;
  layer.level = level;
  layer.weight = params_.size();
  params_.push_back({name + ".weight", Tensor(Shape{cout, cin, k, k}), true, backbone});
  layer.bias = params_.size();
  params_.push_back({name + ".bias", Tensor(Shape{cout, 1, 1, 1}), true, backbone});
  for (auto idx : {layer.weight, layer.bias}) params_[idx].tensor.set_requires_grad(true);
  layers_.push_back(layer);
  return layers_.size() - 1;
}

void M2SModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& layer : layers_) {
    const double fan_in = static_cast<double>(layer.in_channels * layer.kernel * layer.kernel);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (Real& v : params_[layer.weight].tensor.data()) v = static_cast<Real>(dist(rng));
  }
}

const ConvLayer& M2SModel::layer(const std::string& name) const {
  for (const auto& l : layers_) {
    if (l.name == name) return l;
  }
  M2S_THROW(Contract, "no layer named '", name, "'");
}

Tensor M2SModel::apply(const ConvLayer& conv, const Tensor& x, bool activate) const {
  Tensor y = conv2d(x, params_[conv.weight].tensor, params_[conv.bias].tensor, conv.stride,
                    (conv.kernel - 1) / 2);
  return activate ? relu(y) : y;
}

Tensor M2SModel::forward(const Tensor& images) const {
  auto reduced = channel_reduce(encode(images));
  auto pyramid = build_pyramid(reduced);
  complementarity_enhance(pyramid);
  return decode(pyramid.ce, images.shape().h, images.shape().w);
}

std::array<Tensor, kLevels> M2SModel::encode(const Tensor& images) const {
  const Shape& s = images.shape();
  M2S_CHECK(s.c == 3, Dimension, "encode: expected 3 input channels (axis 1), got ", s.c);
  M2S_CHECK(s.h % 32 == 0 && s.w % 32 == 0, Config, "encode: input ", s.h, "x", s.w,
            " is not divisible by 32");
  std::array<Tensor, kLevels> out;
  Tensor x = images;
  for (int i = 0; i < kLevels; ++i) {
    x = apply(layers_[static_cast<std::size_t>(2 * i)], x, true);
    x = apply(layers_[static_cast<std::size_t>(2 * i + 1)], x, true);
    out[static_cast<std::size_t>(i)] = x;
  }
  return out;
}

std::array<Tensor, kLevels> M2SModel::channel_reduce(const std::array<Tensor, kLevels>& encoded) const {
  std::array<Tensor, kLevels> out;
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = apply(layers_[2 * kLevels + i], encoded[i], true);
  return out;
}

Tensor M2SModel::fuse(const Tensor& a, const Tensor& b, const ConvLayer& conv) const {
  return apply(conv, fusion_input(a, b, config_.fusion, config_.msu_normalize), true);
}

PyramidFeatures M2SModel::build_pyramid(const std::array<Tensor, kLevels>& reduced) const {
  PyramidFeatures p;
  for (std::size_t i = 0; i < kLevels; ++i) p.ms[i].push_back(reduced[i]);
  std::size_t cell = 3 * kLevels;
  for (int n = 2; n <= config_.pyramid_depth; ++n) {
    for (int i = 1; i <= kLevels + 1 - n; ++i) {
      const auto li = static_cast<std::size_t>(i - 1);
      const auto prev = static_cast<std::size_t>(n - 2);
      p.ms[li].push_back(fuse(p.ms[li][prev], p.ms[li + 1][prev], layers_[cell++]));
    }
  }
  return p;
}

void M2SModel::complementarity_enhance(PyramidFeatures& pyramid) const {
  const std::size_t first = layers_.size() - kLevels - (kLevels - 1) - 1;
  for (std::size_t i = 0; i < kLevels; ++i) {
    Tensor acc = pyramid.ms[i][0];
    for (std::size_t n = 1; n < pyramid.ms[i].size(); ++n) acc = add(acc, pyramid.ms[i][n]);
    pyramid.ce[i] = apply(layers_[first + i], acc, true);
  }
}

Tensor M2SModel::decode(const std::array<Tensor, kLevels>& ce, std::int64_t out_h, std::int64_t out_w) const {
  const std::size_t first = layers_.size() - (kLevels - 1) - 1;
  Tensor d = ce[kLevels - 1];
  for (int i = kLevels - 2, block = 0; i >= 0; --i, ++block) {
    const Tensor& skip = ce[static_cast<std::size_t>(i)];
    Tensor up = bilinear_resize(d, skip.shape().h, skip.shape().w);
    d = apply(layers_[first + static_cast<std::size_t>(block)], add(up, skip), true);
  }
  Tensor logits = apply(layers_.back(), d, false);
  return bilinear_resize(logits, out_h, out_w);
}

void M2SModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Checkpoint M2SModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.metadata["meta.config"] = config_.serialize();
  for (const auto& p : params_) ckpt.tensors.emplace_back(p.name, p.tensor);
  return ckpt;
}

void M2SModel::load_parameters(const Checkpoint& ckpt) {
  for (auto& p : params_) {
    const Tensor* t = ckpt.find(p.name);
    M2S_CHECK(t != nullptr, Format, "checkpoint lacks parameter '", p.name, "'");
    M2S_CHECK(t->shape() == p.tensor.shape(), Format, "parameter '", p.name, "' has shape ",
              t->shape().str(), ", model expects ", p.tensor.shape().str());
    std::copy(t->data().begin(), t->data().end(), p.tensor.data().begin());
  }
}

M2SModel M2SModel::from_checkpoint(const Checkpoint& ckpt) {
  auto it = ckpt.metadata.find("meta.config");
  M2S_CHECK(it != ckpt.metadata.end(), Format, "checkpoint has no 'meta.config' entry");
  M2SModel model(ModelConfig::parse(it->second), 0);
  model.load_parameters(ckpt);
  return model;
}

// ---------------------------------------------------------------------------

std::int64_t count_params(const M2SModel& model) {
  std::int64_t total = 0;
  for (const auto& p : model.parameters()) {
    if (p.trainable) total += p.tensor.numel();
  }
  return total;
}

MacReport count_flops(const M2SModel& model, std::int64_t h, std::int64_t w) {
  MacReport report;
  std::map<std::string, std::size_t> index;
  auto row = [&](const std::string& module) -> MacReport::Row& {
    auto [it, inserted] = index.emplace(module, report.rows.size());
    if (inserted) report.rows.push_back({module, 0, 0, 0});
    return report.rows[it->second];
  };
  const auto& params = model.parameters();
  for (const auto& l : model.layers()) {
    const std::int64_t ho = h >> l.level;
    const std::int64_t wo = w >> l.level;
    auto& r = row(l.name.substr(0, l.name.find('.')));
    const std::int64_t p = params[l.weight].tensor.numel() + params[l.bias].tensor.numel();
    const std::int64_t macs = std::int64_t(l.kernel) * l.kernel * l.in_channels * l.out_channels * ho * wo;
    r.params += p;
    r.macs += macs;
    report.total_params += p;
    report.total_macs += macs;
    if (model.config().fusion == FusionVariant::MSU && l.name.rfind("mmsm.", 0) == 0) {
      // Both operands pass through the 1x1, 3x3 and 5x5 all-ones windows.
      const std::int64_t ops = 2 * (1 + 9 + 25) * std::int64_t(l.in_channels) * ho * wo;
      r.fixed_filter_ops += ops;
      report.total_fixed_filter_ops += ops;
    }
  }
  return report;
}

}  // namespace m2s
