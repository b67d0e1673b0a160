#include "m2s/loss.hpp"

#include <cmath>
#include <random>

namespace m2s {

namespace {

constexpr int kStageChannels[LossNetExtractor::kMaxLevels] = {8, 16, 32, 64};

Real sigmoid_of(Real v) {
  if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
  const Real e = std::exp(v);
  return e / (Real(1) + e);
}

void check_pair(const Tensor& logits, const Tensor& mask, const Tensor& weights, const char* op) {
  M2S_CHECK(logits.shape() == mask.shape() && mask.shape() == weights.shape(), Dimension, op,
            ": shapes differ ", logits.shape().str(), " / ", mask.shape().str(), " / ",
            weights.shape().str());
}

}  // namespace

void LossConfig::validate() const {
  M2S_CHECK(window >= 1 && window % 2 == 1, Config, "loss window must be odd, got ", window);
  M2S_CHECK(weight_amplification >= 0, Config, "weight amplification must be >= 0");
  M2S_CHECK(lossnet_levels >= 1 && lossnet_levels <= LossNetExtractor::kMaxLevels, Config,
            "lossnet_levels must be in [1,4], got ", lossnet_levels);
  M2S_CHECK(epsilon > 0, Config, "loss epsilon must be > 0");
}

Real LossBundle::lf() const {
  Real s = 0;
  for (Real v : lf_terms) s += v;
  return s;
}

// ---------------------------------------------------------------------------
// LossNet

LossNetExtractor::LossNetExtractor(int levels, std::uint64_t seed) {
  M2S_CHECK(levels >= 1 && levels <= kMaxLevels, Config, "lossnet levels must be in [1,4]");
  std::mt19937_64 rng(seed);
  int cin = kInputChannels;
  for (int i = 0; i < levels; ++i) {
    const int cout = kStageChannels[i];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (cin * 9.0)));
    Tensor w(Shape{cout, cin, 3, 3});
    for (Real& v : w.data()) v = static_cast<Real>(dist(rng));
    weights_.push_back(w);
    biases_.emplace_back(Shape{cout, 1, 1, 1});
    cin = cout;
  }
}

LossNetExtractor::LossNetExtractor(int levels, const Checkpoint& ckpt) {
  M2S_CHECK(levels >= 1 && levels <= kMaxLevels, Config, "lossnet levels must be in [1,4]");
  std::int64_t cin = kInputChannels;
  for (int i = 1; i <= levels; ++i) {
    const std::string stage = "lossnet.stage" + std::to_string(i);
    const Tensor* w = ckpt.find(stage + ".weight");
    const Tensor* b = ckpt.find(stage + ".bias");
    M2S_CHECK(w && b, Format, "lossnet weight file lacks '", stage, ".weight/bias'");
    M2S_CHECK(w->shape().c == cin && w->shape().h == 3 && w->shape().w == 3, Format, stage,
              ".weight must be Cout x ", cin, " x 3 x 3, got ", w->shape().str());
    M2S_CHECK(b->numel() == w->shape().n, Format, stage, ".bias size mismatch");
    weights_.push_back(w->clone());
    biases_.push_back(b->clone());
    cin = w->shape().n;
  }
}

LossNetExtractor LossNetExtractor::from_config(const LossConfig& cfg) {
  if (cfg.lossnet_weights.empty()) return LossNetExtractor(cfg.lossnet_levels, cfg.lossnet_seed);
  return LossNetExtractor(cfg.lossnet_levels, read_checkpoint(cfg.lossnet_weights));
}

std::vector<Tensor> LossNetExtractor::features(const Tensor& masks) const {
  std::vector<Tensor> out;
  Tensor x = repeat_channels(masks, kInputChannels);
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = relu(conv2d(x, weights_[i], biases_[i], 2, 1));
    out.push_back(x);
  }
  return out;
}

Checkpoint LossNetExtractor::to_checkpoint() const {
  Checkpoint ckpt;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const std::string stage = "lossnet.stage" + std::to_string(i + 1);
    ckpt.tensors.emplace_back(stage + ".weight", weights_[i]);
    ckpt.tensors.emplace_back(stage + ".bias", biases_[i]);
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Pixel terms

Tensor pixel_weights(const Tensor& mask, double amplification, int window) {
  M2S_CHECK(window >= 1 && window % 2 == 1, Config, "pixel weight window must be odd, got ", window);
  const Shape& s = mask.shape();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x) {
          const Real v = mask.at(n, c, y, x);
          M2S_CHECK(std::abs(v) <= 1e-6 || std::abs(v - 1) <= 1e-6, Data, "mask value ", v,
                    " at (n=", n, ", c=", c, ", y=", y, ", x=", x, ") is not binary");
        }
      }
    }
  }
  // Summed-area table per plane keeps arbitrary windows cheap.
  const std::int64_t r = window / 2;
  Tensor out(s);
  std::vector<double> sat(static_cast<std::size_t>((s.h + 1) * (s.w + 1)));
  for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
    const Real* g = mask.ptr() + plane * s.h * s.w;
    Real* o = out.ptr() + plane * s.h * s.w;
    std::fill(sat.begin(), sat.end(), 0.0);
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t x = 0; x < s.w; ++x) {
        sat[static_cast<std::size_t>((y + 1) * (s.w + 1) + x + 1)] =
            g[y * s.w + x] + sat[static_cast<std::size_t>(y * (s.w + 1) + x + 1)] +
            sat[static_cast<std::size_t>((y + 1) * (s.w + 1) + x)] - sat[static_cast<std::size_t>(y * (s.w + 1) + x)];
      }
    }
    for (std::int64_t y = 0; y < s.h; ++y) {
      const std::int64_t y0 = std::max<std::int64_t>(0, y - r), y1 = std::min(s.h, y + r + 1);
      for (std::int64_t x = 0; x < s.w; ++x) {
        const std::int64_t x0 = std::max<std::int64_t>(0, x - r), x1 = std::min(s.w, x + r + 1);
        auto at = [&](std::int64_t yy, std::int64_t xx) { return sat[static_cast<std::size_t>(yy * (s.w + 1) + xx)]; };
        const double total = at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
        const double avg = total / static_cast<double>((y1 - y0) * (x1 - x0));
        o[y * s.w + x] = static_cast<Real>(1.0 + amplification * std::abs(avg - g[y * s.w + x]));
      }
    }
  }
  return out;
}

Tensor weighted_bce(const Tensor& logits, const Tensor& mask, const Tensor& weights) {
  check_pair(logits, mask, weights, "weighted_bce");
  const Shape& s = logits.shape();
  const std::int64_t planes = s.n * s.c;
  const std::int64_t hw = s.plane();
  std::vector<Real> weight_sums(static_cast<std::size_t>(planes));
  Real total = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    const Real* x = logits.ptr() + p * hw;
    const Real* g = mask.ptr() + p * hw;
    const Real* w = weights.ptr() + p * hw;
    Real num = 0, den = 0;
    for (std::int64_t i = 0; i < hw; ++i) {
      const Real v = x[i];
      const Real bce = std::max(v, Real(0)) - v * g[i] + std::log1p(std::exp(-std::abs(v)));
      num += w[i] * bce;
      den += w[i];
    }
    weight_sums[static_cast<std::size_t>(p)] = den;
    total += num / den;
  }
  Tensor out = Tensor::scalar(total / static_cast<Real>(planes));
  if (needs_tape({&logits})) {
    Tape::current()->record("weighted_bce", {logits, mask, weights}, out,
                            [weight_sums, planes, hw](Tape::Node& node) {
                              const Real g0 = node.output.grad()[0] / static_cast<Real>(planes);
                              const Real* x = node.inputs[0].ptr();
                              const Real* g = node.inputs[1].ptr();
                              const Real* w = node.inputs[2].ptr();
                              auto dx = node.inputs[0].grad_mut();
                              for (std::int64_t p = 0; p < planes; ++p) {
                                const Real scale = g0 / weight_sums[static_cast<std::size_t>(p)];
                                for (std::int64_t i = p * hw; i < (p + 1) * hw; ++i) {
                                  dx[static_cast<std::size_t>(i)] += scale * w[i] * (sigmoid_of(x[i]) - g[i]);
                                }
                              }
                            });
  }
  return out;
}

Tensor weighted_iou(const Tensor& logits, const Tensor& mask, const Tensor& weights, double eps) {
  check_pair(logits, mask, weights, "weighted_iou");
  const Shape& s = logits.shape();
  const std::int64_t planes = s.n * s.c;
  const std::int64_t hw = s.plane();
  std::vector<Real> inter(static_cast<std::size_t>(planes)), uni(static_cast<std::size_t>(planes));
  Real total = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    const Real* x = logits.ptr() + p * hw;
    const Real* g = mask.ptr() + p * hw;
    const Real* w = weights.ptr() + p * hw;
    Real in = 0, un = 0;
    for (std::int64_t i = 0; i < hw; ++i) {
      const Real pr = sigmoid_of(x[i]);
      in += w[i] * pr * g[i];
      un += w[i] * (pr + g[i] - pr * g[i]);
    }
    inter[static_cast<std::size_t>(p)] = in + static_cast<Real>(eps);
    uni[static_cast<std::size_t>(p)] = un + static_cast<Real>(eps);
    total += 1 - inter[static_cast<std::size_t>(p)] / uni[static_cast<std::size_t>(p)];
  }
  Tensor out = Tensor::scalar(total / static_cast<Real>(planes));
  if (needs_tape({&logits})) {
    Tape::current()->record("weighted_iou", {logits, mask, weights}, out,
                            [inter, uni, planes, hw](Tape::Node& node) {
                              const Real g0 = node.output.grad()[0] / static_cast<Real>(planes);
                              const Real* x = node.inputs[0].ptr();
                              const Real* g = node.inputs[1].ptr();
                              const Real* w = node.inputs[2].ptr();
                              auto dx = node.inputs[0].grad_mut();
                              for (std::int64_t p = 0; p < planes; ++p) {
                                const Real I = inter[static_cast<std::size_t>(p)];
                                const Real U = uni[static_cast<std::size_t>(p)];
                                for (std::int64_t i = p * hw; i < (p + 1) * hw; ++i) {
                                  const Real pr = sigmoid_of(x[i]);
                                  // d/dp of -(I/U): -(w g U - I w (1 - g)) / U^2
                                  const Real dp = -(w[i] * g[i] * U - I * w[i] * (1 - g[i])) / (U * U);
                                  dx[static_cast<std::size_t>(i)] += g0 * dp * pr * (1 - pr);
                                }
                              }
                            });
  }
  return out;
}

FeatureLoss lossnet_loss(const Tensor& prob, const Tensor& mask, const LossNetExtractor& net,
                         FeatureDistance distance) {
  M2S_CHECK(prob.shape() == mask.shape(), Dimension, "lossnet_loss: shapes differ ", prob.shape().str(),
            " vs ", mask.shape().str());
  const auto fp = net.features(prob);
  std::vector<Tensor> fg;
  {
    // The ground-truth branch is a constant; keep it off any live tape.
    Tensor constant = mask.clone();
    fg = net.features(constant);
  }
  FeatureLoss out;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    Tensor d = sub(fp[i], fg[i]);
    Tensor term = distance == FeatureDistance::MeanSquared ? mean(mul(d, d)) : l2_norm(d);
    out.terms.push_back(term);
    out.total = out.total.defined() ? add(out.total, term) : term;
  }
  return out;
}

LossBundle total_loss(const Tensor& logits, const Tensor& target, const LossConfig& cfg,
                      const LossNetExtractor* net) {
  const Shape& s = logits.shape();
  M2S_CHECK(target.shape() == Shape({s.n, 1, s.h, s.w}), Dimension, "total_loss: target ",
            target.shape().str(), " does not match logits ", s.str());
  const bool use_lf = cfg.lossnet_enabled && net != nullptr;
  const std::int64_t classes = s.c;

  Tensor wbce, wiou, total;
  std::vector<Tensor> lf;
  for (std::int64_t c = 0; c < classes; ++c) {
    Tensor x = classes == 1 ? logits : select_channel(logits, c);
    Tensor g = target;
    if (classes > 1) {
      g = Tensor(target.shape());
      auto src = target.data();
      auto dst = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::lround(src[i]) == c ? Real(1) : Real(0);
    }
    const Tensor w = pixel_weights(g, cfg.weight_amplification, cfg.window);
    Tensor b = weighted_bce(x, g, w);
    Tensor u = weighted_iou(x, g, w, cfg.epsilon);
    wbce = wbce.defined() ? add(wbce, b) : b;
    wiou = wiou.defined() ? add(wiou, u) : u;
    if (use_lf) {
      auto f = lossnet_loss(sigmoid(x), g, *net, cfg.distance);
      if (lf.empty()) {
        lf = f.terms;
      } else {
        for (std::size_t i = 0; i < lf.size(); ++i) lf[i] = add(lf[i], f.terms[i]);
      }
    }
  }
  if (classes > 1) {
    const Real inv = Real(1) / static_cast<Real>(classes);
    wbce = mul_scalar(wbce, inv);
    wiou = mul_scalar(wiou, inv);
    for (auto& t : lf) t = mul_scalar(t, inv);
  }
  total = add(wbce, wiou);
  for (const auto& t : lf) total = add(total, t);

  LossBundle bundle;
  bundle.wbce = wbce.item();
  bundle.wiou = wiou.item();
  for (const auto& t : lf) bundle.lf_terms.push_back(t.item());
  bundle.total = total.item();
  bundle.total_tensor = total;
  M2S_CHECK(std::isfinite(bundle.total), Numeric, "total loss is not finite");
  return bundle;
}

}  // namespace m2s
