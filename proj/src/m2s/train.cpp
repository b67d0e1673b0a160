#include "m2s/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "m2s/augment.hpp"
#include "m2s/rng.hpp"

namespace fs = std::filesystem;

namespace m2s {

namespace {

constexpr std::uint64_t kTagOrder = 0x6f72646572ULL;
constexpr std::uint64_t kTagScale = 0x7363616c65ULL;
constexpr std::uint64_t kTagAugment = 0x6175676dULL;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string log_header(const M2SModel& model, const TrainConfig& t, const LossConfig& l, std::size_t n_train,
                       std::size_t n_val) {
  std::ostringstream os;
  os << "# m2snet training log\n";
  os << "# fusion=" << to_string(model.config().fusion) << " pyramid_depth=" << model.config().pyramid_depth
     << " num_classes=" << model.config().num_classes << " input=" << model.config().input_h << "x"
     << model.config().input_w << "\n";
  os << "# seed=" << t.seed << " epochs=" << t.epochs << " batch_size=" << t.batch_size
     << " lr_head=" << fmt(t.schedule.lr_head) << " lr_backbone=" << fmt(t.schedule.lr_backbone)
     << " warmup_fraction=" << fmt(t.schedule.warmup_fraction) << " momentum=" << fmt(t.sgd.momentum)
     << " weight_decay=" << fmt(t.sgd.weight_decay) << " grad_clip=" << fmt(t.grad_clip) << "\n";
  os << "# scales=";
  for (std::size_t i = 0; i < t.scales.size(); ++i) os << (i ? "," : "") << fmt(t.scales[i]);
  os << " augment=" << (t.augment ? "flip+rotate" : "off") << " rotation=+-" << t.max_angle << "deg"
     << " lossnet=" << (l.lossnet_enabled ? "on" : "off") << "\n";
  os << "# train=" << n_train << " val=" << n_val << "\n";
  os << "# epoch\twbce\twiou\tlf\ttotal\tval_mdice\n";
  return os.str();
}

std::string log_line(const EpochRecord& r) {
  return std::to_string(r.epoch) + "\t" + fmt(r.wbce) + "\t" + fmt(r.wiou) + "\t" + fmt(r.lf) + "\t" +
         fmt(r.total) + "\t" + fmt(r.val_mdice) + "\n";
}

Tensor forward_at_input(const M2SModel& model, const Image8& image) {
  const auto& mc = model.config();
  Tensor x = image_tensor(image);
  if (image.height != mc.input_h || image.width != mc.input_w) x = bilinear_resize(x, mc.input_h, mc.input_w);
  return model.forward(x);
}

}  // namespace

void TrainConfig::validate() const {
  M2S_CHECK(epochs >= 1, Config, "epochs must be >= 1");
  M2S_CHECK(batch_size >= 1, Config, "batch_size must be >= 1");
  M2S_CHECK(!scales.empty(), Config, "scales must not be empty");
  for (double s : scales) M2S_CHECK(s > 0, Config, "scales must be positive");
  M2S_CHECK(schedule.warmup_fraction >= 0 && schedule.warmup_fraction < 0.5, Config,
            "warmup_fraction must be in [0,0.5)");
  M2S_CHECK(max_steps >= 0, Config, "max_steps must be >= 0");
  M2S_CHECK(grad_clip >= 0, Config, "grad_clip must be >= 0");
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.epochs = static_cast<int>(cfg.get_int("train.epochs"));
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  t.schedule = schedule_config(cfg);
  t.sgd = sgd_config(cfg);
  t.scales = cfg.get_real_list("train.scales");
  t.augment = cfg.get_bool("train.augment");
  t.max_angle = static_cast<int>(cfg.get_int("train.max_angle"));
  t.max_steps = cfg.get_int("train.max_steps");
  t.grad_clip = cfg.get_real("train.grad_clip");
  t.seed = cfg.seed();
  t.write_best = cfg.get_bool("train.checkpoint_every_best");
  t.validate();
  return t;
}

int scaled_size(int base, double scale) {
  const long v = std::lround(scale * base / 32.0) * 32;
  return static_cast<int>(std::max(32L, v));
}

std::pair<Tensor, Tensor> make_batch(const std::vector<const Sample*>& samples, int h, int w, int num_classes) {
  const auto n = static_cast<std::int64_t>(samples.size());
  Tensor x(Shape{n, 3, h, w});
  Tensor g(Shape{n, 1, h, w});
  const std::int64_t img_stride = 3LL * h * w, mask_stride = 1LL * h * w;
  for (std::int64_t i = 0; i < n; ++i) {
    const Sample& s = *samples[static_cast<std::size_t>(i)];
    Tensor img = image_tensor(s.image);
    if (s.image.height != h || s.image.width != w) img = bilinear_resize(img, h, w);
    std::copy(img.data().begin(), img.data().end(), x.data().begin() + i * img_stride);
    const Tensor m = mask_tensor(resize_nearest(s.mask, w, h), num_classes);
    std::copy(m.data().begin(), m.data().end(), g.data().begin() + i * mask_stride);
  }
  return {x, g};
}

TrainResult train(M2SModel& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& tcfg, const LossConfig& lcfg, const fs::path& out_dir,
                  const TrainHooks& hooks) {
  tcfg.validate();
  lcfg.validate();
  M2S_CHECK(!train_set.empty(), Data, "train: dataset is empty");
  const auto& mc = model.config();
  const std::size_t n = train_set.size();
  const std::size_t bs = static_cast<std::size_t>(tcfg.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  std::int64_t total_steps = static_cast<std::int64_t>(batches) * tcfg.epochs;
  if (tcfg.max_steps > 0) total_steps = std::min(total_steps, tcfg.max_steps);

  std::unique_ptr<LossNetExtractor> net;
  if (lcfg.lossnet_enabled) net = std::make_unique<LossNetExtractor>(LossNetExtractor::from_config(lcfg));

  Sgd sgd(model.parameters(), tcfg.sgd);
  TrainResult result;
  result.best_val = -std::numeric_limits<double>::infinity();
  result.log = log_header(model, tcfg, lcfg, n, val_set.size());

  std::ofstream log_file;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log_file.open(out_dir / "train.log", std::ios::binary);
    M2S_CHECK(log_file.good(), Io, "cannot write '", (out_dir / "train.log").string(), "'");
    log_file << result.log << std::flush;
  }

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= tcfg.epochs && step < total_steps; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto order_rng = make_rng(tcfg.seed, {kTagOrder, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(order_rng)]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches && step < total_steps; ++b) {
      std::vector<Sample> augmented;
      std::vector<const Sample*> batch;
      for (std::size_t j = b * bs; j < std::min(n, (b + 1) * bs); ++j) {
        const std::size_t idx = order[j];
        if (tcfg.augment) {
          auto rng = make_rng(tcfg.seed, {kTagAugment, idx, static_cast<std::uint64_t>(epoch)});
          augmented.push_back(apply_augment(train_set[idx], draw_augment(rng, tcfg.max_angle)));
        }
      }
      for (std::size_t j = b * bs, k = 0; j < std::min(n, (b + 1) * bs); ++j, ++k) {
        batch.push_back(tcfg.augment ? &augmented[k] : &train_set[order[j]]);
      }
      auto scale_rng = make_rng(tcfg.seed, {kTagScale, static_cast<std::uint64_t>(step)});
      const double scale =
          tcfg.scales[std::uniform_int_distribution<std::size_t>(0, tcfg.scales.size() - 1)(scale_rng)];
      const int h = scaled_size(mc.input_h, scale), w = scaled_size(mc.input_w, scale);
      auto [x, g] = make_batch(batch, h, w, mc.num_classes);

      model.zero_grad();
      LossBundle bundle;
      {
        Tape tape;
        const Tensor logits = model.forward(x);
        try {
          bundle = total_loss(logits, g, lcfg, net.get());
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::Numeric) throw;
          M2S_THROW(Numeric, "non-finite loss at step ", step, " (epoch ", epoch, "): ", e.what());
        }
        tape.backward(bundle.total_tensor);
      }
      const LearningRates lr = lr_schedule(step, total_steps, tcfg.schedule);
      clip_grad_norm(model.parameters(), tcfg.grad_clip);
      sgd.step(lr.backbone, lr.head);
      if (hooks.on_step) hooks.on_step(step, bundle);

      const double wgt = static_cast<double>(batch.size());
      rec.wbce += bundle.wbce * wgt;
      rec.wiou += bundle.wiou * wgt;
      rec.lf += bundle.lf() * wgt;
      rec.total += bundle.total * wgt;
      seen += batch.size();
      ++step;
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(seen, 1));
    rec.wbce *= inv;
    rec.wiou *= inv;
    rec.lf *= inv;
    rec.total *= inv;
    rec.val_mdice = val_set.empty() ? std::numeric_limits<double>::quiet_NaN() : validation_mdice(model, val_set);

    const std::string line = log_line(rec);
    result.log += line;
    if (log_file.is_open()) log_file << line << std::flush;
    result.epochs.push_back(rec);

    const bool improved = !val_set.empty() && rec.val_mdice > result.best_val;
    if (improved) {
      result.best_val = rec.val_mdice;
      result.best_epoch = epoch;
      if (!out_dir.empty() && tcfg.write_best) {
        Checkpoint ck = model.to_checkpoint();
        ck.metadata["meta.epoch"] = std::to_string(epoch);
        write_checkpoint(out_dir / "best.m2sn", ck);
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(rec, model);
  }
  result.steps = step;
  if (val_set.empty() && !result.epochs.empty()) {
    result.best_epoch = result.epochs.back().epoch;
    result.best_val = std::numeric_limits<double>::quiet_NaN();
  }
  if (!out_dir.empty()) {
    Checkpoint ck = model.to_checkpoint();
    ck.metadata["meta.epoch"] = std::to_string(result.epochs.empty() ? 0 : result.epochs.back().epoch);
    write_checkpoint(out_dir / "final.m2sn", ck);
    if (val_set.empty() || !tcfg.write_best) write_checkpoint(out_dir / "best.m2sn", ck);
  }
  return result;
}

Grid predict_prob(const M2SModel& model, const Image8& image) {
  M2S_CHECK(model.config().num_classes == 1, Contract, "predict_prob needs a binary head");
  Tensor p = sigmoid(forward_at_input(model, image));
  if (p.shape().h != image.height || p.shape().w != image.width) p = bilinear_resize(p, image.height, image.width);
  Grid g(image.height, image.width);
  std::copy(p.data().begin(), p.data().end(), g.v.begin());
  return g;
}

LabelGrid predict_labels(const M2SModel& model, const Image8& image) {
  const Tensor logits = forward_at_input(model, image);
  const Shape& s = logits.shape();
  Image8 labels{static_cast<int>(s.w), static_cast<int>(s.h), 1,
                std::vector<std::uint8_t>(static_cast<std::size_t>(s.h * s.w))};
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) {
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < s.c; ++c) {
        if (logits.at(0, c, y, x) > logits.at(0, best, y, x)) best = c;
      }
      labels.at(static_cast<int>(y), static_cast<int>(x)) = static_cast<std::uint8_t>(best);
    }
  }
  return label_grid(resize_nearest(labels, image.width, image.height));
}

Grid mask_grid(const Image8& mask) {
  Grid g(mask.height, mask.width);
  for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = mask.pixels[i] >= 128 ? 1.0 : 0.0;
  return g;
}

LabelGrid label_grid(const Image8& mask) {
  LabelGrid g;
  g.h = mask.height;
  g.w = mask.width;
  g.v.assign(mask.pixels.begin(), mask.pixels.end());
  return g;
}

MetricReport evaluate(const M2SModel& model, const std::vector<Sample>& samples, const MetricParams& params) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  if (model.config().num_classes == 1) {
    std::vector<Grid> preds, masks;
    for (const auto& s : samples) {
      preds.push_back(predict_prob(model, s.image));
      masks.push_back(mask_grid(s.mask));
    }
    return evaluate_dataset(preds, masks, params, ids);
  }
  std::vector<LabelGrid> preds, masks;
  for (const auto& s : samples) {
    preds.push_back(predict_labels(model, s.image));
    masks.push_back(label_grid(s.mask));
  }
  return evaluate_layers(preds, masks, model.config().num_classes, ids);
}

double validation_mdice(const M2SModel& model, const std::vector<Sample>& samples) {
  if (model.config().num_classes == 1) {
    double sum = 0;
    for (const auto& s : samples) {
      const Grid p = binarize(predict_prob(model, s.image), 0.5);
      sum += dice(confusion(p, mask_grid(s.mask)));
    }
    return sum / static_cast<double>(samples.size());
  }
  return evaluate(model, samples, MetricParams{}).get("mDice");
}

}  // namespace m2s
