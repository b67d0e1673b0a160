#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "m2s/config.hpp"
#include "m2s/error.hpp"
#include "m2s/optim.hpp"
#include "m2s/synth.hpp"
#include "m2s/train.hpp"
#include "support.hpp"

using namespace m2s;
using namespace m2s::test;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Contract;
}

std::vector<Parameter> scalar_params(std::initializer_list<std::pair<Real, Real>> value_grad) {
  std::vector<Parameter> out;
  int i = 0;
  for (auto [v, g] : value_grad) {
    Parameter p;
    p.name = "p" + std::to_string(i++);
    p.tensor = Tensor(Shape{1, 1, 1, 1}, v);
    p.tensor.grad_mut()[0] = g;
    out.push_back(p);
  }
  return out;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.input_h = m.input_w = 32;
  m.encoder_channels = {8, 8, 8, 8, 8};
  m.reduced_channels = 8;
  return m;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 4;
  t.scales = {1.0};
  return t;
}

std::vector<Sample> tiny_data(std::size_t n, std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.canvas = 32;
  s.radius_min = 4;
  s.radius_max = 10;
  return synth_samples(s, seed, n);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("m2s_train_" + tag + "_" + std::to_string(std::random_device{}()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Sgd, MomentumExamples) {
  auto params = scalar_params({{1, 1}});
  Sgd opt(params, {0.9, 0.0});
  opt.step(0.1);
  EXPECT_DOUBLE_EQ(params[0].tensor.data()[0], 0.9);
  opt.step(0.1);
  EXPECT_DOUBLE_EQ(params[0].tensor.data()[0], 0.71);
}

TEST(Sgd, WeightDecayOnly) {
  auto params = scalar_params({{1, 0}});
  Sgd opt(params, {0.9, 0.0005});
  opt.step(0.1);
  EXPECT_DOUBLE_EQ(params[0].tensor.data()[0], 0.99995);
}

TEST(Sgd, ZeroLearningRateLeavesParameters) {
  auto params = scalar_params({{0.3, 5}, {-2, 1}});
  Sgd opt(params, {});
  for (int i = 0; i < 3; ++i) opt.step(0.0);
  EXPECT_EQ(params[0].tensor.data()[0], 0.3);
  EXPECT_EQ(params[1].tensor.data()[0], -2.0);
}

TEST(Sgd, BackboneAndHeadRates) {
  auto params = scalar_params({{1, 1}, {1, 1}});
  params[0].backbone = true;
  Sgd opt(params, {0.0, 0.0});
  opt.step(0.01, 0.1);
  EXPECT_DOUBLE_EQ(params[0].tensor.data()[0], 0.99);
  EXPECT_DOUBLE_EQ(params[1].tensor.data()[0], 0.9);
}

TEST(Sgd, FrozenSkippedAndMissingGradientIsContractError) {
  auto params = scalar_params({{1, 1}});
  Parameter frozen;
  frozen.name = "frozen";
  frozen.tensor = Tensor(Shape{1, 1, 1, 1}, 4.0);
  frozen.trainable = false;
  params.push_back(frozen);
  Sgd opt(params, {});
  opt.step(0.1);
  EXPECT_EQ(params[1].tensor.data()[0], 4.0);
  Parameter bare;
  bare.name = "bare";
  bare.tensor = Tensor(Shape{1, 1, 1, 1}, 1.0);
  std::vector<Parameter> missing{bare};
  Sgd opt2(missing, {});
  EXPECT_EQ(kind_of([&] { opt2.step(0.1); }), ErrorKind::Contract);
}

TEST(GradClip, ScalesToBound) {
  auto params = scalar_params({{0, 3}, {0, 4}});
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 0), 5.0);
  EXPECT_EQ(params[0].tensor.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10), 5.0);
  EXPECT_EQ(params[1].tensor.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1), 5.0);
  EXPECT_DOUBLE_EQ(params[0].tensor.grad()[0], 0.6);
  EXPECT_DOUBLE_EQ(params[1].tensor.grad()[0], 0.8);
  EXPECT_NEAR(clip_grad_norm(params, 0), 1.0, 1e-15);
}

TEST(Schedule, EndpointsAndPeak) {
  ScheduleConfig c{0.05, 0.005, 0.1};
  EXPECT_EQ(warmup_steps(100, 0.1), 10);
  EXPECT_EQ(lr_schedule(0, 100, c).head, 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 100, c).head, 0.05);
  EXPECT_DOUBLE_EQ(lr_schedule(10, 100, c).backbone, 0.005);
  EXPECT_DOUBLE_EQ(lr_schedule(5, 100, c).head, 0.025);
  EXPECT_DOUBLE_EQ(lr_schedule(55, 100, c).head, 0.025);
  EXPECT_EQ(lr_schedule(100, 100, c).head, 0.0);
  EXPECT_EQ(lr_schedule(150, 100, c).head, 0.0);
}

TEST(Schedule, PeakAttainedOnceAndContinuous) {
  for (double warm : {0.05, 0.1, 0.3}) {
    ScheduleConfig c{1.0, 0.1, warm};
    for (std::int64_t total : {7, 40, 333}) {
      int peaks = 0;
      const std::int64_t w = std::max<std::int64_t>(warmup_steps(total, warm), 1);
      const double max_jump = 1.0 / std::min<double>(static_cast<double>(w), static_cast<double>(total - w));
      for (std::int64_t s = 0; s <= total; ++s) {
        const double v = lr_schedule(s, total, c).head;
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        peaks += v == 1.0;
        if (s > 0) {
          EXPECT_LE(std::abs(v - lr_schedule(s - 1, total, c).head), max_jump + 1e-12);
        }
      }
      EXPECT_EQ(peaks, 1) << warm << " " << total;
    }
  }
}

TEST(Schedule, WarmupOutOfRangeIsConfigError) {
  EXPECT_EQ(kind_of([] { lr_schedule(0, 10, ScheduleConfig{0.1, 0.1, 0.5}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { lr_schedule(0, 0, ScheduleConfig{}); }), ErrorKind::Contract);
}

TEST(Train, ScaledSizes) {
  EXPECT_EQ(scaled_size(352, 0.75), 256);
  EXPECT_EQ(scaled_size(352, 1.0), 352);
  EXPECT_EQ(scaled_size(352, 1.25), 448);
  EXPECT_EQ(scaled_size(64, 1.25), 96);
  EXPECT_EQ(scaled_size(10, 1.0), 32);
  for (double s : {0.5, 0.75, 1.0, 1.25, 2.0}) EXPECT_EQ(scaled_size(200, s) % 32, 0);
}

TEST(Train, BatchShapes) {
  const auto data = tiny_data(3);
  auto [x, y] = make_batch({&data[0], &data[1], &data[2]}, 64, 32, 1);
  EXPECT_EQ(x.shape(), (Shape{3, 3, 64, 32}));
  EXPECT_EQ(y.shape(), (Shape{3, 1, 64, 32}));
  for (Real v : y.data()) EXPECT_TRUE(v == 0 || v == 1);
}

TEST(Train, ZeroLearningRateKeepsParametersBitwise) {
  M2SModel model(tiny_model(), 5);
  std::vector<std::vector<Real>> before;
  for (const auto& p : model.parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  auto t = tiny_train();
  t.epochs = 1;
  t.schedule.lr_head = t.schedule.lr_backbone = 0;
  LossConfig l;
  const auto r = train(model, tiny_data(8), {}, t, l);
  EXPECT_EQ(r.steps, 2);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto d = model.parameters()[i].tensor.data();
    ASSERT_EQ(std::memcmp(d.data(), before[i].data(), d.size_bytes()), 0) << model.parameters()[i].name;
  }
}

TEST(Train, SameSeedSameLogAndCheckpoint) {
  const auto data = tiny_data(8);
  const auto val = tiny_data(4, 99);
  std::string logs[2], ckpts[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = fresh_dir(std::to_string(run));
    M2SModel model(tiny_model(), 5);
    const auto r = train(model, data, val, tiny_train(), LossConfig{}, dir);
    logs[run] = slurp(dir / "train.log");
    ckpts[run] = slurp(dir / "final.m2sn");
    EXPECT_EQ(logs[run], r.log);
    EXPECT_TRUE(fs::exists(dir / "best.m2sn"));
    fs::remove_all(dir);
  }
  EXPECT_FALSE(ckpts[0].empty());
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(ckpts[0], ckpts[1]);
  EXPECT_NE(logs[0].find("grad_clip="), std::string::npos);
}

TEST(Train, RecordsEveryEpochAndRespectsMaxSteps) {
  M2SModel model(tiny_model(), 5);
  auto t = tiny_train();
  t.epochs = 3;
  t.max_steps = 4;
  int hooks = 0;
  TrainHooks h;
  h.on_step = [&](std::int64_t, const LossBundle& b) {
    EXPECT_TRUE(std::isfinite(b.total));
    ++hooks;
  };
  const auto r = train(model, tiny_data(8), tiny_data(4, 99), t, LossConfig{}, {}, h);
  EXPECT_EQ(r.steps, 4);
  EXPECT_EQ(hooks, 4);
  ASSERT_FALSE(r.epochs.empty());
  for (const auto& e : r.epochs) {
    EXPECT_NEAR(e.total, e.wbce + e.wiou + e.lf, 1e-9);
    EXPECT_GE(e.val_mdice, 0);
    EXPECT_LE(e.val_mdice, 1);
  }
}

TEST(Train, PredictionsMatchImageSize) {
  M2SModel model(tiny_model(), 5);
  const auto data = tiny_data(1);
  Image8 img = resize_nearest(data[0].image, 45, 37);
  const Grid p = predict_prob(model, img);
  EXPECT_EQ(p.h, 37);
  EXPECT_EQ(p.w, 45);
  for (double v : p.v) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 1);
  }
}

TEST(Config, DefaultsParseAndValidate) {
  Config c;
  EXPECT_NO_THROW(c.validate());
  const auto t = train_config(c);
  EXPECT_EQ(t.grad_clip, 1.0);
  EXPECT_EQ(model_config(c).fusion, FusionVariant::MSU);
  EXPECT_TRUE(model_config(c).msu_normalize);
}

TEST(Config, IniOverridesAndDumpRoundTrip) {
  Config c;
  c.merge_ini("# comment\n[train]\nepochs = 7\nscales = 0.5,1\n[model]\nfusion = AU\n");
  c.set_override("loss.lossnet=false");
  EXPECT_EQ(c.get_int("train.epochs"), 7);
  EXPECT_EQ(c.get_real_list("train.scales"), (std::vector<double>{0.5, 1.0}));
  EXPECT_FALSE(c.get_bool("loss.lossnet"));
  Config d;
  d.merge_ini(c.dump());
  EXPECT_EQ(d.dump(), c.dump());
}

TEST(Config, MalformedInputIsConfigError) {
  Config c;
  EXPECT_EQ(kind_of([&] { c.set("train.nope", "1"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { c.set("train.epochs", "ten"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { c.set("model.fusion", "XU"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { c.set_override("train.epochs"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { c.merge_ini("[train\n"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { c.merge_ini("[train]\nepochs\n"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { Config::load("/nonexistent/m2s.ini"); }), ErrorKind::Config);
  Config bad;
  bad.set("train.grad_clip", "-1");
  EXPECT_EQ(kind_of([&] { train_config(bad); }), ErrorKind::Config);
  Config warm;
  warm.set("train.warmup_fraction", "0.7");
  EXPECT_EQ(kind_of([&] { warm.validate(); }), ErrorKind::Config);
}

TEST(Config, HelpListsEveryKey) {
  const std::string help = config_help();
  for (const auto& e : config_schema()) {
    EXPECT_NE(help.find(std::string("  ") + e.key + " = "), std::string::npos) << e.key;
    EXPECT_NE(find_schema(e.key), nullptr);
  }
  EXPECT_EQ(find_schema("nope.nope"), nullptr);
}
