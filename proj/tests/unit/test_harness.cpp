#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "m2s/error.hpp"
#include "m2s/harness.hpp"
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

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("m2s_harness_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::set<std::string> files_under(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).generic_string());
  }
  return out;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

Config tiny_config() {
  Config c;
  c.set("model.input_size", "32");
  c.set("model.encoder_channels", "8,8,8,8,8");
  c.set("model.reduced_channels", "8");
  c.set("synth.canvas", "32");
  c.set("synth.radius_min", "4");
  c.set("synth.radius_max", "10");
  c.set("train.epochs", "1");
  c.set("train.scales", "1");
  return c;
}

}  // namespace

TEST(Ablation, CellLayouts) {
  const auto depth = ablation_cells("depth");
  ASSERT_EQ(depth.size(), 5u);
  for (int d = 0; d < 5; ++d) {
    EXPECT_EQ(depth[static_cast<std::size_t>(d)].depth, d + 1);
    EXPECT_EQ(depth[static_cast<std::size_t>(d)].fusion, FusionVariant::SU);
    EXPECT_FALSE(depth[static_cast<std::size_t>(d)].lossnet);
  }
  const auto t7 = ablation_cells("table7");
  ASSERT_EQ(t7.size(), 7u);
  const std::vector<std::string> labels = {"baseline (SU_1^i)", "+ SU_2^i", "+ SU_3^i", "+ SU_4^i",
                                           "+ SU_5^i",          "+ L_f",    "SU -> AU"};
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(t7[i].label, labels[i]);
  EXPECT_TRUE(t7[5].lossnet);
  EXPECT_EQ(t7[6].fusion, FusionVariant::AU);
  EXPECT_EQ(ablation_cells("fusion").size(), 3u);
  // lossnet=off duplicates depth=5.
  EXPECT_EQ(ablation_cells("depth, lossnet").size(), 6u);
  EXPECT_EQ(kind_of([] { ablation_cells("width"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { ablation_cells(""); }), ErrorKind::Config);
}

TEST(Ablation, TinyRunWritesPerSeedOutputs) {
  TempDir dir;
  Config c = tiny_config();
  run_synth_gen([&] {
    Config s = c;
    s.set("synth.count", "8");
    return s;
  }(), dir.path() / "tr");
  Config s = c;
  s.set("synth.count", "4");
  s.set("run.seed", "9");
  run_synth_gen(s, dir.path() / "te");
  c.set("ablate.train_dir", (dir.path() / "tr").string());
  c.set("ablate.test_dir", (dir.path() / "te").string());
  c.set("ablate.axes", "lossnet");
  c.set("ablate.seeds", "1,2");
  const auto table = run_ablate(c, dir.path() / "out");
  ASSERT_EQ(table.rows.size(), 2u);
  for (const auto& row : table.rows) {
    ASSERT_EQ(row.mdice.size(), 2u);
    for (double v : row.mdice) {
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 1);
    }
    EXPECT_NE(table.text.find(row.cell.label), std::string::npos);
  }
  ASSERT_NE(table.find("lossnet=on"), nullptr);
  EXPECT_EQ(table.find("nope"), nullptr);
  const auto files = files_under(dir.path() / "out");
  for (const char* cell : {"SU_d5_nolf", "SU_d5_lf"}) {
    for (const char* seed : {"1", "2"}) {
      const std::string base = std::string("cells/") + cell + "_seed" + seed;
      EXPECT_TRUE(files.count(base + "/train.log")) << base;
      EXPECT_TRUE(files.count(base + "/metrics.txt")) << base;
    }
  }
}

TEST(Flops, ParityAndGoldenTotals) {
  TempDir dir;
  Config c;
  const auto s = run_flops(c, dir.path());
  EXPECT_EQ(s.su.total_params, 238561);
  EXPECT_EQ(s.msu.total_params, 238561);
  EXPECT_EQ(s.au.total_params, 238561);
  EXPECT_EQ(s.msu.total_macs, 30548992);
  EXPECT_EQ(s.su.total_macs, s.au.total_macs);
  EXPECT_EQ(s.msu.total_fixed_filter_ops, 5608960);
  EXPECT_NE(s.text.find("parity=ok"), std::string::npos);
  EXPECT_EQ(files_under(dir.path()), (std::set<std::string>{"flops.txt"}));
}

TEST(Gradcheck, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(-2.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-3);
}

TEST(Gradcheck, PassesAndDetectsInjectedFault) {
  Config c;
  c.set("gradcheck.n_params", "6");
  const auto ok = run_gradcheck(c, {});
  EXPECT_TRUE(ok.passed) << ok.text;
  EXPECT_EQ(ok.entries.size(), 6u);
  EXPECT_LT(ok.max_rel_error, ok.tolerance);
  EXPECT_NE(ok.text.find("result=pass"), std::string::npos);
  c.set("gradcheck.inject_fault", "conv2d");
  const auto bad = run_gradcheck(c, {});
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.max_rel_error, 0.1);
  EXPECT_NE(bad.text.find("result=fail"), std::string::npos);
}

TEST(Curves, MergesLogsWithSuffixesAndPadding) {
  TempDir dir;
  const std::string head = "# m2snet training log\n# epoch\twbce\ttotal\n";
  write(dir.path() / "a.log", head + "1\t0.5\t0.9\n2\t0.4\t0.7\n");
  write(dir.path() / "b.log", head + "1\t0.6\t1.1\n");
  const std::string one = merge_curves({dir.path() / "a.log"});
  EXPECT_EQ(one.substr(0, one.find('\n')), "epoch  wbce  total");
  const std::string both = merge_curves({dir.path() / "a.log", dir.path() / "b.log"});
  EXPECT_NE(both.find("epoch_1"), std::string::npos);
  EXPECT_NE(both.find("total_2"), std::string::npos);
  EXPECT_NE(both.find("nan"), std::string::npos);
  export_curves({dir.path() / "a.log"}, dir.path() / "out");
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "curves.txt"));
}

TEST(Curves, BadInputs) {
  TempDir dir;
  EXPECT_EQ(kind_of([&] { merge_curves({dir.path() / "missing.log"}); }), ErrorKind::Io);
  write(dir.path() / "nohead.log", "1\t2\n");
  EXPECT_EQ(kind_of([&] { merge_curves({dir.path() / "nohead.log"}); }), ErrorKind::Format);
  write(dir.path() / "ragged.log", "# epoch\ta\tb\n1\t2\n");
  EXPECT_EQ(kind_of([&] { merge_curves({dir.path() / "ragged.log"}); }), ErrorKind::Format);
  EXPECT_EQ(kind_of([] { merge_curves({}); }), ErrorKind::Config);
}

TEST(SynthGen, WritesOnlyUnderOut) {
  TempDir dir;
  Config c = tiny_config();
  c.set("synth.count", "3");
  run_synth_gen(c, dir.path() / "gen");
  EXPECT_EQ(files_under(dir.path()),
            (std::set<std::string>{"gen/images/00000.ppm", "gen/images/00001.ppm", "gen/images/00002.ppm",
                                   "gen/masks/00000.pgm", "gen/masks/00001.pgm", "gen/masks/00002.pgm",
                                   "gen/synth.ini"}));
}
