#pragma once

// Command implementations shared by the C API and the command-line tool.
// Every command writes its outputs under `out` only.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "m2s/config.hpp"
#include "m2s/train.hpp"

namespace m2s {

using LogFn = std::function<void(const std::string&)>;

void run_synth_gen(const Config& cfg, const std::filesystem::path& out, const LogFn& log = {});

struct TrainSummary {
  TrainResult result;            // single run (kfold off)
  std::vector<MetricReport> folds;  // one per fold (kfold on)
  std::string kfold_table;
};
TrainSummary run_train(const Config& cfg, const std::filesystem::path& out, const LogFn& log = {});

MetricReport run_eval(const Config& cfg, const std::filesystem::path& out, const LogFn& log = {});

struct AblationCell {
  std::string label;
  FusionVariant fusion = FusionVariant::SU;
  int depth = 5;
  bool lossnet = false;
};

struct AblationRow {
  AblationCell cell;
  std::vector<std::uint64_t> seeds;
  std::vector<double> mdice;  // NaN for a failed seed
  std::vector<std::string> failures;
  double mean_mdice = 0;
  double median_mdice = 0;
  double mean_miou = 0;
  double mean_fbw = 0;
  double mean_emax = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::string text;
  const AblationRow* find(const std::string& label) const;
};

// "table7" or a comma list of depth, fusion, lossnet.
std::vector<AblationCell> ablation_cells(const std::string& axes);
AblationTable run_ablate(const Config& cfg, const std::filesystem::path& out, const LogFn& log = {});

// Trains one cell on `train_set` with the config's schedule and returns
// the test report of the final model.
MetricReport train_and_test(const Config& cfg, const AblationCell& cell, std::uint64_t seed,
                            const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                            TrainResult* result = nullptr);

struct FlopsSummary {
  MacReport su, msu, au;
  std::string text;
};
// Raises a contract error if the variants' parameter or MAC totals differ.
FlopsSummary run_flops(const Config& cfg, const std::filesystem::path& out, const LogFn& log = {});
std::string format_flops(const FlopsSummary& s, FusionVariant configured);

struct GradcheckEntry {
  std::string parameter;
  std::int64_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};
struct GradcheckResult {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed = false;
  std::string text;
};
// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);
GradcheckResult run_gradcheck(const Config& cfg, const std::filesystem::path& out, const LogFn& log = {});

// Merges epoch logs into one whitespace-aligned table. Columns of the i-th
// log get the suffix "_<i>" when more than one log is given.
std::string merge_curves(const std::vector<std::filesystem::path>& logs);
void export_curves(const std::vector<std::filesystem::path>& logs, const std::filesystem::path& out,
                   const LogFn& log = {});

}  // namespace m2s
