#pragma once

// Segmentation quality metrics.
//
// Conventions:
//  * Ratio metrics with a zero denominator evaluate to 1 when prediction and
//    ground truth are identical and 0 otherwise (so empty-vs-empty scores 1).
//  * Structure metrics (weighted F, S-measure, max E-measure) follow their
//    original toolkit definitions; the E-measure normalises by the pixel
//    count so a perfect map scores exactly 1.
//  * An undefined value is NaN and is skipped by aggregation.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace m2s {

struct Grid {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(std::int64_t rows, std::int64_t cols, double fill = 0.0)
      : h(rows), w(cols), v(static_cast<std::size_t>(rows * cols), fill) {}
  double& at(std::int64_t y, std::int64_t x) { return v[static_cast<std::size_t>(y * w + x)]; }
  double at(std::int64_t y, std::int64_t x) const { return v[static_cast<std::size_t>(y * w + x)]; }
  std::size_t size() const { return v.size(); }
};

struct LabelGrid {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<int> v;

  int at(std::int64_t y, std::int64_t x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

struct MetricParams {
  double binarize_threshold = 0.5;
  int e_measure_thresholds = 256;
  double s_alpha = 0.5;
  double fw_beta2 = 1.0;
  int fw_gauss_size = 7;
  double fw_gauss_sigma = 5.0;
  bool sweep_mean = false;

  void validate() const;
};

struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Grid binarize(const Grid& prob, double threshold);

Confusion confusion(const Grid& pred_bin, const Grid& gt);
double dice(const Confusion& c);
double jaccard(const Confusion& c);
double precision(const Confusion& c);
double recall(const Confusion& c);
double specificity(const Confusion& c);

double mae(const Grid& prob, const Grid& gt);
double f_beta_w(const Grid& prob, const Grid& gt, const MetricParams& params = {});
double s_measure(const Grid& prob, const Grid& gt, double alpha = 0.5);
// Enhanced-alignment score of a binary map.
double enhanced_alignment(const Grid& pred_bin, const Grid& gt);
double e_measure_max(const Grid& prob, const Grid& gt, int n_thresholds = 256);
// Mean per-column boundary-row distance for one layer class, in pixels.
double med(const LabelGrid& pred, const LabelGrid& gt, int class_id);

struct MeanStd {
  double mean = 0;
  double std = 0;
};
// Population standard deviation; NaN entries are skipped.
MeanStd mean_std(std::span<const double> values);
std::string format_mean_std(const MeanStd& ms, double scale = 100.0, int decimals = 2);

struct MetricReport {
  std::string protocol;
  std::vector<std::string> image_ids;
  std::vector<std::map<std::string, double>> per_image;
  std::vector<std::pair<std::string, double>> aggregate;

  double get(const std::string& key) const;
  std::string to_table() const;
  // One "metric=value" line per aggregate, fixed key order.
  std::string to_key_values() const;
};

MetricReport evaluate_dataset(const std::vector<Grid>& predictions, const std::vector<Grid>& masks,
                              const MetricParams& params, const std::vector<std::string>& ids = {});

// Per-class Dice and MED for label maps; classes 1..num_classes-1 are scored.
MetricReport evaluate_layers(const std::vector<LabelGrid>& predictions, const std::vector<LabelGrid>& masks,
                             int num_classes, const std::vector<std::string>& ids = {});

}  // namespace m2s
