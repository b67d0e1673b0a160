#include "m2s/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "m2s/error.hpp"

namespace m2s {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
const double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same(const Grid& a, const Grid& b, const char* op) {
  M2S_CHECK(a.h == b.h && a.w == b.w, Dimension, op, ": size mismatch ", a.h, "x", a.w, " vs ", b.h, "x",
            b.w);
}

void require_binary(const Grid& g, const char* what) {
  for (std::size_t i = 0; i < g.v.size(); ++i) {
    M2S_CHECK(g.v[i] == 0.0 || g.v[i] == 1.0, Data, what, " is not binary at pixel ", i, " (value ", g.v[i],
              ")");
  }
}

double ratio(std::int64_t num, std::int64_t den, bool identical) {
  if (den == 0) return identical ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

bool identical(const Confusion& c) { return c.fp == 0 && c.fn == 0; }

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

void MetricParams::validate() const {
  M2S_CHECK(e_measure_thresholds >= 1, Config, "e_measure_thresholds must be >= 1");
  M2S_CHECK(s_alpha > 0 && s_alpha < 1, Config, "s_alpha must be in (0,1)");
  M2S_CHECK(fw_beta2 > 0, Config, "fw_beta2 must be > 0");
  M2S_CHECK(fw_gauss_size >= 1 && fw_gauss_size % 2 == 1, Config, "fw gaussian size must be odd");
  M2S_CHECK(fw_gauss_sigma > 0, Config, "fw gaussian sigma must be > 0");
}

Grid binarize(const Grid& prob, double threshold) {
  Grid out(prob.h, prob.w);
  for (std::size_t i = 0; i < prob.v.size(); ++i) out.v[i] = prob.v[i] >= threshold ? 1.0 : 0.0;
  return out;
}

Confusion confusion(const Grid& pred_bin, const Grid& gt) {
  require_same(pred_bin, gt, "confusion");
  require_binary(pred_bin, "prediction");
  require_binary(gt, "ground truth");
  Confusion c;
  for (std::size_t i = 0; i < gt.v.size(); ++i) {
    const bool p = pred_bin.v[i] != 0.0;
    const bool g = gt.v[i] != 0.0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dice(const Confusion& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, identical(c)); }
double jaccard(const Confusion& c) { return ratio(c.tp, c.tp + c.fp + c.fn, identical(c)); }
double precision(const Confusion& c) { return ratio(c.tp, c.tp + c.fp, identical(c)); }
double recall(const Confusion& c) { return ratio(c.tp, c.tp + c.fn, identical(c)); }
double specificity(const Confusion& c) { return ratio(c.tn, c.tn + c.fp, identical(c)); }

double mae(const Grid& prob, const Grid& gt) {
  require_same(prob, gt, "mae");
  double s = 0;
  for (std::size_t i = 0; i < gt.v.size(); ++i) s += std::abs(prob.v[i] - gt.v[i]);
  return s / static_cast<double>(gt.v.size());
}

// ---------------------------------------------------------------------------
// Weighted F-measure

double f_beta_w(const Grid& prob, const Grid& gt, const MetricParams& params) {
  require_same(prob, gt, "f_beta_w");
  require_binary(gt, "ground truth");
  const std::int64_t h = gt.h, w = gt.w, n = h * w;
  std::vector<std::int64_t> fg;
  for (std::int64_t i = 0; i < n; ++i) {
    if (gt.v[static_cast<std::size_t>(i)] != 0.0) fg.push_back(i);
  }
  if (fg.empty()) return kNaN;

  std::vector<double> err(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    err[static_cast<std::size_t>(i)] = std::abs(prob.v[static_cast<std::size_t>(i)] - gt.v[static_cast<std::size_t>(i)]);
  }

  // Exact Euclidean distance transform to the foreground with nearest index.
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  std::vector<double> err_t = err;
  for (std::int64_t i = 0; i < n; ++i) {
    if (gt.v[static_cast<std::size_t>(i)] != 0.0) continue;
    const std::int64_t y = i / w, x = i % w;
    std::int64_t best = -1, best_d2 = std::numeric_limits<std::int64_t>::max();
    for (std::int64_t j : fg) {
      const std::int64_t dy = j / w - y, dx = j % w - x;
      const std::int64_t d2 = dy * dy + dx * dx;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = j;
      }
    }
    dist[static_cast<std::size_t>(i)] = std::sqrt(static_cast<double>(best_d2));
    err_t[static_cast<std::size_t>(i)] = err[static_cast<std::size_t>(best)];
  }

  const int ks = params.fw_gauss_size;
  const int r = ks / 2;
  std::vector<double> kernel(static_cast<std::size_t>(ks * ks));
  double ksum = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * params.fw_gauss_sigma * params.fw_gauss_sigma));
      kernel[static_cast<std::size_t>((dy + r) * ks + dx + r)] = v;
      ksum += v;
    }
  }
  for (double& v : kernel) v /= ksum;

  double tp_w = static_cast<double>(fg.size());
  double fp_w = 0;
  double ew_fg_sum = 0;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y * w + x);
      const bool is_fg = gt.v[i] != 0.0;
      double e = err[i];
      if (is_fg) {
        // Zero-padded correlation of the propagated error with the Gaussian.
        double ea = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const std::int64_t yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const std::int64_t xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            ea += kernel[static_cast<std::size_t>((dy + r) * ks + dx + r)] * err_t[static_cast<std::size_t>(yy * w + xx)];
          }
        }
        if (ea < e) e = ea;
        ew_fg_sum += e;
      } else {
        const double importance = 2.0 - std::exp(std::log(0.5) / 5.0 * dist[i]);
        fp_w += e * importance;
      }
    }
  }
  tp_w -= ew_fg_sum;
  const double rec = 1.0 - ew_fg_sum / static_cast<double>(fg.size());
  const double prec = tp_w / (kEps + tp_w + fp_w);
  const double b2 = params.fw_beta2;
  return (1.0 + b2) * (rec * prec) / (kEps + rec + b2 * prec);
}

// ---------------------------------------------------------------------------
// S-measure

namespace {

double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double x = mean_of(values);
  double var = 0;
  for (double v : values) var += (v - x) * (v - x);
  const double sigma = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double block_ssim(const Grid& prob, const Grid& gt, std::int64_t y0, std::int64_t y1, std::int64_t x0,
                  std::int64_t x1) {
  const std::int64_t n = (y1 - y0) * (x1 - x0);
  if (n <= 0) return 0.0;
  double mx = 0, my = 0;
  for (std::int64_t y = y0; y < y1; ++y) {
    for (std::int64_t x = x0; x < x1; ++x) {
      mx += prob.at(y, x);
      my += gt.at(y, x);
    }
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::int64_t y = y0; y < y1; ++y) {
    for (std::int64_t x = x0; x < x1; ++x) {
      const double a = prob.at(y, x) - mx;
      const double b = gt.at(y, x) - my;
      sxx += a * a;
      syy += b * b;
      sxy += a * b;
    }
  }
  const double norm = n > 1 ? static_cast<double>(n - 1) : 1.0;
  sxx /= norm;
  syy /= norm;
  sxy /= norm;
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return alpha / beta;
  return beta == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double s_measure(const Grid& prob, const Grid& gt, double alpha) {
  require_same(prob, gt, "s_measure");
  require_binary(gt, "ground truth");
  const double fg_mean = mean_of(gt.v);
  double pm = mean_of(prob.v);
  if (fg_mean == 0.0) return 1.0 - pm;
  if (fg_mean == 1.0) return pm;

  std::vector<double> fg_vals, bg_vals;
  for (std::size_t i = 0; i < gt.v.size(); ++i) {
    if (gt.v[i] != 0.0) fg_vals.push_back(prob.v[i]);
    else bg_vals.push_back(1.0 - prob.v[i]);
  }
  const double s_object = fg_mean * object_score(fg_vals) + (1.0 - fg_mean) * object_score(bg_vals);

  // 1-based centroid rounded half away from zero; the four blocks split after it.
  double total = 0, sx = 0, sy = 0;
  for (std::int64_t y = 0; y < gt.h; ++y) {
    for (std::int64_t x = 0; x < gt.w; ++x) {
      const double g = gt.at(y, x);
      total += g;
      sx += g * static_cast<double>(x + 1);
      sy += g * static_cast<double>(y + 1);
    }
  }
  const std::int64_t cx = static_cast<std::int64_t>(std::round(sx / total));
  const std::int64_t cy = static_cast<std::int64_t>(std::round(sy / total));
  const double area = static_cast<double>(gt.h * gt.w);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((gt.w - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (gt.h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double s_region = w1 * block_ssim(prob, gt, 0, cy, 0, cx) + w2 * block_ssim(prob, gt, 0, cy, cx, gt.w) +
                          w3 * block_ssim(prob, gt, cy, gt.h, 0, cx) +
                          w4 * block_ssim(prob, gt, cy, gt.h, cx, gt.w);
  return std::max(0.0, alpha * s_object + (1.0 - alpha) * s_region);
}

// ---------------------------------------------------------------------------
// E-measure

double enhanced_alignment(const Grid& pred_bin, const Grid& gt) {
  require_same(pred_bin, gt, "e_measure");
  const auto n = static_cast<double>(gt.v.size());
  std::int64_t counts[2][2] = {{0, 0}, {0, 0}};  // [pred][gt]
  for (std::size_t i = 0; i < gt.v.size(); ++i) {
    ++counts[pred_bin.v[i] != 0.0][gt.v[i] != 0.0];
  }
  const std::int64_t gt_fg = counts[0][1] + counts[1][1];
  const std::int64_t pred_fg = counts[1][0] + counts[1][1];
  double total = 0;
  if (gt_fg == 0) {
    total = n - static_cast<double>(pred_fg);
  } else if (gt_fg == static_cast<std::int64_t>(gt.v.size())) {
    total = static_cast<double>(pred_fg);
  } else {
    const double mp = static_cast<double>(pred_fg) / n;
    const double mg = static_cast<double>(gt_fg) / n;
    for (int p = 0; p < 2; ++p) {
      for (int g = 0; g < 2; ++g) {
        if (counts[p][g] == 0) continue;
        const double a = p - mp;
        const double b = g - mg;
        const double den = a * a + b * b;
        const double align = den == 0.0 ? 0.0 : 2.0 * a * b / den;
        const double enhanced = (align + 1.0) * (align + 1.0) / 4.0;
        total += enhanced * static_cast<double>(counts[p][g]);
      }
    }
  }
  return total / n;
}

double e_measure_max(const Grid& prob, const Grid& gt, int n_thresholds) {
  require_same(prob, gt, "e_measure_max");
  require_binary(gt, "ground truth");
  M2S_CHECK(n_thresholds >= 1, Config, "e_measure thresholds must be >= 1");
  double best = -1;
  for (int j = 0; j < n_thresholds; ++j) {
    const double t = n_thresholds == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(n_thresholds - 1);
    best = std::max(best, enhanced_alignment(binarize(prob, t), gt));
  }
  return best;
}

// ---------------------------------------------------------------------------
// MED

double med(const LabelGrid& pred, const LabelGrid& gt, int class_id) {
  M2S_CHECK(pred.h == gt.h && pred.w == gt.w, Dimension, "med: size mismatch");
  double total = 0;
  std::int64_t boundaries = 0;
  for (std::int64_t x = 0; x < gt.w; ++x) {
    std::int64_t gt_top = -1, gt_bot = -1;
    for (std::int64_t y = 0; y < gt.h; ++y) {
      if (gt.at(y, x) != class_id) continue;
      if (gt_top < 0) gt_top = y;
      M2S_CHECK(gt_bot < 0 || gt_bot == y - 1, Data, "med: class ", class_id,
                " is not a contiguous band in ground-truth column ", x);
      gt_bot = y;
    }
    if (gt_top < 0) continue;
    std::int64_t p_top = -1, p_bot = -1;
    for (std::int64_t y = 0; y < pred.h; ++y) {
      if (pred.at(y, x) != class_id) continue;
      if (p_top < 0) p_top = y;
      p_bot = y;
    }
    if (p_top < 0) {
      total += 2.0 * static_cast<double>(gt.h);
    } else {
      total += static_cast<double>(std::abs(p_top - gt_top) + std::abs(p_bot - gt_bot));
    }
    boundaries += 2;
  }
  return boundaries == 0 ? kNaN : total / static_cast<double>(boundaries);
}

// ---------------------------------------------------------------------------
// Aggregation

MeanStd mean_std(std::span<const double> values) {
  double s = 0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  if (n == 0) return {kNaN, kNaN};
  const double m = s / static_cast<double>(n);
  double var = 0;
  for (double v : values) {
    if (!std::isnan(v)) var += (v - m) * (v - m);
  }
  return {m, std::sqrt(var / static_cast<double>(n))};
}

std::string format_mean_std(const MeanStd& ms, double scale, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << ms.mean * scale << "±" << ms.std * scale;
  return os.str();
}

double MetricReport::get(const std::string& key) const {
  for (const auto& [k, v] : aggregate) {
    if (k == key) return v;
  }
  M2S_THROW(Contract, "metric report has no '", key, "'");
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  os << "# " << protocol << "\n";
  os << std::left << std::setw(16) << "metric" << "value\n";
  for (const auto& [k, v] : aggregate) {
    os << std::left << std::setw(16) << k << std::fixed << std::setprecision(6) << v << "\n";
  }
  return os.str();
}

std::string MetricReport::to_key_values() const {
  std::ostringstream os;
  os << "protocol=" << protocol << "\n";
  os << "images=" << per_image.size() << "\n";
  os << std::setprecision(17);
  for (const auto& [k, v] : aggregate) os << k << "=" << v << "\n";
  return os.str();
}

namespace {

void aggregate_into(MetricReport& report, const std::vector<std::pair<std::string, std::string>>& keys) {
  for (const auto& [per_key, agg_key] : keys) {
    std::vector<double> values;
    for (const auto& m : report.per_image) {
      auto it = m.find(per_key);
      if (it != m.end()) values.push_back(it->second);
    }
    report.aggregate.emplace_back(agg_key, mean_std(values).mean);
  }
}

}  // namespace

MetricReport evaluate_dataset(const std::vector<Grid>& predictions, const std::vector<Grid>& masks,
                              const MetricParams& params, const std::vector<std::string>& ids) {
  params.validate();
  M2S_CHECK(predictions.size() == masks.size(), Dimension, "evaluate_dataset: ", predictions.size(),
            " predictions vs ", masks.size(), " masks");
  MetricReport report;
  std::ostringstream proto;
  proto << "binarization=fixed@" << params.binarize_threshold;
  if (params.sweep_mean) proto << ";sweep_mean@" << params.e_measure_thresholds;
  report.protocol = proto.str();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Grid& p = predictions[i];
    const Grid& g = masks[i];
    const Confusion c = confusion(binarize(p, params.binarize_threshold), g);
    std::map<std::string, double> m;
    m["dice"] = dice(c);
    m["iou"] = jaccard(c);
    m["precision"] = precision(c);
    m["recall"] = recall(c);
    m["specificity"] = specificity(c);
    m["mae"] = mae(p, g);
    m["fbw"] = f_beta_w(p, g, params);
    m["s_alpha"] = s_measure(p, g, params.s_alpha);
    m["e_max"] = e_measure_max(p, g, params.e_measure_thresholds);
    if (params.sweep_mean) {
      double s = 0;
      const int n = params.e_measure_thresholds;
      for (int j = 0; j < n; ++j) {
        const double t = n == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(n - 1);
        s += dice(confusion(binarize(p, t), g));
      }
      m["dice_sweep"] = s / n;
    }
    report.per_image.push_back(std::move(m));
    report.image_ids.push_back(i < ids.size() ? ids[i] : std::to_string(i));
  }
  std::vector<std::pair<std::string, std::string>> keys = {
      {"dice", "mDice"},         {"iou", "mIoU"},           {"fbw", "Fbw"},
      {"s_alpha", "Salpha"},     {"e_max", "Emax"},         {"mae", "MAE"},
      {"precision", "Precision"}, {"recall", "Recall"},     {"specificity", "Specificity"}};
  if (params.sweep_mean) keys.emplace_back("dice_sweep", "mDice_sweep");
  aggregate_into(report, keys);
  return report;
}

MetricReport evaluate_layers(const std::vector<LabelGrid>& predictions, const std::vector<LabelGrid>& masks,
                             int num_classes, const std::vector<std::string>& ids) {
  M2S_CHECK(predictions.size() == masks.size(), Dimension, "evaluate_layers: count mismatch");
  M2S_CHECK(num_classes >= 2, Config, "evaluate_layers needs at least 2 classes");
  MetricReport report;
  report.protocol = "labels=argmax";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = masks[i];
    M2S_CHECK(p.h == g.h && p.w == g.w, Dimension, "evaluate_layers: size mismatch at image ", i);
    std::map<std::string, double> m;
    double dsum = 0;
    for (int c = 1; c < num_classes; ++c) {
      Grid pb(p.h, p.w), gb(g.h, g.w);
      for (std::size_t k = 0; k < p.v.size(); ++k) {
        pb.v[k] = p.v[k] == c ? 1.0 : 0.0;
        gb.v[k] = g.v[k] == c ? 1.0 : 0.0;
      }
      const double d = dice(confusion(pb, gb));
      m["dice.class" + std::to_string(c)] = d;
      m["med.class" + std::to_string(c)] = med(p, g, c);
      dsum += d;
    }
    m["dice"] = dsum / (num_classes - 1);
    report.per_image.push_back(std::move(m));
    report.image_ids.push_back(i < ids.size() ? ids[i] : std::to_string(i));
  }
  std::vector<std::pair<std::string, std::string>> keys = {{"dice", "mDice"}};
  for (int c = 1; c < num_classes; ++c) {
    keys.emplace_back("dice.class" + std::to_string(c), "Dice.class" + std::to_string(c));
  }
  for (int c = 1; c < num_classes; ++c) {
    keys.emplace_back("med.class" + std::to_string(c), "MED.class" + std::to_string(c));
  }
  aggregate_into(report, keys);
  std::vector<double> meds;
  for (int c = 1; c < num_classes; ++c) meds.push_back(report.get("MED.class" + std::to_string(c)));
  report.aggregate.emplace_back("MED", mean_std(meds).mean);
  return report;
}

}  // namespace m2s
