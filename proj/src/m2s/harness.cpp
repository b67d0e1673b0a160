#include "m2s/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "m2s/rng.hpp"
#include "m2s/synth.hpp"

namespace fs = std::filesystem;

namespace m2s {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  M2S_CHECK(out.good(), Io, "cannot write '", path.string(), "'");
  out << text;
  M2S_CHECK(out.good(), Io, "write failed for '", path.string(), "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  M2S_CHECK(in.good(), Io, "cannot read '", path.string(), "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path require_dir(const Config& cfg, const std::string& key) {
  const std::string& v = cfg.get_string(key);
  M2S_CHECK(!v.empty(), Config, key, " is not set");
  return v;
}

std::vector<Sample> subset(const std::vector<Sample>& all, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double nan_mean(const std::vector<double>& v) { return mean_std(v).mean; }

std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string cell_slug(const AblationCell& c) {
  return std::string(to_string(c.fusion)) + "_d" + std::to_string(c.depth) + (c.lossnet ? "_lf" : "_nolf");
}

Image8 prob_image(const Grid& g) {
  Image8 img{static_cast<int>(g.w), static_cast<int>(g.h), 1, std::vector<std::uint8_t>(g.size())};
  for (std::size_t i = 0; i < g.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(g.v[i] * 255.0), 0L, 255L));
  return img;
}

}  // namespace

// ---------------------------------------------------------------------------

void run_synth_gen(const Config& cfg, const fs::path& out, const LogFn& log) {
  const SyntheticSpec spec = synth_spec(cfg);
  const auto n = static_cast<std::size_t>(cfg.get_int("synth.count"));
  synth_generate(spec, cfg.seed(), n, out);
  write_text(out / "synth.ini", cfg.dump());
  say(log, "wrote " + std::to_string(n) + " samples to " + out.string());
}

// ---------------------------------------------------------------------------

TrainSummary run_train(const Config& cfg, const fs::path& out, const LogFn& log) {
  cfg.validate();
  const ModelConfig mc = model_config(cfg);
  const LossConfig lc = loss_config(cfg);
  const TrainConfig tc = train_config(cfg);
  const auto data = load_folder(require_dir(cfg, "train.data_dir"), mc.num_classes);
  M2S_CHECK(!data.empty(), Data, "training folder '", cfg.get_string("train.data_dir"), "' holds no samples");
  fs::create_directories(out);
  write_text(out / "config.ini", cfg.dump());

  TrainSummary summary;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const M2SModel&) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d total=%.5f wbce=%.5f wiou=%.5f lf=%.5f val_mdice=%.4f", r.epoch,
                  r.total, r.wbce, r.wiou, r.lf, r.val_mdice);
    say(log, buf);
  };

  const int k = static_cast<int>(cfg.get_int("train.kfold"));
  if (k >= 2) {
    const auto folds = kfold(data.size(), k, tc.seed);
    const MetricParams mp = metric_params(cfg);
    for (int f = 0; f < k; ++f) {
      std::vector<std::size_t> train_idx;
      for (int g = 0; g < k; ++g) {
        if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
      }
      std::sort(train_idx.begin(), train_idx.end());
      auto held = folds[static_cast<std::size_t>(f)];
      std::sort(held.begin(), held.end());
      const auto train_set = subset(data, train_idx);
      const auto val_set = subset(data, held);
      const fs::path dir = out / ("fold" + std::to_string(f + 1));
      say(log, "fold " + std::to_string(f + 1) + "/" + std::to_string(k));
      M2SModel model(mc, tc.seed);
      auto r = train(model, train_set, val_set, tc, lc, dir, hooks);
      const M2SModel best = M2SModel::from_checkpoint(read_checkpoint(dir / "best.m2sn"));
      MetricReport rep = evaluate(best, val_set, mp);
      write_text(dir / "metrics.txt", rep.to_key_values());
      summary.folds.push_back(std::move(rep));
      summary.result = std::move(r);
    }
    std::ostringstream os;
    os << "# " << k << "-fold cross-validation, best checkpoint per fold, mean±std over folds (x100)\n";
    for (const auto& [key, v] : summary.folds.front().aggregate) {
      std::vector<double> vals;
      for (const auto& rep : summary.folds) vals.push_back(rep.get(key));
      os << std::left << std::setw(14) << key << format_mean_std(mean_std(vals)) << "\n";
    }
    summary.kfold_table = os.str();
    write_text(out / "kfold.txt", summary.kfold_table);
    say(log, summary.kfold_table);
    return summary;
  }

  std::vector<Sample> train_set, val_set;
  if (!cfg.get_string("train.val_dir").empty()) {
    train_set = data;
    val_set = load_folder(cfg.get_string("train.val_dir"), mc.num_classes);
  } else {
    const Split split = holdout_split(data.size(), cfg.get_real("train.val_fraction"), tc.seed);
    train_set = subset(data, split.train);
    val_set = subset(data, split.val);
  }
  M2SModel model(mc, tc.seed);
  summary.result = train(model, train_set, val_set, tc, lc, out, hooks);
  say(log, "steps=" + std::to_string(summary.result.steps) + " best_epoch=" +
               std::to_string(summary.result.best_epoch) + " -> " + (out / "best.m2sn").string());
  return summary;
}

// ---------------------------------------------------------------------------

MetricReport run_eval(const Config& cfg, const fs::path& out, const LogFn& log) {
  const MetricParams mp = metric_params(cfg);
  const std::string& ckpt_path = cfg.get_string("eval.checkpoint");
  M2S_CHECK(!ckpt_path.empty(), Config, "eval.checkpoint is not set");
  const M2SModel model = M2SModel::from_checkpoint(read_checkpoint(ckpt_path));
  const auto data = load_folder(require_dir(cfg, "eval.data_dir"), model.config().num_classes);
  M2S_CHECK(!data.empty(), Data, "evaluation folder holds no samples");
  MetricReport report = evaluate(model, data, mp);
  fs::create_directories(out);
  write_text(out / "report.txt", report.to_table());
  write_text(out / "metrics.txt", report.to_key_values());

  std::ostringstream per;
  per << "id";
  std::vector<std::string> keys;
  for (const auto& [k, v] : report.per_image.front()) {
    keys.push_back(k);
    per << "\t" << k;
  }
  per << "\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.per_image.size(); ++i) {
    per << report.image_ids[i];
    for (const auto& k : keys) {
      auto it = report.per_image[i].find(k);
      per << "\t" << (it == report.per_image[i].end() ? kNaN : it->second);
    }
    per << "\n";
  }
  write_text(out / "per_image.tsv", per.str());

  if (cfg.get_bool("eval.dump_maps")) {
    fs::create_directories(out / "maps");
    for (const auto& s : data) {
      if (model.config().num_classes == 1) {
        write_netpbm(out / "maps" / (s.id + ".pgm"), prob_image(predict_prob(model, s.image)));
      } else {
        const LabelGrid l = predict_labels(model, s.image);
        Image8 img{static_cast<int>(l.w), static_cast<int>(l.h), 1, std::vector<std::uint8_t>(l.v.size())};
        for (std::size_t i = 0; i < l.v.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(l.v[i]);
        write_netpbm(out / "maps" / (s.id + ".pgm"), img);
      }
    }
  }
  say(log, report.to_table());
  return report;
}

// ---------------------------------------------------------------------------

const AblationRow* AblationTable::find(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.cell.label == label) return &r;
  }
  return nullptr;
}

std::vector<AblationCell> ablation_cells(const std::string& axes) {
  using F = FusionVariant;
  if (axes == "table7") {
    return {{"baseline (SU_1^i)", F::SU, 1, false}, {"+ SU_2^i", F::SU, 2, false},
            {"+ SU_3^i", F::SU, 3, false},          {"+ SU_4^i", F::SU, 4, false},
            {"+ SU_5^i", F::SU, 5, false},          {"+ L_f", F::SU, 5, true},
            {"SU -> AU", F::AU, 5, true}};
  }
  std::vector<AblationCell> cells;
  auto add = [&](AblationCell c) {
    for (const auto& e : cells) {
      if (e.fusion == c.fusion && e.depth == c.depth && e.lossnet == c.lossnet) return;
    }
    cells.push_back(std::move(c));
  };
  std::istringstream is(axes);
  std::string axis;
  bool any = false;
  while (std::getline(is, axis, ',')) {
    axis.erase(std::remove_if(axis.begin(), axis.end(), ::isspace), axis.end());
    any = true;
    if (axis == "depth") {
      for (int d = 1; d <= kLevels; ++d) add({"depth=" + std::to_string(d), F::SU, d, false});
    } else if (axis == "fusion") {
      for (F f : {F::SU, F::MSU, F::AU}) add({std::string("fusion=") + to_string(f), f, kLevels, true});
    } else if (axis == "lossnet") {
      add({"lossnet=off", F::SU, kLevels, false});
      add({"lossnet=on", F::SU, kLevels, true});
    } else {
      M2S_THROW(Config, "unknown ablation axis '", axis, "' (expected table7 or depth,fusion,lossnet)");
    }
  }
  M2S_CHECK(any, Config, "ablate.axes is empty");
  return cells;
}

MetricReport train_and_test(const Config& cfg, const AblationCell& cell, std::uint64_t seed,
                            const std::vector<Sample>& train_set, const std::vector<Sample>& test_set,
                            TrainResult* result) {
  ModelConfig mc = model_config(cfg);
  mc.fusion = cell.fusion;
  mc.pyramid_depth = cell.depth;
  LossConfig lc = loss_config(cfg);
  lc.lossnet_enabled = cell.lossnet;
  TrainConfig tc = train_config(cfg);
  tc.seed = seed;
  M2SModel model(mc, seed);
  TrainResult r = train(model, train_set, {}, tc, lc);
  if (result) *result = std::move(r);
  return evaluate(model, test_set, metric_params(cfg));
}

AblationTable run_ablate(const Config& cfg, const fs::path& out, const LogFn& log) {
  cfg.validate();
  const int classes = static_cast<int>(cfg.get_int("model.num_classes"));
  const auto train_set = load_folder(require_dir(cfg, "ablate.train_dir"), classes);
  const auto test_set = load_folder(require_dir(cfg, "ablate.test_dir"), classes);
  M2S_CHECK(!train_set.empty() && !test_set.empty(), Data, "ablation folders must not be empty");
  const auto cells = ablation_cells(cfg.get_string("ablate.axes"));
  const auto seeds = cfg.get_int_list("ablate.seeds");

  AblationTable table;
  for (const auto& cell : cells) {
    AblationRow row;
    row.cell = cell;
    std::vector<double> miou, fbw, emax;
    for (int s : seeds) {
      const auto seed = static_cast<std::uint64_t>(s);
      row.seeds.push_back(seed);
      try {
        TrainResult tr;
        const MetricReport rep = train_and_test(cfg, cell, seed, train_set, test_set, &tr);
        const fs::path dir = out / "cells" / (cell_slug(cell) + "_seed" + std::to_string(s));
        write_text(dir / "train.log", tr.log);
        write_text(dir / "metrics.txt", rep.to_key_values());
        row.mdice.push_back(rep.get("mDice"));
        miou.push_back(rep.get("mIoU"));
        fbw.push_back(rep.get("Fbw"));
        emax.push_back(rep.get("Emax"));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        row.failures.push_back("seed " + std::to_string(s) + ": " + e.what());
        row.mdice.push_back(kNaN);
        miou.push_back(kNaN);
        fbw.push_back(kNaN);
        emax.push_back(kNaN);
      }
      say(log, cell.label + " seed " + std::to_string(s) + " mDice=" + fixed(row.mdice.back()));
    }
    row.mean_mdice = nan_mean(row.mdice);
    row.median_mdice = median(row.mdice);
    row.mean_miou = nan_mean(miou);
    row.mean_fbw = nan_mean(fbw);
    row.mean_emax = nan_mean(emax);
    table.rows.push_back(std::move(row));
  }

  std::ostringstream os;
  os << "# ablation, " << seeds.size() << " seed(s):";
  for (int s : seeds) os << " " << s;
  os << "; metric columns are means over seeds\n";
  os << std::left << std::setw(20) << "row" << std::setw(7) << "fusion" << std::setw(6) << "depth"
     << std::setw(8) << "lossnet" << std::setw(8) << "mDice" << std::setw(8) << "mIoU" << std::setw(8) << "Fbw"
     << std::setw(8) << "Emax" << std::setw(13) << "median_mDice" << "failed\n";
  for (const auto& r : table.rows) {
    os << std::left << std::setw(20) << r.cell.label << std::setw(7) << to_string(r.cell.fusion) << std::setw(6)
       << r.cell.depth << std::setw(8) << (r.cell.lossnet ? "on" : "off") << std::setw(8) << fixed(r.mean_mdice)
       << std::setw(8) << fixed(r.mean_miou) << std::setw(8) << fixed(r.mean_fbw) << std::setw(8)
       << fixed(r.mean_emax) << std::setw(13) << fixed(r.median_mdice) << r.failures.size() << "\n";
  }
  for (const auto& r : table.rows) {
    for (const auto& f : r.failures) os << "# failed: " << r.cell.label << " " << f << "\n";
  }
  table.text = os.str();
  write_text(out / "ablation.txt", table.text);
  say(log, table.text);
  return table;
}

// ---------------------------------------------------------------------------

std::string format_flops(const FlopsSummary& s, FusionVariant configured) {
  const MacReport& r = configured == FusionVariant::SU ? s.su : configured == FusionVariant::AU ? s.au : s.msu;
  std::ostringstream os;
  os << "# per-module accounting, fusion=" << to_string(configured) << "\n";
  os << std::left << std::setw(10) << "module" << std::right << std::setw(12) << "params" << std::setw(14) << "macs"
     << std::setw(14) << "fixed_ops" << "\n";
  for (const auto& row : r.rows) {
    os << std::left << std::setw(10) << row.module << std::right << std::setw(12) << row.params << std::setw(14)
       << row.macs << std::setw(14) << row.fixed_filter_ops << "\n";
  }
  os << std::left << std::setw(10) << "total" << std::right << std::setw(12) << r.total_params << std::setw(14)
     << r.total_macs << std::setw(14) << r.total_fixed_filter_ops << "\n";
  os << "# variant totals\n";
  for (auto [name, rep] : {std::pair{"SU", &s.su}, std::pair{"MSU", &s.msu}, std::pair{"AU", &s.au}}) {
    os << std::left << std::setw(10) << name << std::right << std::setw(12) << rep->total_params << std::setw(14)
       << rep->total_macs << std::setw(14) << rep->total_fixed_filter_ops << "\n";
  }
  os << "parity=" << (s.su.total_params == s.msu.total_params && s.su.total_params == s.au.total_params &&
                              s.su.total_macs == s.msu.total_macs && s.su.total_macs == s.au.total_macs
                          ? "ok"
                          : "FAILED")
     << "\n";
  return os.str();
}

FlopsSummary run_flops(const Config& cfg, const fs::path& out, const LogFn& log) {
  ModelConfig mc = model_config(cfg);
  const FusionVariant configured = mc.fusion;
  FlopsSummary s;
  for (FusionVariant v : {FusionVariant::SU, FusionVariant::MSU, FusionVariant::AU}) {
    mc.fusion = v;
    const M2SModel model(mc, cfg.seed());
    MacReport r = count_flops(model, mc.input_h, mc.input_w);
    M2S_CHECK(r.total_params == count_params(model), Contract, "flops: parameter totals disagree for ",
              to_string(v));
    (v == FusionVariant::SU ? s.su : v == FusionVariant::MSU ? s.msu : s.au) = std::move(r);
  }
  s.text = format_flops(s, configured);
  if (!out.empty()) write_text(out / "flops.txt", s.text);
  say(log, s.text);
  M2S_CHECK(s.su.total_params == s.msu.total_params && s.su.total_params == s.au.total_params, Contract,
            "parameter parity violated: SU ", s.su.total_params, " MSU ", s.msu.total_params, " AU ",
            s.au.total_params);
  M2S_CHECK(s.su.total_macs == s.msu.total_macs && s.su.total_macs == s.au.total_macs, Contract,
            "MAC parity violated: SU ", s.su.total_macs, " MSU ", s.msu.total_macs, " AU ", s.au.total_macs);
  return s;
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
  return std::fabs(analytic - numeric) / denom;
}

GradcheckResult run_gradcheck(const Config& cfg, const fs::path& out, const LogFn& log) {
  ModelConfig mc = model_config(cfg);
  const int size = static_cast<int>(cfg.get_int("gradcheck.input_size"));
  M2S_CHECK(size > 0 && size % 32 == 0, Config, "gradcheck.input_size must be a positive multiple of 32");
  mc.input_h = mc.input_w = size;
  const LossConfig lc = loss_config(cfg);
  const auto n_params = cfg.get_int("gradcheck.n_params");
  const double eps = cfg.get_real("gradcheck.epsilon");
  const std::uint64_t seed = cfg.seed();

  M2SModel model(mc, seed);
  std::unique_ptr<LossNetExtractor> net;
  if (lc.lossnet_enabled) net = std::make_unique<LossNetExtractor>(LossNetExtractor::from_config(lc));

  SyntheticSpec spec;
  spec.canvas = size;
  spec.radius_min = size / 8.0;
  spec.radius_max = size / 3.0;
  spec.topology = mc.num_classes > 1 ? Topology::Layers : Topology::Blobs;
  const Sample sample = synth_sample(spec, seed, 0);
  auto [x, g] = make_batch({&sample}, size, size, mc.num_classes);

  auto loss_value = [&]() { return static_cast<double>(total_loss(model.forward(x), g, lc, net.get()).total); };

  model.zero_grad();
  {
    std::unique_ptr<FaultInjection> fault;
    if (!cfg.get_string("gradcheck.inject_fault").empty())
      fault = std::make_unique<FaultInjection>(cfg.get_string("gradcheck.inject_fault"),
                                               static_cast<Real>(cfg.get_real("gradcheck.inject_factor")));
    Tape tape;
    const LossBundle b = total_loss(model.forward(x), g, lc, net.get());
    tape.backward(b.total_tensor);
  }

  GradcheckResult result;
  result.tolerance = cfg.get_real("gradcheck.tolerance");
  auto rng = make_rng(seed, {0x67726164ULL});
  auto& params = model.parameters();
  // Entries where both gradients are exactly zero (inactive ReLU paths) are redrawn.
  std::int64_t skipped = 0;
  for (std::int64_t draws = 0; std::ssize(result.entries) < n_params && draws < 50 * n_params; ++draws) {
    const std::size_t pi = std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng);
    Parameter& p = params[pi];
    const auto idx = std::uniform_int_distribution<std::int64_t>(0, p.tensor.numel() - 1)(rng);
    Real& slot = p.tensor.data()[static_cast<std::size_t>(idx)];
    const Real saved = slot;
    slot = saved + static_cast<Real>(eps);
    const double up = loss_value();
    slot = saved - static_cast<Real>(eps);
    const double down = loss_value();
    slot = saved;
    GradcheckEntry e;
    e.parameter = p.name;
    e.index = idx;
    e.analytic = p.tensor.has_grad() ? p.tensor.grad()[static_cast<std::size_t>(idx)] : 0.0;
    e.numeric = (up - down) / (2 * eps);
    if (e.analytic == 0 && e.numeric == 0) {
      ++skipped;
      continue;
    }
    e.rel_error = relative_error(e.analytic, e.numeric);
    result.max_rel_error = std::max(result.max_rel_error, e.rel_error);
    result.entries.push_back(e);
  }
  result.passed = std::ssize(result.entries) == n_params && result.max_rel_error < result.tolerance;

  std::ostringstream os;
  os << "# gradcheck fusion=" << to_string(mc.fusion) << " input=" << size << "x" << size << " eps=" << eps
     << " lossnet=" << (lc.lossnet_enabled ? "on" : "off") << "\n";
  os << std::left << std::setw(28) << "parameter" << std::setw(8) << "index" << std::setw(24) << "analytic"
     << std::setw(24) << "numeric" << "rel_error\n";
  os << std::setprecision(12);
  for (const auto& e : result.entries) {
    os << std::left << std::setw(28) << e.parameter << std::setw(8) << e.index << std::setw(24) << e.analytic
       << std::setw(24) << e.numeric << e.rel_error << "\n";
  }
  os << "skipped_zero=" << skipped << "\n";
  os << "max_rel_error=" << result.max_rel_error << "\n";
  os << "tolerance=" << result.tolerance << "\n";
  os << "result=" << (result.passed ? "pass" : "fail") << "\n";
  result.text = os.str();
  if (!out.empty()) write_text(out / "gradcheck.txt", result.text);
  say(log, result.text);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

struct CurveTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_ws(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    if (!cur.empty() && cur.back() == '\r') cur.pop_back();
    out.push_back(cur);
  }
  return out;
}

CurveTable parse_log(const fs::path& path) {
  M2S_CHECK(fs::exists(path), Io, "log file '", path.string(), "' does not exist");
  CurveTable t;
  std::istringstream is(read_text(path));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      if (body.rfind("epoch\t", 0) == 0) t.columns = split_ws(body, '\t');
      continue;
    }
    t.rows.push_back(split_ws(line, '\t'));
  }
  M2S_CHECK(!t.columns.empty(), Format, "log file '", path.string(), "' has no '# epoch' column header");
  for (const auto& r : t.rows) {
    M2S_CHECK(r.size() == t.columns.size(), Format, "log file '", path.string(), "' has a row with ", r.size(),
              " fields, expected ", t.columns.size());
  }
  return t;
}

}  // namespace

std::string merge_curves(const std::vector<fs::path>& logs) {
  M2S_CHECK(!logs.empty(), Config, "export-curves needs at least one log");
  std::vector<CurveTable> tables;
  for (const auto& p : logs) tables.push_back(parse_log(p));
  std::vector<std::string> header;
  std::size_t nrows = 0;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (const auto& c : tables[i].columns) header.push_back(tables.size() > 1 ? c + "_" + std::to_string(i + 1) : c);
    nrows = std::max(nrows, tables[i].rows.size());
  }
  std::vector<std::vector<std::string>> cells{header};
  for (std::size_t r = 0; r < nrows; ++r) {
    std::vector<std::string> row;
    for (const auto& t : tables) {
      for (std::size_t c = 0; c < t.columns.size(); ++c) row.push_back(r < t.rows.size() ? t.rows[r][c] : "nan");
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << row[c];
      if (c + 1 < row.size()) os << std::string(width[c] - row[c].size() + 2, ' ');
    }
    os << "\n";
  }
  return os.str();
}

void export_curves(const std::vector<fs::path>& logs, const fs::path& out, const LogFn& log) {
  const std::string text = merge_curves(logs);
  write_text(out / "curves.txt", text);
  say(log, "wrote " + (out / "curves.txt").string());
}

}  // namespace m2s
