#include "m2s/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace m2s {

namespace {

using K = ValueKind;

const std::vector<SchemaEntry> kSchema = {
    {"run.seed", K::Int, "1", "master seed for init, data order, augmentation and synthesis", ""},

    {"model.fusion", K::Choice, "MSU", "fusion unit variant", "SU|MSU|AU"},
    {"model.msu_normalize", K::Bool, "true", "divide the MSU window-sum total by 35 (false = raw sums)", ""},
    {"model.pyramid_depth", K::Int, "5", "max pyramid order n per level, 1..5", ""},
    {"model.encoder_channels", K::IntList, "16,32,32,64,64", "channels of the five encoder stages", ""},
    {"model.reduced_channels", K::Int, "16", "channels after per-level reduction", ""},
    {"model.num_classes", K::Int, "1", "1 = binary sigmoid head, >1 = per-class maps", ""},
    {"model.input_size", K::IntList, "64,64", "network input H,W (multiples of 32)", ""},

    {"loss.weight_amplification", K::Real, "5", "boundary weight amplification of the pixel weight map", ""},
    {"loss.window", K::Int, "15", "odd window of the pixel weight map mean filter", ""},
    {"loss.lossnet", K::Bool, "true", "add the frozen feature-distance term", ""},
    {"loss.lossnet_levels", K::Int, "4", "number of extractor stages compared, 1..4", ""},
    {"loss.lossnet_weights", K::String, "", "checkpoint with lossnet.stage{i}.weight/bias; empty = seeded", ""},
    {"loss.lossnet_seed", K::Int, "7", "seed of the frozen extractor", ""},
    {"loss.distance", K::Choice, "mean_squared", "per-level feature distance", "mean_squared|l2"},
    {"loss.epsilon", K::Real, "1e-6", "ratio stabiliser of the weighted IoU", ""},

    {"train.data_dir", K::String, "", "training folder (images/, masks/)", ""},
    {"train.val_dir", K::String, "", "validation folder; empty = hold out train.val_fraction", ""},
    {"train.val_fraction", K::Real, "0.1", "held-out fraction when train.val_dir is empty", ""},
    {"train.epochs", K::Int, "20", "training epochs", ""},
    {"train.batch_size", K::Int, "4", "mini-batch size", ""},
    {"train.lr_head", K::Real, "0.05", "peak learning rate outside the encoder", ""},
    {"train.lr_backbone", K::Real, "0.005", "peak learning rate of the encoder", ""},
    {"train.momentum", K::Real, "0.9", "SGD momentum", ""},
    {"train.weight_decay", K::Real, "0.0005", "SGD weight decay", ""},
    {"train.warmup_fraction", K::Real, "0.1", "fraction of steps spent in linear warm-up, [0,0.5)", ""},
    {"train.scales", K::RealList, "0.75,1.0,1.25", "per-batch multi-scale factors", ""},
    {"train.augment", K::Bool, "true", "random flip and rotation", ""},
    {"train.max_angle", K::Int, "15", "rotation range in degrees", ""},
    {"train.grad_clip", K::Real, "1", "clip the global gradient norm to this value (0 = off)", ""},
    {"train.max_steps", K::Int, "0", "stop after this many steps (0 = full schedule)", ""},
    {"train.kfold", K::Int, "0", "k-fold cross-validation over train.data_dir (0 = off)", ""},
    {"train.checkpoint_every_best", K::Bool, "true", "write best.m2sn whenever val mDice improves", ""},

    {"synth.count", K::Int, "200", "number of samples", ""},
    {"synth.canvas", K::Int, "64", "square canvas size", ""},
    {"synth.blob_count_min", K::Int, "1", "fewest target blobs per image", ""},
    {"synth.blob_count_max", K::Int, "3", "most target blobs per image", ""},
    {"synth.radius_min", K::Real, "6", "smallest ellipse semi-axis", ""},
    {"synth.radius_max", K::Real, "16", "largest ellipse semi-axis", ""},
    {"synth.contrast", K::Real, "0.35", "foreground intensity offset (fraction of full scale)", ""},
    {"synth.noise_sigma", K::Real, "0.08", "Gaussian noise sigma (fraction of full scale)", ""},
    {"synth.topology", K::Choice, "blobs", "blobs or 4-band layers", "blobs|layers"},

    {"eval.checkpoint", K::String, "", "checkpoint to evaluate", ""},
    {"eval.data_dir", K::String, "", "evaluation folder", ""},
    {"eval.threshold", K::Real, "0.5", "binarisation threshold for mDice/mIoU", ""},
    {"eval.e_thresholds", K::Int, "256", "threshold sweep length of the max E-measure", ""},
    {"eval.s_alpha", K::Real, "0.5", "S-measure object/region balance", ""},
    {"eval.fw_beta2", K::Real, "1", "beta^2 of the weighted F-measure", ""},
    {"eval.sweep_mean", K::Bool, "false", "also report threshold-sweep mean Dice", ""},
    {"eval.dump_maps", K::Bool, "false", "write probability maps as PGM", ""},

    {"ablate.axes", K::String, "table7", "table7 or a comma list of depth,fusion,lossnet", ""},
    {"ablate.seeds", K::IntList, "1,2,3,4,5", "seeds per cell", ""},
    {"ablate.train_dir", K::String, "", "training folder for every cell", ""},
    {"ablate.test_dir", K::String, "", "test folder for every cell", ""},

    {"gradcheck.n_params", K::Int, "10", "parameter entries checked", ""},
    {"gradcheck.input_size", K::Int, "32", "square input size of the checked model", ""},
    {"gradcheck.epsilon", K::Real, "1e-6", "central difference step", ""},
    {"gradcheck.tolerance", K::Real, "1e-4", "max relative error", ""},
    {"gradcheck.inject_fault", K::String, "", "op whose backward is corrupted (testing)", ""},
    {"gradcheck.inject_factor", K::Real, "1.5", "gradient scale applied to the corrupted op", ""},

    {"curves.logs", K::String, "", "comma-separated epoch logs to merge", ""},
};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && !s.empty();
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "on" || s == "1" || s == "yes") return out = true, true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return out = false, true;
  return false;
}

void check_value(const SchemaEntry& e, const std::string& v) {
  std::int64_t i;
  double d;
  bool b;
  switch (e.kind) {
    case K::Int:
      M2S_CHECK(parse_int(v, i), Config, "'", e.key, "' expects an integer, got '", v, "'");
      break;
    case K::Real:
      M2S_CHECK(parse_real(v, d), Config, "'", e.key, "' expects a number, got '", v, "'");
      break;
    case K::Bool:
      M2S_CHECK(parse_bool(v, b), Config, "'", e.key, "' expects true/false, got '", v, "'");
      break;
    case K::String:
      break;
    case K::IntList:
      for (const auto& part : split(v, ','))
        M2S_CHECK(parse_int(part, i), Config, "'", e.key, "' expects integers, got '", v, "'");
      M2S_CHECK(!v.empty(), Config, "'", e.key, "' must not be empty");
      break;
    case K::RealList:
      for (const auto& part : split(v, ','))
        M2S_CHECK(parse_real(part, d), Config, "'", e.key, "' expects numbers, got '", v, "'");
      M2S_CHECK(!v.empty(), Config, "'", e.key, "' must not be empty");
      break;
    case K::Choice: {
      const auto options = split(e.choices, '|');
      M2S_CHECK(std::find(options.begin(), options.end(), v) != options.end(), Config, "'", e.key,
                "' must be one of ", e.choices, ", got '", v, "'");
      break;
    }
  }
}

}  // namespace

const std::vector<SchemaEntry>& config_schema() { return kSchema; }

const SchemaEntry* find_schema(const std::string& key) {
  for (const auto& e : kSchema) {
    if (key == e.key) return &e;
  }
  return nullptr;
}

std::string config_help() {
  std::ostringstream os;
  os << "Configuration keys (section.key = default):\n";
  for (const auto& e : kSchema) {
    os << "  " << e.key << " = " << (e.default_value[0] ? e.default_value : "\"\"");
    if (e.kind == K::Choice) os << "  {" << e.choices << "}";
    os << "\n      " << e.help << "\n";
  }
  return os.str();
}

Config::Config() {
  for (const auto& e : kSchema) values_[e.key] = e.default_value;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) M2S_THROW(Config, "cannot open config file '", path.string(), "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Config cfg;
  cfg.merge_ini(ss.str(), path.string());
  return cfg;
}

void Config::merge_ini(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      M2S_CHECK(line.back() == ']', Config, origin, ":", lineno, ": malformed section header '", line, "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    M2S_CHECK(eq != std::string::npos, Config, origin, ":", lineno, ": expected 'key = value', got '", line, "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set(full, trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      M2S_THROW(Config, origin, ":", lineno, ": ", e.what());
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  const SchemaEntry* e = find_schema(key);
  M2S_CHECK(e != nullptr, Config, "unknown config key '", key, "'");
  check_value(*e, value);
  values_[key] = value;
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  M2S_CHECK(eq != std::string::npos, Config, "override '", assignment, "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  M2S_CHECK(it != values_.end(), Config, "unknown config key '", key, "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  std::int64_t v = 0;
  M2S_CHECK(parse_int(raw(key), v), Config, "'", key, "' is not an integer");
  return v;
}

double Config::get_real(const std::string& key) const {
  double v = 0;
  M2S_CHECK(parse_real(raw(key), v), Config, "'", key, "' is not a number");
  return v;
}

bool Config::get_bool(const std::string& key) const {
  bool v = false;
  M2S_CHECK(parse_bool(raw(key), v), Config, "'", key, "' is not a boolean");
  return v;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& part : split(raw(key), ',')) {
    std::int64_t v = 0;
    M2S_CHECK(parse_int(part, v), Config, "'", key, "' is not an integer list");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> Config::get_real_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& part : split(raw(key), ',')) {
    double v = 0;
    M2S_CHECK(parse_real(part, v), Config, "'", key, "' is not a number list");
    out.push_back(v);
  }
  return out;
}

std::uint64_t Config::seed() const {
  const auto v = get_int("run.seed");
  M2S_CHECK(v >= 0, Config, "run.seed must be >= 0");
  return static_cast<std::uint64_t>(v);
}

std::string Config::dump() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << "\n";
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << value << "\n";
  }
  return os.str();
}

void Config::validate() const {
  model_config(*this).validate();
  loss_config(*this).validate();
  metric_params(*this).validate();
  synth_spec(*this).validate();
  (void)schedule_config(*this);
  M2S_CHECK(get_int("train.epochs") >= 1, Config, "train.epochs must be >= 1");
  M2S_CHECK(get_int("train.batch_size") >= 1, Config, "train.batch_size must be >= 1");
  M2S_CHECK(get_int("train.max_steps") >= 0, Config, "train.max_steps must be >= 0");
  M2S_CHECK(get_int("train.kfold") >= 0 && get_int("train.kfold") != 1, Config, "train.kfold must be 0 or >= 2");
  M2S_CHECK(get_int("train.max_angle") >= 0 && get_int("train.max_angle") <= 180, Config,
            "train.max_angle must be in [0,180]");
  const double vf = get_real("train.val_fraction");
  M2S_CHECK(vf >= 0 && vf < 1, Config, "train.val_fraction must be in [0,1)");
  for (double s : get_real_list("train.scales")) M2S_CHECK(s > 0, Config, "train.scales must be positive");
  M2S_CHECK(get_int("synth.count") >= 0, Config, "synth.count must be >= 0");
  M2S_CHECK(get_int("gradcheck.n_params") >= 1, Config, "gradcheck.n_params must be >= 1");
  M2S_CHECK(get_int("gradcheck.input_size") % 32 == 0 && get_int("gradcheck.input_size") > 0, Config,
            "gradcheck.input_size must be a positive multiple of 32");
  M2S_CHECK(get_real("gradcheck.epsilon") > 0, Config, "gradcheck.epsilon must be > 0");
  M2S_CHECK(!get_int_list("ablate.seeds").empty(), Config, "ablate.seeds must not be empty");
  (void)seed();
}

ModelConfig model_config(const Config& cfg) {
  ModelConfig m;
  m.fusion = parse_fusion(cfg.get_string("model.fusion"));
  m.pyramid_depth = static_cast<int>(cfg.get_int("model.pyramid_depth"));
  const auto ch = cfg.get_int_list("model.encoder_channels");
  M2S_CHECK(ch.size() == kLevels, Config, "model.encoder_channels needs ", kLevels, " entries, got ", ch.size());
  std::copy(ch.begin(), ch.end(), m.encoder_channels.begin());
  m.reduced_channels = static_cast<int>(cfg.get_int("model.reduced_channels"));
  m.num_classes = static_cast<int>(cfg.get_int("model.num_classes"));
  const auto size = cfg.get_int_list("model.input_size");
  M2S_CHECK(size.size() == 1 || size.size() == 2, Config, "model.input_size needs H or H,W");
  m.input_h = size[0];
  m.input_w = size.size() == 2 ? size[1] : size[0];
  m.msu_normalize = cfg.get_bool("model.msu_normalize");
  m.validate();
  return m;
}

LossConfig loss_config(const Config& cfg) {
  LossConfig l;
  l.weight_amplification = cfg.get_real("loss.weight_amplification");
  l.window = static_cast<int>(cfg.get_int("loss.window"));
  l.lossnet_enabled = cfg.get_bool("loss.lossnet");
  l.lossnet_levels = static_cast<int>(cfg.get_int("loss.lossnet_levels"));
  l.lossnet_weights = cfg.get_string("loss.lossnet_weights");
  l.lossnet_seed = static_cast<std::uint64_t>(cfg.get_int("loss.lossnet_seed"));
  l.distance = cfg.get_string("loss.distance") == "l2" ? FeatureDistance::L2Norm : FeatureDistance::MeanSquared;
  l.epsilon = cfg.get_real("loss.epsilon");
  l.validate();
  return l;
}

MetricParams metric_params(const Config& cfg) {
  MetricParams p;
  p.binarize_threshold = cfg.get_real("eval.threshold");
  p.e_measure_thresholds = static_cast<int>(cfg.get_int("eval.e_thresholds"));
  p.s_alpha = cfg.get_real("eval.s_alpha");
  p.fw_beta2 = cfg.get_real("eval.fw_beta2");
  p.sweep_mean = cfg.get_bool("eval.sweep_mean");
  p.validate();
  return p;
}

SyntheticSpec synth_spec(const Config& cfg) {
  SyntheticSpec s;
  s.canvas = static_cast<int>(cfg.get_int("synth.canvas"));
  s.blob_count_min = static_cast<int>(cfg.get_int("synth.blob_count_min"));
  s.blob_count_max = static_cast<int>(cfg.get_int("synth.blob_count_max"));
  s.radius_min = cfg.get_real("synth.radius_min");
  s.radius_max = cfg.get_real("synth.radius_max");
  s.contrast = cfg.get_real("synth.contrast");
  s.noise_sigma = cfg.get_real("synth.noise_sigma");
  s.topology = cfg.get_string("synth.topology") == "layers" ? Topology::Layers : Topology::Blobs;
  s.validate();
  return s;
}

SgdConfig sgd_config(const Config& cfg) {
  return {cfg.get_real("train.momentum"), cfg.get_real("train.weight_decay")};
}

ScheduleConfig schedule_config(const Config& cfg) {
  ScheduleConfig s{cfg.get_real("train.lr_head"), cfg.get_real("train.lr_backbone"),
                   cfg.get_real("train.warmup_fraction")};
  M2S_CHECK(s.warmup_fraction >= 0 && s.warmup_fraction < 0.5, Config,
            "train.warmup_fraction must be in [0,0.5), got ", s.warmup_fraction);
  M2S_CHECK(s.lr_head >= 0 && s.lr_backbone >= 0, Config, "learning rates must be >= 0");
  return s;
}

}  // namespace m2s
