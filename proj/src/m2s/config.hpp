#pragma once

// Schema-driven run configuration.
//
// Files are "key = value" lines grouped under [section] headers; keys are
// addressed as "section.key". Unknown keys and malformed values are config
// errors, raised before any work starts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "m2s/loss.hpp"
#include "m2s/metrics.hpp"
#include "m2s/model.hpp"
#include "m2s/optim.hpp"
#include "m2s/synth.hpp"

namespace m2s {

enum class ValueKind { Int, Real, Bool, String, IntList, RealList, Choice };

struct SchemaEntry {
  const char* key;
  ValueKind kind;
  const char* default_value;
  const char* help;
  const char* choices;  // "|"-separated, Choice only
};

const std::vector<SchemaEntry>& config_schema();
const SchemaEntry* find_schema(const std::string& key);
// Every key with its default, one per line.
std::string config_help();

class Config {
 public:
  Config();

  static Config load(const std::filesystem::path& path);
  void merge_ini(const std::string& text, const std::string& origin = "<string>");
  void set(const std::string& key, const std::string& value);
  // "section.key=value"
  void set_override(const std::string& assignment);

  const std::string& raw(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const { return raw(key); }
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_real_list(const std::string& key) const;
  std::uint64_t seed() const;

  // Canonical INI text (sorted by section and key).
  std::string dump() const;
  // Cross-field checks via the sub-config builders.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

ModelConfig model_config(const Config& cfg);
LossConfig loss_config(const Config& cfg);
MetricParams metric_params(const Config& cfg);
SyntheticSpec synth_spec(const Config& cfg);
SgdConfig sgd_config(const Config& cfg);
ScheduleConfig schedule_config(const Config& cfg);

}  // namespace m2s
