#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "m2snet/m2snet.h"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  long long seed = -1;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI config file");
  cmd->add_option("--set", c.sets, "override, section.key=value (repeatable)")->allow_extra_args(false);
  cmd->add_option("--seed", c.seed, "sets run.seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

void print_line(const char* line, void*) { std::printf("%s\n", line); std::fflush(stdout); }

int exit_code(m2s_status s) {
  switch (s) {
    case M2S_OK: return 0;
    case M2S_ERR_CONFIG:
    case M2S_ERR_INVALID_ARGUMENT: return 2;
    case M2S_ERR_DATA:
    case M2S_ERR_IO:
    case M2S_ERR_FORMAT: return 3;
    case M2S_ERR_NUMERIC: return 4;
    default: return 1;
  }
}

int fail(m2s_status s) {
  std::fprintf(stderr, "m2snet: %s\n", m2s_last_error());
  return exit_code(s);
}

// Builds and validates the configuration before any work starts.
m2s_status build_config(const Common& c, m2s_config** cfg) {
  m2s_status s = c.config.empty() ? m2s_config_create(cfg) : m2s_config_load(c.config.c_str(), cfg);
  if (s != M2S_OK) return s;
  for (const auto& kv : c.sets) {
    if ((s = m2s_config_apply(*cfg, kv.c_str())) != M2S_OK) return s;
  }
  if (c.seed >= 0) {
    if ((s = m2s_config_set(*cfg, "run.seed", std::to_string(c.seed).c_str())) != M2S_OK) return s;
  }
  return m2s_config_validate(*cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"m2snet: multi-scale subtraction segmentation network harness"};
  app.footer(std::string("\n") + m2s_config_help());
  app.require_subcommand(1);

  Common common;
  std::vector<std::string> logs;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"synth-gen", "generate a synthetic dataset (images/, masks/) under --out"},
      {"train", "train a model; writes train.log, best.m2sn, final.m2sn"},
      {"eval", "evaluate eval.checkpoint on eval.data_dir"},
      {"ablate", "train and test every ablation cell over ablate.seeds"},
      {"flops", "parameter and MAC accounting for SU, MSU and AU"},
      {"gradcheck", "finite-difference check of the total loss"},
      {"export-curves", "merge epoch logs into one column-aligned table"},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, common);
    cmd->footer(std::string("\n") + m2s_config_help());
    cmds.push_back(cmd);
  }
  cmds.back()->add_option("logs", logs, "epoch log files (or curves.logs)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  m2s_config* cfg = nullptr;
  m2s_status s = build_config(common, &cfg);
  if (s != M2S_OK) {
    m2s_config_destroy(cfg);
    return fail(s);
  }
  const char* out = common.out.c_str();

  if (cmds[0]->parsed()) {
    s = m2s_synth_gen(cfg, out, print_line, nullptr);
  } else if (cmds[1]->parsed()) {
    s = m2s_train(cfg, out, print_line, nullptr);
  } else if (cmds[2]->parsed()) {
    s = m2s_eval(cfg, out, print_line, nullptr);
  } else if (cmds[3]->parsed()) {
    s = m2s_ablate(cfg, out, print_line, nullptr);
  } else if (cmds[4]->parsed()) {
    s = m2s_flops(cfg, out, print_line, nullptr);
  } else if (cmds[5]->parsed()) {
    int passed = 0;
    double err = 0;
    s = m2s_gradcheck(cfg, out, &passed, &err, print_line, nullptr);
  } else {
    if (logs.empty()) {
      size_t needed = 0;
      m2s_config_get(cfg, "curves.logs", nullptr, 0, &needed);
      std::string v(needed, '\0');
      m2s_config_get(cfg, "curves.logs", v.data(), v.size(), &needed);
      v.resize(needed ? needed - 1 : 0);
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) logs.push_back(item);
      }
    }
    std::vector<const char*> ptrs;
    for (const auto& l : logs) ptrs.push_back(l.c_str());
    s = m2s_export_curves(ptrs.data(), ptrs.size(), out, print_line, nullptr);
  }
  m2s_config_destroy(cfg);
  return s == M2S_OK ? 0 : fail(s);
}
