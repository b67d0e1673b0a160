#include "m2snet/m2snet.h"

#include <cstring>
#include <new>
#include <string>

#include "m2s/harness.hpp"

struct m2s_config {
  m2s::Config cfg;
};

struct m2s_model {
  m2s::M2SModel model;
};

namespace {

thread_local std::string g_last_error;

m2s_status status_of(m2s::ErrorKind kind) {
  using K = m2s::ErrorKind;
  switch (kind) {
    case K::Config: return M2S_ERR_CONFIG;
    case K::InvalidKernel: return M2S_ERR_CONFIG;
    case K::Data: return M2S_ERR_DATA;
    case K::Numeric: return M2S_ERR_NUMERIC;
    case K::Io: return M2S_ERR_IO;
    case K::Format: return M2S_ERR_FORMAT;
    case K::Dimension: return M2S_ERR_DIMENSION;
    case K::Contract: return M2S_ERR_CONTRACT;
  }
  return M2S_ERR_INTERNAL;
}

template <typename F>
m2s_status guard(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const m2s::Error& e) {
    g_last_error = std::string(m2s::to_string(e.kind())) + " error: " + e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return M2S_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = std::string("io error: ") + e.what();
    return M2S_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return M2S_ERR_INTERNAL;
  }
}

m2s_status bad_arg(const char* what) {
  g_last_error = std::string("invalid argument: ") + what;
  return M2S_ERR_INVALID_ARGUMENT;
}

m2s::LogFn make_log(m2s_log_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

m2s::Grid grid(const double* v, int w, int h) {
  m2s::Grid g(h, w);
  std::memcpy(g.v.data(), v, g.v.size() * sizeof(double));
  return g;
}

}  // namespace

extern "C" {

const char* m2s_version(void) { return "1.0.0"; }

const char* m2s_last_error(void) { return g_last_error.c_str(); }

const char* m2s_status_name(m2s_status status) {
  switch (status) {
    case M2S_OK: return "ok";
    case M2S_ERR_CONFIG: return "config error";
    case M2S_ERR_DATA: return "data error";
    case M2S_ERR_NUMERIC: return "numeric error";
    case M2S_ERR_IO: return "io error";
    case M2S_ERR_FORMAT: return "format error";
    case M2S_ERR_DIMENSION: return "dimension error";
    case M2S_ERR_CONTRACT: return "contract error";
    case M2S_ERR_INVALID_ARGUMENT: return "invalid argument";
    case M2S_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

m2s_status m2s_config_create(m2s_config** out) {
  if (!out) return bad_arg("out is NULL");
  return guard([&] {
    *out = new m2s_config{};
    return M2S_OK;
  });
}

m2s_status m2s_config_load(const char* path, m2s_config** out) {
  if (!path || !out) return bad_arg("path/out is NULL");
  return guard([&] {
    *out = new m2s_config{m2s::Config::load(path)};
    return M2S_OK;
  });
}

void m2s_config_destroy(m2s_config* cfg) { delete cfg; }

m2s_status m2s_config_set(m2s_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return bad_arg("cfg/key/value is NULL");
  return guard([&] {
    cfg->cfg.set(key, value);
    return M2S_OK;
  });
}

m2s_status m2s_config_apply(m2s_config* cfg, const char* assignment) {
  if (!cfg || !assignment) return bad_arg("cfg/assignment is NULL");
  return guard([&] {
    cfg->cfg.set_override(assignment);
    return M2S_OK;
  });
}

m2s_status m2s_config_get(const m2s_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  if (!cfg || !key) return bad_arg("cfg/key is NULL");
  return guard([&] {
    const std::string& v = cfg->cfg.raw(key);
    if (needed) *needed = v.size() + 1;
    if (buf && cap > 0) {
      const size_t n = std::min(cap - 1, v.size());
      std::memcpy(buf, v.data(), n);
      buf[n] = '\0';
    }
    return M2S_OK;
  });
}

m2s_status m2s_config_validate(const m2s_config* cfg) {
  if (!cfg) return bad_arg("cfg is NULL");
  return guard([&] {
    cfg->cfg.validate();
    return M2S_OK;
  });
}

const char* m2s_config_help(void) {
  static const std::string text = m2s::config_help();
  return text.c_str();
}

m2s_status m2s_synth_gen(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user) {
  if (!cfg || !out_dir) return bad_arg("cfg/out_dir is NULL");
  return guard([&] {
    m2s::run_synth_gen(cfg->cfg, out_dir, make_log(log, user));
    return M2S_OK;
  });
}

m2s_status m2s_train(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user) {
  if (!cfg || !out_dir) return bad_arg("cfg/out_dir is NULL");
  return guard([&] {
    m2s::run_train(cfg->cfg, out_dir, make_log(log, user));
    return M2S_OK;
  });
}

m2s_status m2s_eval(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user) {
  if (!cfg || !out_dir) return bad_arg("cfg/out_dir is NULL");
  return guard([&] {
    m2s::run_eval(cfg->cfg, out_dir, make_log(log, user));
    return M2S_OK;
  });
}

m2s_status m2s_ablate(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user) {
  if (!cfg || !out_dir) return bad_arg("cfg/out_dir is NULL");
  return guard([&] {
    m2s::run_ablate(cfg->cfg, out_dir, make_log(log, user));
    return M2S_OK;
  });
}

m2s_status m2s_flops(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user) {
  if (!cfg || !out_dir) return bad_arg("cfg/out_dir is NULL");
  return guard([&] {
    m2s::run_flops(cfg->cfg, out_dir, make_log(log, user));
    return M2S_OK;
  });
}

m2s_status m2s_gradcheck(const m2s_config* cfg, const char* out_dir, int* passed, double* max_rel_error,
                         m2s_log_fn log, void* user) {
  if (!cfg || !out_dir) return bad_arg("cfg/out_dir is NULL");
  return guard([&] {
    const auto r = m2s::run_gradcheck(cfg->cfg, out_dir, make_log(log, user));
    if (passed) *passed = r.passed ? 1 : 0;
    if (max_rel_error) *max_rel_error = r.max_rel_error;
    if (!r.passed) {
      g_last_error = "numeric error: gradient check failed, max relative error " + std::to_string(r.max_rel_error);
      return M2S_ERR_NUMERIC;
    }
    return M2S_OK;
  });
}

m2s_status m2s_export_curves(const char* const* logs, size_t n_logs, const char* out_dir, m2s_log_fn log,
                             void* user) {
  if ((!logs && n_logs) || !out_dir) return bad_arg("logs/out_dir is NULL");
  return guard([&] {
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n_logs; ++i) paths.emplace_back(logs[i]);
    m2s::export_curves(paths, out_dir, make_log(log, user));
    return M2S_OK;
  });
}

m2s_status m2s_model_create(const m2s_config* cfg, uint64_t seed, m2s_model** out) {
  if (!cfg || !out) return bad_arg("cfg/out is NULL");
  return guard([&] {
    *out = new m2s_model{m2s::M2SModel(m2s::model_config(cfg->cfg), seed)};
    return M2S_OK;
  });
}

m2s_status m2s_model_load(const char* path, m2s_model** out) {
  if (!path || !out) return bad_arg("path/out is NULL");
  return guard([&] {
    *out = new m2s_model{m2s::M2SModel::from_checkpoint(m2s::read_checkpoint(path))};
    return M2S_OK;
  });
}

void m2s_model_destroy(m2s_model* model) { delete model; }

m2s_status m2s_model_save(const m2s_model* model, const char* path) {
  if (!model || !path) return bad_arg("model/path is NULL");
  return guard([&] {
    m2s::write_checkpoint(path, model->model.to_checkpoint());
    return M2S_OK;
  });
}

m2s_status m2s_model_param_count(const m2s_model* model, int64_t* out) {
  if (!model || !out) return bad_arg("model/out is NULL");
  return guard([&] {
    *out = m2s::count_params(model->model);
    return M2S_OK;
  });
}

m2s_status m2s_model_macs(const m2s_model* model, int64_t* macs, int64_t* fixed_filter_ops) {
  if (!model) return bad_arg("model is NULL");
  return guard([&] {
    const auto& mc = model->model.config();
    const auto r = m2s::count_flops(model->model, mc.input_h, mc.input_w);
    if (macs) *macs = r.total_macs;
    if (fixed_filter_ops) *fixed_filter_ops = r.total_fixed_filter_ops;
    return M2S_OK;
  });
}

m2s_status m2s_model_num_classes(const m2s_model* model, int* out) {
  if (!model || !out) return bad_arg("model/out is NULL");
  *out = model->model.config().num_classes;
  return M2S_OK;
}

m2s_status m2s_model_predict(const m2s_model* model, const uint8_t* rgb, int width, int height, double* out) {
  if (!model || !rgb || !out) return bad_arg("model/rgb/out is NULL");
  if (width <= 0 || height <= 0) return bad_arg("width/height must be positive");
  return guard([&] {
    m2s::Image8 img{width, height, 3,
                    std::vector<std::uint8_t>(rgb, rgb + static_cast<size_t>(width) * height * 3)};
    const auto& mc = model->model.config();
    m2s::Tensor x = m2s::image_tensor(img);
    if (height != mc.input_h || width != mc.input_w) x = m2s::bilinear_resize(x, mc.input_h, mc.input_w);
    m2s::Tensor p = m2s::sigmoid(model->model.forward(x));
    if (height != mc.input_h || width != mc.input_w) p = m2s::bilinear_resize(p, height, width);
    std::copy(p.data().begin(), p.data().end(), out);
    return M2S_OK;
  });
}

m2s_status m2s_metric_dice(const double* pred, const double* gt, size_t n, double* out) {
  if (!pred || !gt || !out) return bad_arg("NULL buffer");
  return guard([&] {
    *out = m2s::dice(m2s::confusion(grid(pred, static_cast<int>(n), 1), grid(gt, static_cast<int>(n), 1)));
    return M2S_OK;
  });
}

m2s_status m2s_metric_jaccard(const double* pred, const double* gt, size_t n, double* out) {
  if (!pred || !gt || !out) return bad_arg("NULL buffer");
  return guard([&] {
    *out = m2s::jaccard(m2s::confusion(grid(pred, static_cast<int>(n), 1), grid(gt, static_cast<int>(n), 1)));
    return M2S_OK;
  });
}

m2s_status m2s_metric_mae(const double* prob, const double* gt, size_t n, double* out) {
  if (!prob || !gt || !out) return bad_arg("NULL buffer");
  return guard([&] {
    *out = m2s::mae(grid(prob, static_cast<int>(n), 1), grid(gt, static_cast<int>(n), 1));
    return M2S_OK;
  });
}

m2s_status m2s_metric_s_measure(const double* prob, const double* gt, int width, int height, double alpha,
                                double* out) {
  if (!prob || !gt || !out) return bad_arg("NULL buffer");
  return guard([&] {
    *out = m2s::s_measure(grid(prob, width, height), grid(gt, width, height), alpha);
    return M2S_OK;
  });
}

m2s_status m2s_metric_e_max(const double* prob, const double* gt, int width, int height, int thresholds,
                            double* out) {
  if (!prob || !gt || !out) return bad_arg("NULL buffer");
  return guard([&] {
    *out = m2s::e_measure_max(grid(prob, width, height), grid(gt, width, height), thresholds);
    return M2S_OK;
  });
}

m2s_status m2s_metric_f_beta_w(const double* prob, const double* gt, int width, int height, double* out) {
  if (!prob || !gt || !out) return bad_arg("NULL buffer");
  return guard([&] {
    *out = m2s::f_beta_w(grid(prob, width, height), grid(gt, width, height));
    return M2S_OK;
  });
}

m2s_status m2s_metric_med(const int* pred, const int* gt, int width, int height, int class_id, double* out) {
  if (!pred || !gt || !out) return bad_arg("NULL buffer");
  return guard([&] {
    const size_t n = static_cast<size_t>(width) * height;
    m2s::LabelGrid p{height, width, std::vector<int>(pred, pred + n)};
    m2s::LabelGrid g{height, width, std::vector<int>(gt, gt + n)};
    *out = m2s::med(p, g, class_id);
    return M2S_OK;
  });
}

}  // extern "C"
