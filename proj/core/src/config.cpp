#include "raincycle/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <functional>
#include <sstream>

#include "raincycle/error.hpp"
#include "raincycle/image.hpp"

namespace raincycle {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad unsigned value for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean value for " + key + ": '" + v + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const TrainingConfig&)> get;
  std::function<void(TrainingConfig&, const std::string&)> set;
};

#define F_INT(name)                                                            \
  Field{#name, [](const TrainingConfig& c) { return std::to_string(c.name); }, \
        [](TrainingConfig& c, const std::string& v) {                          \
          c.name = static_cast<int>(parse_int(#name, v));                      \
        }}
#define F_DBL(name)                                                       \
  Field{#name, [](const TrainingConfig& c) { return fmt_double(c.name); }, \
        [](TrainingConfig& c, const std::string& v) { c.name = parse_double(#name, v); }}
#define F_U64(name)                                                            \
  Field{#name, [](const TrainingConfig& c) { return std::to_string(c.name); }, \
        [](TrainingConfig& c, const std::string& v) { c.name = parse_u64(#name, v); }}
#define F_BOOL(name)                                                                  \
  Field{#name, [](const TrainingConfig& c) { return c.name ? "true" : "false"; },    \
        [](TrainingConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }}
#define F_STR(name)                                              \
  Field{#name, [](const TrainingConfig& c) { return c.name; },   \
        [](TrainingConfig& c, const std::string& v) { c.name = v; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      F_INT(epochs),
      F_DBL(lr),
      F_INT(lr_decay_start),
      F_DBL(adam_beta1),
      F_DBL(adam_beta2),
      F_DBL(adam_eps),
      F_DBL(weight_decay),
      F_INT(batch_size),
      F_STR(data_root),
      F_INT(crop),
      F_DBL(flip_probability),
      F_INT(stages),
      F_INT(uarse_width),
      F_INT(gen_width),
      F_INT(disc_width),
      F_INT(hybrid_res_layers),
      F_INT(hybrid_dense_layers),
      F_STR(lstm_candidate_activation),
      F_DBL(lambda_adv),
      F_DBL(lambda_att),
      F_DBL(lambda_cc),
      F_DBL(lambda_p),
      F_DBL(lambda_gmm),
      F_DBL(lambda_r),
      F_BOOL(enable_adv),
      F_BOOL(enable_att),
      F_BOOL(enable_cc),
      F_BOOL(enable_p),
      F_BOOL(enable_gmm),
      F_BOOL(enable_r),
      F_DBL(lambda_id),
      F_BOOL(enable_id),
      F_DBL(att_prior_std),
      F_STR(att_prior_mode),
      F_INT(gmm_k),
      F_INT(gmm_refit_interval),
      F_INT(gmm_em_iters),
      F_STR(perceptual_mode),
      F_STR(perceptual_archive),
      F_INT(perceptual_width),
      F_U64(perceptual_seed),
      F_U64(seed),
      F_INT(checkpoint_interval),
      F_BOOL(metric_luma),
      F_INT(synth_images),
      F_INT(synth_test_pairs),
      F_INT(synth_size),
      F_DBL(rain_density),
      F_DBL(rain_len_min),
      F_DBL(rain_len_max),
      F_DBL(rain_angle_min),
      F_DBL(rain_angle_max),
      F_DBL(rain_width),
      F_DBL(rain_intensity_min),
      F_DBL(rain_intensity_max),
  };
  return f;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_override(TrainingConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

void apply_override_kv(TrainingConfig& cfg, const std::string& kv) {
  const size_t eq = kv.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("config: override must be key=value, got '" + kv + "'");
  }
  apply_override(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

TrainingConfig parse_config_text(const std::string& text) {
  TrainingConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key = value");
    }
    try {
      apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

TrainingConfig load_config(const std::string& path) {
  const std::vector<uint8_t> bytes = read_binary_file(path);
  return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

void validate_config(const TrainingConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("config: lr must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (cfg.lr_decay_start < 0 || cfg.lr_decay_start > cfg.epochs) {
    throw ConfigError("config: lr_decay_start must lie in [0, epochs]");
  }
  if (cfg.crop < 16) throw ConfigError("config: crop must be >= 16");
  if (cfg.crop % 8 != 0) throw ConfigError("config: crop must be a multiple of 8");
  if (cfg.flip_probability < 0.0 || cfg.flip_probability > 1.0) {
    throw ConfigError("config: flip_probability must be in [0,1]");
  }
  if (cfg.stages < 1) throw ConfigError("config: stages must be >= 1");
  if (cfg.uarse_width < 1 || cfg.gen_width < 1 || cfg.disc_width < 1) {
    throw ConfigError("config: model widths must be >= 1");
  }
  if (cfg.hybrid_res_layers < 1 || cfg.hybrid_dense_layers < 1) {
    throw ConfigError("config: hybrid block layer counts must be >= 1");
  }
  if (cfg.lstm_candidate_activation != "sigmoid" && cfg.lstm_candidate_activation != "tanh") {
    throw ConfigError("config: lstm_candidate_activation must be sigmoid or tanh");
  }
  for (double w : {cfg.lambda_adv, cfg.lambda_att, cfg.lambda_cc, cfg.lambda_p, cfg.lambda_gmm,
                   cfg.lambda_r, cfg.lambda_id}) {
    if (w < 0.0) throw ConfigError("config: loss weights must be >= 0");
  }
  if (!(cfg.att_prior_std > 0.0)) throw ConfigError("config: att_prior_std must be > 0");
  if (cfg.att_prior_mode != "sample" && cfg.att_prior_mode != "constant") {
    throw ConfigError("config: att_prior_mode must be sample or constant");
  }
  if (cfg.gmm_k < 1) throw ConfigError("config: gmm_k must be >= 1");
  if (cfg.gmm_refit_interval < 1) throw ConfigError("config: gmm_refit_interval must be >= 1");
  if (cfg.gmm_em_iters < 1) throw ConfigError("config: gmm_em_iters must be >= 1");
  if (cfg.perceptual_mode != "fixed" && cfg.perceptual_mode != "archive") {
    throw ConfigError("config: perceptual_mode must be fixed or archive");
  }
  if (cfg.perceptual_mode == "archive" && cfg.perceptual_archive.empty()) {
    throw ConfigError("config: perceptual_mode=archive needs perceptual_archive");
  }
  if (cfg.perceptual_width < 1) throw ConfigError("config: perceptual_width must be >= 1");
  if (cfg.checkpoint_interval < 1) throw ConfigError("config: checkpoint_interval must be >= 1");
  if (cfg.synth_images < 1 || cfg.synth_test_pairs < 0) {
    throw ConfigError("config: synthetic dataset counts out of range");
  }
  if (cfg.synth_size < cfg.crop) throw ConfigError("config: synth_size must be >= crop");
  if (cfg.rain_len_min > cfg.rain_len_max || cfg.rain_angle_min > cfg.rain_angle_max ||
      cfg.rain_intensity_min > cfg.rain_intensity_max) {
    throw ConfigError("config: rain parameter ranges must be ordered");
  }
  if (cfg.rain_intensity_min < 0.0) throw ConfigError("config: rain intensity must be >= 0");
  if (!(cfg.rain_width > 0.0)) throw ConfigError("config: rain_width must be > 0");
  if (cfg.rain_density < 0.0) throw ConfigError("config: rain_density must be >= 0");
}

std::string effective_config_text(const TrainingConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += "\n";
  }
  return out;
}

uint64_t fnv1a64(const void* data, size_t size) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = 14695981039346656037ull;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t config_hash(const TrainingConfig& cfg) {
  const std::string text = effective_config_text(cfg);
  return fnv1a64(text.data(), text.size());
}

void apply_loss_preset(TrainingConfig& cfg, const std::string& preset) {
  cfg.enable_adv = true;
  cfg.enable_cc = true;
  cfg.enable_p = false;
  cfg.enable_att = false;
  cfg.enable_gmm = false;
  cfg.enable_r = false;
  if (preset == "base") return;
  cfg.enable_p = true;
  if (preset == "base+p") return;
  cfg.enable_att = true;
  if (preset == "base+p+att") return;
  cfg.enable_gmm = true;
  if (preset == "base+p+att+gmm") return;
  if (preset == "total") {
    cfg.enable_r = true;
    return;
  }
  throw ConfigError("config: unknown loss preset '" + preset + "'");
}

std::vector<std::string> loss_preset_names() {
  return {"base", "base+p", "base+p+att", "base+p+att+gmm", "total"};
}

}  // namespace raincycle
