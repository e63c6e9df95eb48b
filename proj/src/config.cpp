#include "advnlg/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace advnlg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string render_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config key '" + key + "': not a number: " + v);
  }
  return d;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long d = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("config key '" + key + "': not an integer: " + v);
  }
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

}  // namespace

TrainMode parse_train_mode(const std::string& name) {
  if (name == "advnlg") return TrainMode::kAdvnlg;
  if (name == "rl") return TrainMode::kRl;
  if (name == "no-adv") return TrainMode::kNoAdv;
  if (name == "no-warmup") return TrainMode::kNoWarmup;
  throw ConfigError("unknown training mode '" + name + "'");
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kAdvnlg: return "advnlg";
    case TrainMode::kRl: return "rl";
    case TrainMode::kNoAdv: return "no-adv";
    case TrainMode::kNoWarmup: return "no-warmup";
  }
  throw ConfigError("invalid training mode value");
}

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be positive and finite");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (beam_width < 1) throw ConfigError("beam_width must be positive");
  if (!(clip_c > 0) || !std::isfinite(clip_c)) {
    throw ConfigError("clip_c must be positive and finite");
  }
  if (!(tau > 0) || !std::isfinite(tau)) throw ConfigError("tau must be positive and finite");
  if (gen_updates_per_disc < 1) {
    throw ConfigError("gen_updates_per_disc must be positive");
  }
  if (adv_weight < 0 || !std::isfinite(adv_weight)) {
    throw ConfigError("adv_weight must be >= 0 and finite");
  }
  if (total_epochs < 1) throw ConfigError("total_epochs must be positive");
  if (emb_dim < 1 || hidden_dim < 1) throw ConfigError("model dims must be positive");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (!(rollout_len_factor > 0)) throw ConfigError("rollout_len_factor must be positive");
  if (!(rms_decay > 0) || rms_decay >= 1) throw ConfigError("rms_decay must be in (0, 1)");
  if (!(rms_eps > 0)) throw ConfigError("rms_eps must be positive");
  if (baseline_decay < 0 || baseline_decay >= 1) {
    throw ConfigError("baseline_decay must be in [0, 1)");
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["lr"] = render_double(lr);
  kv["batch_size"] = std::to_string(batch_size);
  kv["beam_width"] = std::to_string(beam_width);
  kv["clip_c"] = render_double(clip_c);
  kv["tau"] = render_double(tau);
  kv["warmup_epochs"] = std::to_string(warmup_epochs);
  kv["gen_updates_per_disc"] = std::to_string(gen_updates_per_disc);
  kv["adv_weight"] = render_double(adv_weight);
  kv["total_epochs"] = std::to_string(total_epochs);
  kv["seed"] = std::to_string(seed);
  kv["mode"] = train_mode_name(mode);
  kv["emb_dim"] = std::to_string(emb_dim);
  kv["hidden_dim"] = std::to_string(hidden_dim);
  kv["dropout"] = render_double(dropout);
  kv["min_count"] = std::to_string(min_count);
  kv["st_forward_perturbed"] = st_forward_perturbed ? "true" : "false";
  kv["beam_length_norm"] = beam_length_norm ? "true" : "false";
  kv["rollout_len_factor"] = render_double(rollout_len_factor);
  kv["rms_decay"] = render_double(rms_decay);
  kv["rms_eps"] = render_double(rms_eps);
  kv["baseline_decay"] = render_double(baseline_decay);
  return kv;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "batch_size") c.batch_size = parse_u64(key, value);
    else if (key == "beam_width") c.beam_width = parse_u64(key, value);
    else if (key == "clip_c") c.clip_c = parse_double(key, value);
    else if (key == "tau") c.tau = parse_double(key, value);
    else if (key == "warmup_epochs") c.warmup_epochs = parse_u64(key, value);
    else if (key == "gen_updates_per_disc") c.gen_updates_per_disc = parse_u64(key, value);
    else if (key == "adv_weight") c.adv_weight = parse_double(key, value);
    else if (key == "total_epochs") c.total_epochs = parse_u64(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "mode") c.mode = parse_train_mode(value);
    else if (key == "emb_dim") c.emb_dim = parse_u64(key, value);
    else if (key == "hidden_dim") c.hidden_dim = parse_u64(key, value);
    else if (key == "dropout") c.dropout = parse_double(key, value);
    else if (key == "min_count") c.min_count = parse_u64(key, value);
    else if (key == "st_forward_perturbed") c.st_forward_perturbed = parse_bool(key, value);
    else if (key == "beam_length_norm") c.beam_length_norm = parse_bool(key, value);
    else if (key == "rollout_len_factor") c.rollout_len_factor = parse_double(key, value);
    else if (key == "rms_decay") c.rms_decay = parse_double(key, value);
    else if (key == "rms_eps") c.rms_eps = parse_double(key, value);
    else if (key == "baseline_decay") c.baseline_decay = parse_double(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  return from_map(read_kv_file(path));
}

void TrainConfig::save(const std::string& path) const {
  write_kv_file(path, to_map());
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value, got: " + t);
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" +
                        key + "'");
    }
  }
  return kv;
}

void write_kv_file(const std::string& path,
                   const std::map<std::string, std::string>& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config " + path);
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
}

}  // namespace advnlg
