#include "eqmap/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "eqmap/rng.hpp"

namespace eqmap {

std::string to_string(MapMode m) {
  switch (m) {
    case MapMode::None: return "none";
    case MapMode::TranslateOnly: return "translate_only";
    case MapMode::TranslateRotate: return "translate_rotate";
  }
  return "?";
}

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::Transformer: return "transformer";
    case EncoderKind::SingleAttention: return "single_attention";
    case EncoderKind::None: return "none";
  }
  return "?";
}

MapMode map_mode_from(const std::string& s) {
  if (s == "none") return MapMode::None;
  if (s == "translate_only") return MapMode::TranslateOnly;
  if (s == "translate_rotate") return MapMode::TranslateRotate;
  throw ConfigError("map_mode must be none|translate_only|translate_rotate, got '" + s + "'");
}

EncoderKind encoder_kind_from(const std::string& s) {
  if (s == "transformer") return EncoderKind::Transformer;
  if (s == "single_attention") return EncoderKind::SingleAttention;
  if (s == "none") return EncoderKind::None;
  throw ConfigError("encoder_kind must be transformer|single_attention|none, got '" + s + "'");
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "full") return;  // the defaults
  if (name == "desk") {
    cfg.t_in = 10;
    cfg.t_out = 15;
    cfg.n_agents = 4;
    cfg.q_lanes = 4;
    cfg.l_points = 20;
    cfg.p_repeats = 4;
    cfg.hidden_dim = 32;
    cfg.heads = 4;
    cfg.batch = 32;
    cfg.lr = 1e-3;
    cfg.epochs = 20;
    cfg.rate_hz = 5;
    return;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
}

namespace {

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected unsigned integer, got '" + v + "'");
  }
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset") { apply_preset(cfg, value); return; }
  if (key == "t_in") { cfg.t_in = parse_int(key, value); return; }
  if (key == "t_out") { cfg.t_out = parse_int(key, value); return; }
  if (key == "n_agents") { cfg.n_agents = parse_int(key, value); return; }
  if (key == "q_lanes") { cfg.q_lanes = parse_int(key, value); return; }
  if (key == "l_points") { cfg.l_points = parse_int(key, value); return; }
  if (key == "p_repeats") { cfg.p_repeats = parse_int(key, value); return; }
  if (key == "hidden_dim") { cfg.hidden_dim = parse_int(key, value); return; }
  if (key == "mlp_layers") { cfg.mlp_layers = parse_int(key, value); return; }
  if (key == "heads") { cfg.heads = parse_int(key, value); return; }
  if (key == "k_categories") { cfg.k_categories = parse_int(key, value); return; }
  if (key == "rate_hz") { cfg.rate_hz = parse_int(key, value); return; }
  if (key == "lr") { cfg.lr = parse_double(key, value); return; }
  if (key == "epochs") { cfg.epochs = parse_int(key, value); return; }
  if (key == "batch") { cfg.batch = parse_int(key, value); return; }
  if (key == "map_mode") { cfg.map_mode = map_mode_from(value); return; }
  if (key == "encoder_kind") { cfg.encoder_kind = encoder_kind_from(value); return; }
  if (key == "seed") { cfg.seed = parse_u64(key, value); return; }
  if (key == "count_train") { cfg.count_train = parse_int(key, value); return; }
  if (key == "count_val") { cfg.count_val = parse_int(key, value); return; }
  if (key == "count_test") { cfg.count_test = parse_int(key, value); return; }
  if (key == "curvature_min") { cfg.curvature_min = parse_double(key, value); return; }
  if (key == "curvature_max") { cfg.curvature_max = parse_double(key, value); return; }
  if (key == "speed_min") { cfg.speed_min = parse_double(key, value); return; }
  if (key == "speed_max") { cfg.speed_max = parse_double(key, value); return; }
  if (key == "noise_sigma") { cfg.noise_sigma = parse_double(key, value); return; }
  if (key == "lane_length_m") { cfg.lane_length_m = parse_double(key, value); return; }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    size_t vb = value.find_first_not_of(" \t");
    value = vb == std::string::npos ? "" : value.substr(vb);
    set_key(cfg, key, value);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void validate(const RunConfig& cfg) {
  auto positive = [](const char* name, long v) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive("t_in", cfg.t_in);
  positive("t_out", cfg.t_out);
  positive("n_agents", cfg.n_agents);
  positive("q_lanes", cfg.q_lanes);
  positive("l_points", cfg.l_points);
  positive("p_repeats", cfg.p_repeats);
  positive("hidden_dim", cfg.hidden_dim);
  positive("mlp_layers", cfg.mlp_layers);
  positive("heads", cfg.heads);
  positive("k_categories", cfg.k_categories);
  positive("rate_hz", cfg.rate_hz);
  positive("epochs", cfg.epochs);
  positive("batch", cfg.batch);
  if (cfg.t_in < 2) throw ConfigError("t_in must be >= 2 (speed profile needs a displacement)");
  if (cfg.hidden_dim % cfg.heads != 0)
    throw ConfigError("hidden_dim (" + std::to_string(cfg.hidden_dim) +
                      ") must be divisible by heads (" + std::to_string(cfg.heads) + ")");
  if (cfg.hidden_dim % 2 != 0) throw ConfigError("hidden_dim must be even");
  if (cfg.lr <= 0.0) throw ConfigError("lr must be positive");
  if (cfg.curvature_min > cfg.curvature_max || cfg.curvature_min < 0.0)
    throw ConfigError("curvature range is empty or negative");
  if (cfg.speed_min > cfg.speed_max || cfg.speed_min <= 0.0)
    throw ConfigError("speed range is empty or non-positive");
  if (cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (cfg.lane_length_m <= 0.0) throw ConfigError("lane_length_m must be positive");
  if (cfg.count_train < 0 || cfg.count_val < 0 || cfg.count_test < 0)
    throw ConfigError("scene counts must be >= 0");
}

std::string canonical_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "batch=" << cfg.batch << "\n";
  os << "count_test=" << cfg.count_test << "\n";
  os << "count_train=" << cfg.count_train << "\n";
  os << "count_val=" << cfg.count_val << "\n";
  os << "curvature_max=" << fmt_double(cfg.curvature_max) << "\n";
  os << "curvature_min=" << fmt_double(cfg.curvature_min) << "\n";
  os << "encoder_kind=" << to_string(cfg.encoder_kind) << "\n";
  os << "epochs=" << cfg.epochs << "\n";
  os << "heads=" << cfg.heads << "\n";
  os << "hidden_dim=" << cfg.hidden_dim << "\n";
  os << "k_categories=" << cfg.k_categories << "\n";
  os << "l_points=" << cfg.l_points << "\n";
  os << "lane_length_m=" << fmt_double(cfg.lane_length_m) << "\n";
  os << "lr=" << fmt_double(cfg.lr) << "\n";
  os << "map_mode=" << to_string(cfg.map_mode) << "\n";
  os << "mlp_layers=" << cfg.mlp_layers << "\n";
  os << "n_agents=" << cfg.n_agents << "\n";
  os << "noise_sigma=" << fmt_double(cfg.noise_sigma) << "\n";
  os << "p_repeats=" << cfg.p_repeats << "\n";
  os << "q_lanes=" << cfg.q_lanes << "\n";
  os << "rate_hz=" << cfg.rate_hz << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "speed_max=" << fmt_double(cfg.speed_max) << "\n";
  os << "speed_min=" << fmt_double(cfg.speed_min) << "\n";
  os << "t_in=" << cfg.t_in << "\n";
  os << "t_out=" << cfg.t_out << "\n";
  return os.str();
}

std::string config_hash(const RunConfig& cfg) {
  uint64_t h = Rng::hash_label(0x9d5c0fb1a7e33u, canonical_text(cfg));
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> structural_mismatch(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  auto cmp = [&](const char* name, auto va, auto vb) {
    if (va != vb) out.push_back(name);
  };
  cmp("t_in", a.t_in, b.t_in);
  cmp("t_out", a.t_out, b.t_out);
  cmp("n_agents", a.n_agents, b.n_agents);
  cmp("q_lanes", a.q_lanes, b.q_lanes);
  cmp("l_points", a.l_points, b.l_points);
  cmp("p_repeats", a.p_repeats, b.p_repeats);
  cmp("hidden_dim", a.hidden_dim, b.hidden_dim);
  cmp("mlp_layers", a.mlp_layers, b.mlp_layers);
  cmp("heads", a.heads, b.heads);
  cmp("k_categories", a.k_categories, b.k_categories);
  cmp("rate_hz", a.rate_hz, b.rate_hz);
  cmp("map_mode", to_string(a.map_mode), to_string(b.map_mode));
  cmp("encoder_kind", to_string(a.encoder_kind), to_string(b.encoder_kind));
  return out;
}

std::vector<std::string> data_mismatch(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  auto cmp = [&](const char* name, auto va, auto vb) {
    if (va != vb) out.push_back(name);
  };
  cmp("t_in", a.t_in, b.t_in);
  cmp("t_out", a.t_out, b.t_out);
  cmp("n_agents", a.n_agents, b.n_agents);
  cmp("q_lanes", a.q_lanes, b.q_lanes);
  cmp("l_points", a.l_points, b.l_points);
  cmp("rate_hz", a.rate_hz, b.rate_hz);
  return out;
}

}  // namespace eqmap
