#include "gaitset/network.hpp"

#include <fstream>
#include <sstream>

namespace gaitset {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int64_t parse_i64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad real for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> config_to_meta(const NetworkConfig& config) {
  std::map<std::string, std::string> kv;
  kv["arch.c1"] = std::to_string(config.c1);
  kv["arch.c2"] = std::to_string(config.c2);
  kv["arch.c3"] = std::to_string(config.c3);
  kv["arch.c4"] = std::to_string(config.c4);
  kv["arch.c5"] = std::to_string(config.c5);
  kv["arch.c6"] = std::to_string(config.c6);
  kv["arch.scales"] = std::to_string(config.scales);
  kv["arch.embed_dim"] = std::to_string(config.embed_dim);
  kv["arch.sp_strategy"] = sp_strategy_name(config.sp_strategy);
  kv["arch.leaky_slope"] = fmt_double(config.leaky_slope);
  kv["arch.mgp_enabled"] = config.mgp_enabled ? "1" : "0";
  kv["arch.hpm_independent"] = config.hpm_independent ? "1" : "0";
  kv["arch.input_h"] = std::to_string(config.input_h);
  kv["arch.input_w"] = std::to_string(config.input_w);
  kv["arch.gei_input"] = config.gei_input ? "1" : "0";
  return kv;
}

NetworkConfig config_from_meta(const std::map<std::string, std::string>& meta) {
  NetworkConfig c;
  for (const auto& [key, v] : meta) {
    if (key.rfind("arch.", 0) != 0) continue;  // foreign keys (seed, ...) pass through
    if (key == "arch.c1") c.c1 = parse_i64(key, v);
    else if (key == "arch.c2") c.c2 = parse_i64(key, v);
    else if (key == "arch.c3") c.c3 = parse_i64(key, v);
    else if (key == "arch.c4") c.c4 = parse_i64(key, v);
    else if (key == "arch.c5") c.c5 = parse_i64(key, v);
    else if (key == "arch.c6") c.c6 = parse_i64(key, v);
    else if (key == "arch.scales") c.scales = parse_i64(key, v);
    else if (key == "arch.embed_dim") c.embed_dim = parse_i64(key, v);
    else if (key == "arch.sp_strategy") c.sp_strategy = parse_sp_strategy(v);
    else if (key == "arch.leaky_slope") c.leaky_slope = parse_double(key, v);
    else if (key == "arch.mgp_enabled") c.mgp_enabled = parse_bool(key, v);
    else if (key == "arch.hpm_independent") c.hpm_independent = parse_bool(key, v);
    else if (key == "arch.input_h") c.input_h = parse_i64(key, v);
    else if (key == "arch.input_w") c.input_w = parse_i64(key, v);
    else if (key == "arch.gei_input") c.gei_input = parse_bool(key, v);
    else throw ConfigError("unknown architecture key: " + key);
  }
  c.validate();
  return c;
}

void save_kv_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  if (!os) throw DataError("write failed for " + path);
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace gaitset
