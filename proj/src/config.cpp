#include "drift/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace drift {

ChainConfig ChainConfig::parse(const std::string& text) {
  ChainConfig cfg;
  cfg.text_ = text;
  std::istringstream in(text);
  std::string line, section = "global";
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r\n");
    line = line.substr(first, last - first + 1);
    if (line.front() == '[') {
      require(line.back() == ']', Errc::ConfigError,
              "line " + std::to_string(lineno) + ": unterminated section header");
      section = line.substr(1, line.size() - 2);
      cfg.data_[section];
      continue;
    }
    auto eq = line.find('=');
    require(eq != std::string::npos, Errc::ConfigError,
            "line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      return (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), Errc::ConfigError, "line " + std::to_string(lineno) + ": empty key");
    cfg.data_[section][key] = value;
  }
  return cfg;
}

ChainConfig ChainConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::IoError, "cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool ChainConfig::has(const std::string& section, const std::string& key) const {
  auto sit = data_.find(section);
  return sit != data_.end() && sit->second.count(key) > 0;
}

std::string ChainConfig::get(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
  auto sit = data_.find(section);
  if (sit == data_.end()) return fallback;
  auto kit = sit->second.find(key);
  return (kit == sit->second.end()) ? fallback : kit->second;
}

double ChainConfig::get_num(const std::string& section, const std::string& key,
                            double fallback) const {
  std::string v = get(section, key);
  if (v.empty()) return fallback;
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    fail(Errc::ConfigError, section + "." + key + ": not a number: " + v);
  }
}

std::vector<double> ChainConfig::get_list(const std::string& section,
                                          const std::string& key) const {
  std::vector<double> out;
  std::istringstream in(get(section, key));
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

std::vector<std::string> ChainConfig::sections_matching(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, kv] : data_)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

std::string run_manifest(const ChainConfig& config, const std::string& command,
                         const std::map<std::string, double>& numbers, const Tolerances& tol) {
  nlohmann::json m;
  m["command"] = command;
  m["config_hash"] = config.hash();
  for (const auto& [key, value] : numbers) m["run"][key] = value;
  m["tolerances"] = {{"tol_area", tol.tol_area},
                     {"tol_boundary", tol.tol_boundary},
                     {"tol_circ", tol.tol_circ},
                     {"tol_split", tol.tol_split},
                     {"tol_rat", tol.tol_rat},
                     {"tol_angle", tol.tol_angle},
                     {"tol_deriv", tol.tol_deriv},
                     {"replay_tol", tol.replay_tol},
                     {"gap_min", tol.gap_min},
                     {"h_arc", tol.h_arc}};
  return m.dump(2);
}

}  // namespace drift
