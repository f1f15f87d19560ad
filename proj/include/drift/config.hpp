#pragma once

#include <map>
#include <string>
#include <vector>

#include "drift/common.hpp"

namespace drift {

// INI-style chain configuration: [section] headers with key = value lines,
// '#' comments. Sections: global, annulus.<k>, annulus.<k>.correspondence.<i>,
// link.<k>.
class ChainConfig {
public:
  static ChainConfig parse(const std::string& text);
  static ChainConfig load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback = "") const;
  double get_num(const std::string& section, const std::string& key, double fallback) const;
  std::vector<double> get_list(const std::string& section, const std::string& key) const;

  std::vector<std::string> sections_matching(const std::string& prefix) const;
  const std::string& text() const { return text_; }
  std::uint64_t hash() const { return fnv1a(text_); }

private:
  std::map<std::string, std::map<std::string, std::string>> data_;
  std::string text_;
};

// Run manifest: config hash, seeds, budgets and tolerances, for
// reproducibility. Serialized as JSON.
std::string run_manifest(const ChainConfig& config, const std::string& command,
                         const std::map<std::string, double>& numbers,
                         const Tolerances& tol = {});

}  // namespace drift
