#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

namespace semiflow::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat INI: [section] key = value. Keys are addressed as "section.key".
class Config {
 public:
  Config() = default;
  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  bool has(const std::string& key) const;
  std::string str(const std::string& key, const std::string& def) const;
  double num(const std::string& key, double def) const;
  long integer(const std::string& key, long def) const;
  bool flag(const std::string& key, bool def) const;
  std::optional<std::uint64_t> seed(const std::string& key) const;

  /// "a,b,c", "lin:lo:hi:n" or "log:lo:hi:n"; must be nonempty.
  std::vector<double> grid(const std::string& key, const std::vector<double>& def) const;
  std::vector<long> ints(const std::string& key, const std::vector<long>& def) const;
  std::vector<std::string> words(const std::string& key, const std::vector<std::string>& def) const;

 private:
  boost::property_tree::ptree pt_;
};

std::vector<double> parse_grid(const std::string& text);

}  // namespace semiflow::cli
