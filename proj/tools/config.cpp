#include "config.hpp"

#include <cmath>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>

namespace semiflow::cli {

namespace {

template <class T>
T convert(const std::string& key, const std::string& raw) {
  try {
    return boost::lexical_cast<T>(boost::trim_copy(raw));
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError("config: cannot read '" + key + "' from '" + raw + "'");
  }
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(","));
  for (auto& p : parts) boost::trim(p);
  std::erase_if(parts, [](const std::string& p) { return p.empty(); });
  return parts;
}

}  // namespace

Config Config::load(const std::string& path) {
  Config c;
  try {
    boost::property_tree::ini_parser::read_ini(path, c.pt_);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, c.pt_);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

bool Config::has(const std::string& key) const { return pt_.get_optional<std::string>(key).has_value(); }

std::string Config::str(const std::string& key, const std::string& def) const {
  auto v = pt_.get_optional<std::string>(key);
  return v ? boost::trim_copy(*v) : def;
}

double Config::num(const std::string& key, double def) const {
  auto v = pt_.get_optional<std::string>(key);
  return v ? convert<double>(key, *v) : def;
}

long Config::integer(const std::string& key, long def) const {
  auto v = pt_.get_optional<std::string>(key);
  return v ? convert<long>(key, *v) : def;
}

bool Config::flag(const std::string& key, bool def) const {
  auto v = pt_.get_optional<std::string>(key);
  if (!v) return def;
  const std::string s = boost::to_lower_copy(boost::trim_copy(*v));
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError("config: '" + key + "' is not a boolean: '" + *v + "'");
}

std::optional<std::uint64_t> Config::seed(const std::string& key) const {
  auto v = pt_.get_optional<std::string>(key);
  if (!v) return std::nullopt;
  return convert<std::uint64_t>(key, *v);
}

std::vector<double> parse_grid(const std::string& text) {
  const std::string s = boost::trim_copy(text);
  if (s.rfind("lin:", 0) == 0 || s.rfind("log:", 0) == 0) {
    std::vector<std::string> p;
    boost::split(p, s, boost::is_any_of(":"));
    if (p.size() != 4) throw ConfigError("grid: expected kind:lo:hi:n in '" + text + "'");
    const double lo = convert<double>(text, p[1]), hi = convert<double>(text, p[2]);
    const long n = convert<long>(text, p[3]);
    if (n < 1) throw ConfigError("grid: n must be positive in '" + text + "'");
    if (p[0] == "log" && !(lo > 0.0 && hi > 0.0)) throw ConfigError("grid: log grid needs positive ends");
    std::vector<double> g;
    for (long i = 0; i < n; ++i) {
      const double f = n == 1 ? 0.0 : double(i) / double(n - 1);
      g.push_back(p[0] == "lin" ? lo + (hi - lo) * f : lo * std::pow(hi / lo, f));
    }
    return g;
  }
  std::vector<double> g;
  for (const auto& w : split(s)) g.push_back(convert<double>(text, w));
  if (g.empty()) throw ConfigError("grid: empty '" + text + "'");
  return g;
}

std::vector<double> Config::grid(const std::string& key, const std::vector<double>& def) const {
  auto v = pt_.get_optional<std::string>(key);
  if (!v) return def;
  try {
    return parse_grid(*v);
  } catch (const ConfigError& e) {
    throw ConfigError("config: " + key + ": " + e.what());
  }
}

std::vector<long> Config::ints(const std::string& key, const std::vector<long>& def) const {
  auto v = pt_.get_optional<std::string>(key);
  if (!v) return def;
  std::vector<long> out;
  for (const auto& w : split(*v)) out.push_back(convert<long>(key, w));
  if (out.empty()) throw ConfigError("config: '" + key + "' is empty");
  return out;
}

std::vector<std::string> Config::words(const std::string& key, const std::vector<std::string>& def) const {
  auto v = pt_.get_optional<std::string>(key);
  if (!v) return def;
  auto out = split(*v);
  if (out.empty()) throw ConfigError("config: '" + key + "' is empty");
  return out;
}

}  // namespace semiflow::cli
