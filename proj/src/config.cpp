#include "scnp/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace scnp {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

void RunConfig::define(const std::string& key,
                       const std::string& default_value) {
  values_[key] = default_value;
}

bool RunConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw UsageError("config: unknown key '" + key + "'");
  }
  it->second = value;
}

void RunConfig::parse_line(const std::string& raw, const std::string& where) {
  std::string line = raw;
  const auto hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string::npos) {
    throw DataError("config: malformed line in " + where + ": '" + raw + "'");
  }
  set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open " + path);
  std::string line;
  while (std::getline(is, line)) parse_line(line, path);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw UsageError("config: unknown key '" + key + "'");
  }
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::exception&) {
    throw DataError("config: key '" + key + "' is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw DataError("config: key '" + key + "' is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DataError("config: key '" + key + "' is not a boolean: " + v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw DataError("config: key '" + key + "' is not an unsigned integer: " +
                    get(key));
  }
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

void RunConfig::write(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("config: cannot open " + path + " for writing");
  os << serialize();
  if (!os) throw DataError("config: write failed for " + path);
}

}  // namespace scnp
