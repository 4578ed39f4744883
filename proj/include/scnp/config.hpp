#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "scnp/common.hpp"

namespace scnp {

// Flat `key = value` configuration with `#` comments and no nesting. Every
// key must be defined with a default before it can be read or set; unknown
// keys in files or overrides are errors so typos cannot pass silently.
class RunConfig {
 public:
  void define(const std::string& key, const std::string& default_value);
  bool has(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  void parse_line(const std::string& line, const std::string& where);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  // Resolved key = value lines in sorted key order.
  std::string serialize() const;
  void write(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace scnp
