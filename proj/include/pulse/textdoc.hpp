#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pulse {

/// Line-oriented `key: value` document. Numeric lists are comma separated
/// and doubles are written with 17 significant digits so that reading them
/// back is bit-exact. Lookup failures raise LoadError naming the key.
class TextDocument {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, const std::vector<double>& values);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  std::string str() const;
  static TextDocument parse(const std::string& text);

  void save(const std::string& path) const;
  static TextDocument load(const std::string& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_double(double v);

}  // namespace pulse
