#include "pulse/textdoc.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pulse/error.hpp"

namespace pulse {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void TextDocument::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void TextDocument::set(const std::string& key, double value) { set(key, format_double(value)); }

void TextDocument::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }

void TextDocument::set(const std::string& key, const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += format_double(values[i]);
  }
  set(key, s);
}

bool TextDocument::has(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& TextDocument::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw LoadError(key, "missing field");
}

namespace {

double to_double(const std::string& key, const std::string& token) {
  const char* begin = token.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw LoadError(key, "cannot parse number '" + token + "'");
  }
  return v;
}

}  // namespace

double TextDocument::get_double(const std::string& key) const { return to_double(key, get(key)); }

std::int64_t TextDocument::get_int(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw LoadError(key, "cannot parse integer '" + s + "'");
  return v;
}

std::vector<double> TextDocument::get_doubles(const std::string& key) const {
  const std::string& s = get(key);
  std::vector<double> out;
  if (s.empty()) return out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    const auto first = tok.find_first_not_of(' ');
    if (first == std::string::npos) throw LoadError(key, "empty list element");
    out.push_back(to_double(key, tok.substr(first)));
  }
  return out;
}

std::string TextDocument::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + ": " + v + "\n";
  return out;
}

TextDocument TextDocument::parse(const std::string& text) {
  TextDocument doc;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      // A line cut off before its separator names the field it belonged to.
      throw LoadError(line, "incomplete line");
    }
    std::string value = line.substr(colon + 1);
    if (!value.empty() && value[0] == ' ') value.erase(0, 1);
    doc.entries_.emplace_back(line.substr(0, colon), value);
  }
  return doc;
}

void TextDocument::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << str();
  if (!out) throw IoError("write failed for '" + path + "'");
}

TextDocument TextDocument::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace pulse
