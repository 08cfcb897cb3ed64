#include "krtod/keyvalue.hpp"

#include <fstream>
#include <sstream>

#include "krtod/errors.hpp"

namespace krtod {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const KeyValue& kv, const char* expected) {
  throw ConfigError("line " + std::to_string(kv.line) + ": key '" + kv.key + "' expects " + expected + ", got '" +
                    kv.value + "'");
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno});
  }
  return out;
}

std::uint64_t kv_u64(const KeyValue& kv) {
  try {
    std::size_t used = 0;
    if (kv.value.empty() || kv.value[0] == '-') throw std::invalid_argument(kv.value);
    const unsigned long long x = std::stoull(kv.value, &used);
    if (used != kv.value.size()) throw std::invalid_argument(kv.value);
    return x;
  } catch (const std::exception&) {
    bad(kv, "a non-negative integer");
  }
}

std::size_t kv_size(const KeyValue& kv) { return static_cast<std::size_t>(kv_u64(kv)); }

double kv_double(const KeyValue& kv) {
  try {
    std::size_t used = 0;
    const double x = std::stod(kv.value, &used);
    if (used != kv.value.size()) throw std::invalid_argument(kv.value);
    return x;
  } catch (const std::exception&) {
    bad(kv, "a number");
  }
}

bool kv_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  bad(kv, "true or false");
}

void kv_unknown(const KeyValue& kv) {
  throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace krtod
