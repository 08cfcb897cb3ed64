#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace krtod {

// Flat `key = value` text with `#` comments, as used by the config files.
struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<KeyValue> parse_key_values(const std::string& text);  // throws ConfigError

std::size_t kv_size(const KeyValue& kv);
std::uint64_t kv_u64(const KeyValue& kv);
double kv_double(const KeyValue& kv);
bool kv_bool(const KeyValue& kv);
[[noreturn]] void kv_unknown(const KeyValue& kv);

std::string read_text_file(const std::string& path);  // throws IoError
void write_text_file(const std::string& path, const std::string& text);

}  // namespace krtod
