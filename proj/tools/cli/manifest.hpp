#pragma once

#include <chrono>
#include <string>
#include <vector>

#include <json.hpp>

namespace krtod::cli {

// Record of one CLI run, written as `<output>.manifest.json`.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> args);

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_config(nlohmann::ordered_json config) { config_ = std::move(config); }
  void add_input(const std::string& path) { inputs_.push_back(path); }
  void add_output(const std::string& path) { outputs_.push_back(path); }

  // Checksums every input and output and writes the manifest.
  void write(const std::string& path) const;

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::uint64_t seed_ = 0;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  std::vector<std::string> inputs_, outputs_;
  std::chrono::steady_clock::time_point start_;
};

std::string file_checksum(const std::string& path);

}  // namespace krtod::cli
