#include "manifest.hpp"

#include <cstdio>

#include "krtod/hash.hpp"
#include "krtod/keyvalue.hpp"

namespace krtod::cli {

std::string file_checksum(const std::string& path) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a(read_text_file(path))));
  return buf;
}

RunManifest::RunManifest(std::string command, std::vector<std::string> args)
    : command_(std::move(command)), args_(std::move(args)), start_(std::chrono::steady_clock::now()) {}

void RunManifest::write(const std::string& path) const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["args"] = args_;
  j["seed"] = seed_;
  j["config"] = config_;
  auto files = [](const std::vector<std::string>& paths) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : paths) arr.push_back({{"path", p}, {"checksum", file_checksum(p)}});
    return arr;
  };
  j["inputs"] = files(inputs_);
  j["outputs"] = files(outputs_);
  j["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace krtod::cli
