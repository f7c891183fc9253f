#pragma once

#include <nlohmann/json.hpp>

#include "cdc/common.hpp"

namespace cdc {

using nlohmann::json;

// Every CLI run writes one manifest next to its outputs: the command, the
// exact configuration and seeds, and content hashes of every input and
// output file. Two runs agreeing on command/config/seeds/input hashes must
// produce identical output hashes.
struct RunManifest {
  static constexpr int kFormatVersion = 1;

  std::string command;
  json config = json::object();
  json seeds = json::object();
  std::vector<std::pair<std::string, std::string>> inputs;   // path, fnv1a64 hex
  std::vector<std::pair<std::string, std::string>> outputs;  // path, fnv1a64 hex
  double duration_seconds = 0.0;

  void add_input(const std::string& path) { inputs.emplace_back(path, hex64(hash_file(path))); }
  void add_output(const std::string& path) { outputs.emplace_back(path, hex64(hash_file(path))); }

  json to_json() const {
    json j;
    j["format_version"] = kFormatVersion;
    j["command"] = command;
    j["config"] = config;
    j["seeds"] = seeds;
    auto files = [](const std::vector<std::pair<std::string, std::string>>& v) {
      json arr = json::array();
      for (const auto& [path, hash] : v) arr.push_back({{"path", path}, {"hash", hash}});
      return arr;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    j["duration_seconds"] = duration_seconds;
    return j;
  }

  void save(const std::string& path) const { write_file(path, to_json().dump(2) + "\n"); }
};

inline json load_manifest(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw FormatError("not a JSON manifest: " + path);
  return j;
}

}  // namespace cdc
