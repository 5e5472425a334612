#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace cablecal {

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::filesystem::path& p);

struct StageRecord {
  std::string name;
  std::string status = "ok";
  double wall_s = 0.0;
  double simulated_s = 0.0;
  std::vector<std::string> outputs;
  std::string error;
};

/// Provenance of one CLI run. The id covers only inputs (config, seed,
/// command, input files), so reruns with the same inputs share it and the
/// files that embed it stay byte-identical.
struct RunManifest {
  std::string tool_version;
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::vector<StageRecord> stages;

  std::string id() const;
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace cablecal
