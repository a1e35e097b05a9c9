#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace rwlab {

// Hex FNV-1a hash of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

// Stage provenance record: config hash, seed, input and output hashes, plus
// free-form stage details. Paths are stored relative to the experiment output
// root and nothing is timestamped, so reruns of the same config produce
// byte-identical manifests wherever the output directory lives.
struct StageManifest {
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // root-relative path -> hash
  std::map<std::string, std::string> outputs;  // root-relative path -> hash
  std::string extra_json;                      // optional JSON object
};

void write_manifest(const StageManifest& manifest, const std::filesystem::path& path);
StageManifest read_manifest(const std::filesystem::path& path);

// True when every recorded input hash still matches the file on disk under
// the given output root.
bool manifest_inputs_match(const StageManifest& manifest, const std::filesystem::path& root);

}  // namespace rwlab
