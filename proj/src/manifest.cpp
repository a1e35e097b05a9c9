#include "rwlab/manifest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rwlab/common.hpp"

namespace rwlab {

using nlohmann::json;

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::uint64_t h = fnv1a64(buffer.str());
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void write_manifest(const StageManifest& manifest, const std::filesystem::path& path) {
  json j = {{"stage", manifest.stage},
            {"seed", manifest.seed},
            {"config_hash", manifest.config_hash},
            {"inputs", manifest.inputs},
            {"outputs", manifest.outputs}};
  if (!manifest.extra_json.empty()) j["details"] = json::parse(manifest.extra_json);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

StageManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  json j;
  in >> j;
  StageManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  if (j.contains("details")) m.extra_json = j.at("details").dump();
  return m;
}

bool manifest_inputs_match(const StageManifest& manifest, const std::filesystem::path& root) {
  for (const auto& [rel, hash] : manifest.inputs) {
    const std::filesystem::path path = root / rel;
    if (!std::filesystem::exists(path) || file_hash(path) != hash) return false;
  }
  return true;
}

}  // namespace rwlab
