#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pheno/common.hpp"
#include "pheno/version.hpp"

namespace pheno {

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open '" + path + "' for digest");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a(buf, std::size_t(in.gcount()), h);
  }
  return hex64(h);
}

// Everything needed to reproduce a command's outputs bit-for-bit: the
// resolved configuration, the seeds, and digests of every input file.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config;  // resolved config snapshot
  std::string registry_hash;
  std::map<std::string, std::string> input_digests;  // path -> fnv64
  std::vector<std::string> artifacts;                // produced files

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["v"] = 1;
    j["tool_version"] = kVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["registry_hash"] = registry_hash;
    j["config"] = config;
    j["input_digests"] = input_digests;
    j["artifacts"] = artifacts;
    return j;
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw_data("cannot write '" + path + "'");
    out << to_json().dump(2) << '\n';
  }
};

}  // namespace pheno
