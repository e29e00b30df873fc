#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace thermo::util {

inline constexpr const char* kVersion = "0.1.0";

// Run manifest written to <run_dir>/manifest.json before any computation and
// finalized when the run ends. A directory whose manifest never reached
// status "completed" is treated as incomplete by downstream consumers.
struct RunManifest {
  std::string command;                    // subcommand name
  std::vector<std::string> argv;          // full command line
  std::string config_json;                // fully resolved config, as JSON text
  std::vector<std::uint64_t> seeds;
  std::string version = kVersion;
  std::string started_at;                 // ISO-8601 UTC; empty if reproducible
  std::string finished_at;
  std::string status = "running";         // running | completed | failed
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

// True iff the manifest exists, parses, and has status "completed".
bool manifest_is_finalized(const std::filesystem::path& path);

// Current wall-clock time as ISO-8601 UTC, or "" when reproducible is set.
std::string timestamp_now(bool reproducible);

}  // namespace thermo::util
