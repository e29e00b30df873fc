#include "attnthermo/util/manifest.hpp"

#include <ctime>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace thermo::util {

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::json j;
  j["schema"] = "manifest-v1";
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config_json.empty()
                    ? nlohmann::json::object()
                    : nlohmann::json::parse(m.config_json);
  j["seeds"] = m.seeds;
  j["version"] = m.version;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["status"] = m.status;
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("write_manifest: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("read_manifest: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("schema", "") != "manifest-v1")
    throw std::runtime_error("read_manifest: schema mismatch in " +
                             path.string());
  RunManifest m;
  m.command = j.value("command", "");
  m.argv = j.value("argv", std::vector<std::string>{});
  m.config_json = j.contains("config") ? j["config"].dump() : "";
  m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  m.version = j.value("version", "");
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.status = j.value("status", "");
  return m;
}

bool manifest_is_finalized(const std::filesystem::path& path) {
  try {
    return read_manifest(path).status == "completed";
  } catch (const std::exception&) {
    return false;
  }
}

std::string timestamp_now(bool reproducible) {
  if (reproducible) return "";
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace thermo::util
