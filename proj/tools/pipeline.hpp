#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"

namespace delwalk::cli {

inline constexpr const char* kArtifactVersion = "delwalk-artifacts/1";
inline constexpr const char* kManifestName = "manifest.json";

struct OutputFile {
  std::string path;    // relative to the output directory
  std::string schema;  // pointset, graph, csv
  std::string sha256;
};

struct StageRecord {
  std::string name;
  std::string status;  // ok, failed, skipped
  double seconds = 0.0;
  std::string error;
  std::vector<OutputFile> files;
};

struct RunManifest {
  std::string artifact_version = kArtifactVersion;
  std::string config_digest;  // sha256 of the config text
  std::string config_text;
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<StageRecord> stages;  // dependency order

  const StageRecord* stage(const std::string& name) const;
  bool ok() const;  // no failed stage
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& p);

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
/// Throws LookupError when absent, ConsistencyError when malformed.
RunManifest load_manifest(const std::filesystem::path& p);

/// Runs the requested stages in dependency order inside c.out. Earlier
/// stages not in the list are read back from disk. A failure stops the
/// pipeline; the manifest keeps what was written. Records of a previous
/// manifest with the same config digest are kept for stages not rerun.
RunManifest run_stages(const ExperimentConfig& c, std::vector<std::string> stages, int threads = 1);

/// Problems with listed files: missing, digest mismatch, or failing to
/// parse under the declared schema.
std::vector<std::string> verify_outputs(const std::filesystem::path& dir, const RunManifest& m);

struct ClaimLine {
  std::string claim;
  std::string verdict;  // PASS, FAIL, NOT RUN
  std::string detail;
};

struct Report {
  std::vector<ClaimLine> claims;
  std::vector<std::string> problems;   // from verify_outputs and missing stages
  std::vector<std::string> plot_files; // relative to the output directory
  std::string text;                    // the rendered summary
};

/// Summary plus two-column plot-data files under <dir>/plots; the summary
/// is also written to <dir>/report.txt.
Report make_report(const std::filesystem::path& manifest_path);

}  // namespace delwalk::cli
