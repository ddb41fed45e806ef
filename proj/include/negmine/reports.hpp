#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "negmine/mining.hpp"
#include "negmine/pipeline.hpp"

namespace negmine {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All CSVs use '\n' line ends and fixed six-decimal reals so that reruns are
// byte-identical.

/// fold,phase,threshold,sensitivity,fp_per_image
struct FrocRow {
  int fold = 0;
  std::string phase;
  FrocReport report;
};
std::string froc_csv(const std::vector<FrocRow>& rows);

/// Per-fold phase-1/phase-2 operating points and their differences, then an
/// Avg row holding the arithmetic mean of each column.
std::string crossval_csv(const CrossValidationResult& result);

/// source,sensitivity,fp_per_scan; absent sources are omitted.
std::string comparison_csv(const ComparisonResult& result);

/// epoch,loss,extra_loss (extra_loss empty when there were no extra samples)
std::string training_log_csv(const TrainingLog& log);

std::string mining_manifest_json(const MiningOutcome& outcome);
MiningOutcome parse_mining_manifest(const std::string& text);

/// Provenance of one CLI invocation. Outputs map a path relative to the run
/// directory onto its SHA-256.
struct RunManifest {
  std::string command;
  std::string config;  // snapshot text
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::vector<std::string> flags;
  std::string timestamp;  // UTC, ISO 8601
  std::string version;
};

std::string run_manifest_json(const RunManifest& manifest);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace negmine
