#include "negmine/reports.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

namespace negmine {
using nlohmann::json;

namespace {

std::string real(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

std::string froc_csv(const std::vector<FrocRow>& rows) {
  std::string out = "fold,phase,threshold,sensitivity,fp_per_image\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.fold, r.phase, real(r.report.threshold),
                       real(r.report.sensitivity), real(r.report.fp_per_image));
  }
  return out;
}

std::string crossval_csv(const CrossValidationResult& result) {
  std::string out =
      "fold,phase1_sensitivity,phase1_fp_per_image,phase2_sensitivity,phase2_fp_per_image,"
      "diff_sensitivity,diff_fp_per_image\n";
  for (const auto& f : result.folds) {
    const auto& p1 = f.phase1.operating_point.report;
    const auto& p2 = f.phase2.evaluation.operating_point.report;
    out += fmt::format("{},{},{},{},{},{},{}\n", f.fold, real(p1.sensitivity),
                       real(p1.fp_per_image), real(p2.sensitivity), real(p2.fp_per_image),
                       real(f.delta_sensitivity), real(f.delta_fp_per_image));
  }
  out += fmt::format("Avg,{},{},{},{},{},{}\n", real(result.phase1_sensitivity),
                     real(result.phase1_fp_per_image), real(result.phase2_sensitivity),
                     real(result.phase2_fp_per_image), real(result.delta_sensitivity),
                     real(result.delta_fp_per_image));
  return out;
}

std::string comparison_csv(const ComparisonResult& result) {
  std::string out = "source,sensitivity,fp_per_scan\n";
  for (const auto& row : result.rows) {
    if (!row.present) continue;
    out += fmt::format("{},{},{}\n", source_name(row.source), real(row.sensitivity),
                       real(row.fp_per_image));
  }
  return out;
}

std::string training_log_csv(const TrainingLog& log) {
  std::string out = "epoch,loss,extra_loss\n";
  for (const auto& e : log.epochs) {
    out += fmt::format("{},{},{}\n", e.epoch, real(e.loss),
                       std::isnan(e.extra_loss) ? std::string() : real(e.extra_loss));
  }
  return out;
}

std::string mining_manifest_json(const MiningOutcome& m) {
  json counts = json::object();
  for (const auto& [id, n] : m.detection_counts) counts[id] = n;
  const json doc = {{"threshold", m.threshold},
                    {"checkpoint_sha256", m.checkpoint_hash},
                    {"pseudo_negative_ids", m.pseudo_negative_ids},
                    {"discarded_ids", m.discarded_ids},
                    {"detection_counts", std::move(counts)}};
  return doc.dump(2) + "\n";
}

MiningOutcome parse_mining_manifest(const std::string& text) {
  try {
    const json doc = json::parse(text);
    MiningOutcome m;
    m.threshold = doc.at("threshold").get<double>();
    m.checkpoint_hash = doc.at("checkpoint_sha256").get<std::string>();
    m.pseudo_negative_ids = doc.at("pseudo_negative_ids").get<std::vector<std::string>>();
    m.discarded_ids = doc.at("discarded_ids").get<std::vector<std::string>>();
    m.detection_counts = doc.at("detection_counts").get<std::map<std::string, int>>();
    return m;
  } catch (const json::exception& e) {
    throw ReportError(fmt::format("mining manifest: {}", e.what()));
  }
}

std::string run_manifest_json(const RunManifest& m) {
  const json doc = {{"command", m.command}, {"config", m.config},   {"inputs", m.inputs},
                    {"outputs", m.outputs}, {"flags", m.flags},     {"timestamp", m.timestamp},
                    {"version", m.version}};
  return doc.dump(2) + "\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::time_point_cast<std::chrono::seconds>(
      std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ReportError(fmt::format("cannot write '{}'", path.string()));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace negmine
