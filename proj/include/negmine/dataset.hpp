#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "negmine/config.hpp"
#include "negmine/synth.hpp"

namespace negmine {

/// On-disk dataset layout:
///
///   manifest.json      ids, roles, relative paths and SHA-256 of every file
///   config.txt         snapshot of the generating config
///   images/<id>.pgm    every image (labeled, unlabeled, true negative)
///   masks/<id>.pgm     labeled masks, 0 or 255 per pixel
///   audit/<id>.pgm     hidden truth of pool images; never read by training
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Role { labeled, unlabeled, true_negative };

const char* role_name(Role role);

struct DatasetEntry {
  std::string id;
  Role role = Role::labeled;
  std::string image;  // path relative to the dataset root
  std::string image_sha256;
  std::string mask;  // labeled only
  std::string mask_sha256;
  std::string audit;  // pool images only
  std::string audit_sha256;
};

struct DatasetManifest {
  std::string config_sha256;
  std::vector<DatasetEntry> entries;
};

/// Writes `data` below `dir`, which must not exist or be empty.
DatasetManifest write_dataset(const SynthDataset& data, const RunConfig& config,
                              const std::filesystem::path& dir);

DatasetManifest read_manifest(const std::filesystem::path& dir);

struct LoadedDataset {
  std::vector<LabeledImage> labeled;
  std::vector<PoolImage> unlabeled;
  std::vector<PoolImage> true_negatives;
};

/// Loads every role except the audit masks. File hashes are checked against
/// the manifest; a mismatch or a missing file throws DatasetError naming it.
LoadedDataset load_dataset(const std::filesystem::path& dir);

/// Hidden truth of the pool images, for audit reports only.
std::map<std::string, NoduleMask> load_audit(const std::filesystem::path& dir);

/// 0 → 0 and 255 → 1; any other level is rejected.
NoduleMask mask_from_image(const Image& img);
Image mask_to_image(const NoduleMask& mask);

}  // namespace negmine
