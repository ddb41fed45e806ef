#include "negmine/dataset.hpp"

#include <fstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "negmine/hashing.hpp"

namespace negmine {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "negmine-dataset/1";

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError(fmt::format("cannot write '{}'", path.string()));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DatasetError(fmt::format("cannot write '{}'", path.string()));
}

// Writes a PGM below root and returns (relative path, sha256).
std::pair<std::string, std::string> put_pgm(const fs::path& root, const std::string& sub,
                                            const std::string& id, const Image& img) {
  const std::string rel = fmt::format("{}/{}.pgm", sub, id);
  const auto bytes = encode_pgm(img);
  write_bytes(root / rel, bytes);
  return {rel, sha256_hex(bytes)};
}

Role parse_role(const std::string& s) {
  if (s == "labeled") return Role::labeled;
  if (s == "unlabeled") return Role::unlabeled;
  if (s == "true_negative") return Role::true_negative;
  throw DatasetError(fmt::format("manifest: unknown role '{}'", s));
}

Image checked_image(const fs::path& root, const std::string& rel, const std::string& sha) {
  const fs::path path = root / rel;
  if (!fs::exists(path)) throw DatasetError(fmt::format("missing file '{}'", path.string()));
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (sha256_hex(bytes) != sha) {
    throw DatasetError(fmt::format("hash mismatch for '{}'", path.string()));
  }
  try {
    return decode_pgm(bytes);
  } catch (const PgmError& e) {
    throw DatasetError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

}  // namespace

const char* role_name(Role role) {
  switch (role) {
    case Role::labeled: return "labeled";
    case Role::unlabeled: return "unlabeled";
    case Role::true_negative: return "true_negative";
  }
  return "?";
}

NoduleMask mask_from_image(const Image& img) {
  NoduleMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto v = img.pixels[i];
    if (v != 0 && v != 255) {
      throw DatasetError(fmt::format("mask pixel {} has level {}; expected 0 or 255", i, v));
    }
    mask.bits[i] = v == 255 ? 1 : 0;
  }
  return mask;
}

Image mask_to_image(const NoduleMask& mask) {
  Image img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
  return img;
}

DatasetManifest write_dataset(const SynthDataset& data, const RunConfig& config,
                              const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    throw DatasetError(fmt::format("'{}' exists and is not empty", dir.string()));
  }
  for (const char* sub : {"images", "masks", "audit"}) fs::create_directories(dir / sub);

  DatasetManifest manifest;
  const std::string snapshot = format_config(config);
  write_text(dir / "config.txt", snapshot);
  manifest.config_sha256 = sha256_hex(snapshot);

  for (const auto& item : data.labeled) {
    DatasetEntry e;
    e.id = item.id;
    std::tie(e.image, e.image_sha256) = put_pgm(dir, "images", item.id, item.image);
    std::tie(e.mask, e.mask_sha256) = put_pgm(dir, "masks", item.id, mask_to_image(item.mask));
    manifest.entries.push_back(std::move(e));
  }
  auto add_pool = [&](const std::vector<PoolImage>& pool, Role role) {
    for (const auto& item : pool) {
      DatasetEntry e;
      e.id = item.id;
      e.role = role;
      std::tie(e.image, e.image_sha256) = put_pgm(dir, "images", item.id, item.image);
      if (auto it = data.hidden_truth.find(item.id); it != data.hidden_truth.end()) {
        std::tie(e.audit, e.audit_sha256) =
            put_pgm(dir, "audit", item.id, mask_to_image(it->second));
      }
      manifest.entries.push_back(std::move(e));
    }
  };
  add_pool(data.unlabeled, Role::unlabeled);
  add_pool(data.true_negatives, Role::true_negative);

  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json j = {{"id", e.id}, {"role", role_name(e.role)},
              {"image", e.image}, {"image_sha256", e.image_sha256}};
    if (!e.mask.empty()) {
      j["mask"] = e.mask;
      j["mask_sha256"] = e.mask_sha256;
    }
    if (!e.audit.empty()) {
      j["audit"] = e.audit;
      j["audit_sha256"] = e.audit_sha256;
    }
    entries.push_back(std::move(j));
  }
  const json doc = {{"format", kFormat},
                    {"config", "config.txt"},
                    {"config_sha256", manifest.config_sha256},
                    {"entries", std::move(entries)}};
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
  return manifest;
}

DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DatasetError(fmt::format("missing dataset manifest '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
    if (doc.at("format") != kFormat) {
      throw DatasetError(fmt::format("'{}': unsupported format {}", path.string(),
                                     doc.at("format").dump()));
    }
    DatasetManifest m;
    m.config_sha256 = doc.at("config_sha256").get<std::string>();
    for (const auto& j : doc.at("entries")) {
      DatasetEntry e;
      e.id = j.at("id").get<std::string>();
      e.role = parse_role(j.at("role").get<std::string>());
      e.image = j.at("image").get<std::string>();
      e.image_sha256 = j.at("image_sha256").get<std::string>();
      e.mask = j.value("mask", "");
      e.mask_sha256 = j.value("mask_sha256", "");
      e.audit = j.value("audit", "");
      e.audit_sha256 = j.value("audit_sha256", "");
      if (e.role == Role::labeled && e.mask.empty()) {
        throw DatasetError(fmt::format("labeled entry '{}' has no mask", e.id));
      }
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw DatasetError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

LoadedDataset load_dataset(const fs::path& dir) {
  const DatasetManifest m = read_manifest(dir);
  LoadedDataset out;
  for (const auto& e : m.entries) {
    Image img = checked_image(dir, e.image, e.image_sha256);
    switch (e.role) {
      case Role::labeled: {
        NoduleMask mask = mask_from_image(checked_image(dir, e.mask, e.mask_sha256));
        if (mask.width != img.width || mask.height != img.height) {
          throw DatasetError(fmt::format("mask of '{}' does not match its image size", e.id));
        }
        out.labeled.push_back({e.id, std::move(img), std::move(mask)});
        break;
      }
      case Role::unlabeled:
        out.unlabeled.push_back({e.id, std::move(img)});
        break;
      case Role::true_negative:
        out.true_negatives.push_back({e.id, std::move(img)});
        break;
    }
  }
  return out;
}

std::map<std::string, NoduleMask> load_audit(const fs::path& dir) {
  std::map<std::string, NoduleMask> out;
  for (const auto& e : read_manifest(dir).entries) {
    if (e.audit.empty()) continue;
    out[e.id] = mask_from_image(checked_image(dir, e.audit, e.audit_sha256));
  }
  return out;
}

}  // namespace negmine
