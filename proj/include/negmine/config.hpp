#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "negmine/pipeline.hpp"
#include "negmine/synth.hpp"

namespace negmine {

/// Everything a run needs besides its input data.
///
/// On disk this is a flat text file of `key = value` lines. `#` starts a
/// comment, blank lines are ignored, keys are unique and unknown keys are
/// rejected. `seed` is mandatory and seeds both synthesis and training.
/// `image_size` fixes the network input size as well.
struct RunConfig {
  SynthConfig synth;
  TrainingConfig training;

  bool operator==(const RunConfig& other) const;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, std::string key, const std::string& message);

  int line() const { return line_; }  // 0 when not tied to a line
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form, every key present. parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

}  // namespace negmine
