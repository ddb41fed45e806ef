#include "negmine/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ranges.h>

namespace negmine {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view value, int line, const std::string& key) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(line, key, fmt::format("'{}' is not a valid number", value));
  }
  return out;
}

std::vector<int> parse_int_list(std::string_view value, int line, const std::string& key) {
  std::vector<int> out;
  if (trim(value).empty()) return out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    if (comma == std::string_view::npos) comma = value.size();
    out.push_back(parse_number<int>(trim(value.substr(start, comma - start)), line, key));
    start = comma + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view, int, const std::string&)>;

template <typename T, typename Field>
Setter number(Field field) {
  return [field](RunConfig& c, std::string_view v, int line, const std::string& key) {
    field(c) = parse_number<T>(v, line, key);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed",
       [](RunConfig& c, std::string_view v, int line, const std::string& key) {
         c.synth.seed = parse_number<std::uint64_t>(v, line, key);
         c.training.seed = c.synth.seed;
       }},
      {"image_size",
       [](RunConfig& c, std::string_view v, int line, const std::string& key) {
         c.synth.image_size = parse_number<int>(v, line, key);
         c.training.network.input_size = c.synth.image_size;
       }},
      {"n_labeled", number<int>([](RunConfig& c) -> auto& { return c.synth.n_labeled; })},
      {"n_unlabeled", number<int>([](RunConfig& c) -> auto& { return c.synth.n_unlabeled; })},
      {"n_true_negative",
       number<int>([](RunConfig& c) -> auto& { return c.synth.n_true_negative; })},
      {"positive_rate_in_unlabeled",
       number<double>([](RunConfig& c) -> auto& { return c.synth.positive_rate_in_unlabeled; })},
      {"nodule_radius_min",
       number<double>([](RunConfig& c) -> auto& { return c.synth.nodule_radius_min; })},
      {"nodule_radius_max",
       number<double>([](RunConfig& c) -> auto& { return c.synth.nodule_radius_max; })},
      {"distractor_density",
       number<double>([](RunConfig& c) -> auto& { return c.synth.distractor_density; })},
      {"noise_level", number<double>([](RunConfig& c) -> auto& { return c.synth.noise_level; })},
      {"depth", number<int>([](RunConfig& c) -> auto& { return c.training.network.depth; })},
      {"base_channels",
       number<int>([](RunConfig& c) -> auto& { return c.training.network.base_channels; })},
      {"inception_levels",
       [](RunConfig& c, std::string_view v, int line, const std::string& key) {
         const auto levels = parse_int_list(v, line, key);
         c.training.network.inception_levels = std::set<int>(levels.begin(), levels.end());
       }},
      {"epochs", number<int>([](RunConfig& c) -> auto& { return c.training.epochs; })},
      {"phase2_epochs",
       number<int>([](RunConfig& c) -> auto& { return c.training.phase2_epochs; })},
      {"batch_size", number<int>([](RunConfig& c) -> auto& { return c.training.batch_size; })},
      {"learning_rate", number<double>([](RunConfig& c) -> auto& { return c.training.adam.lr; })},
      {"beta1", number<double>([](RunConfig& c) -> auto& { return c.training.adam.beta1; })},
      {"beta2", number<double>([](RunConfig& c) -> auto& { return c.training.adam.beta2; })},
      {"adam_eps", number<double>([](RunConfig& c) -> auto& { return c.training.adam.eps; })},
      {"mix_ratio", number<double>([](RunConfig& c) -> auto& { return c.training.mix_ratio; })},
      {"min_sensitivity",
       number<double>([](RunConfig& c) -> auto& { return c.training.min_sensitivity; })},
      {"mining_threshold",
       [](RunConfig& c, std::string_view v, int line, const std::string& key) {
         if (v == "auto") {
           c.training.mining_threshold.reset();
         } else {
           c.training.mining_threshold = parse_number<double>(v, line, key);
         }
       }},
      {"folds", number<int>([](RunConfig& c) -> auto& { return c.training.folds; })},
      {"compare_folds",
       number<int>([](RunConfig& c) -> auto& { return c.training.compare_folds; })},
  };
  return table;
}

// Maps a validation failure of a sub-config back onto a config error.
template <typename F>
void validated(F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, "", e.what());
  }
}

}  // namespace

ConfigError::ConfigError(int line, std::string key, const std::string& message)
    : std::runtime_error(line > 0 ? fmt::format("config line {}: {}", line, message)
                                  : fmt::format("config: {}", message)),
      line_(line),
      key_(std::move(key)) {}

bool RunConfig::operator==(const RunConfig& o) const {
  const auto& a = training;
  const auto& b = o.training;
  return synth.image_size == o.synth.image_size && synth.n_labeled == o.synth.n_labeled &&
         synth.n_unlabeled == o.synth.n_unlabeled &&
         synth.n_true_negative == o.synth.n_true_negative &&
         synth.positive_rate_in_unlabeled == o.synth.positive_rate_in_unlabeled &&
         synth.nodule_radius_min == o.synth.nodule_radius_min &&
         synth.nodule_radius_max == o.synth.nodule_radius_max &&
         synth.distractor_density == o.synth.distractor_density &&
         synth.noise_level == o.synth.noise_level && synth.seed == o.synth.seed &&
         a.network.input_size == b.network.input_size && a.network.depth == b.network.depth &&
         a.network.base_channels == b.network.base_channels &&
         a.network.inception_levels == b.network.inception_levels && a.epochs == b.epochs &&
         a.phase2_epochs == b.phase2_epochs && a.batch_size == b.batch_size &&
         a.seed == b.seed && a.adam == b.adam && a.mining_threshold == b.mining_threshold &&
         a.mix_ratio == b.mix_ratio && a.min_sensitivity == b.min_sensitivity &&
         a.folds == b.folds && a.compare_folds == b.compare_folds;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  config.training.network.input_size = config.synth.image_size;
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(line_no, "", fmt::format("expected 'key = value', got '{}'", line));
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError(line_no, key, fmt::format("unknown key '{}'", key));
    }
    if (!seen.insert(key).second) {
      throw ConfigError(line_no, key, fmt::format("duplicate key '{}'", key));
    }
    if (value.empty()) {
      throw ConfigError(line_no, key, fmt::format("key '{}' has no value", key));
    }
    it->second(config, value, line_no, key);
  }
  if (!seen.count("seed")) throw ConfigError(0, "seed", "missing required key 'seed'");

  validated([&] { config.synth.validate(); });
  validated([&] { config.training.validate(); });
  try {
    config.training.network.validate();
  } catch (const SpecError& e) {
    throw ConfigError(0, "", e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, "", fmt::format("cannot read '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string format_config(const RunConfig& c) {
  const auto& s = c.synth;
  const auto& t = c.training;
  std::string out;
  auto put = [&](std::string_view key, const auto& value) {
    out += fmt::format("{} = {}\n", key, value);
  };
  put("seed", s.seed);
  out += "\n# synthetic data\n";
  put("image_size", s.image_size);
  put("n_labeled", s.n_labeled);
  put("n_unlabeled", s.n_unlabeled);
  put("n_true_negative", s.n_true_negative);
  put("positive_rate_in_unlabeled", s.positive_rate_in_unlabeled);
  put("nodule_radius_min", s.nodule_radius_min);
  put("nodule_radius_max", s.nodule_radius_max);
  put("distractor_density", s.distractor_density);
  put("noise_level", s.noise_level);
  out += "\n# network\n";
  put("depth", t.network.depth);
  put("base_channels", t.network.base_channels);
  put("inception_levels", fmt::format("{}", fmt::join(t.network.inception_levels, ",")));
  out += "\n# training\n";
  put("epochs", t.epochs);
  put("phase2_epochs", t.phase2_epochs);
  put("batch_size", t.batch_size);
  put("learning_rate", t.adam.lr);
  put("beta1", t.adam.beta1);
  put("beta2", t.adam.beta2);
  put("adam_eps", t.adam.eps);
  put("mix_ratio", t.mix_ratio);
  put("min_sensitivity", t.min_sensitivity);
  if (t.mining_threshold) {
    put("mining_threshold", *t.mining_threshold);
  } else {
    put("mining_threshold", "auto");
  }
  put("folds", t.folds);
  put("compare_folds", t.compare_folds);
  return out;
}

}  // namespace negmine
