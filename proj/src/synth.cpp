#include "negmine/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/core.h>

#include "negmine/hashing.hpp"
#include "negmine/random.hpp"

namespace negmine {
namespace {

constexpr double kPi = std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

struct Canvas {
  int size;
  std::vector<double> v;

  explicit Canvas(int s) : size(s), v(static_cast<std::size_t>(s) * s, 0.0) {}
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * size + x]; }

  void gaussian_spot(double cx, double cy, double sigma, double amp) {
    const int reach = static_cast<int>(std::ceil(4.0 * sigma));
    for (int y = std::max(0, static_cast<int>(cy) - reach);
         y <= std::min(size - 1, static_cast<int>(cy) + reach); ++y) {
      for (int x = std::max(0, static_cast<int>(cx) - reach);
           x <= std::min(size - 1, static_cast<int>(cx) + reach); ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        at(x, y) += amp * std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
  }

  // Thin bright segment of the given half-length through (cx, cy).
  void line(double cx, double cy, double angle, double half_len, double width, double amp) {
    const double ux = std::cos(angle);
    const double uy = std::sin(angle);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double along = dx * ux + dy * uy;
        const double across = -dx * uy + dy * ux;
        if (std::abs(along) > half_len) continue;
        const double taper = std::min(1.0, (half_len - std::abs(along)) / 3.0);
        at(x, y) += amp * taper * std::exp(-across * across / (2.0 * width * width));
      }
    }
  }
};

struct Blob {
  double x, y, r;
};

bool far_enough(const std::vector<Blob>& placed, double x, double y, double r, double gap) {
  return std::all_of(placed.begin(), placed.end(), [&](const Blob& b) {
    return std::hypot(b.x - x, b.y - y) >= b.r + r + gap;
  });
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(fmt::format("synth config field '{}': {}", field, why));
  };
  if (image_size < 16) fail("image_size", "must be >= 16");
  if (n_labeled < 0) fail("n_labeled", "must be >= 0");
  if (n_unlabeled < 0) fail("n_unlabeled", "must be >= 0");
  if (n_true_negative < 0) fail("n_true_negative", "must be >= 0");
  if (!(positive_rate_in_unlabeled >= 0.0 && positive_rate_in_unlabeled <= 1.0)) {
    fail("positive_rate_in_unlabeled", "must lie in [0, 1]");
  }
  if (!(nodule_radius_min > 0.0) || !(nodule_radius_max >= nodule_radius_min)) {
    fail("nodule_radius_min", "need 0 < nodule_radius_min <= nodule_radius_max");
  }
  if (2.0 * nodule_radius_max + 4.0 > image_size) {
    fail("nodule_radius_max", fmt::format("radius {} does not fit a {}px image",
                                          nodule_radius_max, image_size));
  }
  if (!(distractor_density >= 0.0)) fail("distractor_density", "must be >= 0");
  if (!(noise_level >= 0.0)) fail("noise_level", "must be >= 0");
}

LabeledImage synthesize_image(const SynthConfig& cfg, const std::string& id, int nodules,
                              std::uint64_t stream_index) {
  const int n = cfg.image_size;
  auto rng = substream(cfg.seed, "synthesis", stream_index);
  Canvas c(n);

  // Background: level, linear gradient, one broad low-frequency undulation.
  const double level = uniform(rng, 0.30, 0.42);
  const double grad = uniform(rng, 0.0, 0.12);
  const double grad_dir = uniform(rng, 0.0, 2.0 * kPi);
  const double wave_amp = uniform(rng, 0.02, 0.06);
  const double wave_phase = uniform(rng, 0.0, 2.0 * kPi);
  // Ribs: curved periodic bands.
  const double rib_period = uniform(rng, 9.0, 14.0);
  const double rib_amp = uniform(rng, 0.06, 0.12);
  const double rib_bend = uniform(rng, -0.6, 0.6) / n;
  const double rib_phase = uniform(rng, 0.0, 2.0 * kPi);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double u = (x - n / 2.0) / n;
      const double v = (y - n / 2.0) / n;
      double val = level + grad * (u * std::cos(grad_dir) + v * std::sin(grad_dir));
      val += wave_amp * std::sin(2.0 * kPi * (u + 0.5 * v) + wave_phase);
      const double band = y + rib_bend * (x - n / 2.0) * (x - n / 2.0);
      const double rib = 0.5 + 0.5 * std::cos(2.0 * kPi * band / rib_period + rib_phase);
      val += rib_amp * rib * rib * rib;
      c.at(x, y) = val;
    }
  }

  LabeledImage out;
  out.id = id;
  out.mask = NoduleMask(n, n);
  std::vector<Blob> placed;

  for (int k = 0; k < nodules; ++k) {
    const double r = uniform(rng, cfg.nodule_radius_min, cfg.nodule_radius_max);
    const double amp = uniform(rng, 0.22, 0.40);
    double x = 0.0, y = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      x = uniform(rng, r + 2.0, n - r - 3.0);
      y = uniform(rng, r + 2.0, n - r - 3.0);
      ok = far_enough(placed, x, y, r, 4.0);
    }
    if (!ok) break;
    placed.push_back({x, y, r});
    c.gaussian_spot(x, y, r / 1.5, amp);
    for (int py = 0; py < n; ++py) {
      for (int px = 0; px < n; ++px) {
        if ((px - x) * (px - x) + (py - y) * (py - y) <= r * r) out.mask.at(px, py) = 1;
      }
    }
  }

  // Distractors never overlap nodules and never enter the mask.
  const double expected = cfg.distractor_density;
  int count = static_cast<int>(std::floor(expected));
  if (uniform01(rng) < expected - count) ++count;
  for (int k = 0; k < count; ++k) {
    double x = 0.0, y = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      x = uniform(rng, 3.0, n - 4.0);
      y = uniform(rng, 3.0, n - 4.0);
      ok = far_enough(placed, x, y, 2.0, 3.0);
    }
    if (!ok) continue;
    if (uniform01(rng) < 0.5) {
      const double r = uniform(rng, 0.6, 0.9);
      c.gaussian_spot(x, y, r, uniform(rng, 0.30, 0.50));
      placed.push_back({x, y, r});
    } else {
      const double a = uniform(rng, 0.0, kPi);
      const double b = a + uniform(rng, kPi / 5.0, 4.0 * kPi / 5.0);
      const double amp = uniform(rng, 0.22, 0.32);
      // Two crossing strokes; the bright crossing point mimics a blob.
      c.line(x, y, a, uniform(rng, 10.0, 18.0), 0.8, amp);
      c.line(x, y, b, uniform(rng, 10.0, 18.0), 0.8, amp);
      placed.push_back({x, y, 2.0});
    }
  }

  out.image = Image(n, n);
  for (std::size_t i = 0; i < c.v.size(); ++i) {
    const double val = c.v[i] + cfg.noise_level * standard_normal(rng);
    out.image.pixels[i] =
        static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 1.0) * 255.0));
  }
  return out;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds;
  auto counts = substream(cfg.seed, "synthesis-layout");
  auto nodule_count = [&] { return 1 + static_cast<int>(uniform_index(counts, 3)); };

  for (int i = 0; i < cfg.n_labeled; ++i) {
    const std::string id = fmt::format("L{:04d}", i);
    ds.labeled.push_back(synthesize_image(cfg, id, nodule_count(), fnv1a64(id)));
  }

  const auto n_pos = static_cast<int>(std::lround(cfg.positive_rate_in_unlabeled * cfg.n_unlabeled));
  std::vector<int> order(cfg.n_unlabeled);
  std::iota(order.begin(), order.end(), 0);
  for (int i = cfg.n_unlabeled - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_index(counts, static_cast<std::uint64_t>(i) + 1)]);
  }
  std::vector<std::uint8_t> positive(cfg.n_unlabeled, 0);
  for (int i = 0; i < n_pos; ++i) positive[order[i]] = 1;

  for (int i = 0; i < cfg.n_unlabeled; ++i) {
    const std::string id = fmt::format("U{:04d}", i);
    const int nodules = positive[i] ? nodule_count() : 0;
    LabeledImage img = synthesize_image(cfg, id, nodules, fnv1a64(id));
    ds.hidden_truth[id] = std::move(img.mask);
    ds.unlabeled.push_back({id, std::move(img.image)});
  }
  for (int i = 0; i < cfg.n_true_negative; ++i) {
    const std::string id = fmt::format("N{:04d}", i);
    LabeledImage img = synthesize_image(cfg, id, 0, fnv1a64(id));
    ds.hidden_truth[id] = std::move(img.mask);
    ds.true_negatives.push_back({id, std::move(img.image)});
  }
  return ds;
}

}  // namespace negmine
