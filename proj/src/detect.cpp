#include "negmine/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

namespace negmine {

std::size_t NoduleMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
}

ProbabilityMap probability_map(const Tensor& probs, int n) {
  const Shape& s = probs.shape();
  if (s.c != 1 || n < 0 || n >= s.n) {
    throw ShapeError(fmt::format("probability_map: cannot take image {} of {}", n,
                                 to_string(s)));
  }
  const double* p = probs.plane(n, 0);
  return {s.w, s.h, std::vector<double>(p, p + s.plane())};
}

ProbabilityMap probability_map(const NoduleMask& mask) {
  ProbabilityMap m{mask.width, mask.height, std::vector<double>(mask.bits.size())};
  for (std::size_t i = 0; i < mask.bits.size(); ++i) m.values[i] = mask.bits[i] ? 1.0 : 0.0;
  return m;
}

NoduleMask binarize(const ProbabilityMap& probs, double threshold) {
  NoduleMask mask(probs.width, probs.height);
  for (std::size_t i = 0; i < probs.values.size(); ++i) {
    mask.bits[i] = probs.values[i] > threshold ? 1 : 0;
  }
  return mask;
}

std::vector<Detection> connected_components(const NoduleMask& mask,
                                            const ProbabilityMap* probs) {
  if (probs != nullptr && (probs->width != mask.width || probs->height != mask.height)) {
    throw ShapeError(fmt::format("connected_components: mask {}x{} vs map {}x{}",
                                 mask.width, mask.height, probs->width, probs->height));
  }
  std::vector<Detection> out;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<Pixel> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t start = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.bits[start] || seen[start]) continue;
      Detection det;
      seen[start] = 1;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        det.pixels.push_back(p);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx;
            const int ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
            const std::size_t at = static_cast<std::size_t>(ny) * mask.width + nx;
            if (mask.bits[at] && !seen[at]) {
              seen[at] = 1;
              stack.push_back({nx, ny});
            }
          }
        }
      }
      std::sort(det.pixels.begin(), det.pixels.end(), [](const Pixel& a, const Pixel& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
      });
      double sx = 0.0, sy = 0.0;
      double best = probs == nullptr ? 1.0 : 0.0;
      for (const Pixel& p : det.pixels) {
        sx += p.x;
        sy += p.y;
        if (probs != nullptr) best = std::max(best, probs->at(p.x, p.y));
      }
      det.cx = sx / det.pixels.size();
      det.cy = sy / det.pixels.size();
      det.score = best;
      out.push_back(std::move(det));
    }
  }
  return out;
}

namespace {

// Component index per pixel, -1 for background.
std::vector<int> label_components(const NoduleMask& truth, int* count) {
  std::vector<int> labels(truth.bits.size(), -1);
  const auto comps = connected_components(truth);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    for (const Pixel& p : comps[c].pixels) {
      labels[static_cast<std::size_t>(p.y) * truth.width + p.x] = static_cast<int>(c);
    }
  }
  *count = static_cast<int>(comps.size());
  return labels;
}

MatchResult match_labeled(const std::vector<Detection>& dets, const std::vector<int>& labels,
                          int n_truth, int width, int height) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Detection& da = dets[a];
    const Detection& db = dets[b];
    if (da.score != db.score) return da.score > db.score;
    if (da.cx != db.cx) return da.cx < db.cx;
    if (da.cy != db.cy) return da.cy < db.cy;
    return a < b;
  });

  MatchResult r;
  std::vector<std::uint8_t> taken(n_truth, 0);
  for (std::size_t i : order) {
    const int x = static_cast<int>(std::floor(dets[i].cx + 0.5));
    const int y = static_cast<int>(std::floor(dets[i].cy + 0.5));
    int comp = -1;
    if (x >= 0 && y >= 0 && x < width && y < height) {
      comp = labels[static_cast<std::size_t>(y) * width + x];
    }
    if (comp >= 0 && !taken[comp]) {
      taken[comp] = 1;
      ++r.tp;
      r.pairs.emplace_back(i, static_cast<std::size_t>(comp));
    } else {
      ++r.fp;
    }
  }
  r.fn = n_truth - r.tp;
  return r;
}

struct PreparedTruth {
  std::vector<int> labels;
  int count = 0;
};

void check_pairs(const EvalSet& set) {
  for (const auto& [id, truth] : set.truths) {
    auto it = set.predictions.find(id);
    if (it == set.predictions.end()) {
      throw EvaluationError(fmt::format("image '{}' has a mask but no prediction", id));
    }
    if (it->second.width != truth.width || it->second.height != truth.height) {
      throw EvaluationError(fmt::format("image '{}': prediction {}x{} vs mask {}x{}", id,
                                        it->second.width, it->second.height, truth.width,
                                        truth.height));
    }
  }
  for (const auto& [id, _] : set.predictions) {
    if (!set.truths.contains(id)) {
      throw EvaluationError(fmt::format("image '{}' has a prediction but no mask", id));
    }
  }
}

FrocReport evaluate_at(const EvalSet& set, const std::map<std::string, PreparedTruth>& truths,
                       double threshold) {
  FrocReport report;
  report.threshold = threshold;
  for (const auto& [id, truth] : set.truths) {
    const ProbabilityMap& probs = set.predictions.at(id);
    const auto dets = connected_components(binarize(probs, threshold), &probs);
    const PreparedTruth& t = truths.at(id);
    const MatchResult m = match_labeled(dets, t.labels, t.count, truth.width, truth.height);
    report.per_image.push_back({id, m.tp, m.fp, m.fn});
    report.tp += m.tp;
    report.fp += m.fp;
    report.fn += m.fn;
  }
  const int nodules = report.tp + report.fn;
  report.sensitivity = nodules == 0 ? 1.0 : static_cast<double>(report.tp) / nodules;
  report.fp_per_image =
      set.truths.empty() ? 0.0 : static_cast<double>(report.fp) / set.truths.size();
  return report;
}

std::map<std::string, PreparedTruth> prepare(const EvalSet& set) {
  std::map<std::string, PreparedTruth> out;
  for (const auto& [id, truth] : set.truths) {
    PreparedTruth t;
    t.labels = label_components(truth, &t.count);
    out.emplace(id, std::move(t));
  }
  return out;
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& dets, const NoduleMask& truth) {
  int count = 0;
  const auto labels = label_components(truth, &count);
  return match_labeled(dets, labels, count, truth.width, truth.height);
}

FrocReport froc_point(const EvalSet& set, double threshold) {
  check_pairs(set);
  return evaluate_at(set, prepare(set), threshold);
}

std::vector<FrocReport> froc_curve(const EvalSet& set, const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw EvaluationError("froc_curve: empty threshold list");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] < thresholds[i - 1])) {
      throw EvaluationError(
          fmt::format("froc_curve: thresholds must be strictly descending (index {})", i));
    }
  }
  check_pairs(set);
  const auto truths = prepare(set);
  std::vector<FrocReport> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) curve.push_back(evaluate_at(set, truths, t));
  return curve;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 99; i >= 1; --i) t.push_back(i / 100.0);
  return t;
}

OperatingPoint select_operating_point(const std::vector<FrocReport>& curve,
                                      double min_sensitivity) {
  if (curve.empty()) throw EvaluationError("select_operating_point: empty curve");
  const FrocReport* best = nullptr;
  for (const FrocReport& r : curve) {
    if (r.sensitivity < min_sensitivity) continue;
    if (best == nullptr || r.fp_per_image < best->fp_per_image ||
        (r.fp_per_image == best->fp_per_image &&
         (r.sensitivity > best->sensitivity ||
          (r.sensitivity == best->sensitivity && r.threshold > best->threshold)))) {
      best = &r;
    }
  }
  if (best != nullptr) return {*best, true};
  for (const FrocReport& r : curve) {
    if (best == nullptr || r.sensitivity > best->sensitivity ||
        (r.sensitivity == best->sensitivity &&
         (r.fp_per_image < best->fp_per_image ||
          (r.fp_per_image == best->fp_per_image && r.threshold > best->threshold)))) {
      best = &r;
    }
  }
  return {*best, false};
}

}  // namespace negmine
