#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "negmine/checkpoint.hpp"
#include "negmine/cli.hpp"
#include "negmine/detect.hpp"
#include "negmine/image.hpp"
#include "negmine/mining.hpp"
#include "negmine/network.hpp"
#include "negmine/synth.hpp"

namespace py = pybind11;
using namespace negmine;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

U8Array to_array(int w, int h, const std::vector<std::uint8_t>& px) {
  U8Array a({h, w});
  std::memcpy(a.mutable_data(), px.data(), px.size());
  return a;
}

Image image_from(const U8Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D uint8 array");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return Image(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

NoduleMask mask_from(const U8Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D mask array");
  NoduleMask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.bits[i] = a.data()[i] != 0;
  return m;
}

ProbabilityMap map_from(const F64Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D probability array");
  return ProbabilityMap{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                        std::vector<double>(a.data(), a.data() + a.size())};
}

py::dict report_dict(const FrocReport& r) {
  py::dict d;
  d["threshold"] = r.threshold;
  d["tp"] = r.tp;
  d["fp"] = r.fp;
  d["fn"] = r.fn;
  d["sensitivity"] = r.sensitivity;
  d["fp_per_image"] = r.fp_per_image;
  return d;
}

EvalSet eval_set(const std::vector<F64Array>& probs, const std::vector<U8Array>& masks) {
  if (probs.size() != masks.size()) throw std::invalid_argument("probs and masks differ in length");
  EvalSet set;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::string id = std::to_string(i);
    set.predictions[id] = map_from(probs[i]);
    set.truths[id] = mask_from(masks[i]);
  }
  return set;
}

// Preprocessed (N, 1, H, W) batch from a stack of uint8 images.
Tensor batch_from(const U8Array& images) {
  if (images.ndim() != 3) throw std::invalid_argument("expected an (N, H, W) uint8 array");
  const int n = static_cast<int>(images.shape(0));
  const int h = static_cast<int>(images.shape(1)), w = static_cast<int>(images.shape(2));
  std::vector<Tensor> parts;
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* p = images.data() + static_cast<std::size_t>(i) * h * w;
    parts.push_back(preprocess(Image(w, h, std::vector<std::uint8_t>(p, p + h * w))));
  }
  return stack_images(parts);
}

class Model {
 public:
  explicit Model(ParameterSet params) : params_(std::move(params)) {}

  static Model create(int input_size, int depth, int base_channels, std::vector<int> inception,
                      std::uint64_t seed) {
    NetworkSpec spec;
    spec.input_size = input_size;
    spec.depth = depth;
    spec.base_channels = base_channels;
    spec.inception_levels = std::set<int>(inception.begin(), inception.end());
    return Model(build_network(spec, seed));
  }

  F64Array predict(const U8Array& images) const {
    const Tensor probs = forward(params_, batch_from(images));
    const Shape s = probs.shape();
    F64Array out({s.n, s.h, s.w});
    std::memcpy(out.mutable_data(), probs.values().data(), probs.size() * sizeof(double));
    return out;
  }

  std::size_t parameter_count() const { return params_.parameter_count(); }
  int input_size() const { return params_.spec.input_size; }
  void save(const std::string& path) const { save_checkpoint(path, params_); }

 private:
  ParameterSet params_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the negmine C++ core";
  m.def("version", &version);
  m.def("run_cli", &run_cli, py::arg("args"),
        "Runs the command-line tool in-process; args[0] is the program name. Returns the exit "
        "status.");

  m.def(
      "equalize_histogram",
      [](const U8Array& img) {
        const Image out = equalize_histogram(image_from(img));
        return to_array(out.width, out.height, out.pixels);
      },
      py::arg("image"));

  m.def(
      "generate_dataset",
      [](std::uint64_t seed, int image_size, int n_labeled, int n_unlabeled, int n_true_negative,
         double positive_rate) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.image_size = image_size;
        cfg.n_labeled = n_labeled;
        cfg.n_unlabeled = n_unlabeled;
        cfg.n_true_negative = n_true_negative;
        cfg.positive_rate_in_unlabeled = positive_rate;
        const SynthDataset ds = generate_dataset(cfg);
        py::list labeled, unlabeled, negatives;
        py::dict hidden;
        for (const auto& l : ds.labeled) {
          labeled.append(py::make_tuple(l.id, to_array(l.image.width, l.image.height, l.image.pixels),
                                        to_array(l.mask.width, l.mask.height, l.mask.bits)));
        }
        for (const auto& u : ds.unlabeled) {
          unlabeled.append(py::make_tuple(u.id, to_array(u.image.width, u.image.height, u.image.pixels)));
        }
        for (const auto& n : ds.true_negatives) {
          negatives.append(py::make_tuple(n.id, to_array(n.image.width, n.image.height, n.image.pixels)));
        }
        for (const auto& [id, mask] : ds.hidden_truth) {
          hidden[py::str(id)] = to_array(mask.width, mask.height, mask.bits);
        }
        py::dict d;
        d["labeled"] = labeled;
        d["unlabeled"] = unlabeled;
        d["true_negatives"] = negatives;
        d["hidden_truth"] = hidden;
        return d;
      },
      py::arg("seed") = 0, py::arg("image_size") = 64, py::arg("n_labeled") = 200,
      py::arg("n_unlabeled") = 300, py::arg("n_true_negative") = 200,
      py::arg("positive_rate") = 0.4,
      "Returns labeled (id, image, mask) tuples, unlabeled and true-negative (id, image) tuples, "
      "and the hidden truth masks kept for auditing.");

  m.def(
      "count_macs",
      [](bool inception) {
        const auto b = count_mac_breakdown(NetworkSpec{}, inception);
        py::dict d;
        d["encoder"] = b.encoder;
        d["bottleneck"] = b.bottleneck;
        d["decoder"] = b.decoder;
        d["total"] = count_macs(NetworkSpec{}, inception);
        return d;
      },
      py::arg("inception") = true, "Multiply-accumulates of the default network, by part.");

  m.def(
      "connected_components",
      [](const F64Array& probs, double threshold) {
        const ProbabilityMap map = map_from(probs);
        py::list out;
        for (const auto& d : connected_components(binarize(map, threshold), &map)) {
          out.append(py::make_tuple(d.cx, d.cy, d.pixels.size(), d.score));
        }
        return out;
      },
      py::arg("probs"), py::arg("threshold"),
      "Detections above threshold as (cx, cy, pixel count, max probability).");

  m.def(
      "froc_point",
      [](const std::vector<F64Array>& probs, const std::vector<U8Array>& masks, double threshold) {
        return report_dict(froc_point(eval_set(probs, masks), threshold));
      },
      py::arg("probs"), py::arg("masks"), py::arg("threshold"));

  m.def(
      "operating_point",
      [](const std::vector<F64Array>& probs, const std::vector<U8Array>& masks,
         double min_sensitivity) {
        const auto curve = froc_curve(eval_set(probs, masks), default_thresholds());
        const OperatingPoint op = select_operating_point(curve, min_sensitivity);
        py::dict d = report_dict(op.report);
        d["qualified"] = op.qualified;
        return d;
      },
      py::arg("probs"), py::arg("masks"), py::arg("min_sensitivity") = 0.89);

  py::class_<Model>(m, "Model")
      .def(py::init(&Model::create), py::arg("input_size") = 64, py::arg("depth") = 3,
           py::arg("base_channels") = 8, py::arg("inception_levels") = std::vector<int>{2, 3},
           py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) { return Model(load_checkpoint(path).params); },
          py::arg("path"))
      .def("predict", &Model::predict, py::arg("images"),
           "Probability maps (N, H, W) for an (N, H, W) uint8 image stack; images are "
           "equalized and scaled first.")
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("input_size", &Model::input_size);
}
