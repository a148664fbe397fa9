#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ferfusion/error.hpp"
#include "ferfusion/features.hpp"
#include "ferfusion/fusion.hpp"
#include "ferfusion/metrics.hpp"
#include "ferfusion/region.hpp"
#include "ferfusion/synthetic.hpp"
#include "ferfusion/train.hpp"

namespace py = pybind11;
using namespace ferfusion;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Tensor to_matrix(const DoubleArray& a, const char* what) {
  if (a.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, std::string(what) + " must be 2-D");
  return to_tensor(a);
}

DoubleArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  DoubleArray out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

ImageBuffer to_image(const ByteArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw Error(ErrorKind::ShapeMismatch, "image must be HxW or HxWxC");
  const std::size_t ch = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
  return ImageBuffer(a.shape(0), a.shape(1), ch, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

ByteArray to_array(const ImageBuffer& img) {
  ByteArray out({img.height(), img.width(), img.channels()});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

ViewComposition composition(const std::vector<std::string>& names) {
  std::vector<RegionSpec> specs;
  for (const auto& n : names) specs.push_back(RegionSpec::for_name(parse_region_name(n)));
  return ViewComposition(std::move(specs));
}

EmbeddingDataset dataset_from(const DoubleArray& x, const std::vector<int>& labels, const std::string& prefix) {
  const Tensor t = to_matrix(x, "features");
  if (t.dim(0) != labels.size()) throw Error(ErrorKind::LengthMismatch, "one label per row is required");
  std::vector<EmbeddingRecord> recs;
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    const auto row = t.row(i);
    recs.push_back({prefix + std::to_string(i), "", i, labels[i], std::vector<float>(row.begin(), row.end())});
  }
  return EmbeddingDataset(std::move(recs));
}

DoubleArray matrix_of(const EmbeddingDataset& ds) {
  DoubleArray out({ds.size(), ds.dim()});
  double* p = out.mutable_data();
  for (const auto& r : ds.records()) p = std::copy(r.vector.begin(), r.vector.end(), p);
  return out;
}

std::vector<int> labels_of(const EmbeddingDataset& ds) {
  std::vector<int> out;
  for (const auto& r : ds.records()) out.push_back(r.label);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-view fusion attention for 8-class facial expression recognition";

  py::register_exception<Error>(m, "FerfusionError", PyExc_ValueError);

  m.attr("CLASS_NAMES") = std::vector<std::string>(kClassNames.begin(), kClassNames.end());

  // regions
  m.def(
      "region_rect",
      [](const std::string& name, std::size_t height, std::size_t width) {
        const auto r = region_rect(RegionSpec::for_name(parse_region_name(name)), height, width);
        return py::make_tuple(r.row_begin, r.row_end, r.col_begin, r.col_end);
      },
      py::arg("name"), py::arg("height"), py::arg("width"),
      "(row_begin, row_end, col_begin, col_end) of a preset region; ends exclusive.");
  m.def(
      "crop_region",
      [](const ByteArray& img, const std::string& name) {
        return to_array(crop_region(to_image(img), RegionSpec::for_name(parse_region_name(name))));
      },
      py::arg("image"), py::arg("name"));
  m.def(
      "compose_views", [](const ByteArray& img, const std::vector<std::string>& regions) {
        return to_array(compose_views(to_image(img), composition(regions)));
      },
      py::arg("image"), py::arg("regions") = std::vector<std::string>{"eye", "mouth"});
  m.def(
      "has_sufficient_keypoints",
      [](const DoubleArray& points, const std::vector<bool>& present, std::size_t width, std::size_t height) {
        if (points.ndim() != 2 || points.shape(0) != kLandmarkCount || points.shape(1) != 2 ||
            present.size() != kLandmarkCount)
          throw Error(ErrorKind::ShapeMismatch, "expected 68x2 points and 68 presence flags");
        KeypointSet k;
        k.image_width = width;
        k.image_height = height;
        for (std::size_t i = 0; i < kLandmarkCount; ++i) {
          k.points[i] = {points.at(i, 0), points.at(i, 1)};
          k.present[i] = present[i];
        }
        return has_sufficient_keypoints(k);
      },
      py::arg("points"), py::arg("present"), py::arg("width"), py::arg("height"));

  // data
  m.def(
      "generate_two_view",
      [](std::size_t n_per_class, std::uint64_t seed, std::size_t dim, std::uint64_t basis_seed) {
        TwoViewSpec spec;
        spec.dim = dim;
        spec.basis_seed = basis_seed;
        const auto data = generate_two_view(spec, n_per_class, seed);
        return py::make_tuple(matrix_of(data.main), matrix_of(data.aux), labels_of(data.main));
      },
      py::arg("n_per_class"), py::arg("seed") = 0, py::arg("dim") = 16, py::arg("basis_seed") = 1,
      "Returns (main, aux, labels) for the synthetic two-view dataset.");
  m.def(
      "load_embeddings",
      [](const std::filesystem::path& path) {
        const auto ds = load_embeddings(path);
        std::vector<std::string> ids;
        for (const auto& r : ds.records()) ids.push_back(r.sample_id);
        return py::make_tuple(ids, matrix_of(ds), labels_of(ds));
      },
      py::arg("path"), "Returns (sample_ids, features, labels).");
  m.def(
      "uniform_class_sample",
      [](const DoubleArray& x, const std::vector<int>& labels, std::size_t n_per_class, std::uint64_t seed) {
        const auto out = uniform_class_sample(dataset_from(x, labels, ""), n_per_class, seed);
        std::vector<std::size_t> rows;
        for (const auto& r : out.records()) rows.push_back(r.frame_index);
        return rows;
      },
      py::arg("features"), py::arg("labels"), py::arg("n_per_class"), py::arg("seed") = 0,
      "Row indices of a class-balanced draw.");

  // network pieces
  m.def(
      "scaled_dot_attention",
      [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v) {
        const Tensor qt = to_matrix(q, "q");
        Tensor w;
        const Tensor out = scaled_dot_attention(qt, to_matrix(k, "k"), to_matrix(v, "v"), qt.dim(1), &w);
        return py::make_tuple(to_array(out), to_array(w));
      },
      py::arg("q"), py::arg("k"), py::arg("v"), "Returns (output, weights).");
  m.def(
      "cross_entropy",
      [](const DoubleArray& logits, const std::vector<int>& labels) {
        return cross_entropy(to_matrix(logits, "logits"), labels);
      },
      py::arg("logits"), py::arg("labels"), "Summed over the batch.");
  m.def("keygen_layer_count", [](const std::string& s) { return keygen_layer_count(parse_key_strategy(s)); });

  py::class_<FusionModel>(m, "FusionModel")
      .def_static(
          "init",
          [](std::size_t dim, std::size_t n_heads, const std::string& strategy, std::size_t hidden,
             std::uint64_t seed) { return FusionModel::init({dim, n_heads, parse_key_strategy(strategy), hidden}, seed); },
          py::arg("dim") = 16, py::arg("n_heads") = 2, py::arg("strategy") = "concat", py::arg("hidden") = 0,
          py::arg("seed") = 0)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const FusionModel& model, const std::filesystem::path& p) { save_checkpoint(p, model); })
      .def_property_readonly("dim", [](const FusionModel& model) { return model.attn.d_model; })
      .def_property_readonly("n_heads", [](const FusionModel& model) { return model.attn.n_heads; })
      .def_property_readonly("strategy", [](const FusionModel& model) { return to_string(model.keygen.strategy()); })
      .def_property_readonly("keygen_layers", [](const FusionModel& model) { return model.keygen.layers().size(); })
      .def("parameters",
           [](const FusionModel& model) {
             py::dict out;
             for (const auto& p : model.parameters()) out[py::str(p.name)] = to_array(*p.tensor);
             return out;
           })
      .def(
          "predict_logits",
          [](const FusionModel& model, const DoubleArray& main, const DoubleArray& aux) {
            return to_array(predict_logits(model, to_matrix(main, "main"), to_matrix(aux, "aux")));
          },
          py::arg("main"), py::arg("aux"))
      .def(
          "gradients",
          [](const FusionModel& model, const DoubleArray& main, const DoubleArray& aux, const std::vector<int>& labels) {
            const auto fwd = fusion_forward(model, to_matrix(main, "main"), to_matrix(aux, "aux"));
            const auto grads = fusion_backward(model, fwd.caches, labels);
            py::dict out;
            const auto params = model.parameters();
            for (std::size_t i = 0; i < params.size(); ++i) out[py::str(params[i].name)] = to_array(grads[i]);
            return out;
          },
          py::arg("main"), py::arg("aux"), py::arg("labels"), "Gradient of the summed cross-entropy.");

  m.def(
      "train_fusion",
      [](const DoubleArray& main, const DoubleArray& aux, const std::vector<int>& labels, const std::string& strategy,
         std::size_t n_heads, std::size_t hidden, std::size_t iters, std::size_t batch, double lr, std::uint64_t seed,
         std::size_t threads) {
        TrainConfig cfg;
        cfg.model = {0, n_heads, parse_key_strategy(strategy), hidden};
        cfg.iters = iters;
        cfg.batch = batch;
        cfg.lr = lr;
        cfg.seed = seed;
        cfg.threads = threads;
        const auto paired = pair_views(dataset_from(main, labels, "s"), dataset_from(aux, labels, "s"));
        py::gil_scoped_release release;
        auto result = train_fusion(paired, cfg);
        return std::make_pair(std::move(result.model), std::move(result.loss_history));
      },
      py::arg("main"), py::arg("aux"), py::arg("labels"), py::arg("strategy") = "concat", py::arg("n_heads") = 2,
      py::arg("hidden") = 0, py::arg("iters") = 100, py::arg("batch") = 512, py::arg("lr") = 1e-4,
      py::arg("seed") = 0, py::arg("threads") = 1, "Returns (model, loss_history).");

  // metrics and smoothing
  m.def("macro_f1", [](const std::vector<double>& f1s) { return macro_f1(f1s); }, py::arg("f1_per_class"));
  m.def(
      "evaluate",
      [](const std::vector<int>& pred, const std::vector<int>& gt) {
        const auto r = evaluate_labels(pred, gt);
        py::dict out;
        out["samples"] = r.samples;
        out["accuracy"] = r.accuracy;
        out["f1"] = std::vector<double>(r.f1.begin(), r.f1.end());
        out["macro_f1"] = r.macro_f1;
        return out;
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "smooth",
      [](const std::vector<int>& labels, std::size_t window) {
        PredictionSequence seq{"", {}};
        for (std::size_t i = 0; i < labels.size(); ++i) seq.frames.push_back({i, labels[i], std::nullopt, std::nullopt});
        std::vector<int> out;
        for (const auto& f : sliding_window_smooth(seq, window).frames) out.push_back(f.pred);
        return out;
      },
      py::arg("labels"), py::arg("window") = 50, "Centered majority vote over one video's frame labels.");
  m.def(
      "smooth_logits",
      [](const DoubleArray& logits, std::size_t window) {
        const Tensor t = to_matrix(logits, "logits");
        if (t.dim(1) != kNumClasses) throw Error(ErrorKind::ShapeMismatch, "logits must have 8 columns");
        PredictionSequence seq{"", {}};
        for (std::size_t i = 0; i < t.dim(0); ++i) {
          std::array<double, kNumClasses> l{};
          std::ranges::copy(t.row(i), l.begin());
          seq.frames.push_back({i, 0, std::nullopt, l});
        }
        std::vector<int> out;
        for (const auto& f : sliding_window_smooth_logits(seq, window).frames) out.push_back(f.pred);
        return out;
      },
      py::arg("logits"), py::arg("window") = 50, "Argmax of window-averaged logits.");
}
