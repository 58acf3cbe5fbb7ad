// Python surface: preprocessing ops, the synthetic corpus generator, splits,
// the metrics suite, and a thin Model wrapper around train/predict/grad-cam.
// Arrays cross the boundary as numpy: uint8 HxW for images, float32 NxHxW for
// normalized batches.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualstream/checkpoint.hpp"
#include "dualstream/config.hpp"
#include "dualstream/dataset.hpp"
#include "dualstream/gradcam.hpp"
#include "dualstream/image.hpp"
#include "dualstream/metrics.hpp"
#include "dualstream/model.hpp"
#include "dualstream/synthetic.hpp"

namespace py = pybind11;
using namespace dualstream;

namespace {

using U8Array = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image image_from_array(const U8Array& arr) {
  if (arr.ndim() != 2) throw py::value_error("expected a 2-d uint8 array (H x W)");
  Image img = make_image(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
  std::memcpy(img.pixels.data(), arr.data(), img.pixels.size());
  return img;
}

U8Array array_from_image(const Image& img) {
  U8Array arr({img.height, img.width});
  std::memcpy(arr.mutable_data(), img.pixels.data(), img.pixels.size());
  return arr;
}

std::vector<int> int_vector(const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-d integer array");
  std::vector<int> out(static_cast<size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<size_t>(i)] = static_cast<int>(a.data()[i]);
  return out;
}

ConfusionMatrix matrix_from_array(const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1))
    throw py::value_error("expected a square 2-d matrix");
  ConfusionMatrix cm(static_cast<int>(a.shape(0)));
  std::memcpy(cm.counts.data(), a.data(), cm.counts.size() * sizeof(int64_t));
  return cm;
}

// Index-only corpus: splits operate on labels, not pixels.
LabeledCorpus corpus_from_labels(const std::vector<int>& labels) {
  int k = 0;
  for (int v : labels) {
    if (v < 0) throw py::value_error("labels must be >= 0");
    k = std::max(k, v + 1);
  }
  LabeledCorpus corpus;
  for (int c = 0; c < k; ++c) corpus.class_names.push_back("class" + std::to_string(c));
  for (size_t i = 0; i < labels.size(); ++i) {
    CorpusEntry e;
    e.id = "s" + std::to_string(i);
    e.label = labels[i];
    e.source_id = e.id;
    e.chain = "original";
    corpus.entries.push_back(std::move(e));
  }
  return corpus;
}

py::array_t<int64_t> indices_array(const std::vector<std::string>& ids) {
  py::array_t<int64_t> out(static_cast<py::ssize_t>(ids.size()));
  for (size_t i = 0; i < ids.size(); ++i)
    out.mutable_data()[i] = std::stoll(ids[i].substr(1));
  return out;
}

TensorDataset dataset_from_arrays(const F32Array& images,
                                  const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& labels) {
  if (images.ndim() != 3) throw py::value_error("expected images as a 3-d float array (N x H x W)");
  if (labels.ndim() != 1 || labels.shape(0) != images.shape(0))
    throw py::value_error("labels must be 1-d with one entry per image");
  TensorDataset ds;
  ds.channels = 1;
  ds.height = static_cast<int>(images.shape(1));
  ds.width = static_cast<int>(images.shape(2));
  ds.data.assign(images.data(), images.data() + images.size());
  ds.labels = int_vector(labels);
  for (size_t i = 0; i < ds.labels.size(); ++i) ds.ids.push_back("s" + std::to_string(i));
  return ds;
}

py::dict report_dict(const ClassificationReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["weighted_precision"] = r.weighted_precision;
  d["weighted_recall"] = r.weighted_recall;
  d["weighted_f1"] = r.weighted_f1;
  d["macro_precision"] = r.macro_precision;
  d["macro_recall"] = r.macro_recall;
  d["macro_f1"] = r.macro_f1;
  d["kappa"] = r.kappa;
  py::list per_class;
  for (const auto& pc : r.per_class) {
    py::dict c;
    c["precision"] = pc.precision;
    c["recall"] = pc.recall;
    c["f1"] = pc.f1;
    c["support"] = pc.support;
    per_class.append(std::move(c));
  }
  d["per_class"] = std::move(per_class);
  return d;
}

// Owns the model plus the metadata a checkpoint carries alongside it.
struct PyModel {
  FusionModel model;
  CheckpointMeta meta;

  static PyModel create(const std::string& config_json) {
    PyModel m{FusionModel::init(model_config_from_json(config_json)), {}};
    m.meta.seed = m.model.config.seed;
    return m;
  }

  static PyModel load(const std::string& path) {
    PyModel m;
    m.model = load_checkpoint(path, &m.meta);
    return m;
  }

  py::list train(const F32Array& images,
                 const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& labels,
                 std::optional<F32Array> val_images,
                 std::optional<py::array_t<int64_t, py::array::c_style | py::array::forcecast>> val_labels,
                 int epochs, int batch_size, double learning_rate, double momentum,
                 uint64_t seed) {
    TensorDataset train_set = dataset_from_arrays(images, labels);
    TensorDataset val_set;
    if (val_images.has_value() != val_labels.has_value())
      throw py::value_error("val_images and val_labels must be given together");
    if (val_images) val_set = dataset_from_arrays(*val_images, *val_labels);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.learning_rate = learning_rate;
    tc.momentum = momentum;
    tc.seed = seed;
    const TrainCurve curve = train_model(model, train_set, val_set, tc);
    py::list out;
    for (const auto& e : curve.epochs) {
      py::dict d;
      d["epoch"] = e.epoch;
      d["train_loss"] = e.train_loss;
      d["train_accuracy"] = e.train_accuracy;
      d["val_loss"] = e.val_loss;
      d["val_accuracy"] = e.val_accuracy;
      out.append(std::move(d));
    }
    return out;
  }

  py::tuple run_predict(const F32Array& images, int batch_size) {
    py::array_t<int64_t> dummy(static_cast<py::ssize_t>(images.shape(0)));
    std::memset(dummy.mutable_data(), 0, sizeof(int64_t) * static_cast<size_t>(images.shape(0)));
    TensorDataset ds = dataset_from_arrays(images, dummy);
    const PredictionSet p = predict(model, ds, batch_size);
    py::array_t<int64_t> pred(static_cast<py::ssize_t>(p.predicted.size()));
    for (size_t i = 0; i < p.predicted.size(); ++i) pred.mutable_data()[i] = p.predicted[i];
    F32Array scores({static_cast<py::ssize_t>(p.predicted.size()),
                     static_cast<py::ssize_t>(p.num_classes)});
    std::memcpy(scores.mutable_data(), p.scores.data(), p.scores.size() * sizeof(float));
    return py::make_tuple(std::move(pred), std::move(scores));
  }

  py::dict gradcam(const F32Array& image, const std::string& stream, int cls) {
    if (image.ndim() != 2) throw py::value_error("expected one image as a 2-d float array");
    Tensor x = Tensor::zeros({1, 1, static_cast<int64_t>(image.shape(0)),
                              static_cast<int64_t>(image.shape(1))});
    std::memcpy(x.values().data(), image.data(), sizeof(float) * static_cast<size_t>(image.size()));
    Stream st;
    if (stream == "mobile") st = Stream::mobile;
    else if (stream == "dense") st = Stream::dense;
    else throw py::value_error("stream must be 'mobile' or 'dense'");
    const GradCam cam = compute_gradcam(model, x, st, cls);
    py::dict d;
    F32Array heat({static_cast<py::ssize_t>(cam.input_h), static_cast<py::ssize_t>(cam.input_w)});
    std::memcpy(heat.mutable_data(), cam.heat.data(), cam.heat.size() * sizeof(float));
    F32Array map({static_cast<py::ssize_t>(cam.map_h), static_cast<py::ssize_t>(cam.map_w)});
    std::memcpy(map.mutable_data(), cam.map.data(), cam.map.size() * sizeof(float));
    F32Array weights(static_cast<py::ssize_t>(cam.weights.size()));
    std::memcpy(weights.mutable_data(), cam.weights.data(), cam.weights.size() * sizeof(float));
    d["heat"] = std::move(heat);
    d["map"] = std::move(map);
    d["weights"] = std::move(weights);
    d["max_x"] = cam.max_x;
    d["max_y"] = cam.max_y;
    d["max_value"] = cam.max_value;
    return d;
  }

  void save(const std::string& path, double mean, double stddev,
            const std::vector<std::string>& class_names, const std::string& config_hash) {
    meta.epoch = model.epochs_completed;
    meta.normalization = {mean, stddev};
    meta.class_names = class_names;
    meta.config_hash = config_hash;
    save_checkpoint(path, model, meta);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "dual-stream fusion classifier core";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // image ops
  m.def("resize_bilinear",
        [](const U8Array& img, int width, int height) {
          return array_from_image(resize_bilinear(image_from_array(img), width, height));
        },
        py::arg("image"), py::arg("width"), py::arg("height"));
  m.def("clahe",
        [](const U8Array& img, double clip_limit, int tiles) {
          return array_from_image(clahe(image_from_array(img), clip_limit, tiles, tiles));
        },
        py::arg("image"), py::arg("clip_limit") = 2.0, py::arg("tiles") = 8);
  m.def("nl_means_denoise",
        [](const U8Array& img, double h, int template_window, int search_window) {
          return array_from_image(
              nl_means_denoise(image_from_array(img), h, template_window, search_window));
        },
        py::arg("image"), py::arg("h") = 10.0, py::arg("template_window") = 7,
        py::arg("search_window") = 21);
  m.def("brightness_contrast",
        [](const U8Array& img, double alpha, double beta) {
          return array_from_image(brightness_contrast(image_from_array(img), alpha, beta));
        },
        py::arg("image"), py::arg("alpha"), py::arg("beta"));
  m.def("hflip", [](const U8Array& img) { return array_from_image(hflip(image_from_array(img))); },
        py::arg("image"));
  m.def("rotate_about_center",
        [](const U8Array& img, double degrees) {
          return array_from_image(rotate_about_center(image_from_array(img), degrees));
        },
        py::arg("image"), py::arg("degrees"));
  m.def("preprocess_image",
        [](const U8Array& img, int resize_to, double clahe_clip_limit, int clahe_tiles,
           double nlm_h, int nlm_template_window, int nlm_search_window) {
          PreprocessConfig cfg;
          cfg.resize_to = resize_to;
          cfg.clahe_clip_limit = clahe_clip_limit;
          cfg.clahe_tiles = clahe_tiles;
          cfg.nlm_h = nlm_h;
          cfg.nlm_template_window = nlm_template_window;
          cfg.nlm_search_window = nlm_search_window;
          return array_from_image(preprocess_image(image_from_array(img), cfg));
        },
        py::arg("image"), py::arg("resize_to") = 224, py::arg("clahe_clip_limit") = 2.0,
        py::arg("clahe_tiles") = 8, py::arg("nlm_h") = 10.0, py::arg("nlm_template_window") = 7,
        py::arg("nlm_search_window") = 21);
  m.def("normalization_stats",
        [](const py::list& images) {
          std::vector<Image> imgs;
          for (const auto& o : images) imgs.push_back(image_from_array(o.cast<U8Array>()));
          const NormalizationStats s = compute_normalization_stats(imgs);
          return py::make_tuple(s.mean, s.stddev);
        },
        py::arg("images"));
  m.def("normalize",
        [](const U8Array& img, double mean, double stddev) {
          const FloatImage f = normalize(image_from_array(img), {mean, stddev});
          F32Array out({static_cast<py::ssize_t>(f.height), static_cast<py::ssize_t>(f.width)});
          std::memcpy(out.mutable_data(), f.data.data(), f.data.size() * sizeof(float));
          return out;
        },
        py::arg("image"), py::arg("mean"), py::arg("stddev"));

  // synthetic corpus
  m.def("make_synthetic",
        [](int classes, int per_class, int size, uint64_t seed) {
          SyntheticConfig cfg;
          cfg.classes = classes;
          cfg.per_class = per_class;
          cfg.image_size = size;
          cfg.seed = seed;
          const auto samples = make_synthetic_samples(cfg);
          U8Array images({static_cast<py::ssize_t>(samples.size()), static_cast<py::ssize_t>(size),
                          static_cast<py::ssize_t>(size)});
          py::array_t<int64_t> labels(static_cast<py::ssize_t>(samples.size()));
          py::list ids;
          for (size_t i = 0; i < samples.size(); ++i) {
            std::memcpy(images.mutable_data() + i * samples[i].image.pixels.size(),
                        samples[i].image.pixels.data(), samples[i].image.pixels.size());
            labels.mutable_data()[i] = samples[i].label;
            ids.append(samples[i].id);
          }
          return py::make_tuple(std::move(images), std::move(labels), std::move(ids));
        },
        py::arg("classes") = 4, py::arg("per_class") = 50, py::arg("size") = 64,
        py::arg("seed") = 0);
  m.def("synthetic_quadrant",
        [](int cls, int image_size) {
          int x0, y0, x1, y1;
          synthetic_quadrant(cls, image_size, &x0, &y0, &x1, &y1);
          return py::make_tuple(x0, y0, x1, y1);
        },
        py::arg("cls"), py::arg("image_size"));

  // splits
  m.def("split_indices",
        [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& labels,
           uint64_t seed) {
          const DatasetSplit s = split_80_10_10(corpus_from_labels(int_vector(labels)), seed);
          return py::make_tuple(indices_array(s.train), indices_array(s.validation),
                                indices_array(s.test));
        },
        py::arg("labels"), py::arg("seed") = 0);
  m.def("kfold_indices",
        [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& labels, int k,
           uint64_t seed) {
          const KFoldSplit s = stratified_kfold(corpus_from_labels(int_vector(labels)), k, seed);
          py::list folds;
          for (const auto& f : s.folds) folds.append(indices_array(f));
          return folds;
        },
        py::arg("labels"), py::arg("k"), py::arg("seed") = 0);

  // metrics
  m.def("confusion_matrix",
        [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& actual,
           const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& predicted,
           int num_classes) {
          const ConfusionMatrix cm = ConfusionMatrix::from_predictions(
              int_vector(actual), int_vector(predicted), num_classes);
          py::array_t<int64_t> out({static_cast<py::ssize_t>(num_classes),
                                    static_cast<py::ssize_t>(num_classes)});
          std::memcpy(out.mutable_data(), cm.counts.data(), cm.counts.size() * sizeof(int64_t));
          return out;
        },
        py::arg("actual"), py::arg("predicted"), py::arg("num_classes"));
  m.def("classification_report",
        [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& matrix) {
          return report_dict(classification_report(matrix_from_array(matrix)));
        },
        py::arg("matrix"));
  m.def("cohens_kappa",
        [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& matrix) {
          return cohens_kappa(matrix_from_array(matrix));
        },
        py::arg("matrix"));
  m.def("roc_auc_binary",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
          return roc_auc_binary(scores, labels);
        },
        py::arg("scores"), py::arg("labels"));
  m.def("pr_auc_binary",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
          return pr_auc_binary(scores, labels);
        },
        py::arg("scores"), py::arg("labels"));
  m.def("auc_ovr",
        [](const F32Array& scores,
           const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& actual) {
          if (scores.ndim() != 2) throw py::value_error("scores must be N x K");
          std::vector<float> flat(scores.data(), scores.data() + scores.size());
          const AucReport r =
              auc_ovr(flat, int_vector(actual), static_cast<int>(scores.shape(1)));
          py::dict d;
          d["roc_per_class"] = r.roc_per_class;
          d["pr_per_class"] = r.pr_per_class;
          d["defined"] = r.defined;
          d["roc_macro"] = r.roc_macro;
          d["pr_macro"] = r.pr_macro;
          return d;
        },
        py::arg("scores"), py::arg("actual"));
  m.def("bootstrap_accuracy_ci",
        [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& actual,
           const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& predicted,
           int resamples, uint64_t seed) {
          const BootstrapCi ci =
              bootstrap_accuracy_ci(int_vector(actual), int_vector(predicted), resamples, seed);
          py::dict d;
          d["point"] = ci.point;
          d["lo"] = ci.lo;
          d["hi"] = ci.hi;
          d["resamples"] = ci.resamples;
          return d;
        },
        py::arg("actual"), py::arg("predicted"), py::arg("resamples") = 1000,
        py::arg("seed") = 0);

  // config + seeds
  m.def("default_config_json", [] { return pipeline_config_json(default_pipeline_config()); });
  m.def("config_hash",
        [](const std::string& text) { return pipeline_config_hash(parse_pipeline_config(text)); },
        py::arg("config_json"));
  m.def("stage_seed", &stage_seed, py::arg("master"), py::arg("stage"));
  m.def("expected_shapes",
        [](const std::string& config_json) {
          const ShapeReport r = expected_shapes(model_config_from_json(config_json));
          py::dict d;
          d["mobile_channels"] = r.mobile_channels;
          d["mobile_size"] = r.mobile_size;
          d["dense_channels"] = r.dense_channels;
          d["dense_size"] = r.dense_size;
          d["fused_width"] = r.fused_width;
          return d;
        },
        py::arg("model_config_json"));
  m.def("gradient_check_model",
        [](uint64_t seed) {
          const GradCheckResult r = gradient_check_fusion_model(seed);
          py::dict d;
          d["name"] = r.name;
          d["max_rel_error"] = r.max_rel_error;
          d["pass"] = r.pass;
          return d;
        },
        py::arg("seed"));

  py::class_<PyModel>(m, "Model")
      .def_static("create", &PyModel::create, py::arg("model_config_json"))
      .def_static("load", &PyModel::load, py::arg("path"))
      .def("train", &PyModel::train, py::arg("images"), py::arg("labels"),
           py::arg("val_images") = py::none(), py::arg("val_labels") = py::none(),
           py::arg("epochs") = 29, py::arg("batch_size") = 16, py::arg("learning_rate") = 0.05,
           py::arg("momentum") = 0.9, py::arg("seed") = 0)
      .def("predict", &PyModel::run_predict, py::arg("images"), py::arg("batch_size") = 32)
      .def("gradcam", &PyModel::gradcam, py::arg("image"), py::arg("stream"), py::arg("cls"))
      .def("save", &PyModel::save, py::arg("path"), py::arg("mean") = 0.0,
           py::arg("stddev") = 1.0, py::arg("class_names") = std::vector<std::string>{},
           py::arg("config_hash") = std::string{})
      .def_property_readonly("config_json",
                             [](PyModel& m) { return model_config_json(m.model.config); })
      .def_property_readonly("epochs_completed",
                             [](PyModel& m) { return m.model.epochs_completed; })
      .def_property_readonly("normalization", [](PyModel& m) {
        return py::make_tuple(m.meta.normalization.mean, m.meta.normalization.stddev);
      });
}
