#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "cadsketch/checkpoint.hpp"
#include "cadsketch/config.hpp"
#include "cadsketch/dataset.hpp"
#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"
#include "cadsketch/matching.hpp"
#include "cadsketch/metrics.hpp"
#include "cadsketch/pipeline.hpp"
#include "cadsketch/synthgen.hpp"

namespace py = pybind11;
using namespace cadsketch;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

FloatArray to_array(const SketchImage& img) {
  FloatArray out({img.height, img.width});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size() * sizeof(float));
  return out;
}

SketchImage from_array(const FloatArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "image must be a 2-D array");
  SketchImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.pixels.data(), a.data(), img.pixels.size() * sizeof(float));
  return img;
}

IntArray grid_array(const TokenGrid& g) {
  IntArray out({kMaxPrimitives, token::kPerSlot});
  for (int i = 0; i < kMaxPrimitives; ++i) {
    for (int j = 0; j < token::kPerSlot; ++j) out.mutable_at(i, j) = g.slots[i][j];
  }
  return out;
}

TokenGrid array_grid(const IntArray& a) {
  if (a.ndim() != 2 || a.shape(0) != kMaxPrimitives || a.shape(1) != token::kPerSlot) {
    throw Error(ErrorCode::ShapeMismatch, "token grid must have shape (16, 8)");
  }
  TokenGrid g;
  for (int i = 0; i < kMaxPrimitives; ++i) {
    for (int j = 0; j < token::kPerSlot; ++j) g.slots[i][j] = a.at(i, j);
  }
  return g;
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw Error(ErrorCode::InvalidConfig, "unknown split " + name);
}

HanddrawConfig handdraw_config(const std::string& json) {
  return json.empty() ? HanddrawConfig{} : handdraw_from_json(nlohmann::json::parse(json));
}

/// A trained parameterizer plus an optional renderer for test-time optimization.
class Model {
 public:
  Model(const std::string& config_json, const std::filesystem::path& spn_path,
        const std::optional<std::filesystem::path>& srn_path)
      : config_(run_config_from_json(nlohmann::json::parse(config_json))), spn_(config_.spn) {
    nets::load_into(spn_.parameters(), spn_path);
    if (srn_path) {
      srn_.emplace(config_.srn);
      nets::load_into(srn_->parameters(), *srn_path);
    }
  }

  py::tuple infer(const FloatArray& image, int tto_steps) {
    const SketchImage img = from_array(image);
    pipeline::Inference inf;
    if (tto_steps > 0) {
      if (!srn_) throw Error(ErrorCode::InvalidConfig, "test-time optimization needs a renderer checkpoint");
      inf = pipeline::test_time_optimize(spn_, *srn_, img, {tto_steps, config_.tto_lr}).inference;
    } else {
      inf = pipeline::zero_shot_infer(spn_, img, config_.type_quota);
    }
    return py::make_tuple(grid_array(inf.grid), sketch_to_json_line(inf.decoded.sketch), inf.decoded.dropped);
  }

  FloatArray render(const IntArray& tokens) const {
    if (!srn_) throw Error(ErrorCode::InvalidConfig, "no renderer checkpoint loaded");
    return to_array(nets::tensor_image(srn_->forward(nets::one_hot(array_grid(tokens)))));
  }

  int image_size() const { return config_.spn.image_size; }

 private:
  RunConfig config_;
  nets::SketchParameterizer spn_;
  std::optional<nets::SketchRenderer> srn_;
};

}  // namespace

PYBIND11_MODULE(_cadsketch, m) {
  m.doc() = "Raster CAD sketch parameterization core";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  m.attr("VOCAB_SIZE") = token::kVocabSize;
  m.attr("MAX_PRIMITIVES") = kMaxPrimitives;
  m.attr("TOKENS_PER_SLOT") = token::kPerSlot;
  m.def("version", [] { return std::string(build_version()); });

  m.def("quantize", &quantize, py::arg("value"));
  m.def("dequantize", &dequantize, py::arg("bin"));
  m.def(
      "tokenize", [](const std::string& line) { return grid_array(tokenize(sketch_from_json_line(line))); },
      py::arg("sketch"), "Token grid (16, 8) of a sketch given as a JSON line.");
  m.def(
      "detokenize",
      [](const IntArray& tokens) {
        const DetokenizeResult r = detokenize(array_grid(tokens));
        return py::make_tuple(sketch_to_json_line(r.sketch), r.dropped);
      },
      py::arg("tokens"), "Sketch JSON line and the number of dropped slots.");

  m.def(
      "rasterize",
      [](const std::string& line, int size) { return to_array(rasterize(sketch_from_json_line(line), size, size)); },
      py::arg("sketch"), py::arg("size") = kDefaultImageSize);
  m.def(
      "handdraw",
      [](const std::string& line, std::uint64_t seed, int size, const std::string& config) {
        HanddrawConfig cfg = handdraw_config(config);
        cfg.seed = seed;
        return to_array(synthesize_handdrawn(sketch_from_json_line(line), cfg, size, size));
      },
      py::arg("sketch"), py::arg("seed"), py::arg("size") = kDefaultImageSize, py::arg("config") = "");
  m.def(
      "read_pgm", [](const std::filesystem::path& p) { return to_array(read_pgm(p)); }, py::arg("path"));
  m.def(
      "write_pgm", [](const FloatArray& a, const std::filesystem::path& p) { write_pgm(from_array(a), p); },
      py::arg("image"), py::arg("path"));

  m.def(
      "generate",
      [](std::uint64_t seed, std::size_t count, const std::string& split) {
        GeneratorConfig cfg;
        cfg.seed = seed;
        std::vector<std::string> out;
        for (const auto& g : generate_split(cfg, split_from_string(split), count)) {
          out.push_back(sketch_to_json_line(g.sketch));
        }
        return out;
      },
      py::arg("seed"), py::arg("count"), py::arg("split") = "train");
  m.def(
      "build_corpus",
      [](const std::filesystem::path& out, std::uint64_t seed, std::size_t n_train, std::size_t n_val,
         std::size_t n_test, int image_size, bool handdrawn) {
        GeneratorConfig cfg;
        cfg.seed = seed;
        CorpusOptions o;
        o.image_size = image_size;
        o.handdrawn = handdrawn;
        return build_corpus(cfg, n_train, n_val, n_test, out, o).dump();
      },
      py::arg("out"), py::arg("seed"), py::arg("n_train"), py::arg("n_val"), py::arg("n_test"),
      py::arg("image_size") = kDefaultImageSize, py::arg("handdrawn") = true,
      "Writes a corpus directory and returns its manifest as JSON text.");

  m.def(
      "chamfer", [](const FloatArray& a, const FloatArray& b) { return eval::metric_chamfer(from_array(a), from_array(b)).value; },
      py::arg("pred"), py::arg("target"));
  m.def(
      "img_mse", [](const FloatArray& a, const FloatArray& b) { return eval::metric_img_mse(from_array(a), from_array(b)); },
      py::arg("pred"), py::arg("target"));
  m.def(
      "hungarian",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
        if (cost.ndim() != 2 || cost.shape(0) != cost.shape(1)) {
          throw Error(ErrorCode::ShapeMismatch, "cost matrix must be square");
        }
        eval::CostMatrix c(static_cast<int>(cost.shape(0)));
        std::memcpy(c.values.data(), cost.data(), c.values.size() * sizeof(double));
        const auto a = eval::hungarian(c);
        return py::make_tuple(a.perm, eval::assignment_cost(c, a.perm));
      },
      py::arg("cost"), "Optimal row-to-column assignment and its cost.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, const std::filesystem::path&, const std::optional<std::filesystem::path>&>(),
           py::arg("config"), py::arg("spn"), py::arg("srn") = std::nullopt)
      .def("infer", &Model::infer, py::arg("image"), py::arg("tto_steps") = 0,
           "Token grid, sketch JSON line and dropped-slot count for one image.")
      .def("render", &Model::render, py::arg("tokens"))
      .def_property_readonly("image_size", &Model::image_size);
}
