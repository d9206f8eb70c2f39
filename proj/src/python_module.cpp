#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "deepgin/archive.hpp"
#include "deepgin/cli.hpp"
#include "deepgin/config.hpp"
#include "deepgin/datapipe.hpp"
#include "deepgin/errors.hpp"
#include "deepgin/inference.hpp"
#include "deepgin/maskgen.hpp"
#include "deepgin/metrics.hpp"
#include "deepgin/png_io.hpp"
#include "deepgin/trainer.hpp"

namespace py = pybind11;
using namespace deepgin;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// numpy H×W×C (or H×W) ↔ planar ImageTensor.
ImageTensor to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ArgumentError("expected an H x W or H x W x C array");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  ImageTensor img(h, w, c);
  const double* src = a.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) img.at(ch, y, x) = src[(static_cast<std::size_t>(y) * w + x) * c + ch];
  return img;
}

Array from_image(const ImageTensor& img) {
  Array out({img.height(), img.width(), img.channels()});
  double* dst = out.mutable_data();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int ch = 0; ch < img.channels(); ++ch)
        dst[(static_cast<std::size_t>(y) * img.width() + x) * img.channels() + ch] = img.at(ch, y, x);
  return out;
}

MaskTensor to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw ArgumentError("expected an H x W mask array");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  std::vector<std::uint8_t> data(a.data(), a.data() + a.size());
  for (auto& v : data) v = v ? 1 : 0;
  return MaskTensor(h, w, std::move(data));
}

MaskArray from_mask(const MaskTensor& m) {
  MaskArray out({m.height(), m.width()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::dict to_dict(const LossRecord& r) {
  py::dict d;
  for (const auto& [k, v] : r.terms) d[py::str(k)] = v;
  return d;
}

Batch batch_from(const std::vector<Array>& images, std::uint64_t seed, int tile) {
  std::vector<ImageTensor> imgs;
  for (const auto& a : images) imgs.push_back(to_image(a));
  return to_batch(make_batch(imgs, seed, tile));
}

// Generator weights restored from a checkpoint, for inference.
class Model {
 public:
  explicit Model(const std::filesystem::path& checkpoint)
      : cfg_(checkpoint_config(checkpoint)), model_(cfg_.model) {
    load_generator(model_, load_archive(checkpoint));
  }

  Array inpaint(const Array& image, const MaskArray& mask, const std::string& output) const {
    InferOutput which = InferOutput::composite;
    if (output == "raw") which = InferOutput::raw;
    else if (output == "coarse") which = InferOutput::coarse;
    else if (output != "composite") throw ArgumentError("output must be composite, raw or coarse");
    const ImageTensor img = to_image(image);
    const MaskTensor m = to_mask(mask);
    ImageTensor out;
    {
      py::gil_scoped_release release;
      out = deepgin::inpaint(model_, img, m, which);
    }
    return from_image(out);
  }

  const Config& config() const { return cfg_; }

 private:
  Config cfg_;
  DeepGin model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DeepGIN two-stage inpainting: masks, tiling, metrics, training and inference";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<GenerationError>(m, "GenerationError", base.ptr());
  py::register_exception<CapabilityError>(m, "CapabilityError", base.ptr());
  py::register_exception<IncompatibleCheckpointError>(m, "IncompatibleCheckpointError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

  // Masks.
  m.def(
      "generate_mask",
      [](const std::string& kind, int height, int width, std::uint64_t seed) {
        return from_mask(generate_mask(MaskSpec::of_kind(parse_mask_kind(kind), height, width, seed)));
      },
      py::arg("kind"), py::arg("height"), py::arg("width"), py::arg("seed"),
      "Binary hole mask (1 = missing) of kind rect, freeform or cellular.");
  m.def("hole_fraction", [](const MaskArray& a) { return hole_fraction(to_mask(a)); });

  // Image operations.
  m.def(
      "composite",
      [](const Array& out, const Array& gt, const MaskArray& mask) {
        return from_image(composite(to_image(out), to_image(gt), to_mask(mask)));
      },
      py::arg("i_out"), py::arg("i_gt"), py::arg("mask"));
  m.def(
      "tile_decompose",
      [](const Array& a, int tile) {
        std::vector<Array> out;
        for (const auto& t : tile_decompose(to_image(a), tile).first) out.push_back(from_image(t));
        return out;
      },
      py::arg("image"), py::arg("tile"));
  m.def(
      "tile_regroup",
      [](const std::vector<Array>& tiles, int height, int width) {
        std::vector<ImageTensor> imgs;
        for (const auto& t : tiles) imgs.push_back(to_image(t));
        if (imgs.empty()) throw ArgumentError("tile_regroup: no tiles");
        return from_image(tile_regroup(imgs, TileLayout::make(height, width, imgs.front().height())));
      },
      py::arg("tiles"), py::arg("height"), py::arg("width"));
  m.def("resize_bilinear",
        [](const Array& a, int h, int w) { return from_image(resize_bilinear(to_image(a), h, w)); });
  m.def("load_png", [](const std::filesystem::path& p) { return from_image(load_png(p)); });
  m.def("save_png", [](const Array& a, const std::filesystem::path& p) { save_png(to_image(a), p); });

  // Metrics.
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_image(a), to_image(b)); });
  m.def("mean_l1_pct", [](const Array& a, const Array& b) { return mean_l1_pct(to_image(a), to_image(b)); });
  m.def(
      "evaluate_dataset",
      [](const std::filesystem::path& completed, const std::filesystem::path& gt) {
        return evaluate_dataset(completed, gt).to_csv();
      },
      "CSV report pairing PNGs by filename.");
  m.attr("PSNR_CAP") = kPsnrCap;

  // Configuration.
  py::class_<Config>(m, "Config")
      .def(py::init([](const std::string& preset) { return Config::preset(preset); }), py::arg("preset") = "paper")
      .def_static("from_text", &Config::from_text)
      .def_static("load", [](const std::filesystem::path& p) { return Config::load(p); })
      .def_static("keys", &Config::keys)
      .def("set", &Config::set)
      .def("get", &Config::get)
      .def("to_text", &Config::to_text)
      .def("fingerprint", &Config::fingerprint)
      .def("validate", &Config::validate)
      .def("generator_params",
           [](const Config& c) { return g1_param_count(c.model) + g2_param_count(c.model); });
  m.def(
      "lr_at", [](int epoch, double base, const Config& c) { return lr_at(epoch, base, c.train); },
      py::arg("epoch"), py::arg("base"), py::arg("config"));
  m.def(
      "component_params",
      [](int base_width, const std::string& block, bool sa, bool mssa, bool bp) {
        GeneratorConfig g;
        g.base_width = base_width;
        g.block = nn::parse_block_kind(block);
        g.use_sa = sa;
        g.use_mssa = mssa;
        g.use_bp = bp;
        return py::make_tuple(g1_param_count(g), g2_param_count(g));
      },
      py::arg("base_width") = 64, py::arg("block") = "spd", py::arg("sa") = true, py::arg("mssa") = true,
      py::arg("bp") = true, "(G1, G2) parameter counts without allocating weights.");

  // Training.
  py::class_<Trainer>(m, "Trainer")
      .def(py::init<const Config&>())
      .def(
          "warmup_step",
          [](Trainer& t, const std::vector<Array>& images, std::uint64_t seed) {
            const Batch b = batch_from(images, seed, t.config().model.image_size);
            LossRecord r;
            {
              py::gil_scoped_release release;
              r = t.warmup_step(b);
            }
            return to_dict(r);
          },
          py::arg("images"), py::arg("seed"))
      .def(
          "main_step",
          [](Trainer& t, const std::vector<Array>& images, std::uint64_t seed) {
            const Batch b = batch_from(images, seed, t.config().model.image_size);
            LossRecord r;
            {
              py::gil_scoped_release release;
              r = t.main_step(b);
            }
            return to_dict(r);
          },
          py::arg("images"), py::arg("seed"))
      .def("begin_main_stage", &Trainer::begin_main_stage)
      .def_property_readonly("stage", [](const Trainer& t) { return std::string(to_string(t.stage())); })
      .def_property("epoch", &Trainer::epoch, &Trainer::set_epoch)
      .def_property_readonly("global_step", &Trainer::global_step)
      .def_property_readonly("gain_grad_seen", &Trainer::gain_grad_seen)
      .def("save_checkpoint", [](const Trainer& t, const std::filesystem::path& p) { t.save_checkpoint(p); })
      .def("load_checkpoint", [](Trainer& t, const std::filesystem::path& p) { t.load_checkpoint(p); });

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("inpaint", &Model::inpaint, py::arg("image"), py::arg("mask"), py::arg("output") = "composite")
      .def_property_readonly("config", &Model::config);

  m.def(
      "extract_features",
      [](const Array& image, const std::string& kind, const std::filesystem::path& weights) {
        const auto extractor = make_extractor(kind, weights);
        std::vector<nn::Tensor> feats;
        {
          nn::NoGradGuard guard;
          feats = extractor->extract(deepgin::to_tensor(std::vector<ImageTensor>{to_image(image)}));
        }
        std::vector<Array> out;
        for (const auto& f : feats) {
          Array a({f.dim(1), f.dim(2), f.dim(3)});
          auto v = f.values();
          std::copy(v.begin(), v.end(), a.mutable_data());
          out.push_back(a);
        }
        return out;
      },
      py::arg("image"), py::arg("kind") = "stub", py::arg("weights") = std::filesystem::path(),
      "Perceptual-loss feature maps of one image, each C x H x W.");

  m.def(
      "fnv1a",
      [](const py::bytes& b) {
        const std::string s = b;
        return fnv1a(s);
      },
      "64-bit FNV-1a, the archive checksum.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one deepgin command; returns (exit code, stdout, stderr).");
}
