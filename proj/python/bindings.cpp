// numpy-facing wrapper around the C++ core.

#include <sstream>

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "octrecon/cli.hpp"
#include "octrecon/dataio.hpp"
#include "octrecon/dsp.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/metrics.hpp"
#include "octrecon/phantom.hpp"
#include "octrecon/recon.hpp"
#include "octrecon/unet.hpp"

namespace py = pybind11;
using namespace octrecon;

namespace {

using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

template <typename T>
std::vector<T> to_vector(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-D array, got " + std::to_string(a.ndim()) + " dimensions");
  return {a.data(), a.data() + a.size()};
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape = {}) {
  if (shape.empty()) shape = {static_cast<py::ssize_t>(v.size())};
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Image to_image(const RealArray& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  Image img(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

py::array_t<double> from_image(const Image& img) {
  return to_array(img.data, {static_cast<py::ssize_t>(img.rows), static_cast<py::ssize_t>(img.cols)});
}

recon::DownsamplePlan plan_for(std::size_t n, int factor) { return recon::make_downsample_plan(n, factor); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Undersampled OCT reconstruction core";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DegenerateError>(m, "DegenerateError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // dsp
  m.def("dft", [](const ComplexArray& x) { return to_array(dsp::dft(to_vector(x))); }, py::arg("x"));
  m.def("idft", [](const ComplexArray& x) { return to_array(dsp::idft(to_vector(x))); }, py::arg("x"));
  m.def("hann_window", [](std::size_t n) { return to_array(dsp::hann_window(n)); }, py::arg("n"));

  // recon
  m.def("kept_indices", [](std::size_t n, int factor) { return plan_for(n, factor).kept_indices; },
        py::arg("n_samples"), py::arg("factor"));
  m.def(
      "reinterpolate",
      [](const RealArray& kept, std::size_t n, int factor, const std::string& method) {
        return to_array(recon::reinterpolate(to_vector(kept), plan_for(n, factor), recon::parse_prep_method(method)));
      },
      py::arg("kept"), py::arg("n_samples"), py::arg("factor"), py::arg("method"));
  m.def(
      "reconstruct_aline_full",
      [](const RealArray& fringe) {
        auto [bins, db] = recon::reconstruct_aline_full(to_vector(fringe));
        return py::make_tuple(to_array(bins), to_array(db));
      },
      py::arg("fringe"));
  m.def(
      "reconstruct_aline_undersampled",
      [](const RealArray& fringe, int factor, const std::string& method) {
        const auto x = to_vector(fringe);
        return to_array(
            recon::reconstruct_aline_undersampled(x, plan_for(x.size(), factor), recon::parse_prep_method(method)));
      },
      py::arg("fringe"), py::arg("factor"), py::arg("method"));

  py::class_<phantom::SpectralVolume>(m, "Volume")
      .def(py::init([](const RealArray& data, double noise_floor_db) {
             if (data.ndim() != 3) throw ShapeError("volume data must be [bscans, alines, samples]");
             phantom::SpectralVolume v;
             v.n_bscans = data.shape(0);
             v.n_alines = data.shape(1);
             v.n_samples = data.shape(2);
             v.data.assign(data.data(), data.data() + data.size());
             v.noise_floor_db = noise_floor_db;
             return v;
           }),
           py::arg("data"), py::arg("noise_floor_db") = 0.0)
      .def_property_readonly("shape",
                             [](const phantom::SpectralVolume& v) {
                               return py::make_tuple(v.n_bscans, v.n_alines, v.n_samples);
                             })
      .def_property_readonly("data",
                             [](const phantom::SpectralVolume& v) {
                               return to_array(v.data, {static_cast<py::ssize_t>(v.n_bscans),
                                                        static_cast<py::ssize_t>(v.n_alines),
                                                        static_cast<py::ssize_t>(v.n_samples)});
                             })
      .def_readwrite("noise_floor_db", &phantom::SpectralVolume::noise_floor_db)
      .def_readwrite("meta", &phantom::SpectralVolume::meta);

  m.def(
      "generate_phantom",
      [](const std::string& spec_json) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(spec_json);
        } catch (const nlohmann::json::exception& e) {
          throw FormatError(std::string("phantom spec: ") + e.what());
        }
        return phantom::generate_phantom(j.get<phantom::PhantomSpec>());
      },
      py::arg("spec_json"));
  m.def(
      "write_volume",
      [](const phantom::SpectralVolume& v, const std::filesystem::path& path, const std::string& dtype) {
        if (dtype != "f32" && dtype != "f64") throw InvalidArgument("dtype must be f32 or f64");
        dataio::write_volume(v, path, dtype == "f32" ? dataio::VolumeDtype::float32 : dataio::VolumeDtype::float64);
      },
      py::arg("volume"), py::arg("path"), py::arg("dtype") = "f64");
  m.def("read_volume", &dataio::read_volume, py::arg("path"));

  py::class_<recon::BScanImage>(m, "BScan")
      .def_property_readonly("kind", [](const recon::BScanImage& b) { return std::string(recon::to_string(b.kind)); })
      .def_property_readonly("factor", [](const recon::BScanImage& b) { return b.undersample_factor; })
      .def_property_readonly("method",
                             [](const recon::BScanImage& b) { return std::string(recon::to_string(b.prep_method)); })
      .def_readonly("noise_floor_db", &recon::BScanImage::noise_floor_db)
      .def_readonly("bscan_index", &recon::BScanImage::bscan_index)
      .def_property_readonly("amplitude_db", [](const recon::BScanImage& b) { return from_image(b.amplitude_db); })
      .def_property_readonly("background_db", [](const recon::BScanImage& b) { return to_array(b.background_db); })
      .def_property_readonly("complex",
                             [](const recon::BScanImage& b) {
                               return to_array(b.complex_data, {static_cast<py::ssize_t>(b.n_depth),
                                                                static_cast<py::ssize_t>(b.n_alines)});
                             })
      .def("absolute_db", [](const recon::BScanImage& b) { return from_image(b.absolute_db()); });

  m.def(
      "reconstruct_volume",
      [](const phantom::SpectralVolume& v, int factor, const std::string& method) {
        return recon::reconstruct_volume(v, factor, recon::parse_prep_method(method));
      },
      py::arg("volume"), py::arg("factor"), py::arg("method") = "none");
  m.def("write_image", &dataio::write_image, py::arg("image"), py::arg("path"));
  m.def("read_image", &dataio::read_image, py::arg("path"));

  // metrics
  m.def("mse", [](const RealArray& a, const RealArray& b) { return metrics::mse(to_image(a), to_image(b)); });
  m.def(
      "psnr", [](const RealArray& a, const RealArray& b, double max_i) {
        return metrics::psnr(to_image(a), to_image(b), max_i);
      },
      py::arg("a"), py::arg("b"), py::arg("max_i") = 1.0);
  m.def("psnr_from_mse", &metrics::psnr_from_mse, py::arg("mse"), py::arg("max_i") = 1.0);
  m.def("ssim", [](const RealArray& a, const RealArray& b) { return metrics::ssim(to_image(a), to_image(b)); });
  m.def(
      "prepare_for_metrics",
      [](const RealArray& output_db, const RealArray& target_db, double noise_floor_db) {
        auto [o, t] = metrics::prepare_for_metrics(to_image(output_db), to_image(target_db), noise_floor_db);
        return py::make_tuple(from_image(o), from_image(t));
      },
      py::arg("output_db"), py::arg("target_db"), py::arg("noise_floor_db"));

  // network
  py::class_<unet::UNetModel>(m, "UNet")
      .def(py::init([](int depth, int base_channels, std::uint64_t seed) {
             return unet::build(unet::UNetConfig{depth, base_channels, 2, 1}, seed);
           }),
           py::arg("depth") = 5, py::arg("base_channels") = 48, py::arg("seed") = 0)
      .def_property_readonly("depth", [](const unet::UNetModel& u) { return u.config().depth; })
      .def_property_readonly("base_channels", [](const unet::UNetModel& u) { return u.config().base_channels; })
      .def("parameter_count", &unet::UNetModel::parameter_count)
      .def(
          "forward",
          [](const unet::UNetModel& u, const FloatArray& x) {
            if (x.ndim() != 4) throw ShapeError("forward expects [batch, 2, height, width]");
            unet::Tensor t({static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)),
                            static_cast<std::size_t>(x.shape(2)), static_cast<std::size_t>(x.shape(3))});
            std::copy(x.data(), x.data() + x.size(), t.data.begin());
            unet::Tensor y;
            {
              py::gil_scoped_release release;
              y = u.forward(t);
            }
            return to_array(y.data, {static_cast<py::ssize_t>(y.shape[0]), static_cast<py::ssize_t>(y.shape[1]),
                                     static_cast<py::ssize_t>(y.shape[2]), static_cast<py::ssize_t>(y.shape[3])});
          },
          py::arg("x"))
      .def(
          "save",
          [](const unet::UNetModel& u, const std::filesystem::path& path,
             const std::map<std::string, std::string>& meta) { unet::save(u, path, meta); },
          py::arg("path"), py::arg("meta") = std::map<std::string, std::string>{})
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            auto loaded = unet::load(path);
            return py::make_tuple(std::move(loaded.model), loaded.meta);
          },
          py::arg("path"));

  // Runs one command-line invocation in-process; returns (exit code, stdout, stderr).
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
