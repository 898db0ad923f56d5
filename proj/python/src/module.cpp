#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>

#include "regseg/architecture.hpp"
#include "regseg/container.hpp"
#include "regseg/errors.hpp"
#include "regseg/executor.hpp"
#include "regseg/fov.hpp"
#include "regseg/metrics.hpp"
#include "regseg/model.hpp"

namespace py = pybind11;
using namespace regseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ArchitecturePreset make_preset(const std::string& preset, const std::optional<std::string>& schedule,
                               std::optional<int> classes) {
  ArchitecturePreset p = preset_by_name(preset);
  if (schedule) p.schedule = *schedule;
  if (classes) p.num_classes = *classes;
  p.validate();
  return p;
}

py::tuple shape_tuple(const Shape& s) { return py::make_tuple(s.n, s.c, s.h, s.w); }

Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() < 1 || a.ndim() > 4) throw ShapeError("expected an array with 1 to 4 dimensions");
  int dims[4] = {1, 1, 1, 1};
  for (py::ssize_t i = 0; i < a.ndim(); ++i) dims[4 - a.ndim() + i] = static_cast<int>(a.shape(i));
  Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]}, 0.0f);
  std::memcpy(t.data().data(), a.data(), t.data().size_bytes());
  return t;
}

py::array_t<float> to_array(const Tensor& t) {
  const Shape s = t.shape();
  py::array_t<float> a({s.n, s.c, s.h, s.w});
  std::memcpy(a.mutable_data(), t.data().data(), t.data().size_bytes());
  return a;
}

class Model {
 public:
  Model(const std::filesystem::path& path, int threads)
      : loaded_(load_model(path, default_preset())),
        exec_(build_regseg(loaded_.preset), loaded_.container.tensors,
              ExecOptions{threads, false}) {}

  py::array_t<float> forward(const FloatArray& x) const {
    if (x.ndim() != 4) throw ShapeError("forward expects an NCHW array");
    const Tensor in = to_tensor(x);
    Tensor out;
    {
      py::gil_scoped_release release;
      out = exec_.run(in);
    }
    return to_array(out);
  }

  const ArchitecturePreset& preset() const { return loaded_.preset; }

 private:
  LoadedModel loaded_;
  Executor exec_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "RegSeg engine bindings";

  auto base = py::register_exception<Error>(m, "RegsegError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<CorruptionError>(m, "CorruptionError", base.ptr());
  py::register_exception<BindingError>(m, "BindingError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<SpecError>(m, "SpecError", base.ptr());
  py::register_exception<SyntaxError>(m, "ScheduleSyntaxError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("CONTAINER_MAGIC") = py::bytes(std::string(kContainerMagic));
  m.attr("CONTAINER_VERSION") = kContainerVersion;
  m.attr("CONTAINER_ALIGNMENT") = kContainerAlignment;

  m.def("preset_names", &preset_names);

  m.def(
      "param_slots",
      [](const std::string& preset, std::optional<std::string> schedule,
         std::optional<int> classes) {
        py::list out;
        for (const ParamSlot& s : build_regseg(make_preset(preset, schedule, classes)).param_slots()) {
          out.append(py::make_tuple(s.name, shape_tuple(s.shape), s.learnable));
        }
        return out;
      },
      py::arg("preset") = "regseg", py::arg("schedule") = py::none(),
      py::arg("classes") = py::none(),
      "(name, (n, c, h, w), learnable) for every parameter slot, in graph order");

  m.def(
      "model_metadata",
      [](const std::string& preset, std::optional<std::string> schedule,
         std::optional<int> classes) {
        return model_metadata(make_preset(preset, schedule, classes));
      },
      py::arg("preset") = "regseg", py::arg("schedule") = py::none(),
      py::arg("classes") = py::none());

  m.def(
      "count_params",
      [](const std::string& preset, std::optional<std::string> schedule,
         std::optional<int> classes) {
        return count_params(build_regseg(make_preset(preset, schedule, classes)));
      },
      py::arg("preset") = "regseg", py::arg("schedule") = py::none(),
      py::arg("classes") = py::none());

  m.def(
      "count_macs",
      [](int height, int width, const std::string& preset) {
        return count_macs(build_regseg(preset_by_name(preset)), height, width).macs;
      },
      py::arg("height") = 1024, py::arg("width") = 2048, py::arg("preset") = "regseg");

  m.def(
      "field_of_view",
      [](const std::string& schedule) {
        return analyze_graph_fov(build_backbone(parse_schedule(schedule))).field_of_view();
      },
      py::arg("schedule"));

  m.def(
      "read_container",
      [](const std::filesystem::path& path) {
        const Container c = read_container(path);
        py::dict tensors;
        for (const auto& [name, t] : c.tensors) tensors[py::str(name)] = to_array(t);
        return py::make_tuple(c.metadata, tensors);
      },
      py::arg("path"), "(metadata, {name: float32 array of shape (n, c, h, w)})");

  m.def(
      "serialize_container",
      [](const std::map<std::string, FloatArray>& tensors, const Metadata& metadata) {
        WeightMap w;
        for (const auto& [name, a] : tensors) w.emplace(name, to_tensor(a));
        return py::bytes(serialize_container(w, metadata));
      },
      py::arg("tensors"), py::arg("metadata") = Metadata{});

  m.def(
      "unresolved_slots",
      [](const std::filesystem::path& path, const std::string& preset) {
        const LoadedModel lm = load_model(path, preset_by_name(preset));
        return unresolved_slots(build_regseg(lm.preset), lm.container.tensors);
      },
      py::arg("path"), py::arg("preset") = "regseg");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&, int>(), py::arg("path"),
           py::arg("threads") = 1)
      .def("forward", &Model::forward, py::arg("x"), "NCHW float32 image batch -> logits")
      .def_property_readonly("preset", [](const Model& x) { return x.preset().name; })
      .def_property_readonly("schedule", [](const Model& x) { return x.preset().schedule; })
      .def_property_readonly("num_classes", [](const Model& x) { return x.preset().num_classes; });
}
