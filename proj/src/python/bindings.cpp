#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "fp8emu/config.hpp"
#include "fp8emu/kernels.hpp"
#include "fp8emu/tensor_io.hpp"
#include "fp8emu/train.hpp"

namespace py = pybind11;
using namespace fp8emu;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const FloatArray& arr) {
    Tensor t;
    t.shape.assign(arr.shape(), arr.shape() + arr.ndim());
    t.data.resize(static_cast<std::size_t>(arr.size()));
    std::memcpy(t.data.data(), arr.data(), sizeof(float) * t.data.size());
    return t;
}

py::array array_from_tensor(const Tensor& t) {
    py::array_t<float> arr(t.shape);
    std::memcpy(arr.mutable_data(), t.data.data(), sizeof(float) * t.data.size());
    return std::move(arr);
}

QuantConfig quant_config(const std::string& mode, std::uint64_t seed,
                         bool saturate) {
    QuantConfig cfg;
    cfg.mode = rounding_mode_from_string(mode);
    cfg.seed = seed;
    cfg.saturate_on_overflow = saturate;
    return cfg;
}

LossScaler::Options scaler_options(
    const std::string& kind, double scale, double backoff_factor,
    double growth_factor, std::int64_t growth_interval,
    const std::vector<std::pair<std::int64_t, double>>& schedule) {
    LossScaler::Options o;
    if (kind == "constant") {
        o.kind = LossScaler::Kind::Constant;
    } else if (kind == "dynamic-backoff") {
        o.kind = LossScaler::Kind::DynamicBackoff;
    } else {
        throw std::invalid_argument("unknown scaler kind: " + kind);
    }
    o.scale = scale;
    o.backoff_factor = backoff_factor;
    o.growth_factor = growth_factor;
    o.growth_interval = growth_interval;
    o.min_threshold_schedule = schedule;
    return o;
}

py::dict eval_row_dict(const nn::EvalRow& r) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["train_loss"] = r.train_loss;
    d["train_accuracy"] = r.train_accuracy;
    d["val_loss"] = r.val_loss;
    d["val_accuracy"] = r.val_accuracy;
    return d;
}

} // namespace

PYBIND11_MODULE(_fp8emu, m) {
    m.doc() = "Bit-exact FP8 (1-5-2) quantized training emulator";

    py::class_<QuantizedTensor>(m, "QuantizedTensor")
        .def_readonly("shape", &QuantizedTensor::shape)
        .def_property_readonly(
            "codes",
            [](const QuantizedTensor& q) {
                py::array_t<std::uint16_t> arr(q.shape);
                std::memcpy(arr.mutable_data(), q.codes.data(),
                            sizeof(std::uint16_t) * q.codes.size());
                return arr;
            })
        .def_property_readonly(
            "format", [](const QuantizedTensor& q) { return q.fmt.name; })
        .def_property_readonly(
            "mode", [](const QuantizedTensor& q) { return to_string(q.mode_used); })
        .def_readonly("overflow_count", &QuantizedTensor::overflow_count)
        .def_readonly("underflow_count", &QuantizedTensor::underflow_count)
        .def("__repr__", [](const QuantizedTensor& q) {
            std::string s = "QuantizedTensor(";
            s += q.fmt.name;
            s += ", shape=[";
            for (std::size_t i = 0; i < q.shape.size(); ++i)
                s += (i ? "," : "") + std::to_string(q.shape[i]);
            s += "])";
            return s;
        });

    py::class_<ScaleEvent>(m, "ScaleEvent")
        .def_readonly("iteration", &ScaleEvent::iteration)
        .def_property_readonly(
            "action", [](const ScaleEvent& e) { return to_string(e.action); })
        .def_readonly("scale_after", &ScaleEvent::scale_after);

    py::class_<LossScaler>(m, "LossScaler")
        .def(py::init([](const std::string& kind, double scale,
                         double backoff_factor, double growth_factor,
                         std::int64_t growth_interval,
                         const std::vector<std::pair<std::int64_t, double>>&
                             min_threshold_schedule) {
                 return LossScaler(scaler_options(kind, scale, backoff_factor,
                                                  growth_factor, growth_interval,
                                                  min_threshold_schedule));
             }),
             py::arg("kind") = "constant", py::arg("scale") = 1.0,
             py::arg("backoff_factor") = 0.5, py::arg("growth_factor") = 2.0,
             py::arg("growth_interval") = 2000,
             py::arg("min_threshold_schedule") =
                 std::vector<std::pair<std::int64_t, double>>{})
        .def_property_readonly("scale", &LossScaler::scale)
        .def("min_threshold", &LossScaler::min_threshold, py::arg("iteration"))
        .def("step", &LossScaler::step, py::arg("grads_finite"),
             py::arg("iteration"))
        .def("unscale",
             [](const LossScaler& s, const FloatArray& g) {
                 return array_from_tensor(s.unscale_gradients(tensor_from_array(g)));
             },
             py::arg("gradients"));

    m.def("range_report", &range_report);

    m.def(
        "encode",
        [](double x, const std::string& fmt, const std::string& mode,
           std::uint64_t seed, bool saturate) {
            const RoundingMode rm = rounding_mode_from_string(mode);
            LfsrStream rng = LfsrStream::split(seed, 0);
            const EncodeResult r =
                encode(x, format_from_string(fmt), rm,
                       rm == RoundingMode::Stochastic ? &rng : nullptr, saturate);
            return py::make_tuple(r.code, r.overflowed, r.underflowed_to_zero);
        },
        py::arg("x"), py::arg("fmt") = "fp8", py::arg("mode") = "nearest-even",
        py::arg("seed") = 1, py::arg("saturate") = false,
        "Round x to a code; returns (code, overflowed, underflowed_to_zero).");

    m.def(
        "decode",
        [](std::uint32_t code, const std::string& fmt) {
            return decode(code, format_from_string(fmt));
        },
        py::arg("code"), py::arg("fmt") = "fp8");

    m.def(
        "ulp",
        [](double x, const std::string& fmt) {
            return ulp(x, format_from_string(fmt));
        },
        py::arg("x"), py::arg("fmt") = "fp8");

    m.def(
        "quantize",
        [](const FloatArray& arr, const std::string& fmt, const std::string& mode,
           std::uint64_t seed, bool saturate) {
            return quantize(tensor_from_array(arr), format_from_string(fmt),
                            quant_config(mode, seed, saturate));
        },
        py::arg("array"), py::arg("fmt") = "fp8",
        py::arg("mode") = "nearest-even", py::arg("seed") = 1,
        py::arg("saturate") = false);

    m.def(
        "dequantize",
        [](const QuantizedTensor& q) { return array_from_tensor(dequantize(q)); },
        py::arg("tensor"));

    m.def(
        "gemm",
        [](const QuantizedTensor& a, const QuantizedTensor& b) {
            return array_from_tensor(gemm_fp8(a, b));
        },
        py::arg("a"), py::arg("b"),
        "Quantized-operand matmul with FP32 accumulation; returns FP32.");

    m.def(
        "conv2d",
        [](const QuantizedTensor& x, const QuantizedTensor& w, std::int64_t stride,
           std::int64_t pad) {
            return array_from_tensor(conv2d_fp8(x, w, ConvGeometry{stride, pad}));
        },
        py::arg("x"), py::arg("w"), py::arg("stride") = 1, py::arg("pad") = 0,
        "Direct NCHW convolution over quantized operands; returns FP32.");

    m.def(
        "save_tensor",
        [](const std::string& path, const FloatArray& arr) {
            save_tensor(path, tensor_from_array(arr));
        },
        py::arg("path"), py::arg("array"));
    m.def(
        "save_quantized",
        [](const std::string& path, const QuantizedTensor& q) {
            save_tensor(path, q);
        },
        py::arg("path"), py::arg("tensor"));
    m.def(
        "load_tensor",
        [](const std::string& path) {
            return array_from_tensor(load_tensor_fp32(path));
        },
        py::arg("path"));
    m.def("load_quantized", &load_tensor_codes, py::arg("path"));

    m.def(
        "run_experiment",
        [](const std::string& config_text, const std::string& output_dir) {
            nn::ExperimentConfig cfg = nn::parse_config_text(config_text);
            if (!output_dir.empty()) cfg.output_dir = output_dir;
            const nn::RunArtifacts art = nn::run_experiment(cfg);
            py::dict d;
            d["dir"] = art.dir;
            d["diverged"] = art.result.diverged;
            d["total_iterations"] = art.result.total_iterations;
            py::list evals;
            for (const nn::EvalRow& r : art.result.evals)
                evals.append(eval_row_dict(r));
            d["evals"] = evals;
            return d;
        },
        py::arg("config_text"), py::arg("output_dir") = "",
        "Parse a config, train, and write the run artifacts; returns a summary.");
}
