#include "biomoe/augmentation.hpp"
#include "biomoe/cli.hpp"
#include "biomoe/container.hpp"
#include "biomoe/error.hpp"
#include "biomoe/fusion.hpp"
#include "biomoe/model.hpp"
#include "biomoe/representations.hpp"
#include "biomoe/signal.hpp"
#include "biomoe/train.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <complex>
#include <sstream>

namespace py = pybind11;
using namespace biomoe;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const Tensor& t)
{
    std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
    py::array_t<float> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor from_numpy(const FloatArray& a)
{
    Shape dims(a.shape(), a.shape() + a.ndim());
    return Tensor(dims, std::vector<float>(a.data(), a.data() + a.size()));
}

Signal make_signal(const DoubleArray& samples, double fs, const std::string& modality)
{
    if (samples.ndim() != 1)
        throw UsageError("samples must be one-dimensional");
    return Signal{.samples = std::vector<double>(samples.data(), samples.data() + samples.size()),
                  .sample_rate_hz = fs,
                  .modality = parse_modality(modality)};
}

py::array_t<std::uint8_t> image_to_numpy(const Image& img)
{
    py::array_t<std::uint8_t> out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width),
                                   py::ssize_t{3}});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

Image image_from_numpy(const ByteArray& a)
{
    if (a.ndim() != 3 || a.shape(2) != 3)
        throw ShapeError("image must be an [h, w, 3] uint8 array");
    Image img(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
    return img;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Biosignal image representations, dual-encoder model and training math";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<UsageError>(m, "UsageError", base.ptr());
    py::register_exception<ProcessingError>(m, "ProcessingError", base.ptr());
    py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

    // signals and representations

    m.def(
        "apply_filter",
        [](const DoubleArray& x, double fs, const std::string& modality) {
            const Signal s = make_signal(x, fs, modality);
            const auto y = apply_filter(s, default_filter(s.modality)).samples;
            return py::array_t<double>(static_cast<py::ssize_t>(y.size()), y.data());
        },
        py::arg("samples"), py::arg("fs"), py::arg("modality"), "Zero-phase Butterworth filter for the modality.");

    m.def(
        "render",
        [](const DoubleArray& x, double fs, const std::string& modality, const std::string& kind, bool filter) {
            Signal s = make_signal(x, fs, modality);
            if (filter)
                s = apply_filter(s, default_filter(s.modality));
            return image_to_numpy(render_representation(s, parse_representation(kind)));
        },
        py::arg("samples"), py::arg("fs"), py::arg("modality"), py::arg("kind"), py::arg("filter") = true,
        "224x224x3 uint8 image of one representation.");

    m.def(
        "stft",
        [](const DoubleArray& x, double fs, std::size_t window_len, std::size_t hop, std::size_t fft_len) {
            const ComplexTensor c =
                stft(make_signal(x, fs, "OTHER"), StftConfig{.window_len = window_len, .hop = hop, .fft_len = fft_len});
            py::array_t<std::complex<float>> out({static_cast<py::ssize_t>(c.dim(0)), static_cast<py::ssize_t>(c.dim(1))});
            auto* dst = out.mutable_data();
            for (std::size_t i = 0; i < c.size(); ++i)
                dst[i] = {c.re()[i], c.im()[i]};
            return out;
        },
        py::arg("samples"), py::arg("fs"), py::arg("window_len") = 128, py::arg("hop") = 16, py::arg("fft_len") = 256,
        "Complex STFT [frames, fft_len/2+1] with a periodic Hann window.");

    m.def(
        "cwt_scalogram",
        [](const DoubleArray& x, double fs, std::size_t n_scales) {
            return py::make_tuple(to_numpy(cwt_scalogram(make_signal(x, fs, "OTHER"), n_scales)),
                                  cwt_center_frequencies(fs, n_scales));
        },
        py::arg("samples"), py::arg("fs"), py::arg("n_scales") = 112,
        "Morlet magnitude scalogram and its center frequencies (highest first).");

    m.def(
        "recurrence_matrix",
        [](const DoubleArray& x, double fs, std::size_t size) {
            return to_numpy(recurrence_matrix(make_signal(x, fs, "OTHER"), size));
        },
        py::arg("samples"), py::arg("fs") = 100.0, py::arg("size") = kImageSize);

    // model

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("n_classes", &ModelConfig::n_classes)
        .def_readwrite("enc1_dims", &ModelConfig::enc1_dims)
        .def_readwrite("enc1_depths", &ModelConfig::enc1_depths)
        .def_readwrite("enc1_mlp_ratios", &ModelConfig::enc1_mlp_ratios)
        .def_readwrite("enc2_dims", &ModelConfig::enc2_dims)
        .def_readwrite("enc2_heads", &ModelConfig::enc2_heads)
        .def_readwrite("enc2_depths", &ModelConfig::enc2_depths)
        .def_readwrite("enc2_ffn_ratios", &ModelConfig::enc2_ffn_ratios)
        .def("validate", &ModelConfig::validate);

    py::class_<WeightStore>(m, "WeightStore")
        .def(py::init<>())
        .def("__len__", &WeightStore::size)
        .def("__contains__", [](const WeightStore& w, const std::string& k) { return w.contains(k); })
        .def("__getitem__", [](const WeightStore& w, const std::string& k) { return to_numpy(w.get(k)); })
        .def("insert", [](WeightStore& w, std::string k, const FloatArray& a) { w.insert(std::move(k), from_numpy(a)); })
        .def("names",
             [](const WeightStore& w) {
                 std::vector<std::string> names;
                 for (const auto& [k, _] : w.entries())
                     names.push_back(k);
                 return names;
             })
        .def_property_readonly("element_count", &WeightStore::element_count);

    m.def("init_random", &init_random, py::arg("config") = ModelConfig{}, py::arg("seed") = 0);

    m.def(
        "forward",
        [](const ByteArray& image, const WeightStore& w, const ModelConfig& cfg) {
            ModelOutput out;
            const Image img = image_from_numpy(image);
            {
                py::gil_scoped_release release;
                out = model_forward(img, w, cfg);
            }
            py::dict d;
            d["z1"] = to_numpy(out.z1);
            d["z2"] = to_numpy(out.z2);
            d["fused"] = to_numpy(out.fused);
            d["probs"] = to_numpy(out.probs);
            return d;
        },
        py::arg("image"), py::arg("weights"), py::arg("config") = ModelConfig{},
        "Runs both encoders, the gated fusion and the classifier head.");

    auto counts = [](std::uint64_t e1, std::uint64_t e2, std::uint64_t f, std::uint64_t t) {
        py::dict d;
        d["encoder1"] = e1;
        d["encoder2"] = e2;
        d["fusion"] = f;
        d["total"] = t;
        return d;
    };
    m.def("count_params", [counts](const ModelConfig& c) {
        const auto p = count_params(c);
        return counts(p.enc1, p.enc2, p.fusion, p.total);
    }, py::arg("config") = ModelConfig{});
    m.def("count_flops", [counts](const ModelConfig& c) {
        const auto f = count_flops(c);
        return counts(f.enc1, f.enc2, f.fusion, f.total);
    }, py::arg("config") = ModelConfig{});

    m.def(
        "fuse",
        [](const std::vector<FloatArray>& parts, const std::string& method) {
            std::vector<Tensor> ts;
            for (const auto& p : parts)
                ts.push_back(from_numpy(p));
            return to_numpy(fuse(ts, parse_fusion_method(method)));
        },
        py::arg("embeddings"), py::arg("method") = "CONCAT");

    // weight container

    m.def("encode_container", [](const WeightStore& w) {
        const auto b = encode_container(w);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
    });
    m.def("decode_container", [](const py::bytes& data) {
        const std::string_view v = data;
        return decode_container({reinterpret_cast<const std::uint8_t*>(v.data()), v.size()});
    });
    m.def("save_container", &save_container, py::arg("path"), py::arg("weights"));
    m.def("load_container", &load_container, py::arg("path"));

    // training math

    m.def(
        "multitask_loss",
        [](const std::vector<double>& losses, const std::vector<double>& weights, const std::string& variant) {
            const auto r = multitask_loss(losses, weights, parse_loss_variant(variant));
            return py::make_tuple(r.value, r.grad);
        },
        py::arg("losses"), py::arg("weights"), py::arg("variant") = "as_written",
        "Returns (value, gradient with respect to the weights).");

    py::class_<ScheduleConfig>(m, "ScheduleConfig")
        .def(py::init<>())
        .def_static("for_steps", &ScheduleConfig::for_steps, py::arg("total_steps"))
        .def_readwrite("total_steps", &ScheduleConfig::total_steps)
        .def_readwrite("p_start", &ScheduleConfig::p_start)
        .def_readwrite("p_end", &ScheduleConfig::p_end)
        .def_readwrite("eps_start", &ScheduleConfig::eps_start)
        .def_readwrite("eps_end", &ScheduleConfig::eps_end)
        .def_readwrite("warmup", &ScheduleConfig::warmup)
        .def_readwrite("cooldown", &ScheduleConfig::cooldown)
        .def_readwrite("base_lr", &ScheduleConfig::base_lr)
        .def_readwrite("lr_floor", &ScheduleConfig::lr_floor)
        .def("validate", &ScheduleConfig::validate);

    m.def("dropout_rate", &dropout_rate, py::arg("t"), py::arg("config"));
    m.def("smoothing_eps", &smoothing_eps, py::arg("t"), py::arg("config"));
    m.def("cosine_lr", &cosine_lr, py::arg("t"), py::arg("config"));

    m.def(
        "macro_metrics",
        [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& cm) {
            if (cm.ndim() != 2 || cm.shape(0) != cm.shape(1))
                throw ShapeError("confusion matrix must be square");
            const auto n = static_cast<std::size_t>(cm.shape(0));
            const auto r = macro_metrics(ConfusionMatrix(n, std::vector<std::uint64_t>(cm.data(), cm.data() + cm.size())));
            py::dict d;
            d["accuracy"] = r.accuracy;
            d["precision"] = r.precision;
            d["f1"] = r.f1;
            d["recall_per_class"] = r.recall_per_class;
            d["precision_per_class"] = r.precision_per_class;
            d["f1_per_class"] = r.f1_per_class;
            return d;
        },
        py::arg("confusion"), "Rows are true classes, columns predictions.");

    m.def(
        "augment_image",
        [](const ByteArray& image, std::uint64_t seed, std::uint64_t index, std::uint64_t epoch) {
            return image_to_numpy(augment_image(image_from_numpy(image), seed, index, epoch));
        },
        py::arg("image"), py::arg("seed") = 0, py::arg("index") = 0, py::arg("epoch") = 0);

    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a command-line invocation in process; returns (exit code, stdout, stderr).");
}
