#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "llmcodec/cli.hpp"
#include "llmcodec/error.hpp"
#include "llmcodec/icl.hpp"
#include "llmcodec/quantizer.hpp"
#include "llmcodec/signal.hpp"
#include "llmcodec/train.hpp"

namespace py = pybind11;
using namespace llmcodec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

AudioBuffer to_audio(const Array& samples, int sample_rate) {
    if (samples.ndim() != 1) throw Error(ErrorCode::ShapeMismatch, "expected a 1-D sample array");
    AudioBuffer a;
    a.sample_rate = sample_rate;
    a.samples.assign(samples.data(), samples.data() + samples.size());
    return a;
}

Array to_array(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Array to_array(const FeatureGrid& g) {
    Array out({static_cast<py::ssize_t>(g.frames()), static_cast<py::ssize_t>(g.dim())});
    std::copy(g.data().begin(), g.data().end(), out.mutable_data());
    return out;
}

class Codec {
public:
    explicit Codec(const std::string& config, const std::string& checkpoint)
        : cfg_(config.empty() ? cli::RunConfig{} : cli::load_run_config(config)),
          state_(cli::make_train_state(cfg_)) {
        if (!checkpoint.empty()) nn::load_checkpoint(state_, checkpoint);
    }

    QuantizedAudio encode(const Array& samples, int sample_rate) const {
        return state_.model.quantize_audio(to_audio(samples, sample_rate));
    }
    Array decode(const QuantizedAudio& q) const { return to_array(state_.model.reconstruct(q).samples); }
    std::string render(const QuantizedAudio& q, const std::string& layers) const {
        const auto& books = state_.model.books();
        return render_tokens(q, books, parse_layer_selection(layers, books.size()));
    }
    QuantizedAudio parse(const std::string& text, const std::string& layers) const {
        const auto& books = state_.model.books();
        return parse_tokens(text, books, parse_layer_selection(layers, books.size()));
    }
    std::uint64_t digest() const { return config_digest(state_.model.config(), state_.model.books()); }
    std::size_t layer_count() const { return state_.model.books().size(); }
    std::size_t total_downsample() const { return cfg_.codec.total_downsample(); }
    std::vector<std::uint64_t> entry_hashes() const {
        std::vector<std::uint64_t> out;
        for (const auto& b : state_.model.books()) out.push_back(b.entry_hash());
        return out;
    }

private:
    cli::RunConfig cfg_;
    nn::TrainState state_;
};

}  // namespace

PYBIND11_MODULE(_llmcodec, m) {
    m.doc() = "Audio codec with frozen language-model vocabularies";

    static py::handle error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object inst = error_type(e.what());
            inst.attr("code") = std::string(to_string(e.code()));
            inst.attr("detail") = e.detail();
            PyErr_SetObject(error_type.ptr(), inst.ptr());
        }
    });

    m.def("tokens_per_second", [](int sample_rate, std::size_t total_downsample,
                                  const std::vector<std::size_t>& vq_strides) {
        return tokens_per_second(sample_rate, total_downsample, vq_strides);
    }, py::arg("sample_rate"), py::arg("total_downsample"), py::arg("vq_strides"));

    m.def("load_wav", [](const std::filesystem::path& path) {
        const AudioBuffer a = load_wav(path);
        return py::make_tuple(to_array(a.samples), a.sample_rate);
    }, py::arg("path"));
    m.def("save_wav", [](const std::filesystem::path& path, const Array& samples, int sample_rate) {
        save_wav(to_audio(samples, sample_rate), path);
    }, py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000);
    m.def("snr_db", [](const Array& ref, const Array& est) {
        return snr_db(to_audio(ref, 16000), to_audio(est, 16000));
    }, py::arg("ref"), py::arg("est"));
    m.def("stft_magnitude", [](const Array& samples, std::size_t n_fft, std::size_t hop, const std::string& window) {
        SpectrogramConfig cfg;
        cfg.n_fft = n_fft;
        cfg.hop = hop;
        if (window == "hann") cfg.window = Window::Hann;
        else if (window == "rectangular") cfg.window = Window::Rectangular;
        else throw Error(ErrorCode::InvalidArgument, "unknown window '" + window + "'", window);
        cfg.validate();
        return to_array(stft_magnitude(to_audio(samples, 16000), cfg));
    }, py::arg("samples"), py::arg("n_fft") = 512, py::arg("hop") = 128, py::arg("window") = "hann");

    py::class_<QuantizedAudio>(m, "TokenStream")
        .def(py::init<>())
        .def_readwrite("layers", &QuantizedAudio::layers)
        .def_readwrite("frame_count", &QuantizedAudio::frame_count)
        .def_readwrite("strides", &QuantizedAudio::strides)
        .def_readwrite("config_digest", &QuantizedAudio::config_digest)
        .def("token_count", &QuantizedAudio::token_count)
        .def("save", [](const QuantizedAudio& q, const std::filesystem::path& p) { save_token_stream(q, p); })
        .def_static("load", [](const std::filesystem::path& p) { return load_token_stream(p); })
        .def(py::self == py::self);

    py::class_<Codec>(m, "Codec")
        .def(py::init<const std::string&, const std::string&>(), py::arg("config") = "", py::arg("checkpoint") = "")
        .def("encode", &Codec::encode, py::arg("samples"), py::arg("sample_rate") = 16000)
        .def("decode", &Codec::decode, py::arg("stream"))
        .def("render", &Codec::render, py::arg("stream"), py::arg("layers") = "semantic")
        .def("parse", &Codec::parse, py::arg("text"), py::arg("layers") = "semantic")
        .def_property_readonly("config_digest", &Codec::digest)
        .def_property_readonly("layer_count", &Codec::layer_count)
        .def_property_readonly("total_downsample", &Codec::total_downsample)
        .def("entry_hashes", &Codec::entry_hashes);

    py::enum_<icl::TaskKind>(m, "TaskKind")
        .value("CLASSIFICATION", icl::TaskKind::Classification)
        .value("GENERATION", icl::TaskKind::Generation);

    py::class_<icl::Demonstration>(m, "Demonstration")
        .def(py::init<>())
        .def(py::init([](std::string input, std::string output) {
            return icl::Demonstration{std::move(input), std::move(output)};
        }), py::arg("input"), py::arg("output"))
        .def_readwrite("input", &icl::Demonstration::input)
        .def_readwrite("output", &icl::Demonstration::output);

    py::class_<icl::Episode>(m, "Episode")
        .def(py::init<>())
        .def_readwrite("task_kind", &icl::Episode::task_kind)
        .def_readwrite("induction", &icl::Episode::induction)
        .def_readwrite("label_set", &icl::Episode::label_set)
        .def_readwrite("demonstrations", &icl::Episode::demonstrations)
        .def_readwrite("repeats", &icl::Episode::repeats)
        .def_readwrite("query", &icl::Episode::query)
        .def_readwrite("answer", &icl::Episode::answer)
        .def_readwrite("layer_selection", &icl::Episode::layer_selection);

    m.def("build_prompt", &icl::build_prompt, py::arg("episode"));
    m.def("load_episodes", &icl::load_episodes, py::arg("path"));
    m.def("save_episodes", &icl::save_episodes, py::arg("episodes"), py::arg("path"));
    m.def("extract_label", &icl::extract_label, py::arg("completion"), py::arg("label_set"));

    m.def("run_cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "llmcodec");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
