// pybind11 surface for the main library operations: melspectrograms, the
// CNN feature extractor, the SVM, detection, MIDI pedal segmentation and the
// toy synthesizer. Errors surface as RuntimeError (all library exceptions
// derive from std::runtime_error); DataError and ConfigError map to
// ValueError for more natural Python handling.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pedalnet/dsp.hpp"
#include "pedalnet/errors.hpp"
#include "pedalnet/metrics.hpp"
#include "pedalnet/midi.hpp"
#include "pedalnet/network.hpp"
#include "pedalnet/pipeline.hpp"
#include "pedalnet/signal.hpp"
#include "pedalnet/svm.hpp"
#include "pedalnet/synth.hpp"
#include "pedalnet/transfer.hpp"

namespace py = pybind11;
using namespace pedalnet;

namespace {

Signal make_signal(const std::vector<double>& samples, double sample_rate) {
    Signal s;
    s.samples = samples;
    s.sample_rate = sample_rate;
    return s;
}

std::vector<std::vector<double>> mel_rows(const dsp::MelSpectrogram& mel) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(mel.n_mels));
    for (int m = 0; m < mel.n_mels; ++m)
        rows[static_cast<std::size_t>(m)] =
            std::vector<double>(mel.values.begin() + static_cast<std::ptrdiff_t>(m) * mel.n_frames,
                                mel.values.begin() + static_cast<std::ptrdiff_t>(m + 1) * mel.n_frames);
    return rows;
}

py::dict timeline_dict(const pipeline::DetectionTimeline& tl) {
    py::dict d;
    d["recording_id"] = tl.recording_id;
    d["times"] = tl.times;
    d["labels"] = tl.labels;
    d["scores"] = tl.scores;
    return d;
}

}  // namespace

PYBIND11_MODULE(_pedalnet, m) {
    m.doc() = "Frame-wise piano sustain-pedal detection";
    m.attr("__version__") = "0.1.0";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const DataError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<nn::Network<float>>(m, "Network")
        .def_property_readonly("channels",
                               [](const nn::Network<float>& n) { return n.config.channels(); })
        .def_property_readonly("n_layers",
                               [](const nn::Network<float>& n) { return n.config.n_layers; })
        .def("save", [](const nn::Network<float>& n, const std::string& path) {
            nn::save_network(path, n);
        });

    m.def("make_network_multi",
          [](std::uint64_t seed) { return nn::make_network<float>(nn::NetworkConfig::multi(), seed); },
          py::arg("seed") = 0);
    m.def("make_network_single",
          [](int channels, int kh, int kw, int n_layers, std::uint64_t seed) {
              return nn::make_network<float>(nn::NetworkConfig::single(channels, kh, kw, n_layers),
                                             seed);
          },
          py::arg("channels"), py::arg("kh"), py::arg("kw"), py::arg("n_layers"),
          py::arg("seed") = 0);
    m.def("load_network", &nn::load_network, py::arg("path"));

    m.def("melspectrogram",
          [](const std::vector<double>& samples, double sample_rate) {
              return mel_rows(dsp::melspectrogram(make_signal(samples, sample_rate), {}));
          },
          py::arg("samples"), py::arg("sample_rate") = 44100.0,
          "128-band log-mel spectrogram, rows = mel bands");

    m.def("extract_features",
          [](const nn::Network<float>& net, const std::vector<double>& samples,
             double sample_rate) {
              const Signal s = make_signal(samples, sample_rate);
              return transfer::extract_features(net, dsp::melspectrogram(fit_to_duration(s, 2.0), {}));
          },
          py::arg("network"), py::arg("samples"), py::arg("sample_rate") = 44100.0,
          "channels x n_layers pooled-activation feature vector for one excerpt");

    m.def("extract_frame_features",
          [](const nn::Network<float>& net, const std::vector<double>& samples, double sample_rate,
             const std::string& recording_id) {
              const transfer::FrameFeatures ff = transfer::extract_frame_features(
                  net, make_signal(samples, sample_rate), recording_id);
              py::dict d;
              d["recording_id"] = ff.recording_id;
              d["times"] = ff.frame_times;
              d["features"] = ff.features;
              d["direct_p1"] = ff.direct_p1;
              return d;
          },
          py::arg("network"), py::arg("samples"), py::arg("sample_rate") = 44100.0,
          py::arg("recording_id") = "");

    py::class_<svm::SvmModel>(m, "SvmModel")
        .def_property_readonly("gamma", [](const svm::SvmModel& s) { return s.gamma; })
        .def_property_readonly("C", [](const svm::SvmModel& s) { return s.C; })
        .def_property_readonly("n_support",
                               [](const svm::SvmModel& s) { return s.support_vectors.size(); })
        .def("predict",
             [](const svm::SvmModel& s, const std::vector<double>& feature) {
                 const svm::Prediction p = svm::predict(s, feature);
                 return py::make_tuple(p.label, p.decision);
             },
             py::arg("feature"), "returns (label, decision_value)")
        .def("save", [](const svm::SvmModel& s, const std::string& path) { svm::save_svm(path, s); });

    m.def("train_svm",
          [](const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
             double C, double gamma) { return svm::train_svm(features, labels, C, gamma); },
          py::arg("features"), py::arg("labels"), py::arg("C"), py::arg("gamma"),
          "RBF-SVM on +-1 labels; features are standardized internally");
    m.def("load_svm", &svm::load_svm, py::arg("path"));
    m.def("grid_search",
          [](const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
             double inner_val_fraction, std::uint64_t seed) {
              const svm::GridResult r = svm::grid_search(
                  features, labels, svm::GridSpec::standard(static_cast<int>(features.at(0).size())),
                  inner_val_fraction, seed);
              return py::make_tuple(r.best_gamma, r.best_C, r.best_score);
          },
          py::arg("features"), py::arg("labels"), py::arg("inner_val_fraction") = 0.2,
          py::arg("seed") = 0, "returns (gamma, C, micro_f1) over the standard grid");

    m.def("detect",
          [](const std::vector<double>& samples, double sample_rate, const nn::Network<float>& net,
             const svm::SvmModel* model, const std::string& method, int median_filter,
             const std::string& recording_id) {
              pipeline::DetectOptions opt;
              opt.median_filter = median_filter;
              return timeline_dict(pipeline::detect(make_signal(samples, sample_rate), net, model,
                                                    pipeline::method_from_string(method),
                                                    recording_id, opt));
          },
          py::arg("samples"), py::arg("sample_rate"), py::arg("network"),
          py::arg("svm") = static_cast<const svm::SvmModel*>(nullptr), py::arg("method") = "direct",
          py::arg("median_filter") = 0, py::arg("recording_id") = "",
          "frame-wise pedal timeline; method is direct, finetune or svm");

    m.def("pedal_segments",
          [](const py::bytes& smf) {
              const std::string raw = smf;
              const midi::MidiPerformance perf = midi::parse_midi(
                  std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()),
                                                raw.size()));
              std::vector<std::pair<double, double>> out;
              for (const midi::PedalSegment& s : midi::pedal_segments(perf))
                  out.emplace_back(s.onset_s, s.offset_s);
              return out;
          },
          py::arg("smf"), "CC64 pedal segments [(onset_s, offset_s), ...] from SMF bytes");

    m.def("strip_sustain",
          [](const py::bytes& smf) {
              const std::string raw = smf;
              const std::vector<std::uint8_t> out = midi::write_smf(midi::strip_sustain_smf(
                  midi::read_smf(std::span<const std::uint8_t>(
                      reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()))));
              return py::bytes(reinterpret_cast<const char*>(out.data()), out.size());
          },
          py::arg("smf"), "SMF bytes with every CC64 event removed");

    m.def("toy_passage",
          [](const std::string& id, double duration_s, std::uint64_t seed, std::uint64_t salt) {
              synth::SynthConfig cfg;
              cfg.seed = seed;
              const synth::ToyPassage p = synth::generate_passage(id, duration_s, cfg, salt);
              std::vector<std::pair<double, double>> truth;
              for (const midi::PedalSegment& s : p.truth) truth.emplace_back(s.onset_s, s.offset_s);
              return py::make_tuple(p.audio.samples, p.audio.sample_rate, truth);
          },
          py::arg("id"), py::arg("duration_s"), py::arg("seed") = 0, py::arg("salt") = 0,
          "deterministic toy recording: (samples, sample_rate, truth_segments)");

    m.def("frame_ground_truth",
          [](const std::vector<std::pair<double, double>>& segments,
             const std::vector<double>& times) {
              std::vector<midi::PedalSegment> segs;
              for (const auto& [on, off] : segments) segs.push_back({on, off});
              return metrics::frame_ground_truth(segs, times);
          },
          py::arg("segments"), py::arg("times"));
    m.def("f_measure", &metrics::f_measure, py::arg("precision"), py::arg("recall"));
}
