#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gengan/adversary.hpp"
#include "gengan/corpus.hpp"
#include "gengan/error.hpp"
#include "gengan/frontend.hpp"
#include "gengan/gan.hpp"
#include "gengan/metrics.hpp"
#include "gengan/report.hpp"
#include "gengan/trainer.hpp"

namespace py = pybind11;
using namespace gengan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Waveform to_waveform(const Array& samples, int sample_rate) {
  if (samples.ndim() != 1) throw InvalidInput("expected a one-dimensional sample array");
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(samples.data(), samples.data() + samples.size());
  return w;
}

Array from_vector(const std::vector<double>& v) {
  Array a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

Array mel_to_array(const MelSpectrogram& m) {
  Array a({m.n_bands, m.n_frames});
  std::copy(m.values.begin(), m.values.end(), a.mutable_data());
  return a;
}

MelSpectrogram array_to_mel(const Array& a) {
  if (a.ndim() != 2) throw InvalidInput("expected a (bands, frames) array");
  MelSpectrogram m;
  m.n_bands = static_cast<int>(a.shape(0));
  m.n_frames = static_cast<int>(a.shape(1));
  m.values.assign(a.data(), a.data() + a.size());
  validate(m);
  return m;
}

py::dict loss_dict(const LossBreakdown& l) {
  py::dict d;
  d["distortion"] = l.distortion;
  d["adversarial"] = l.adversarial;
  d["epsilon"] = l.epsilon;
  d["total"] = l.total;
  d["real_term"] = l.real_term;
  d["fake_term"] = l.fake_term;
  return d;
}

py::dict record_dict(const UtteranceRecord& r) {
  py::dict d;
  d["audio_path"] = r.audio_path.string();
  d["speaker_id"] = r.speaker_id;
  d["gender"] = std::string(1, gender_code(r.gender));
  d["transcript"] = r.transcript;
  d["split"] = to_string(r.split);
  return d;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["label"] = r.label;
  d["mode"] = r.mode;
  d["EER"] = r.eer;
  d["eer"] = r.eer_norm;
  d["GR"] = r.gr;
  d["gr"] = r.gr_norm;
  d["WER"] = r.wer;
  d["A_w"] = r.word_accuracy;
  d["utterances"] = r.utterances;
  d["trials"] = r.trials;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gender-ambiguous voice transformation and privacy metrics";

  auto base = py::register_exception<Error>(m, "GenganError", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<MissingAsset>(m, "MissingAsset", PyExc_FileNotFoundError);
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  (void)base;

  m.attr("SAMPLE_RATE") = kSampleRate;

  // frontend
  m.def("mel_spectrogram", [](const Array& x, int sr) { return mel_to_array(mel_spectrogram(to_waveform(x, sr))); },
        py::arg("samples"), py::arg("sample_rate") = kSampleRate,
        "Normalized (80, T) mel-spectrogram of a mono waveform.");
  m.def("invert_mel", [](const Array& mel, int iterations) { return from_vector(invert_mel(array_to_mel(mel), iterations).samples); },
        py::arg("mel"), py::arg("iterations") = 64);
  m.def("band_centers", [](int n_bands) {
    const FrontendConfig fe;
    return design_filterbank(fe.sample_rate, fe.fft_size, n_bands, fe.f_min, fe.f_max).band_centers;
  }, py::arg("n_bands") = 80);
  m.def("read_wav", [](const std::filesystem::path& p) { return from_vector(read_wav(p).samples); });
  m.def("write_wav", [](const std::filesystem::path& p, const Array& x) { write_wav(p, to_waveform(x, kSampleRate)); });

  // corpus
  m.def("build_corpus", [](const std::filesystem::path& out, int speakers, int utterances, int vocabulary, std::uint64_t seed) {
    CorpusConfig c;
    c.n_speakers = speakers;
    c.utterances_per_speaker = utterances;
    c.vocabulary_size = vocabulary;
    c.seed = seed;
    py::list l;
    for (const auto& r : build_corpus(c, out)) l.append(record_dict(r));
    return l;
  }, py::arg("out_dir"), py::arg("n_speakers") = 20, py::arg("utterances_per_speaker") = 30,
        py::arg("vocabulary_size") = 16, py::arg("seed") = 7);
  m.def("load_manifest", [](const std::filesystem::path& p) {
    py::list l;
    for (const auto& r : load_manifest(p)) l.append(record_dict(r));
    return l;
  });

  // gan-core
  m.def("sample_soft_labels", [](std::size_t n, double mean, double variance, std::uint64_t seed) {
    const auto s = sample_soft_labels(n, mean, variance, seed);
    return py::make_tuple(from_vector(s.values), from_vector(s.raw));
  }, py::arg("n"), py::arg("mean") = 0.5, py::arg("variance") = 0.05, py::arg("seed") = 0);
  m.def("generator_loss", [](const Array& mel, const Array& mel_prime, double target, double y_f, double epsilon) {
    if (mel.size() != mel_prime.size()) throw InvalidInput("spectrogram shapes differ");
    return loss_dict(generator_loss({mel.data(), static_cast<std::size_t>(mel.size())},
                                    {mel_prime.data(), static_cast<std::size_t>(mel_prime.size())}, target, y_f, epsilon));
  }, py::arg("mel"), py::arg("mel_prime"), py::arg("target"), py::arg("y_f"), py::arg("epsilon"));
  m.def("discriminator_loss", [](double y, double y_r, double y_n, double y_f) {
    return loss_dict(discriminator_loss(y, y_r, y_n, y_f));
  }, py::arg("y"), py::arg("y_r"), py::arg("y_n"), py::arg("y_f"));

  // trainer
  m.def("train", [](const std::filesystem::path& manifest, const std::filesystem::path& out_dir, const std::string& config) {
    TrainOptions o;
    o.checkpoint_dir = out_dir;
    TrainState s;
    {
      py::gil_scoped_release release;
      s = train(parse_train_config(config), load_manifest(manifest), o);
    }
    py::list hist;
    for (const auto& h : s.history) {
      py::dict d;
      d["L_G"] = h.generator;
      d["L_D"] = h.discriminator;
      d["L_d"] = h.distortion;
      d["L_a"] = h.adversarial;
      hist.append(d);
    }
    return hist;
  }, py::arg("manifest"), py::arg("out_dir"), py::arg("config") = "",
        "Train from a manifest; `config` is key=value text. Returns per-epoch losses.");
  m.def("transform", [](const Array& x, const std::filesystem::path& checkpoint, std::uint64_t seed) {
    const Waveform w = to_waveform(x, kSampleRate);
    Waveform y;
    {
      py::gil_scoped_release release;
      y = transform(w, checkpoint, seed);
    }
    return from_vector(y.samples);
  }, py::arg("samples"), py::arg("checkpoint"), py::arg("seed") = 0);

  // attackers and metrics
  m.def("train_attackers", [](const std::filesystem::path& manifest, const std::filesystem::path& out, std::uint64_t seed) {
    AttackerConfig c;
    c.seed = seed;
    py::gil_scoped_release release;
    save_attackers(out, train_attackers(load_manifest(manifest), c));
  }, py::arg("manifest"), py::arg("out"), py::arg("seed") = 11);
  m.def("evaluate", [](const std::filesystem::path& manifest, const std::filesystem::path& attackers,
                       const std::string& mode, const std::filesystem::path& checkpoint, std::uint64_t seed) {
    EvalRequest req;
    req.mode = parse_eval_mode(mode);
    req.manifest = manifest;
    req.attackers = attackers;
    req.checkpoint = checkpoint;
    req.seed = seed;
    MetricsReport r;
    {
      py::gil_scoped_release release;
      r = evaluate(req);
    }
    return report_dict(r);
  }, py::arg("manifest"), py::arg("attackers"), py::arg("mode") = "gengan", py::arg("checkpoint") = "",
        py::arg("seed") = 0);
  m.def("compute_eer", [](const std::vector<double>& scores, const std::vector<bool>& targets) {
    if (scores.size() != targets.size()) throw InvalidInput("one label per score required");
    std::vector<ScoredTrial> t;
    for (std::size_t i = 0; i < scores.size(); ++i) t.push_back({scores[i], targets[i]});
    return compute_eer(t);
  }, py::arg("scores"), py::arg("targets"));
  m.def("normalized_eer", &normalized_eer);
  m.def("normalized_gr", &normalized_gr);
  m.def("word_error_rate", &word_error_rate, py::arg("reference"), py::arg("hypothesis"));
  m.def("word_accuracy", [](double wer) { return word_accuracy(wer).value; });
  m.def("format_table", [](const std::vector<py::dict>& reports) {
    std::vector<MetricsReport> rs;
    for (const auto& d : reports) {
      MetricsReport r;
      r.label = d.contains("label") ? d["label"].cast<std::string>() : "";
      r.eer = d["EER"].cast<double>();
      r.gr = d["GR"].cast<double>();
      r.wer = d["WER"].cast<double>();
      r.derive();
      rs.push_back(r);
    }
    return format_table(rs);
  });
}
