#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <json.hpp>

#include "framec/errors.hpp"
#include "framec/pipeline.hpp"

namespace py = pybind11;
using namespace framec;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

pipeline::ExperimentConfig parse_config(const std::string& text) {
  return pipeline::config_from_json(text.empty() ? json::object() : json::parse(text));
}

io::Recording to_recording(const FloatArray& samples, double fs) {
  if (samples.ndim() != 2) throw DataError("samples must be a 2-D array (channels, samples)");
  io::Recording r;
  r.meta.recording_id = "array";
  r.meta.well_id = "A1";
  r.meta.sampling_rate_hz = fs;
  r.meta.n_channels = static_cast<int>(samples.shape(0));
  r.meta.n_samples = samples.shape(1);
  r.meta.duration_s = static_cast<double>(r.meta.n_samples) / fs;
  r.samples.assign(samples.data(), samples.data() + samples.size());
  return r;
}

FloatArray to_array(const io::Recording& r) {
  FloatArray out({static_cast<py::ssize_t>(r.meta.n_channels), static_cast<py::ssize_t>(r.meta.n_samples)});
  std::copy(r.samples.begin(), r.samples.end(), out.mutable_data());
  return out;
}

spikes::Waveform to_waveform(const FloatArray& w) {
  if (w.ndim() != 1 || w.shape(0) != spikes::kWaveformLength)
    throw DataError("waveform must have " + std::to_string(spikes::kWaveformLength) + " samples");
  spikes::Waveform out;
  std::copy(w.data(), w.data() + spikes::kWaveformLength, out.begin());
  return out;
}

std::string table_json(const io::Table& t) { return io::to_json(t); }

py::dict detect(const FloatArray& filtered, double fs, const std::string& cfg_text) {
  const auto cfg = parse_config(cfg_text);
  auto rec = std::make_shared<const io::Recording>(to_recording(filtered, fs));
  dsp::Segment seg;
  seg.parent_id = rec->meta.recording_id;
  seg.window_s = rec->meta.duration_s;
  seg.sampling_rate_hz = fs;
  seg.length = rec->meta.n_samples;
  seg.source = rec;
  std::vector<double> sigma;
  for (int c = 0; c < rec->meta.n_channels; ++c) sigma.push_back(dsp::estimate_noise_sigma(rec->channel(c)));
  std::vector<spikes::SpikeEvent> events;
  std::vector<features::SpikeFeatures> feats;
  {
    py::gil_scoped_release release;
    events = spikes::detect_spikes(seg, cfg.detection, sigma);
    feats = features::spike_features(events, rec->meta.duration_s, fs);
  }

  const auto n = static_cast<py::ssize_t>(events.size());
  py::array_t<int> channel(n);
  py::array_t<std::int64_t> index(n);
  py::array_t<double> time(n), amplitude(n), isi(n), duration(n);
  FloatArray waveforms({n, static_cast<py::ssize_t>(spikes::kWaveformLength)});
  for (py::ssize_t i = 0; i < n; ++i) {
    const auto& e = events[static_cast<std::size_t>(i)];
    channel.mutable_at(i) = e.channel;
    index.mutable_at(i) = e.peak_index;
    time.mutable_at(i) = e.peak_time_s;
    amplitude.mutable_at(i) = feats[static_cast<std::size_t>(i)].amplitude_uV;
    isi.mutable_at(i) = feats[static_cast<std::size_t>(i)].isi_s;
    duration.mutable_at(i) = feats[static_cast<std::size_t>(i)].duration_s;
    std::copy(e.waveform.begin(), e.waveform.end(), waveforms.mutable_data(i, 0));
  }
  py::dict out;
  out["channel"] = channel;
  out["peak_index"] = index;
  out["peak_time_s"] = time;
  out["waveforms"] = waveforms;
  out["amplitude_uV"] = amplitude;
  out["isi_s"] = isi;
  out["duration_s"] = duration;
  out["noise_sigma"] = sigma;
  return out;
}

}  // namespace

PYBIND11_MODULE(_framec, m) {
  m.doc() = "MEA recording classification core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("default_config", [] { return pipeline::to_json(pipeline::ExperimentConfig{}).dump(); });
  m.def("resolve_config", [](const std::string& cfg) {
    const auto c = parse_config(cfg);
    c.validate();
    return pipeline::to_json(c.resolved()).dump();
  });
  m.def("config_hash", [](const std::string& cfg) { return pipeline::config_hash(parse_config(cfg)); });

  m.def("bandpass_filter",
        [](const FloatArray& samples, double fs, const std::string& cfg) {
          const auto c = parse_config(cfg);
          const auto rec = to_recording(samples, fs);
          io::Recording out;
          {
            py::gil_scoped_release release;
            out = dsp::bandpass_filter(rec, c.filter);
          }
          return to_array(out);
        },
        py::arg("samples"), py::arg("sampling_rate_hz"), py::arg("config") = "");
  m.def("filter_magnitude",
        [](double hz, double fs, const std::string& cfg) {
          return dsp::BandpassFilter(parse_config(cfg).filter, fs).magnitude(hz);
        },
        py::arg("hz"), py::arg("sampling_rate_hz"), py::arg("config") = "");
  m.def("noise_sigma", [](const FloatArray& x) {
    return dsp::estimate_noise_sigma(std::span<const float>(x.data(), static_cast<std::size_t>(x.size())));
  });
  m.def("segment_count",
        [](std::int64_t n, double fs, double window_s, double step_s) {
          return dsp::segment_count(n, fs, dsp::SplitSpec{window_s, step_s});
        },
        py::arg("n_samples"), py::arg("sampling_rate_hz"), py::arg("window_s"), py::arg("step_s"));

  m.def("detect_spikes", &detect, py::arg("filtered"), py::arg("sampling_rate_hz"), py::arg("config") = "");
  m.def("spike_amplitude", [](const FloatArray& w) { return features::spike_amplitude(to_waveform(w)); });
  m.def("spike_duration",
        [](const FloatArray& w, double fs) { return features::spike_duration(to_waveform(w), fs); });

  m.def("make_template",
        [](double half_width_s, double peak_uV, double fs) {
          const auto w = synth::make_template(half_width_s, peak_uV, fs);
          FloatArray out(std::vector<py::ssize_t>{spikes::kWaveformLength});
          std::copy(w.begin(), w.end(), out.mutable_data());
          return out;
        },
        py::arg("half_width_s"), py::arg("peak_uV"), py::arg("sampling_rate_hz") = 12500.0);
  m.def("generate_recording",
        [](const std::string& cfg, int label, const std::string& id, const std::string& well) {
          const auto c = parse_config(cfg).resolved();
          std::pair<io::Recording, synth::GroundTruth> r;
          {
            py::gil_scoped_release release;
            r = synth::generate_recording(c.generator, label_from_int(label), id, well);
          }
          return py::make_tuple(to_array(r.first), r.second.spike_times_s);
        },
        py::arg("config") = "", py::arg("label") = 0, py::arg("recording_id") = "rec",
        py::arg("well_id") = "A1");

  m.def("vote_recording", [](const std::vector<double>& probs) { return eval::vote_recording(probs); });

  m.def("simulate",
        [](const std::string& cfg, const std::string& out_dir) {
          std::ostringstream log;
          const auto manifest = pipeline::cmd_simulate(parse_config(cfg), out_dir, log);
          std::vector<std::string> ids;
          for (const auto& e : manifest.entries) ids.push_back(e.recording_id);
          return ids;
        },
        py::arg("config"), py::arg("out_dir"), py::call_guard<py::gil_scoped_release>());
  m.def("preprocess",
        [](const std::string& cfg, const std::string& dataset_dir, const std::string& store_dir) {
          std::ostringstream log;
          const auto s = pipeline::cmd_preprocess(parse_config(cfg), dataset_dir, store_dir, log);
          return std::map<std::string, std::size_t>{{"recordings", s.recordings},
                                                    {"segments", s.segments},
                                                    {"spikes", s.spikes},
                                                    {"bursts", s.bursts}};
        },
        py::arg("config"), py::arg("dataset_dir"), py::arg("store_dir"), py::call_guard<py::gil_scoped_release>());
  m.def("train",
        [](const std::string& cfg, const std::string& store_dir, const std::string& out_dir) {
          std::ostringstream log;
          const auto c = parse_config(cfg);
          const auto rep = pipeline::cmd_train(c, store_dir, out_dir, log);
          return table_json(pipeline::train_report_table(rep, pipeline::config_hash(c)));
        },
        py::arg("config"), py::arg("store_dir"), py::arg("out_dir"), py::call_guard<py::gil_scoped_release>());
  m.def("evaluate",
        [](const std::string& cfg, const std::string& checkpoint, const std::string& store_dir,
           const std::string& out_path) {
          std::ostringstream log;
          return table_json(pipeline::cmd_evaluate(parse_config(cfg), checkpoint, store_dir, out_path, log));
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("store_dir"), py::arg("out_path") = "",
        py::call_guard<py::gil_scoped_release>());
  m.def("importance",
        [](const std::string& cfg, const std::string& store_dir, const std::string& out_path) {
          std::ostringstream log;
          return table_json(pipeline::cmd_importance(parse_config(cfg), store_dir, out_path, log));
        },
        py::arg("config"), py::arg("store_dir"), py::arg("out_path") = "", py::call_guard<py::gil_scoped_release>());
  m.def("compare",
        [](const std::string& cfg, const std::string& store_dir, const std::string& out_path) {
          std::ostringstream log;
          return table_json(pipeline::cmd_compare(parse_config(cfg), store_dir, out_path, log));
        },
        py::arg("config"), py::arg("store_dir"), py::arg("out_path") = "", py::call_guard<py::gil_scoped_release>());
}
