"""Python bindings for the framec MEA classification pipeline.

Configuration arguments accept a dict (partial configs keep the defaults for
missing keys), a JSON string, or None for the defaults.
"""

import json

import numpy as np

from . import _framec
from ._framec import ConfigError, DataError, NumericalError

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "default_config",
    "resolve_config",
    "config_hash",
    "bandpass_filter",
    "filter_magnitude",
    "noise_sigma",
    "segment_count",
    "detect_spikes",
    "spike_amplitude",
    "spike_duration",
    "make_template",
    "generate_recording",
    "vote_recording",
    "simulate",
    "preprocess",
    "train",
    "evaluate",
    "importance",
    "compare",
]


def _cfg(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return json.dumps(config)


def _rows(table_json):
    return json.loads(table_json)


def default_config():
    return json.loads(_framec.default_config())


def resolve_config(config=None):
    """Validated config with the global seed copied into every stage."""
    return json.loads(_framec.resolve_config(_cfg(config)))


def config_hash(config=None):
    return _framec.config_hash(_cfg(config))


def bandpass_filter(samples, sampling_rate_hz, config=None):
    """Filter a (channels, samples) array; returns float32 of the same shape."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float32))
    return _framec.bandpass_filter(x, float(sampling_rate_hz), _cfg(config))


def filter_magnitude(hz, sampling_rate_hz, config=None):
    return _framec.filter_magnitude(float(hz), float(sampling_rate_hz), _cfg(config))


def noise_sigma(channel):
    return _framec.noise_sigma(np.asarray(channel, dtype=np.float32).ravel())


def segment_count(n_samples, sampling_rate_hz, window_s, step_s):
    return _framec.segment_count(int(n_samples), float(sampling_rate_hz), float(window_s), float(step_s))


def detect_spikes(filtered, sampling_rate_hz, config=None):
    """Detect spikes on an already filtered (channels, samples) array.

    Returns a dict of per-spike arrays: channel, peak_index, peak_time_s,
    waveforms (n x 100), amplitude_uV, isi_s, duration_s, plus noise_sigma
    per channel.
    """
    x = np.atleast_2d(np.asarray(filtered, dtype=np.float32))
    return _framec.detect_spikes(x, float(sampling_rate_hz), _cfg(config))


def spike_amplitude(waveform):
    return _framec.spike_amplitude(np.asarray(waveform, dtype=np.float32))


def spike_duration(waveform, sampling_rate_hz):
    return _framec.spike_duration(np.asarray(waveform, dtype=np.float32), float(sampling_rate_hz))


def make_template(half_width_s, peak_uV, sampling_rate_hz=12500.0):
    return _framec.make_template(float(half_width_s), float(peak_uV), float(sampling_rate_hz))


def generate_recording(config=None, label=0, recording_id="rec", well_id="A1"):
    """Synthetic recording; returns (samples, per-channel ground-truth spike times)."""
    return _framec.generate_recording(_cfg(config), int(label), recording_id, well_id)


def vote_recording(segment_probs):
    return _framec.vote_recording([float(p) for p in segment_probs])


def simulate(config, out_dir):
    """Write a synthetic dataset; returns the recording ids."""
    return _framec.simulate(_cfg(config), str(out_dir))


def preprocess(config, dataset_dir, store_dir):
    return _framec.preprocess(_cfg(config), str(dataset_dir), str(store_dir))


def train(config, store_dir, out_dir):
    """Train on the store; returns the per-epoch report rows."""
    return _rows(_framec.train(_cfg(config), str(store_dir), str(out_dir)))


def evaluate(config, checkpoint, store_dir, out_path=""):
    return _rows(_framec.evaluate(_cfg(config), str(checkpoint), str(store_dir), str(out_path)))


def importance(config, store_dir, out_path=""):
    return _rows(_framec.importance(_cfg(config), str(store_dir), str(out_path)))


def compare(config, store_dir, out_path=""):
    return _rows(_framec.compare(_cfg(config), str(store_dir), str(out_path)))
