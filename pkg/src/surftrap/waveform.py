"""Discretized control-voltage waveforms for a multi-channel AWG.

A Waveform holds one sample array per electrode channel at a fixed
update rate (50 MHz by default).  Sample k represents time k / rate,
left-aligned.  Ramps are evaluated so that the first and last samples
equal the static endpoint sets exactly.

Binary file layout (all integers and floats little-endian):

    offset  size  field
    0       4     magic b"SWVF"
    4       4     format version, uint32 (currently 1)
    8       8     update rate in Hz, float64
    16      4     channel count, uint32
    20      4     samples per channel, uint32
    24      8     duration in seconds, float64
    32      ...   channel ids, each uint16 byte length + UTF-8 bytes
    ...     ...   samples, channel-major, float64 each

The float64 payload makes export/import round-trip bit-exact.  A CSV
writer is provided for human inspection.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

__all__ = [
    "Waveform",
    "RampShape",
    "make_ramp",
    "add_tone",
    "export",
    "export_csv",
    "import_waveform",
]

DEFAULT_UPDATE_RATE = 5e7

_MAGIC = b"SWVF"
_VERSION = 1
_HEADER = struct.Struct("<4sIdIId")


class RampShape(enum.Enum):
    LINEAR = "linear"
    SMOOTHSTEP = "smoothstep"
    SINE = "sine"


def _shape_profile(shape: RampShape, x: np.ndarray) -> np.ndarray:
    if shape is RampShape.LINEAR:
        return x
    if shape is RampShape.SMOOTHSTEP:
        return x * x * (3.0 - 2.0 * x)
    if shape is RampShape.SINE:
        return 0.5 * (1.0 - np.cos(np.pi * x))
    raise ValueError(f"unknown ramp shape: {shape!r}")


@dataclass(frozen=True)
class Waveform:
    """Immutable per-channel sample arrays at one update rate."""

    channels: "MappingProxyType"
    update_rate: float = DEFAULT_UPDATE_RATE
    duration: float = 0.0

    def __post_init__(self):
        if self.update_rate <= 0:
            raise ValueError("update_rate must be positive")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        expected = int(round(self.duration * self.update_rate))
        frozen = {}
        for cid, samples in dict(self.channels).items():
            arr = np.asarray(samples, dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"channel {cid!r} samples must be 1-D")
            if arr.size != expected:
                raise ValueError(
                    f"channel {cid!r} has {arr.size} samples, expected "
                    f"round(duration * rate) = {expected}")
            if arr.size and not np.isfinite(arr).all():
                raise ValueError(f"channel {cid!r} contains non-finite samples")
            arr = arr.copy()
            arr.flags.writeable = False
            frozen[str(cid)] = arr
        object.__setattr__(self, "channels", MappingProxyType(frozen))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.update_rate))

    @property
    def channel_ids(self) -> tuple:
        return tuple(self.channels.keys())

    def times(self) -> np.ndarray:
        """Sample times, left-aligned: t_k = k / update_rate."""
        return np.arange(self.n_samples) / self.update_rate


def _set_voltages(control_set) -> np.ndarray:
    v = getattr(control_set, "voltages", control_set)
    return np.asarray(v, dtype=float).reshape(-1)


def make_ramp(set_a, set_b, t_ramp: float,
              shape: RampShape = RampShape.LINEAR,
              update_rate: float = DEFAULT_UPDATE_RATE) -> Waveform:
    """Waveform interpolating two static voltage sets.

    Channel k runs from set_a's to set_b's voltage under the chosen
    shape profile; the first and last samples equal the endpoint sets
    exactly.  Channels are named c1..cN in electrode order.
    """
    va = _set_voltages(set_a)
    vb = _set_voltages(set_b)
    if va.shape != vb.shape:
        raise ValueError(
            f"endpoint sets cover {va.size} and {vb.size} electrodes")
    if t_ramp <= 0:
        raise ValueError("t_ramp must be positive")
    n = int(round(t_ramp * update_rate))
    if n < 2:
        raise ValueError(
            f"t_ramp = {t_ramp} s is shorter than two samples at "
            f"{update_rate} Hz")
    s = _shape_profile(shape, np.linspace(0.0, 1.0, n))
    # convex combination: endpoints exact with no cancellation error
    samples = va[:, None] * (1.0 - s)[None, :] + vb[:, None] * s[None, :]
    channels = {f"c{k + 1}": samples[k] for k in range(va.size)}
    return Waveform(channels=channels, update_rate=update_rate,
                    duration=t_ramp)


def add_tone(wf: Waveform, electrode: str, omega_exc: float, amp: float,
             t_window) -> Waveform:
    """New waveform with amp sin(omega_exc t) added on one channel.

    The tone applies at samples whose time lies in [t_window[0],
    t_window[1]); all other channels and samples are untouched.
    """
    if electrode not in wf.channels:
        raise ValueError(f"waveform has no channel {electrode!r}")
    if not omega_exc < np.pi * wf.update_rate:
        raise ValueError(
            f"tone at {omega_exc} rad/s violates Nyquist for "
            f"{wf.update_rate} Hz updates")
    if omega_exc < 0:
        raise ValueError("omega_exc must be nonnegative")
    t0, t1 = (float(t_window[0]), float(t_window[1]))
    t = wf.times()
    mask = (t >= t0) & (t < t1)
    new = dict(wf.channels)
    modified = new[electrode].copy()
    modified[mask] += amp * np.sin(omega_exc * t[mask])
    new[electrode] = modified
    return Waveform(channels=new, update_rate=wf.update_rate,
                    duration=wf.duration)


def export(wf: Waveform, path) -> None:
    """Write the binary format documented in the module docstring."""
    ids = wf.channel_ids
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, wf.update_rate, len(ids),
                              wf.n_samples, wf.duration))
        for cid in ids:
            raw = cid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for cid in ids:
            fh.write(np.ascontiguousarray(wf.channels[cid],
                                          dtype="<f8").tobytes())


def import_waveform(path) -> Waveform:
    """Read a file written by export; samples round-trip bit-exactly."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError("truncated waveform file")
        magic, version, rate, n_channels, n_samples, duration = \
            _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"not a waveform file (magic {magic!r})")
        if version != _VERSION:
            raise ValueError(f"unsupported waveform format version {version}")
        ids = []
        for _ in range(n_channels):
            (length,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(length).decode("utf-8"))
        channels = {}
        for cid in ids:
            raw = fh.read(8 * n_samples)
            if len(raw) != 8 * n_samples:
                raise ValueError(f"truncated samples for channel {cid!r}")
            channels[cid] = np.frombuffer(raw, dtype="<f8")
    return Waveform(channels=channels, update_rate=rate, duration=duration)


def export_csv(wf: Waveform, path) -> None:
    """Human-readable table: one time column plus one column per channel."""
    ids = wf.channel_ids
    t = wf.times()
    with open(path, "w") as fh:
        fh.write(",".join(["time_s"] + list(ids)) + "\n")
        for k in range(wf.n_samples):
            row = [f"{t[k]:.17g}"] + [f"{wf.channels[c][k]:.17g}"
                                      for c in ids]
            fh.write(",".join(row) + "\n")
