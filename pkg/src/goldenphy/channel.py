"""Pulse shaping, delays, AWGN and spectral estimation at the sample level."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO

import numpy as np
from scipy import signal as sps


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class ShapingConfig:
    beta: float = 0.25
    oversampling: int = 4
    span: int = 16

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ChannelError(f"roll-off must be in [0, 1], got {self.beta}")
        if self.span < 2:
            raise ChannelError(f"filter span must be >= 2 chips, got {self.span}")
        if self.oversampling < 1:
            raise ChannelError(f"oversampling must be >= 1, got {self.oversampling}")

    def occupied_bandwidth(self, B: float) -> float:
        return (1.0 + self.beta) * B


@dataclass
class SampleBuffer:
    """Complex baseband samples.

    ``rate`` is in samples per second. ``chip_count`` is the number of chips
    the buffer represents (excluding filter transients).
    """

    samples: np.ndarray
    rate: float
    oversampling: int = 1
    chip_count: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.rate <= 0:
            raise ChannelError("sample rate must be positive")

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples: np.ndarray) -> SampleBuffer:
        return replace(self, samples=np.asarray(samples, dtype=complex), meta=dict(self.meta))


@dataclass(frozen=True)
class ChannelConfig:
    """AWGN channel. ``snr_db`` is the per-chip SNR."""

    snr_db: float
    seed: int = 0
    delay_chips: float = 0.0

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def noise_variance(self, signal_power: float) -> float:
        return signal_power / self.snr_linear


def raised_cosine(t, beta: float) -> np.ndarray:
    """Raised-cosine pulse at ``t`` (in chips), unit value at ``t = 0``.

    This is the RRC transmit/receive cascade in the infinite-span limit.
    """
    t = np.asarray(t, dtype=float)
    out = np.sinc(t)
    if beta > 0:
        den = 1.0 - (2.0 * beta * t) ** 2
        sing = np.isclose(den, 0.0, atol=1e-12)
        safe = np.where(sing, 1.0, den)
        out = np.where(sing, np.pi / 4 * np.sinc(1.0 / (2.0 * beta)), out * np.cos(np.pi * beta * t) / safe)
    return out


def rrc_taps(cfg: ShapingConfig) -> np.ndarray:
    """Unit-energy root-raised-cosine taps, ``span * oversampling + 1`` long."""
    beta, sps_ = cfg.beta, cfg.oversampling
    n = cfg.span * sps_
    t = (np.arange(n + 1) - n / 2) / sps_
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - beta + 4.0 * beta / np.pi
        elif beta > 0 and abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-12:
            a = np.pi / (4.0 * beta)
            h[i] = beta / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(a) + (1 - 2 / np.pi) * np.cos(a))
        else:
            num = np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta))
            h[i] = num / (np.pi * ti * (1 - (4 * beta * ti) ** 2))
    return h / np.sqrt(np.sum(h**2))


def pulse_shape(chips, cfg: ShapingConfig, bandwidth: float = 1.0) -> SampleBuffer:
    """Upsample by ``cfg.oversampling`` and filter with the RRC taps.

    Chip ``k`` peaks at sample ``group_delay + k * oversampling`` where
    ``group_delay = span * oversampling / 2``.
    """
    x = np.asarray(chips, dtype=complex).reshape(-1)
    if x.size == 0:
        raise ChannelError("cannot pulse-shape an empty chip vector")
    taps = rrc_taps(cfg)
    y = sps.upfirdn(taps, x, up=cfg.oversampling)
    return SampleBuffer(
        y, rate=bandwidth * cfg.oversampling, oversampling=cfg.oversampling, chip_count=x.size,
        meta={"beta": cfg.beta, "span": cfg.span, "group_delay": (taps.size - 1) // 2},
    )


def matched_filter(buffer: SampleBuffer, cfg: ShapingConfig, decimate: bool = True, chip_count: int | None = None):
    """Filter with the time-reversed conjugate taps and realign.

    Both filters' group delays are removed, so with ``decimate=True`` entry
    ``k`` is chip ``k``; with ``decimate=False`` entry ``k*os + p`` is the
    matched-filter output ``p`` samples after chip ``k``.
    """
    taps = rrc_taps(cfg)
    os_ = cfg.oversampling
    if buffer.oversampling != os_:
        raise ChannelError(f"buffer oversampling {buffer.oversampling} != filter oversampling {os_}")
    y = np.convolve(buffer.samples, np.conj(taps[::-1]))
    delay = taps.size - 1
    if chip_count is None:
        chip_count = buffer.chip_count or max(0, (len(buffer) - taps.size) // os_ + 1)
    aligned = y[delay: delay + chip_count * os_]
    if aligned.size < chip_count * os_:
        aligned = np.concatenate([aligned, np.zeros(chip_count * os_ - aligned.size, complex)])
    return aligned[::os_] if decimate else aligned


def _shifted(x: np.ndarray, shift: int) -> np.ndarray:
    """``y[n] = x[n - shift]`` with zero fill, same length."""
    y = np.zeros_like(x)
    n = x.size
    if shift >= 0:
        if shift < n:
            y[shift:] = x[: n - shift]
    elif -shift < n:
        y[: n + shift] = x[-shift:]
    return y


FRACTIONAL_TAPS = 16
_KAISER_BETA = 6.0


def fractional_delay_taps(frac: float) -> np.ndarray:
    """Kaiser-windowed sinc interpolator with delay ``FRACTIONAL_TAPS/2 - 1 + frac``."""
    centre = FRACTIONAL_TAPS // 2 - 1 + frac
    x = np.arange(FRACTIONAL_TAPS) - centre
    # Kaiser window centred on the interpolation point rather than the tap grid
    w = np.i0(_KAISER_BETA * np.sqrt(np.clip(1.0 - (x / (FRACTIONAL_TAPS / 2)) ** 2, 0.0, None)))
    h = np.sinc(x) * w
    return h / h.sum()


def fractional_delay(buffer: SampleBuffer, delay_chips: float) -> SampleBuffer:
    """Delay by a real number of chips, keeping the buffer length.

    Whole samples at the oversampled rate are pure shifts; only the residual
    sub-sample part is interpolated.
    """
    d = float(delay_chips) * buffer.oversampling
    if abs(d) >= len(buffer):
        raise ChannelError(f"delay of {delay_chips} chips exceeds the buffer ({len(buffer)} samples)")
    whole = math.floor(d)
    frac = d - whole
    if frac > 1 - 1e-9:
        whole, frac = whole + 1, 0.0
    x = buffer.samples
    if frac < 1e-9:
        y = _shifted(x, whole)
    else:
        h = fractional_delay_taps(frac)
        lag = FRACTIONAL_TAPS // 2 - 1
        full = np.convolve(x, h)
        # full[n] ~ x(n - lag - frac); we want x(n - whole - frac)
        y = np.zeros_like(x)
        start = lag - whole
        lo, hi = max(0, -start), min(x.size, full.size - start)
        if hi > lo:
            y[lo:hi] = full[lo + start: hi + start]
    out = buffer.with_samples(y)
    out.meta["delay_chips"] = out.meta.get("delay_chips", 0.0) + float(delay_chips)
    return out


def add_awgn(buffer: SampleBuffer, cfg: ChannelConfig, rng: np.random.Generator | None = None,
             signal_power: float | None = None) -> SampleBuffer:
    """Add circular complex white Gaussian noise at per-chip SNR ``cfg.snr_db``.

    ``signal_power`` is the power per chip; when omitted it is measured as
    ``mean(|x|^2) * oversampling`` (chip energy of a unit-energy-shaped
    signal). The per-sample noise variance is ``signal_power / SNR``, which
    after a unit-energy matched filter is the per-chip noise variance.
    """
    x = buffer.samples
    if signal_power is None:
        signal_power = float(np.mean(np.abs(x) ** 2)) * buffer.oversampling if x.size else 0.0
    var = cfg.noise_variance(signal_power)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    noise = rng.standard_normal((2, x.size))
    out = buffer.with_samples(x + math.sqrt(var / 2.0) * (noise[0] + 1j * noise[1]))
    out.meta.update(snr_db=cfg.snr_db, noise_variance=var)
    return out


def psd_estimate(buffer: SampleBuffer, segment_length: int = 4096, overlap: float = 0.5):
    """Welch PSD with a Hann window, two-sided, normalized to a 0 dB peak.

    Returns ``(freq_hz, psd_db)`` sorted by frequency.
    """
    x = buffer.samples
    if x.size < segment_length:
        raise ChannelError(f"buffer of {x.size} samples shorter than one segment ({segment_length})")
    f, p = sps.welch(
        x, fs=buffer.rate, window="hann", nperseg=segment_length,
        noverlap=int(round(overlap * segment_length)), return_onesided=False, detrend=False,
    )
    f, p = np.fft.fftshift(f), np.fft.fftshift(p)
    with np.errstate(divide="ignore"):
        return f, 10.0 * np.log10(p / p.max())


def occupied_bandwidth(freqs, psd_db, fraction: float = 0.99) -> float:
    """Width of the band holding ``fraction`` of the power, equal tails cut."""
    p = 10.0 ** (np.asarray(psd_db) / 10.0)
    c = np.cumsum(p)
    c /= c[-1]
    tail = (1.0 - fraction) / 2.0
    return float(np.interp(1.0 - tail, c, freqs) - np.interp(tail, c, freqs))


def write_iq(target: str | Path | BinaryIO, buffer: SampleBuffer) -> dict:
    """Write interleaved little-endian float32 I/Q.

    For a path, a ``<path>.json`` sidecar records the rate; the sidecar
    dict is returned either way.
    """
    raw = np.asarray(buffer.samples, dtype="<c8").tobytes()
    sidecar = {
        "format": "cf32_le", "rate_hz": buffer.rate, "oversampling": buffer.oversampling,
        "n_samples": len(buffer), "chip_count": buffer.chip_count,
    }
    if isinstance(target, (str, Path)):
        Path(target).write_bytes(raw)
        Path(str(target) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    else:
        target.write(raw)
    return sidecar


def read_iq(source: str | Path | BinaryIO, rate: float | None = None, oversampling: int | None = None) -> SampleBuffer:
    if isinstance(source, (str, Path)):
        raw = Path(source).read_bytes()
        side_path = Path(str(source) + ".json")
        side = json.loads(side_path.read_text()) if side_path.exists() else {}
    else:
        raw, side = source.read(), {}
    if len(raw) % 8:
        raise ChannelError(f"I/Q payload of {len(raw)} bytes is not a whole number of cf32 samples")
    x = np.frombuffer(raw, dtype="<c8").astype(complex)
    return SampleBuffer(
        x, rate=rate or side.get("rate_hz", 1.0), oversampling=oversampling or side.get("oversampling", 1),
        chip_count=side.get("chip_count"),
    )
