"""Preamble + payload frames, preamble detection and the truncated mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .modem import LinkConfig, ModemError, bits_to_symbols, demodulate_stream, modulate, symbols_to_bits
from .zc import ChipSequence, is_prime, truncate


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class FrameConfig:
    link: LinkConfig
    preamble_len: int = 8
    q0: int = 0
    payload_len: int = 0

    def __post_init__(self) -> None:
        if self.preamble_len < 1:
            raise FrameError("preamble_len must be >= 1")
        if not 0 <= self.q0 < self.link.N:
            raise FrameError(f"preamble symbol q0={self.q0} outside [0, {self.link.N})")
        if self.payload_len < 0:
            raise FrameError("payload_len must be >= 0")

    @property
    def symbol_count(self) -> int:
        return self.preamble_len + self.payload_len

    @property
    def chip_count(self) -> int:
        return self.symbol_count * self.link.block_len

    @property
    def payload_bits(self) -> int:
        return self.payload_len * self.link.b

    def describe(self) -> dict:
        """JSON frame descriptor."""
        link = self.link
        return {
            "sf": link.SF, "n": link.N, "root": link.r, "mode": link.mode,
            "preamble_len": self.preamble_len, "q0": self.q0, "payload_len": self.payload_len,
            "m": link.M, "bandwidth_hz": link.B,
        }

    @classmethod
    def from_descriptor(cls, d: dict) -> FrameConfig:
        link = LinkConfig(N=d["n"], r=d["root"], M=d.get("m"), B=d.get("bandwidth_hz", 125e3),
                          SF=d.get("sf") if d.get("mode") == "truncated" else None, mode=d.get("mode", "full"))
        return cls(link, d["preamble_len"], d.get("q0", 0), d["payload_len"])


@dataclass(frozen=True)
class DetectionResult:
    found: bool
    offset_samples: int = 0
    metric: float = 0.0
    phase: int = 0


def preamble_block(cfg: FrameConfig) -> np.ndarray:
    """The preamble symbol's chips, built with the full parent-length formula."""
    from .modem import symbol_blocks

    link = cfg.link
    if cfg.q0 < link.M:
        return symbol_blocks([cfg.q0], link)[0]
    k = np.arange(link.block_len)
    from .zc import phase_index

    return np.exp(1j * np.pi * phase_index(link.N, link.r, cfg.q0, k) / link.N)


def frame_symbols(payload_bits, cfg: FrameConfig) -> np.ndarray:
    bits = np.asarray(payload_bits, dtype=np.int64).reshape(-1)
    if bits.size != cfg.payload_bits:
        raise FrameError(f"payload needs {cfg.payload_bits} bits ({cfg.payload_len} x {cfg.link.b}), got {bits.size}")
    try:
        return bits_to_symbols(bits, cfg.link.b)
    except ModemError as exc:
        raise FrameError(str(exc)) from exc


def frame_encode(payload_bits, cfg: FrameConfig) -> np.ndarray:
    """Chip-domain frame: ``preamble_len`` copies of ``q0`` then the payload."""
    payload = modulate(frame_symbols(payload_bits, cfg), cfg.link)
    return np.concatenate([np.tile(preamble_block(cfg), cfg.preamble_len), payload])


def truncate_sequence(seq: ChipSequence, sf: int) -> ChipSequence:
    """First ``2**sf`` chips of a prime-length sequence."""
    if seq.params is None or not is_prime(seq.params.N):
        raise FrameError("truncation expects a generated prime-length sequence")
    if 2**sf > len(seq):
        raise FrameError(f"2**SF = {2**sf} exceeds sequence length {len(seq)}")
    return truncate(seq, 2**sf)


def truncated_link(cfg: LinkConfig | int, r: int | None = None) -> LinkConfig:
    """Truncated-mode twin of ``cfg`` (or of the default link for an SF)."""
    if isinstance(cfg, int):
        return LinkConfig.for_sf(cfg, r=r or 1, mode="truncated")
    if 2**cfg.SF > cfg.N:
        raise FrameError(f"2**SF = {2**cfg.SF} exceeds N = {cfg.N}")
    return LinkConfig(N=cfg.N, r=r or cfg.r, M=min(cfg.M, 2**cfg.SF), B=cfg.B, SF=cfg.SF, mode="truncated")


def _sliding_metric(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """``|<x[n:n+L], ref>| / (||x[n:n+L]|| ||ref||)`` for every full window."""
    L = ref.size
    corr = sps.correlate(x, ref, mode="valid", method="fft")
    energy = np.concatenate([[0.0], np.cumsum(np.abs(x) ** 2)])
    seg = energy[L:] - energy[:-L]
    denom = np.sqrt(np.clip(seg, 0.0, None) * np.sum(np.abs(ref) ** 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(denom > 1e-300, np.abs(corr) / denom, 0.0)
    return np.minimum(m, 1.0 + 1e-9)


def _detect_branch(x: np.ndarray, cfg: FrameConfig, ref: np.ndarray, threshold: float):
    metric = _sliding_metric(x, ref)
    if metric.size == 0:
        return None
    L = cfg.link.block_len
    peak = int(np.argmax(metric))
    if metric[peak] < threshold:
        return None
    # earliest lag on the peak's symbol grid that opens preamble_len
    # consecutive above-threshold blocks; later q0 payload blocks never win
    grid = np.arange(peak % L, metric.size, L)
    above = metric[grid] >= threshold
    need = cfg.preamble_len
    run = 0
    for i, ok in enumerate(above):
        run = run + 1 if ok else 0
        if run == need:
            start = int(grid[i - need + 1])
            return start, float(np.mean(metric[grid[i - need + 1: i + 1]]))
    return None


def preamble_detect(buffer, cfg: FrameConfig, threshold: float = 0.5, oversampling: int = 1) -> DetectionResult:
    """Find the frame start by sliding correlation with the preamble symbol.

    ``buffer`` is a chip-rate stream, or for ``oversampling > 1`` a
    matched-filter output at ``oversampling`` samples per chip; every
    polyphase branch is searched and ``offset_samples`` is in input samples.
    """
    x = np.asarray(getattr(buffer, "samples", buffer), dtype=complex)
    if x.size < cfg.link.block_len * oversampling:
        raise FrameError("buffer shorter than one symbol")
    ref = preamble_block(cfg)
    best = DetectionResult(False)
    for phase in range(oversampling):
        hit = _detect_branch(x[phase::oversampling], cfg, ref, threshold)
        if hit is not None and hit[1] > best.metric:
            best = DetectionResult(True, hit[0] * oversampling + phase, hit[1], phase)
    return best


def frame_decode(buffer, cfg: FrameConfig, detection: DetectionResult, oversampling: int = 1) -> np.ndarray:
    """Demodulate the payload following a detected preamble; returns bits."""
    if not detection.found:
        raise FrameError("no preamble detected")
    x = np.asarray(getattr(buffer, "samples", buffer), dtype=complex)
    stream = x[detection.offset_samples::oversampling]
    start = cfg.preamble_len * cfg.link.block_len
    needed = start + cfg.payload_len * cfg.link.block_len
    if stream.size < needed:
        raise FrameError(f"need {needed} chips after the detected offset, have {stream.size}")
    out = demodulate_stream(stream[start:needed], cfg.link, cfg.payload_len)
    return symbols_to_bits(out.hard_symbols, cfg.link.b)
