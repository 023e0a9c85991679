"""GM symbol modulation and the de-chirp + DFT receiver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .zc import ZcParams, phase_index, smallest_prime_geq


class ModemError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    """One transmitter's parameterization.

    In ``"truncated"`` mode ``N`` is the (prime) parent length used by the
    phase formula and each symbol block carries only its first ``2**SF``
    chips.
    """

    N: int
    r: int = 1
    M: int | None = None
    B: float = 125e3
    SF: int | None = None
    mode: Literal["full", "truncated"] = "full"

    def __post_init__(self) -> None:
        ZcParams(self.N, self.r)  # validates root against N
        if self.mode not in ("full", "truncated"):
            raise ModemError(f"unknown mode {self.mode!r}")
        if self.mode == "full":
            sf = round(math.log2(self.N)) if self.N > 1 else 1
            if self.SF is not None and self.SF != sf:
                raise ModemError(f"SF={self.SF} inconsistent with N={self.N} (round(log2 N) = {sf})")
        else:
            if self.SF is None:
                raise ModemError("truncated mode needs an explicit SF")
            sf = int(self.SF)
            if 2**sf > self.N:
                raise ModemError(f"cannot truncate N={self.N} to 2**SF = {2**sf} chips")
        object.__setattr__(self, "SF", sf)
        M = self.M if self.M is not None else 1 << (min(2**sf, self.N).bit_length() - 1)
        if M < 2 or M & (M - 1):
            raise ModemError(f"M must be a power of two >= 2, got M={M}")
        if M > self.N or (self.mode == "truncated" and M > 2**sf):
            raise ModemError(f"M={M} exceeds the number of available symbols")
        if self.B <= 0:
            raise ModemError("bandwidth must be positive")
        object.__setattr__(self, "M", int(M))

    @classmethod
    def for_sf(cls, sf: int, r: int = 1, mode: str = "full", B: float = 125e3, N: int | None = None) -> LinkConfig:
        """Link with ``N`` the smallest prime >= 2**sf and ``M = 2**sf``."""
        N = N or smallest_prime_geq(2**sf)
        return cls(N=N, r=r, M=2**sf, B=B, SF=sf, mode=mode)

    @property
    def b(self) -> int:
        return int(math.log2(self.M))

    @property
    def block_len(self) -> int:
        """Chips per symbol actually transmitted."""
        return 2**self.SF if self.mode == "truncated" else self.N

    @property
    def chip_period(self) -> float:
        return 1.0 / self.B

    @property
    def symbol_period(self) -> float:
        return self.block_len / self.B

    @property
    def symbol_rate(self) -> float:
        return self.B / self.block_len

    @property
    def bit_rate(self) -> float:
        return self.b * self.symbol_rate

    @cached_property
    def reference(self) -> np.ndarray:
        """De-chirp reference: the ``q = 0`` block."""
        k = np.arange(self.block_len)
        return np.exp(1j * np.pi * phase_index(self.N, self.r, 0, k) / self.N)

    @cached_property
    def root_inverse(self) -> int:
        return pow(self.r, -1, self.N) if self.N > 1 else 0

    def describe(self) -> dict:
        return {"sf": self.SF, "n": self.N, "root": self.r, "m": self.M, "bandwidth_hz": self.B, "mode": self.mode}


@dataclass
class DemodOutput:
    """Hard decisions with optional per-symbol magnitudes.

    ``dft_magnitudes[l, q]`` is the magnitude of the DFT bin carrying symbol
    hypothesis ``q`` for block ``l``.
    """

    hard_symbols: np.ndarray
    dft_magnitudes: np.ndarray | None = None
    M: int | None = None

    @property
    def out_of_alphabet(self) -> np.ndarray:
        return self.hard_symbols >= self.M if self.M is not None else np.zeros(len(self.hard_symbols), bool)


def _as_symbols(symbols, cfg: LinkConfig) -> np.ndarray:
    s = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if s.size and (s.min() < 0 or s.max() >= cfg.M):
        raise ModemError(f"symbols must lie in [0, {cfg.M}), got range [{s.min()}, {s.max()}]")
    return s


def symbol_blocks(symbols, cfg: LinkConfig) -> np.ndarray:
    """Modulated blocks as an ``(L, block_len)`` array."""
    s = _as_symbols(symbols, cfg)
    k = np.arange(cfg.block_len)
    m = phase_index(cfg.N, cfg.r, s[:, None], k[None, :])
    return np.exp(1j * np.pi * m / cfg.N)


def modulate(symbols, cfg: LinkConfig) -> np.ndarray:
    """Concatenate one sequence block per symbol.

    Block ``l`` is ``Z_N^{r,q_l}(k)`` evaluated at block-local ``k``.
    """
    return symbol_blocks(symbols, cfg).reshape(-1)


def dechirp(block, cfg: LinkConfig) -> np.ndarray:
    """Multiply by the conjugate ``q = 0`` reference.

    A clean symbol ``q`` comes out as the tone ``exp(j*2*pi*r*q*k/N)``.
    """
    y = np.asarray(block, dtype=complex)
    if y.shape[-1] != cfg.block_len:
        raise ModemError(f"block length {y.shape[-1]} != {cfg.block_len}")
    return y * np.conj(cfg.reference)


def dft(x, n: int | None = None, axis: int = -1) -> np.ndarray:
    """Exact length-``n`` DFT (any ``n``, prime included)."""
    return np.fft.fft(x, n=n, axis=axis)


def symbol_magnitudes(blocks, cfg: LinkConfig) -> np.ndarray:
    """Correlator magnitudes for every symbol hypothesis, shape ``(..., N)``.

    Truncated blocks are zero-padded to the parent length so every
    hypothesis is evaluated exactly.
    """
    z = np.abs(dft(dechirp(blocks, cfg), n=cfg.N))
    # symbol q lands on bin r*q mod N
    perm = (cfg.r * np.arange(cfg.N)) % cfg.N
    return z[..., perm]


def demodulate_symbol(block, cfg: LinkConfig) -> tuple[int, np.ndarray]:
    mags = symbol_magnitudes(block, cfg)
    return int(np.argmax(mags)), mags


def demodulate_stream(signal, cfg: LinkConfig, symbol_count: int, keep_magnitudes: bool = False) -> DemodOutput:
    """Apply the single-symbol receiver at offsets ``l * block_len``."""
    x = np.asarray(signal, dtype=complex)
    L = cfg.block_len
    if x.size < symbol_count * L:
        raise ModemError(f"need {symbol_count * L} samples for {symbol_count} symbols, got {x.size}")
    blocks = x[: symbol_count * L].reshape(symbol_count, L)
    hard = np.empty(symbol_count, dtype=np.int64)
    mags = np.empty((symbol_count, cfg.N)) if keep_magnitudes else None
    chunk = max(1, (1 << 21) // cfg.N)
    for start in range(0, symbol_count, chunk):
        m = symbol_magnitudes(blocks[start:start + chunk], cfg)
        hard[start:start + chunk] = np.argmax(m, axis=1)
        if mags is not None:
            mags[start:start + chunk] = m
    return DemodOutput(hard, mags, cfg.M)


def bits_to_symbols(bits, b: int) -> np.ndarray:
    """Big-endian ``b``-bit grouping."""
    v = np.asarray(bits, dtype=np.int64).reshape(-1)
    if b < 1:
        raise ModemError("bits per symbol must be >= 1")
    if v.size % b:
        raise ModemError(f"{v.size} bits is not a multiple of {b}")
    if v.size and (v.min() < 0 or v.max() > 1):
        raise ModemError("bits must be 0 or 1")
    weights = 1 << np.arange(b - 1, -1, -1, dtype=np.int64)
    return v.reshape(-1, b) @ weights


def symbols_to_bits(symbols, b: int) -> np.ndarray:
    s = np.asarray(symbols, dtype=np.int64).reshape(-1)
    shifts = np.arange(b - 1, -1, -1, dtype=np.int64)
    return ((s[:, None] >> shifts[None, :]) & 1).reshape(-1).astype(np.uint8)


def bit_errors(sent, received, b: int) -> np.ndarray:
    """Per-symbol bit error counts over the low ``b`` bits."""
    x = (np.asarray(sent, dtype=np.int64) ^ np.asarray(received, dtype=np.int64)) & ((1 << b) - 1)
    return np.unpackbits(x.astype(">u8").view(np.uint8).reshape(-1, 8), axis=1).sum(axis=1)

