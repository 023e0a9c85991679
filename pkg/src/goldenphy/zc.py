"""Frequency-shifted Zadoff-Chu sequences and correlation primitives.

Chips are generated from an integer phase index reduced modulo ``2N`` so the
phase stays bit-exact up to ``N = 2**17`` and beyond.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np


class SequenceError(ValueError):
    """Invalid sequence parameters or incompatible sequences."""


@dataclass(frozen=True)
class ZcParams:
    """Length ``N``, root ``r`` and frequency offset ``q`` of a sequence.

    ``q`` is reduced modulo ``N`` on construction.
    """

    N: int
    r: int
    q: int = 0

    def __post_init__(self) -> None:
        N, r, q = int(self.N), int(self.r), int(self.q)
        if N < 1:
            raise SequenceError(f"sequence length must be >= 1, got N={N}")
        if N == 1:
            # the only residue is 0; r=1 is accepted as the conventional root
            if r != 1:
                raise SequenceError(f"N=1 admits only root r=1, got r={r}")
        elif not 1 <= r < N:
            raise SequenceError(f"root must satisfy 1 <= r < N, got r={r}, N={N}")
        elif math.gcd(r, N) != 1:
            raise SequenceError(f"root must be coprime with N: gcd({r},{N}) = {math.gcd(r, N)} != 1")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "q", q % N)


@dataclass(frozen=True)
class ChipSequence:
    """Complex chip vector plus the parameters it was generated from.

    ``params`` is None for derived sequences. ``truncated_from`` records the
    parent length when only a prefix of a longer sequence is kept.
    """

    chips: np.ndarray
    params: ZcParams | None = None
    truncated_from: int | None = None

    def __len__(self) -> int:
        return len(self.chips)

    @property
    def derived(self) -> bool:
        return self.params is None or self.truncated_from is not None


@dataclass(frozen=True)
class CorrelationProfile:
    """Raw (unnormalized) correlation values.

    For ``kind == "cyclic"`` index ``s`` is the cyclic shift. For
    ``kind == "aperiodic"`` index ``i`` is lag ``i - zero_lag``.
    """

    values: np.ndarray
    kind: Literal["cyclic", "aperiodic", "windowed"]
    zero_lag: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def normalized(self, by: Literal["n", "sqrt_n"] = "n") -> np.ndarray:
        """Magnitudes divided by ``N`` or by ``sqrt(N)``."""
        n = self.meta["n"]
        return self.magnitude / (n if by == "n" else math.sqrt(n))


def phase_index(N: int, r: int, q, k) -> np.ndarray:
    """Integer ``m`` (mod 2N) with ``Z_N^{r,q}(k) = exp(j*pi*m/N)``.

    ``q`` and ``k`` broadcast against each other.
    """
    two_n = 2 * N
    k = np.asarray(k, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64) % N
    # k*(k+1) is even for every k, so the odd-N chirp part is an exact integer
    base = (k * (k + 1)) % two_n if N % 2 else (k * k) % two_n
    shift = ((2 * q) % two_n) * k % two_n
    return ((base + shift) % two_n) * (r % two_n) % two_n


def zc_generate(params: ZcParams) -> ChipSequence:
    """Generate ``Z_N^{r,q}(k)`` for ``k = 0..N-1``."""
    N = params.N
    m = phase_index(N, params.r, params.q, np.arange(N))
    return ChipSequence(np.exp(1j * np.pi * m / N), params)


def zc(N: int, r: int, q: int = 0) -> np.ndarray:
    """Shorthand returning the bare chip array."""
    return zc_generate(ZcParams(N, r, q)).chips


def _chips(seq) -> np.ndarray:
    return np.asarray(seq.chips if isinstance(seq, ChipSequence) else seq, dtype=complex)


def cyclic_xcorr(a, b) -> CorrelationProfile:
    """``values[s] = sum_k a(k) * conj(b((k+s) mod N))`` for all shifts."""
    x, y = _chips(a), _chips(b)
    if x.shape != y.shape or x.ndim != 1:
        raise SequenceError(f"cyclic correlation needs equal lengths, got {len(x)} and {len(y)}")
    values = np.conj(np.fft.ifft(np.conj(np.fft.fft(x)) * np.fft.fft(y)))
    return CorrelationProfile(values, "cyclic", meta={"n": len(x), "normalization": "raw; divide by n"})


def aperiodic_xcorr(a, b) -> CorrelationProfile:
    """Full linear cross-correlation with zero padding.

    ``values[i] = sum_k a(k) * conj(b(k + lag))`` with ``lag = i - (len(a) - 1)``,
    so the output has ``len(a) + len(b) - 1`` entries and zero lag sits at
    index ``len(a) - 1``.
    """
    x, y = _chips(a), _chips(b)
    if x.size == 0 or y.size == 0:
        raise SequenceError("aperiodic correlation of an empty sequence")
    n = x.size + y.size - 1
    nfft = 1 << (n - 1).bit_length()
    # convolution of reversed a with conj(b) is the correlation at lag n-(len(a)-1)
    spec = np.fft.fft(x[::-1], nfft) * np.fft.fft(np.conj(y), nfft)
    values = np.fft.ifft(spec)[:n]
    return CorrelationProfile(
        values, "aperiodic", zero_lag=x.size - 1,
        meta={"n": max(x.size, y.size), "normalization": "raw; divide by n"},
    )


def windowed_xcorr(a, parent_b) -> CorrelationProfile:
    """Correlate a truncated sequence against every cyclic shift of a full one.

    ``values[s] = sum_{k<L} a(k) * conj(b((k+s) mod N))`` where ``L = len(a)``
    and ``N = len(parent_b)``. This is what a truncated-mode receiver sees:
    its symbol hypotheses are cyclic shifts of the parent-length sequence
    observed over the first ``L`` chips.
    """
    x, y = _chips(a), _chips(parent_b)
    if x.size > y.size:
        raise SequenceError(f"window ({x.size}) longer than parent sequence ({y.size})")
    N = y.size
    values = np.conj(np.fft.ifft(np.conj(np.fft.fft(x, N)) * np.fft.fft(y)))
    return CorrelationProfile(values, "windowed", meta={"n": x.size, "parent_n": N})


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for all n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for p in small:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def smallest_prime_geq(x: int) -> int:
    """Least prime ``>= x``."""
    if x < 2:
        raise SequenceError(f"smallest_prime_geq needs x >= 2, got {x}")
    n = int(x)
    while not is_prime(n):
        n += 1
    return n


def root_set(N: int, K: int, seed: int | None = None) -> list[int]:
    """``K`` distinct roots for prime ``N``.

    Ascending from 1 by default; with ``seed`` a uniform random subset is
    drawn (returned in draw order). For prime ``N`` every pairwise difference
    is coprime with ``N``.
    """
    if not is_prime(N):
        raise SequenceError(f"root sets are only defined here for prime N, got N={N}")
    if not 1 <= K <= N - 1:
        raise SequenceError(f"need 1 <= K <= N-1 = {N - 1}, got K={K}")
    if seed is None:
        return list(range(1, K + 1))
    rng = np.random.default_rng(seed)
    return [int(v) for v in rng.choice(np.arange(1, N), size=K, replace=False)]


def truncate(seq: ChipSequence, length: int) -> ChipSequence:
    """Keep the first ``length`` chips of ``seq``."""
    n = len(seq)
    if length > n:
        raise SequenceError(f"cannot truncate a length-{n} sequence to {length} chips")
    if length < 1:
        raise SequenceError("truncation length must be positive")
    return ChipSequence(seq.chips[:length].copy(), seq.params, truncated_from=n)
