"""Asynchronous multi-link superposition, interference sweeps and error curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import SampleBuffer, ShapingConfig, fractional_delay, matched_filter, pulse_shape, raised_cosine
from .framing import FrameConfig, frame_encode
from .modem import LinkConfig, bit_errors, demodulate_stream, modulate, symbols_to_bits
from .zc import SequenceError, is_prime, zc


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class InterfererSpec:
    link: LinkConfig
    delay_chips: float = 0.0
    power_db: float = 0.0
    seed: int = 0

    @property
    def amplitude(self) -> float:
        return 10.0 ** (self.power_db / 20.0)


@dataclass(frozen=True)
class MultiuserScenario:
    """Target frame plus co-channel interferers.

    Delays are relative to the target frame start, which is the receiver's
    time origin. ``shaping=None`` keeps everything at chip rate, in which
    case delays must be whole chips.
    """

    target: FrameConfig
    interferers: tuple[InterfererSpec, ...] = ()
    snr_db: float = 300.0
    trials: int = 1
    seed: int = 0
    shaping: ShapingConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "interferers", tuple(self.interferers))
        t = self.target.link
        for i, spec in enumerate(self.interferers):
            if spec.link.B != t.B:
                raise ScenarioError(f"interferer {i} bandwidth {spec.link.B} Hz != target {t.B} Hz")
            if spec.link.N == t.N and spec.link.r == t.r:
                raise ScenarioError(f"interferer {i} reuses the target root {t.r} at N={t.N}")
            if spec.delay_chips < 0:
                raise ScenarioError("delays are measured forward from the target frame start")
            if self.shaping is None and spec.delay_chips != int(spec.delay_chips):
                raise ScenarioError("fractional delays need a shaping config")
        if self.trials < 1:
            raise ScenarioError("trials must be >= 1")

    @property
    def window_chips(self) -> int:
        return self.target.chip_count


@dataclass
class Rendered:
    """One trial's signals at the channel sample rate, before noise."""

    target: np.ndarray
    interferers: list[np.ndarray]
    target_symbols: np.ndarray
    rate: float
    oversampling: int


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _random_frame(cfg: FrameConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    symbols = rng.integers(0, cfg.link.M, cfg.payload_len)
    return frame_encode(symbols_to_bits(symbols, cfg.link.b), cfg), symbols


def _place(chips: np.ndarray, delay_chips: float, length_chips: int, shaping: ShapingConfig | None,
           rate: float) -> np.ndarray:
    """Delay a chip vector and cut it to the receive window."""
    if shaping is None:
        d = int(delay_chips)
        out = np.zeros(length_chips, complex)
        if d < length_chips:
            n = min(chips.size, length_chips - d)
            out[d:d + n] = chips[:n]
        return out
    os_ = shaping.oversampling
    total = length_chips * os_ + shaping.span * os_
    keep = min(chips.size, max(0, length_chips - math.floor(delay_chips)) + shaping.span)
    if keep == 0:
        return np.zeros(total, complex)
    shaped = pulse_shape(chips[:keep], shaping, bandwidth=rate)
    x = np.zeros(total, complex)
    n = min(total, len(shaped))
    x[:n] = shaped.samples[:n]
    buf = SampleBuffer(x, rate=rate * os_, oversampling=os_)
    return fractional_delay(buf, delay_chips).samples if delay_chips else x


def interferer_frame(spec: InterfererSpec, target: FrameConfig, trial: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Chips and payload symbols of one interferer frame (same frame layout as the target)."""
    cfg = FrameConfig(spec.link, target.preamble_len, 0, target.payload_len)
    return _random_frame(cfg, _rng(spec.seed, trial))


def render(scenario: MultiuserScenario, trial: int = 0) -> Rendered:
    t = scenario.target
    chips, symbols = _random_frame(t, _rng(scenario.seed, trial, 0))
    L = scenario.window_chips
    sh = scenario.shaping
    target = _place(chips, 0.0, L, sh, t.link.B)
    others = []
    for spec in scenario.interferers:
        ichips, _ = interferer_frame(spec, t, trial)
        others.append(spec.amplitude * _place(ichips, spec.delay_chips, L, sh, t.link.B))
    os_ = sh.oversampling if sh else 1
    return Rendered(target, others, symbols, t.link.B * os_, os_)


def _noise(n: int, snr_db: float, key: tuple[int, ...]) -> np.ndarray:
    # unit target chip power; per-sample variance 1/snr (see channel.add_awgn)
    var = 10.0 ** (-snr_db / 10.0)
    g = _rng(*key).standard_normal((2, n))
    return math.sqrt(var / 2.0) * (g[0] + 1j * g[1])


def superpose(scenario: MultiuserScenario, trial: int = 0, rendered: Rendered | None = None) -> SampleBuffer:
    """Target plus all interferers, then AWGN referenced to the target's chip power."""
    rd = rendered or render(scenario, trial)
    x = rd.target + sum(rd.interferers, np.zeros_like(rd.target))
    x = x + _noise(x.size, scenario.snr_db, (scenario.seed, trial, 1 << 20))
    return SampleBuffer(
        x, rate=rd.rate, oversampling=rd.oversampling, chip_count=scenario.window_chips,
        meta={"target_symbols": rd.target_symbols, "trial": trial},
    )


def receive(buffer: SampleBuffer, scenario: MultiuserScenario) -> np.ndarray:
    """Chip-rate receiver input (matched-filtered when shaped)."""
    if scenario.shaping is None:
        return buffer.samples
    return matched_filter(buffer, scenario.shaping, chip_count=scenario.window_chips)


def demodulate_target(chips: np.ndarray, scenario: MultiuserScenario) -> np.ndarray:
    t = scenario.target
    start = t.preamble_len * t.link.block_len
    return demodulate_stream(chips[start:], t.link, t.payload_len).hard_symbols


def xcorr_matrix(N: int, roots, truncated: int | None = None) -> np.ndarray:
    """``M[i, j] = max_s |corr(seq_i, seq_j)[s]|`` over all cyclic shifts.

    With ``truncated = L`` row sequences keep their first ``L`` chips and
    are correlated against every cyclic shift of the full column sequence.
    """
    roots = [int(r) for r in roots]
    if not is_prime(N):
        raise SequenceError(f"N={N} is not prime")
    if len(set(roots)) != len(roots):
        raise SequenceError("roots must be distinct")
    seqs = np.stack([zc(N, r) for r in roots])
    cols = np.fft.fft(seqs, axis=1)
    rows = np.fft.fft(seqs[:, :truncated], n=N, axis=1) if truncated else cols
    out = np.empty((len(roots), len(roots)))
    for i in range(len(roots)):
        v = np.fft.ifft(np.conj(rows[i])[None, :] * cols, axis=1)
        out[i] = np.abs(v).max(axis=1)
    return out


def _periodic_cascade(N: int, tau: float, beta: float, wraps: int = 64) -> np.ndarray:
    """``h[n] = sum_j rc(n - tau + j N)``: the raised-cosine cascade folded onto one period."""
    j = np.arange(-wraps, wraps + 1)
    t = np.arange(N)[:, None] - tau + N * j[None, :]
    return raised_cosine(t, beta).sum(axis=1)


@dataclass
class SweepRow:
    r_target: int
    r_interferer: int
    delay_chips: float
    peak: float
    level_by_n: float
    level_by_sqrt_n: float
    level_db: float


def fractional_delay_sweep(N: int, root_pairs, delays, beta: float = 0.25) -> list[SweepRow]:
    """Worst correlator output of a target receiver facing one delayed interferer.

    The interferer repeats one symbol (a periodic sequence), is delayed by
    ``delay`` chips through the transmit/receive raised-cosine cascade and
    sampled at the target's chip instants; the peak is taken over every
    symbol hypothesis of the target. ``level_db`` is ``10*log10(level_by_n)``.
    """
    delays = [float(d) for d in delays]
    kernels = {}
    for d in delays:
        frac = d - math.floor(d)
        if frac not in kernels:
            kernels[frac] = np.fft.fft(_periodic_cascade(N, frac, beta))
    rows = []
    for r1, r2 in root_pairs:
        ref = np.conj(zc(N, r1))
        spec_b = np.fft.fft(zc(N, r2))
        for d in delays:
            frac = d - math.floor(d)
            y = np.roll(np.fft.ifft(spec_b * kernels[frac]), math.floor(d))
            peak = float(np.abs(np.fft.fft(y * ref)).max())
            rows.append(SweepRow(r1, r2, d, peak, peak / N, peak / math.sqrt(N), 10 * math.log10(peak / N)))
    return rows


@dataclass
class CrossSfTrace:
    shifts: np.ndarray
    target_only: np.ndarray
    interferer_only: np.ndarray
    combined: np.ndarray
    target_delay: int
    n_target: int

    @property
    def peak_shift(self) -> int:
        return int(np.argmax(self.combined))


def cross_sf_correlator_trace(target: LinkConfig, interferer: LinkConfig, target_delay: int = 1000,
                              interferer_delay: int = 0, seed: int = 0, target_symbol: int = 0) -> CrossSfTrace:
    """Target receiver's sliding correlation over one symbol period of shifts.

    The target sends a single symbol starting ``target_delay`` chips into a
    ``2 N - 1`` sample window; the interferer transmits a continuous stream
    of random symbols, its first symbol boundary at ``interferer_delay``.
    Magnitudes are raw, so a clean target peak equals ``N``.
    """
    if target.SF == interferer.SF:
        raise ScenarioError("cross-SF trace needs distinct spreading factors")
    if target.B != interferer.B:
        raise ScenarioError("links must share the bandwidth")
    N1 = target.block_len
    if not 0 <= target_delay < N1:
        raise ScenarioError(f"target delay must lie in [0, {N1})")
    window = 2 * N1 - 1
    t = np.zeros(window, complex)
    t[target_delay:target_delay + N1] = modulate([target_symbol], target)

    rng = _rng(seed, 0)
    L2 = interferer.block_len
    lead = interferer_delay % L2
    count = (window + lead) // L2 + 2
    stream = modulate(rng.integers(0, interferer.M, count), interferer)
    # symbol boundary at interferer_delay means the window starts L2 - lead chips into a symbol
    start = (L2 - lead) % L2
    i = stream[start:start + window]

    ref = np.conj(modulate([target_symbol], target))

    def trace(x: np.ndarray) -> np.ndarray:
        return np.abs(np.correlate(x, np.conj(ref), mode="valid"))

    return CrossSfTrace(np.arange(N1), trace(t), trace(i), trace(t + i), target_delay, N1)


@dataclass
class ErrorCurvePoint:
    sf: int
    n_interferers: int
    snr_db: float
    per: float
    ser: float
    ber: float
    trials: int
    symbol_errors: int
    packet_errors: int
    seed: int


def multiuser_error_curve(sf: int, counts, snr_db: float, trials: int, seed: int = 0, payload_len: int = 16,
                          preamble_len: int = 8, target_root: int = 1,
                          shaping: ShapingConfig | None = None) -> list[ErrorCurvePoint]:
    """SER/PER of a target link against equal-power uncoordinated interferers.

    Each trial draws, for the largest count, a random set of distinct roots
    (excluding the target's), a uniform delay in ``[0, frame duration)`` and
    a random payload per interferer; smaller counts reuse the first
    interferers and the same noise (common random numbers). Without
    ``shaping`` delays are whole chips.
    """
    if trials < 1:
        raise ScenarioError("trials must be >= 1")
    counts = sorted({int(c) for c in counts})
    if counts[0] < 0:
        raise ScenarioError("interferer counts must be >= 0")
    link = LinkConfig.for_sf(sf, r=target_root)
    frame = FrameConfig(link, preamble_len, 0, payload_len)
    pool = np.array([r for r in range(1, link.N) if r != target_root])
    kmax = counts[-1]
    if kmax > pool.size:
        raise ScenarioError(f"at most {pool.size} distinct interferer roots at N={link.N}")
    L = frame.chip_count
    sym_err = dict.fromkeys(counts, 0)
    pkt_err = dict.fromkeys(counts, 0)
    bit_err = dict.fromkeys(counts, 0)
    for trial in range(trials):
        rng = _rng(seed, trial, 2)
        roots = rng.permutation(pool)[:kmax]
        if shaping is None:
            delays = rng.integers(0, L, kmax).astype(float)
        else:
            delays = rng.uniform(0.0, L, kmax)
        specs = [InterfererSpec(LinkConfig(link.N, int(r), link.M, link.B), float(d), 0.0,
                                int(rng.integers(0, 2**63 - 1)))
                 for r, d in zip(roots, delays)]
        scen = MultiuserScenario(frame, tuple(specs), snr_db, trials, seed, shaping)
        rd = render(scen, trial)
        noise = _noise(rd.target.size, snr_db, (seed, trial, 1 << 20))
        acc = rd.target + noise
        done = 0
        for c in counts:
            for k in range(done, c):
                acc = acc + rd.interferers[k]
            done = c
            buf = SampleBuffer(acc, rate=rd.rate, oversampling=rd.oversampling, chip_count=L)
            got = demodulate_target(receive(buf, scen), scen)
            wrong = got != rd.target_symbols
            sym_err[c] += int(wrong.sum())
            pkt_err[c] += int(wrong.any())
            bit_err[c] += int(bit_errors(rd.target_symbols, got, link.b).sum())
    return [
        ErrorCurvePoint(sf, c, snr_db, pkt_err[c] / trials, sym_err[c] / (trials * payload_len),
                        bit_err[c] / (trials * payload_len * link.b), trials, sym_err[c], pkt_err[c], seed)
        for c in counts
    ]
