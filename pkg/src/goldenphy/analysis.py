"""BER theory, Monte Carlo harness and interference-rejection table."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Literal

import numpy as np
from scipy import integrate, optimize, special
from statsmodels.stats.proportion import proportion_confint

from .channel import ChannelConfig, SampleBuffer, ShapingConfig, add_awgn, matched_filter, pulse_shape
from .modem import LinkConfig, bit_errors, demodulate_stream, modulate
from .zc import smallest_prime_geq


class QuadratureError(RuntimeError):
    pass


@dataclass
class BerPoint:
    snr_db: float
    sf: int
    ber: float
    source: Literal["theory_approx", "theory_integral", "monte_carlo"]
    trials: int = 0
    errors: int = 0
    bits: int = 0
    symbol_errors: int = 0
    ci_low: float | None = None
    ci_high: float | None = None
    seed: int | None = None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RicianModel:
    """Detection statistics in the DFT domain.

    The correct bin magnitude is Rician with noncentrality ``nu`` and
    per-component deviation ``sigma``; the ``n_bins - 1`` competing bins
    are Rayleigh with the same ``sigma``.
    """

    nu: float
    sigma: float
    n_bins: int

    def __post_init__(self) -> None:
        if self.nu < 0 or self.sigma <= 0 or self.n_bins < 2:
            raise ValueError(f"invalid Rician model {self}")

    @classmethod
    def for_link(cls, snr_linear: float, N: int, n_bins: int) -> RicianModel:
        """Unit chips and chip noise variance ``1/snr``: ``nu = N``, ``sigma^2 = N/(2 snr)``."""
        return cls(nu=float(N), sigma=math.sqrt(N / (2.0 * snr_linear)), n_bins=n_bins)

    @property
    def symbol_snr(self) -> float:
        return self.nu**2 / (2.0 * self.sigma**2)


def q_function(x):
    """Gaussian tail probability via ``erfc``."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def ber_approx(snr_linear, sf: int):
    """Closed-form approximation, ``snr_linear`` being the per-chip SNR."""
    g = np.asarray(snr_linear, dtype=float)
    return 0.5 * q_function(np.sqrt(g * 2.0 ** (sf + 1)) - math.sqrt(1.386 * sf + 1.154))


def symbol_error_integral(model: RicianModel, abs_tol: float = 1e-10) -> float:
    """``1 - P(correct bin exceeds all competitors)`` by adaptive quadrature.

    Integration runs in the scaled variable ``x = beta / sigma``.
    """
    a = model.nu / model.sigma
    K = model.n_bins - 1

    def integrand(x: float) -> float:
        # Rician pdf in x, written with i0e to stay finite for large a*x
        pdf = x * math.exp(-0.5 * (x - a) ** 2) * special.i0e(a * x)
        e = math.exp(-0.5 * x * x)
        if e >= 1.0:
            return pdf
        return -math.expm1(K * math.log1p(-e)) * pdf

    lo, hi = max(0.0, a - 40.0), a + 40.0
    # the competitor bracket falls from 1 to 0 around sqrt(2 ln K)
    knee = math.sqrt(2.0 * math.log(K)) if K > 1 else 1.0
    points = sorted({p for p in (a, knee, knee + 3.0) if lo < p < hi})
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(integrand, lo, hi, points=points or None, limit=500,
                                      epsabs=abs_tol * 1e-2, epsrel=1e-10)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature did not converge for {model}: {exc}") from exc
    if err > abs_tol:
        raise QuadratureError(f"quadrature error estimate {err:.3g} above target {abs_tol:g} for {model}")
    return min(max(val, 0.0), 1.0)


def ber_integral(model: RicianModel) -> float:
    """Bit error probability of orthogonal noncoherent detection.

    Every wrong symbol is equally likely, so the symbol error probability is
    scaled by ``(n_bins/2) / (n_bins - 1)``.
    """
    ps = symbol_error_integral(model)
    return ps * (model.n_bins / 2.0) / (model.n_bins - 1)


def ber_integral_for(snr_linear: float, sf: int, N: int | None = None) -> float:
    N = N or smallest_prime_geq(2**sf)
    return ber_integral(RicianModel.for_link(snr_linear, N, n_bins=2**sf))


def wilson_interval(errors: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    if trials <= 0:
        return (0.0, 1.0)
    lo, hi = proportion_confint(errors, trials, alpha=alpha, method="wilson")
    return float(lo), float(hi)


def _batch_rng(seed: int, point: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, point, batch]))


def _run_batch(cfg: LinkConfig, snr_db: float, n_symbols: int, rng: np.random.Generator,
               shaping: ShapingConfig | None) -> tuple[int, int]:
    sent = rng.integers(0, cfg.M, n_symbols)
    chips = modulate(sent, cfg)
    channel = ChannelConfig(snr_db)
    if shaping is None:
        rx = add_awgn(SampleBuffer(chips, rate=cfg.B), channel, rng=rng, signal_power=1.0).samples
    else:
        shaped = pulse_shape(chips, shaping, bandwidth=cfg.B)
        noisy = add_awgn(shaped, channel, rng=rng, signal_power=1.0)
        rx = matched_filter(noisy, shaping)
    got = demodulate_stream(rx, cfg, n_symbols).hard_symbols
    return int(bit_errors(sent, got, cfg.b).sum()), int(np.count_nonzero(sent != got))


def monte_carlo_ber(cfg: LinkConfig, snr_db_list: Iterable[float], trials_per_point: int, seed: int = 0,
                    shaping: ShapingConfig | None = None, threads: int = 1,
                    batch_symbols: int | None = None) -> list[BerPoint]:
    """Simulated BER over ``trials_per_point`` symbols per SNR.

    Batches draw from ``SeedSequence([seed, point_index, batch_index])`` with
    a batch size that depends only on ``N``, so results do not depend on
    ``threads``. Decisions outside the alphabet are scored on their low
    ``b`` bits.
    """
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be >= 1")
    batch = batch_symbols or max(1, (1 << 19) // cfg.block_len)
    points = []
    for pi, snr_db in enumerate(snr_db_list):
        sizes = [min(batch, trials_per_point - s) for s in range(0, trials_per_point, batch)]
        jobs = [(cfg, snr_db, n, _batch_rng(seed, pi, bi), shaping) for bi, n in enumerate(sizes)]
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(lambda j: _run_batch(*j), jobs))
        else:
            results = [_run_batch(*j) for j in jobs]
        errors = sum(r[0] for r in results)
        sym_errors = sum(r[1] for r in results)
        bits = trials_per_point * cfg.b
        lo, hi = wilson_interval(errors, bits)
        points.append(BerPoint(
            snr_db=float(snr_db), sf=cfg.SF, ber=errors / bits, source="monte_carlo",
            trials=trials_per_point, errors=errors, bits=bits, symbol_errors=sym_errors,
            ci_low=lo, ci_high=hi, seed=seed,
        ))
    return points


TABLE_SF_RANGE = range(7, 17)


@dataclass(frozen=True)
class RejectionRow:
    sf: int
    n: int
    rejection_db: float
    set_size: int
    extrapolated: bool


def interference_rejection(sf: int) -> RejectionRow:
    """Worst same-SF cross-correlation level, ``10*log10(1/sqrt(N))`` dB."""
    if sf < 1:
        raise ValueError("sf must be >= 1")
    N = smallest_prime_geq(2**sf)
    return RejectionRow(sf, N, -10.0 * math.log10(math.sqrt(N)), N - 1, sf not in TABLE_SF_RANGE)


def rejection_table(sfs: Iterable[int] = TABLE_SF_RANGE) -> list[RejectionRow]:
    return [interference_rejection(sf) for sf in sfs]


def snr_for_ber(target: float, sf: int, lo_db: float = -60.0, hi_db: float = 20.0) -> float:
    """Per-chip SNR (dB) at which the closed form equals ``target``."""
    def gap(d: float) -> float:
        return math.log(max(float(ber_approx(10 ** (d / 10), sf)), 1e-300) / target)

    return float(optimize.brentq(gap, lo_db, hi_db, xtol=1e-10))
