import math

import numpy as np
import pytest

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def naive_dft(x):
    x = np.asarray(x, dtype=complex)
    n = x.size
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def naive_cyclic_xcorr(a, b):
    n = len(a)
    return np.array([sum(a[k] * np.conj(b[(k + s) % n]) for k in range(n)) for s in range(n)])


def naive_aperiodic_xcorr(a, b):
    la, lb = len(a), len(b)
    out = []
    for lag in range(-(la - 1), lb):
        out.append(sum(a[k] * np.conj(b[k + lag]) for k in range(la) if 0 <= k + lag < lb))
    return np.array(out)


def zc_formula(N, r, q):
    """Direct float evaluation of the sequence definition (fine for small N)."""
    k = np.arange(N)
    if N % 2:
        return np.exp(1j * np.pi * r * (k + 1 + 2 * q) * k / N)
    return np.exp(1j * np.pi * r * (k + 2 * q) * k / N)


def noncoherent_symbol_error(snr_symbol: float, n_bins: int) -> float:
    """Closed-form noncoherent orthogonal M-ary symbol error probability."""
    M = n_bins
    total = 0.0
    for k in range(1, M):
        total += (-1) ** (k + 1) * math.comb(M - 1, k) / (k + 1) * math.exp(-k / (k + 1) * snr_symbol)
    return total


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
