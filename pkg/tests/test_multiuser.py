import math

import numpy as np
import pytest

from goldenphy.channel import ShapingConfig
from goldenphy.framing import FrameConfig
from goldenphy.modem import LinkConfig, dechirp, dft
from goldenphy.multiuser import (
    InterfererSpec, MultiuserScenario, ScenarioError, cross_sf_correlator_trace, demodulate_target,
    fractional_delay_sweep, multiuser_error_curve, receive, render, superpose, xcorr_matrix,
)
from goldenphy.zc import SequenceError, cyclic_xcorr, zc

N = 521


def _frame(r=1, payload=6, preamble=8):
    return FrameConfig(LinkConfig(N, r), preamble, 0, payload)


def _decode(scen, trial=0):
    buf = superpose(scen, trial)
    return demodulate_target(receive(buf, scen), scen), buf.meta["target_symbols"]


def test_no_interferers_noiseless():
    scen = MultiuserScenario(_frame(), (), snr_db=300.0)
    got, sent = _decode(scen)
    assert np.array_equal(got, sent)


def test_negligible_interferer_changes_nothing():
    base = MultiuserScenario(_frame(), (), snr_db=5.0, seed=3)
    weak = MultiuserScenario(_frame(), (InterfererSpec(LinkConfig(N, 9), 77, power_db=-300.0, seed=1),),
                             snr_db=5.0, seed=3)
    assert np.array_equal(_decode(base)[0], _decode(weak)[0])


@pytest.mark.parametrize("shaping", [None, ShapingConfig()])
def test_superposition_is_linear(shaping):
    specs = (InterfererSpec(LinkConfig(N, 4), 100.0, 0.0, 11), InterfererSpec(LinkConfig(N, 6), 2000.0, -3.0, 12))
    if shaping is not None:
        specs = (InterfererSpec(LinkConfig(N, 4), 100.25, 0.0, 11), InterfererSpec(LinkConfig(N, 6), 2000.6, -3.0, 12))
    scen = MultiuserScenario(_frame(), specs, snr_db=300.0, shaping=shaping)
    rd = render(scen)
    total = superpose(scen).samples
    # each interferer rendered alone gives the same contribution
    for spec, part in zip(specs, rd.interferers):
        alone = render(MultiuserScenario(_frame(), (spec,), snr_db=300.0, shaping=shaping)).interferers[0]
        assert np.max(np.abs(alone - part)) == 0.0
    assert np.max(np.abs(total - (rd.target + rd.interferers[0] + rd.interferers[1]))) < 1e-12


def test_aligned_residual_is_sqrt_n_per_bin():
    d = 57
    spec = InterfererSpec(LinkConfig(N, 9), d, 0.0, 4)
    scen = MultiuserScenario(_frame(r=3), (spec,), snr_db=300.0)
    rd = render(scen)
    # block 2 of the target sees only the interferer's repeated preamble symbol, cyclically shifted
    block = rd.interferers[0][2 * N:3 * N]
    mags = np.abs(dft(dechirp(block, scen.target.link)))
    assert np.allclose(mags, math.sqrt(N), rtol=1e-6)
    assert mags.max() / N == pytest.approx(1 / math.sqrt(N), rel=1e-6)


def test_root_separation_one_aligned_interferer():
    for r2 in (2, 5, 200, 520):
        scen = MultiuserScenario(_frame(r=1), (InterfererSpec(LinkConfig(N, r2), 0, 0.0, r2),), snr_db=300.0)
        got, sent = _decode(scen)
        assert np.array_equal(got, sent)


def test_scenario_validation():
    with pytest.raises(ScenarioError):
        MultiuserScenario(_frame(), (InterfererSpec(LinkConfig(N, 2, B=250e3)),))
    with pytest.raises(ScenarioError):
        MultiuserScenario(_frame(r=2), (InterfererSpec(LinkConfig(N, 2)),))
    with pytest.raises(ScenarioError):
        MultiuserScenario(_frame(), (InterfererSpec(LinkConfig(N, 2), 3.5),))
    with pytest.raises(ScenarioError):
        MultiuserScenario(_frame(), (InterfererSpec(LinkConfig(N, 2), -1),))


def test_superpose_deterministic():
    scen = MultiuserScenario(_frame(), (InterfererSpec(LinkConfig(N, 8), 300, 0.0, 5),), snr_db=0.0, seed=9)
    assert np.array_equal(superpose(scen, 2).samples, superpose(scen, 2).samples)
    assert not np.array_equal(superpose(scen, 2).samples, superpose(scen, 3).samples)


def test_xcorr_matrix():
    roots = [1, 2, 7, 100, 2052]
    m = xcorr_matrix(2053, roots)
    assert np.allclose(np.diag(m), 2053, rtol=1e-12)
    off = m[~np.eye(5, dtype=bool)]
    assert np.allclose(off, math.sqrt(2053), rtol=1e-6)
    # agrees with the pairwise primitive
    assert m[1, 3] == pytest.approx(cyclic_xcorr(zc(2053, 2), zc(2053, 100)).magnitude.max(), rel=1e-12)
    with pytest.raises(SequenceError):
        xcorr_matrix(2048, [1, 3])
    with pytest.raises(SequenceError):
        xcorr_matrix(2053, [1, 1])


def test_truncated_matrix_is_flat_enough():
    roots = list(range(1, 31))
    m = xcorr_matrix(2053, roots, truncated=2048)
    assert np.allclose(np.diag(m), 2048)
    off = m[~np.eye(30, dtype=bool)]
    assert off.max() < 1.5 * math.sqrt(2048)
    # no trend with root distance
    dist = np.abs(np.subtract.outer(roots, roots))[~np.eye(30, dtype=bool)]
    assert abs(np.corrcoef(dist, off)[0, 1]) < 0.3


def test_sweep_integer_delay_exact():
    rows = fractional_delay_sweep(N, [(3, 17), (100, 4)], [0.0, 1.0, 5.0, 0.25])
    for r in rows:
        if r.delay_chips == int(r.delay_chips):
            assert r.level_by_n == pytest.approx(1 / math.sqrt(N), rel=1e-6)
            assert r.level_db == pytest.approx(-10 * math.log10(math.sqrt(N)), abs=1e-6)
        assert r.level_by_sqrt_n == pytest.approx(r.level_by_n * math.sqrt(N))


def test_sweep_is_periodic_in_whole_chips():
    a = fractional_delay_sweep(N, [(3, 17)], [0.5, 7.5, 400.5])
    assert a[0].peak == pytest.approx(a[1].peak, rel=1e-9) == pytest.approx(a[2].peak, rel=1e-9)


def test_cross_sf_trace():
    t, i = LinkConfig.for_sf(11), LinkConfig.for_sf(10)
    tr = cross_sf_correlator_trace(t, i, target_delay=1000, seed=0)
    assert tr.target_only[1000] == pytest.approx(2053, rel=1e-12)
    assert np.delete(tr.target_only, 1000).max() < 0.05 * 2053
    assert tr.peak_shift == 1000
    with pytest.raises(ScenarioError):
        cross_sf_correlator_trace(t, t)
    with pytest.raises(ScenarioError):
        cross_sf_correlator_trace(t, i, target_delay=2053)


def test_error_curve_deterministic_and_single_user_clean():
    a = multiuser_error_curve(7, [0, 3], 10.0, 10, seed=2, payload_len=4)
    b = multiuser_error_curve(7, [3, 0], 10.0, 10, seed=2, payload_len=4)
    assert a == b
    assert a[0].ser == 0.0 and a[0].per == 0.0


def test_error_curve_grows_under_heavy_load():
    pts = multiuser_error_curve(7, [0, 20, 80], 0.0, 15, seed=1, payload_len=8)
    ser = [p.ser for p in pts]
    assert ser == sorted(ser) and ser[-1] > 0.0
    assert all(p.per >= p.ser for p in pts)
    with pytest.raises(ScenarioError):
        multiuser_error_curve(7, [131], 0.0, 1)
