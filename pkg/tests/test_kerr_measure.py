import math

import numpy as np
import pytest

from kerrcat.dynamics import PulseEnvelope
from kerrcat.errors import PeaksUnresolved, ShiftExceedsLinewidth
from kerrcat.hilbert import HilbertLayout
from kerrcat.protocols.kerr_measure import (amplitude_for_nbar, default_probe, fit_rabi_frequency,
                                            nbar_for_amplitude, pull_factor, single_tone_kerr, two_tone_kerr)
from kerrcat.snail import TWO_PI, mode_parameters, table_device

LAY = HilbertLayout(30)
NBARS = [0.5, 1.0, 2.0, 3.0, 4.0]


def _amps():
    probe = default_probe()
    return probe, [amplitude_for_nbar(probe, nb) for nb in NBARS]


def test_amplitude_nbar_inverse():
    probe = default_probe()
    assert nbar_for_amplitude(probe, amplitude_for_nbar(probe, 2.5)) == pytest.approx(2.5)


def test_pull_factor_square_pulse_closed_form():
    # N ∝ x², Φ ∝ (1 - x³)/3 with x = t/T; slope on (1 - x) is cov(x³, x) / (3 var x) = (3/40) / (3/12)
    assert pull_factor(PulseEnvelope("square", 1.0, 100.0), n=20001) == pytest.approx(0.3, rel=1e-4)


@pytest.mark.parametrize("kerr,rel", [(0.5, 0.05), (1.0, 0.05), (2.0, 0.05)])
def test_single_tone_recovers_small_kerr(kerr, rel):
    probe, amps = _amps()
    r = single_tone_kerr(kerr, probe, amps, LAY)
    assert r.kerr_mhz == pytest.approx(kerr, rel=rel)
    assert r.r_squared > 0.99


def test_single_tone_resolution_at_kerr_free_point():
    dev = table_device()
    fp = mode_parameters(0.4026 * TWO_PI, dev)
    probe, amps = _amps()
    r = single_tone_kerr(fp, probe, amps, LAY)
    assert abs(r.kerr_mhz) < 0.070


def test_single_tone_linewidth_guard():
    probe, amps = _amps()
    with pytest.raises(ShiftExceedsLinewidth):
        single_tone_kerr(8.0, probe, amps, LAY)


@pytest.mark.parametrize("kerr", [2.0, 5.21, -3.0])
def test_two_tone_recovers_large_kerr(kerr):
    r = two_tone_kerr(kerr, LAY)
    assert r.kerr_mhz == pytest.approx(kerr, rel=0.02)
    assert (r.f12_mhz < r.f01_mhz) == (kerr < 0)


def test_two_tone_rabi_ratio_is_sqrt2():
    r = two_tone_kerr(5.21, LAY)
    assert r.rabi_freq_12_mhz / r.rabi_freq_01_mhz == pytest.approx(math.sqrt(2), rel=0.01)
    assert max(r.rabi_01) == pytest.approx(1.0, abs=0.01)


def test_two_tone_refuses_unresolved_lines():
    with pytest.raises(PeaksUnresolved):
        two_tone_kerr(0.2, LAY)


@pytest.mark.parametrize("kerr", [2.0, 2.5, 3.0])
def test_routes_agree_in_overlap_regime(kerr):
    probe, amps = _amps()
    a = single_tone_kerr(kerr, probe, amps, LAY).kerr_mhz
    b = two_tone_kerr(kerr, LAY).kerr_mhz
    assert abs(a - b) / abs(b) < 0.10


def test_fit_rabi_frequency_on_synthetic_trace():
    t = np.linspace(0, 5000, 501)
    pop = 0.5 * (1 - np.cos(2 * math.pi * 1.3e-3 * t))
    assert fit_rabi_frequency(t, pop) == pytest.approx(1.3, rel=1e-6)
