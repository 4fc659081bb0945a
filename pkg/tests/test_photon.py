import math

import numpy as np
import pytest
from scipy.stats import poisson

from kerrcat.errors import PeaksUnresolved, PoissonFitPoor, TruncationTooSmall
from kerrcat.hilbert import HilbertLayout, coherent, fock, superposition
from kerrcat.protocols.photon import (SpectroscopyResult, calibrate_photon_number, calibrate_photon_number_wigner,
                                      fit_poisson, fit_spectrum_peaks, joint_spectroscopy_point, lineshape_fwhm,
                                      pump_gain, pumped_state, qubit_spectroscopy, rabi_lineshape)
from kerrcat.tomography import reference_grid, wigner_fast

CHI = 4.35
FREQS = np.arange(-40.0, 5.0 + 1e-9, 0.1)


def test_lineshape_peak_and_width():
    om = 0.5
    assert rabi_lineshape(0.0, om, 1000.0) == pytest.approx(1.0)
    assert 0.5 < lineshape_fwhm(1000.0) < 1.0


def test_spectroscopy_matches_joint_evolution():
    lay = HilbertLayout(20)
    psi = coherent(1.2, lay)
    spec = qubit_spectroscopy(psi, CHI, [0.0, -CHI, -2.3, -3 * CHI])
    for f, p in zip(spec.frequencies, spec.response):
        assert joint_spectroscopy_point(psi, CHI, f) == pytest.approx(p, abs=1e-12)


def test_spectrum_csv_roundtrip_and_validation(tmp_path):
    spec = qubit_spectroscopy(coherent(1.0, HilbertLayout(20)), CHI, FREQS[::10])
    back = SpectroscopyResult.read_csv(spec.write_csv(tmp_path / "s.csv"))
    assert back.frequencies == spec.frequencies and back.response == spec.response
    with pytest.raises(ValueError):
        SpectroscopyResult((0.0,), (1.5,))


def test_poisson_route_recovers_nbar_192():
    lay = HilbertLayout(30)
    spec = qubit_spectroscopy(coherent(math.sqrt(1.92), lay), CHI, FREQS)
    fitted = fit_spectrum_peaks(spec, 4.0)
    nb = fit_poisson(fitted.weights).nbar
    assert nb == pytest.approx(1.92, rel=0.02)
    assert fitted.centers_mhz[1] - fitted.centers_mhz[0] == pytest.approx(-CHI, rel=1e-6)


def test_poisson_route_with_shot_noise():
    lay = HilbertLayout(30)
    spec = qubit_spectroscopy(coherent(math.sqrt(1.92), lay), CHI, FREQS, shots=2000, rng=np.random.default_rng(1))
    fitted = fit_spectrum_peaks(spec, 4.0)
    assert fit_poisson(fitted.weights, noise=fitted.residual_rms).nbar == pytest.approx(1.92, rel=0.02)


def test_vacuum_has_all_weight_in_zero_peak():
    spec = qubit_spectroscopy(fock(HilbertLayout(20), 0), CHI, FREQS)
    fitted = fit_spectrum_peaks(spec, CHI)
    w = np.asarray(fitted.weights)
    assert w[0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(w[1:] < 1e-6)
    assert fit_poisson(np.where(w < 1e-9, 0.0, w)).nbar == pytest.approx(0.0, abs=1e-3)


def test_unresolved_peaks_are_refused():
    spec = qubit_spectroscopy(coherent(1.0, HilbertLayout(20)), 0.3, FREQS)
    with pytest.raises(PeaksUnresolved):
        fit_spectrum_peaks(spec, 0.3)


def test_non_poisson_weights_are_flagged():
    lay = HilbertLayout(20)
    cat = superposition([1.5, -1.5], [1, 1], lay)  # only even photon numbers
    spec = qubit_spectroscopy(cat, CHI, FREQS)
    with pytest.raises(PoissonFitPoor):
        fit_poisson(fit_spectrum_peaks(spec, CHI).weights)


def test_fit_poisson_exact_weights():
    w = 0.8 * poisson.pmf(np.arange(12), 3.3)
    fit = fit_poisson(w)
    assert fit.nbar == pytest.approx(3.3, rel=1e-8)
    assert fit.scale == pytest.approx(0.8, rel=1e-8)


def test_pump_is_linear_in_weak_drive():
    lay = HilbertLayout(20)
    st = pumped_state(5.0, lay)
    assert abs(np.vdot(coherent(-1j * 5.0 * pump_gain(), lay).data, st.data)) ** 2 > 1 - 1e-10
    with pytest.raises(TruncationTooSmall):
        pumped_state(60.0, lay)


@pytest.fixture(scope="module")
def pump_series():
    lay = HilbertLayout(30)
    amps = [0.0, 7.0, 14.0, 21.0, 28.0]
    states = [pumped_state(a, lay, kerr_mhz=0.05) for a in amps]
    return lay, amps, states


def test_poisson_and_wigner_routes_agree(pump_series):
    lay, amps, states = pump_series
    nbars = [float(np.dot(np.arange(30), np.abs(s.data) ** 2)) for s in states]
    assert max(nbars) <= 5.0
    spectra = [qubit_spectroscopy(s, CHI, FREQS) for s in states]
    cal_p = calibrate_photon_number(spectra, amps, 4.0)
    grids = [wigner_fast(s, reference_grid(2.2, 81)) for s in states]
    cal_w = calibrate_photon_number_wigner(grids, amps)
    assert cal_p.gain == pytest.approx(cal_w.gain, rel=0.03)
    assert cal_p.gain == pytest.approx(pump_gain(), rel=0.01)
    assert cal_p.intercept_consistent
