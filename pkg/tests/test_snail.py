import math

import numpy as np
import pytest

from kerrcat import snail
from kerrcat.errors import MultipleMinima, NoSignChange
from kerrcat.snail import (TWO_PI, Anchors, ChiTable, SnailDevice, anchored_device, calibrate, flux_sweep,
                           kerr_extremes, kerr_free_flux, mode_parameters, tuned_device, read_frequency_curve,
                           read_sweep_csv, table_device, taylor_coefficients, write_frequency_curve,
                           write_sweep_csv)

from oracles import kerr_from_taylor, snail_taylor_analytic


@pytest.fixture(scope="module")
def table():
    return table_device()


def test_taylor_coefficients_match_analytic_oracle(table):
    rng = np.random.default_rng(2024)
    fluxes = rng.uniform(0.0, 0.5, 20)
    for f in fluxes:
        phi = f * TWO_PI
        tc = taylor_coefficients(phi, table)
        s, c2, c3, c4 = snail_taylor_analytic(phi, table.beta, table.r)
        assert tc.phi_min == pytest.approx(s, abs=1e-12)
        assert tc.c2 == pytest.approx(c2, rel=1e-5)
        assert tc.c4 == pytest.approx(c4, rel=1e-5)
        # c3 vanishes by symmetry at zero flux
        assert tc.c3 == pytest.approx(c3, rel=1e-5, abs=1e-9)


def test_mode_parameters_match_closed_forms(table):
    phi = 0.3 * TWO_PI
    fp = mode_parameters(phi, table)
    _, c2, c3, c4 = snail_taylor_analytic(phi, table.beta, table.r)
    omega, ks, kqs = kerr_from_taylor(c2, c3, c4, table.EC, table.EJ, table.chi(phi), table.Kq)
    assert fp.omega_s_ghz == pytest.approx(omega, rel=1e-6)
    assert fp.ks_mhz == pytest.approx(ks, rel=1e-5)
    assert fp.kqs_mhz == pytest.approx(kqs, rel=1e-12)
    assert fp.k_mhz == pytest.approx(fp.ks_mhz + fp.kqs_mhz)


def test_table_device_anchors(table):
    fp = mode_parameters(snail.KERR_FREE_FLUX * TWO_PI, table)
    assert fp.omega_s_ghz == pytest.approx(snail.OMEGA_S0_GHZ, abs=1e-6)
    assert abs(fp.k_mhz) < 1e-4
    assert fp.kqs_mhz * 1e3 == pytest.approx(-11.26, abs=0.05)


def test_kerr_free_root_and_no_sign_change(table):
    root = kerr_free_flux(table) / TWO_PI
    assert root == pytest.approx(0.4026, abs=0.005)
    with pytest.raises(NoSignChange):
        kerr_free_flux(table, (0.1 * TWO_PI, 0.2 * TWO_PI))


def test_tuned_device_kerr_range():
    kmin, fmin, kmax, fmax = kerr_extremes(tuned_device())
    assert -5.0 * 1.3 < kmin < -5.0 * 0.7
    assert 6.0 * 0.7 < kmax < 6.0 * 1.3
    assert fmin < 0.4026 < fmax


def test_anchored_device_hits_both_anchors():
    dev = anchored_device(0.095, 500.0)
    fp = mode_parameters(snail.KERR_FREE_FLUX * TWO_PI, dev)
    assert fp.omega_s_ghz == pytest.approx(snail.OMEGA_S0_GHZ, abs=1e-6)
    assert abs(fp.k_mhz) < 1e-4


def test_sweep_threads_agree_and_csv_roundtrip(tmp_path, table):
    phis = np.linspace(0.05, 0.45, 7) * TWO_PI
    a = flux_sweep(table, phis)
    b = flux_sweep(table, phis, workers=3)
    assert [p.k_mhz for p in a] == pytest.approx([p.k_mhz for p in b], rel=1e-9)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, a)
    arr = read_sweep_csv(path)
    assert np.array_equal(arr[:, -1], [p.k_mhz for p in a])


def _curve(truth, tmp_path):
    fl = np.linspace(0.05, 0.5, 10)
    path = tmp_path / "curve.csv"
    write_frequency_curve(path, fl * TWO_PI, [p.omega_s_ghz for p in flux_sweep(truth, fl * TWO_PI)])
    return list(zip(*read_frequency_curve(path)))


def test_calibration_recovers_beta_from_frequency_curve(tmp_path):
    truth = anchored_device(0.1, 600.0)
    res = calibrate(_curve(truth, tmp_path), anchors=Anchors(), free=("beta",),
                    initial_guess=SnailDevice(0.09, 600.0, 500.0, 0.02))
    assert res.device.beta == pytest.approx(0.1, rel=1e-6)
    assert res.rms_mhz < 1e-3


def test_calibration_recovers_ej_from_kerr_range(tmp_path):
    # the anchored frequency curve alone barely constrains E_J; the Kerr range does
    truth = anchored_device(0.095, 300.0)
    kmin, _, kmax, _ = kerr_extremes(truth)
    res = calibrate(_curve(truth, tmp_path), anchors=Anchors(), kerr_range=(kmin, kmax),
                    initial_guess=SnailDevice(0.095, 250.0, 250.0, 0.02))
    assert res.device.EJ == pytest.approx(300.0, rel=1e-6)
    assert res.rms_mhz < 1e-3


def test_double_well_is_rejected():
    dev = SnailDevice(0.6, 100.0, 100.0, 0.05)
    with pytest.raises(MultipleMinima):
        mode_parameters(math.pi, dev)


def test_chi_table_interpolation_and_validation():
    chi = ChiTable()
    assert chi(0.0) == pytest.approx(18.0)
    assert chi(0.4026 * TWO_PI) == pytest.approx(4.35)
    assert chi(0.6 * TWO_PI) == pytest.approx(chi(0.4 * TWO_PI))
    with pytest.raises(ValueError):
        ChiTable((0.0, 0.0), (1.0, 2.0))
    with pytest.raises(ValueError):
        SnailDevice(1.2, 1.0, 1.0, 1.0)
