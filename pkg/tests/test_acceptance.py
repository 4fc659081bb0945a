"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from kerrcat import snail
from kerrcat.dynamics import (CollapseChannel, RotatingFrameHamiltonian, assemble_hamiltonian, evolve_lindblad,
                              evolve_unitary)
from kerrcat.hilbert import (HilbertLayout, QuantumState, coherent, displacement, expectation, fidelity_trace, fock,
                             parity_operator, superposition)
from kerrcat.protocols import (generate_kerr_cat, kerr_cat_sequence, kerr_period_ns)
from kerrcat.protocols.kerr_measure import amplitude_for_nbar, default_probe, single_tone_kerr, two_tone_kerr
from kerrcat.protocols.photon import (calibrate_photon_number, calibrate_photon_number_wigner, fit_poisson,
                                      fit_spectrum_peaks, pumped_state, qubit_spectroscopy)
from kerrcat.protocols.preservation import PRESERVATION_TARGETS, calibrate_decoherence, preserve_state
from kerrcat.snail import TWO_PI, kerr_extremes, kerr_free_flux, mode_parameters, tuned_device, table_device
from kerrcat.tomography import fidelity_wigner, reference_grid, wigner_exact, wigner_fast, wigner_ramsey

from oracles import coherent_vec, kerr_phase_cat, normalized, pure_overlap, snail_taylor_analytic

ALPHA = 1.42
CHI = 4.35


@pytest.fixture
def verdict(capsys):
    """Collect named checks, print one line, then assert them all."""
    def report(number, title, checks, elapsed, limit=None):
        failed = [name for name, ok in checks if not ok]
        if limit is not None and elapsed > limit:
            failed.append(f"runtime {elapsed:.1f} s > {limit} s")
        status = "FAIL" if failed else "PASS"
        line = f"{status} criterion {number} ({title}) in {elapsed:.1f} s"
        if failed:
            line += ": " + "; ".join(failed)
        with capsys.disabled():
            print("\n" + line)
        assert not failed, line
    return report


def test_criterion_1_kerr_free_point(verdict):
    t0 = time.perf_counter()
    dev = table_device()
    root = kerr_free_flux(dev) / TWO_PI
    fp = mode_parameters(root * TWO_PI, dev)
    checks = [(f"root {root:.4f} Φ0", abs(root - 0.4026) <= 0.005),
              (f"|K| {abs(fp.k_mhz) * 1e3:.3g} kHz", abs(fp.k_mhz) * 1e3 < 0.1)]
    verdict(1, "Kerr-free point", checks, time.perf_counter() - t0, 10)


def test_criterion_2_kerr_tunability(verdict):
    t0 = time.perf_counter()
    kmin, _, kmax, _ = kerr_extremes(tuned_device())
    dev = table_device()
    fp = mode_parameters(kerr_free_flux(dev), dev)
    checks = [(f"K min {kmin:.3f} MHz", -5.0 * 1.3 <= kmin <= -5.0 * 0.7),
              (f"K max {kmax:.3f} MHz", 6.0 * 0.7 <= kmax <= 6.0 * 1.3),
              (f"K_qs {fp.kqs_mhz * 1e3:.3f} kHz", abs(fp.kqs_mhz * 1e3 + 11.3) <= 0.5)]
    verdict(2, "Kerr tunability", checks, time.perf_counter() - t0, 30)


def test_criterion_3_cat_timing(verdict):
    t0 = time.perf_counter()
    lay = HilbertLayout(40)
    tau0 = kerr_period_ns(5.21)
    seq = kerr_cat_sequence(ALPHA, 5.21, 2, lay)
    psi2 = generate_kerr_cat(ALPHA, 5.21, 2, lay)
    ref2 = normalized(coherent_vec(ALPHA, 40) - 1j * coherent_vec(-ALPHA, 40))
    f2 = pure_overlap(psi2.data, ref2)
    f1 = fidelity_trace(generate_kerr_cat(ALPHA, 5.21, 1, lay), coherent(-ALPHA, lay))
    checks = [(f"τ0 {tau0:.2f} ns", abs(tau0 - 192.0) <= 0.5),
              (f"τ {seq.steps[1].tau_ns:.2f} ns", abs(seq.steps[1].tau_ns - 96.0) <= 0.25),
              (f"m=2 fidelity {f2:.6f}", f2 >= 0.999),
              (f"m=1 revival 1-F {1 - f1:.1e}", f1 >= 1 - 1e-8)]
    for m in (3, 4):
        ref, _ = kerr_phase_cat(ALPHA, m, 40)
        ov = pure_overlap(generate_kerr_cat(ALPHA, 5.21, m, lay).data, ref)
        checks.append((f"m={m} overlap {ov:.6f}", ov >= 0.999))
    verdict(3, "cat timing", checks, time.perf_counter() - t0, 10)


def test_criterion_4_tomography_equivalence(verdict):
    t0 = time.perf_counter()
    checks = []
    small = reference_grid(ALPHA, 31)
    for st in (superposition([ALPHA, -ALPHA], [1, -1j], HilbertLayout(20)), fock(HilbertLayout(20), 3)):
        dev = np.max(np.abs(wigner_ramsey(st, CHI, small).values - wigner_exact(st, small).values))
        checks.append((f"ramsey vs exact {dev:.1e}", dev < 1e-6))

    lay = HilbertLayout(40)
    a = generate_kerr_cat(ALPHA, 5.21, 2, lay)
    b = superposition([ALPHA, -ALPHA], [1, 1], lay)
    f_true = fidelity_trace(a, b)
    spec = reference_grid(ALPHA)
    t1 = time.perf_counter()
    wa = wigner_exact(a, spec)
    wigner_ramsey(a, CHI, spec)
    big_grid = time.perf_counter() - t1
    err = abs(fidelity_wigner(wa, wigner_exact(b, spec)) - f_true)
    checks.append((f"|F_W - F| {err:.1e} on 101x101", err < 1e-3))
    errs = [abs(fidelity_wigner(wigner_fast(a, s), wigner_fast(b, s)) - f_true)
            for s in (reference_grid(ALPHA, 15), reference_grid(ALPHA, 31), reference_grid(ALPHA, 201))]
    checks.append((f"refinement {errs[0]:.1e} > {errs[1]:.1e} > {errs[2]:.1e}", errs[0] > errs[1] > errs[2]))
    checks.append((f"101x101 D=40 grid {big_grid:.1f} s", big_grid < 60))
    verdict(4, "tomography equivalence", checks, time.perf_counter() - t0)


def test_criterion_5_measurement_closed_loop(verdict):
    t0 = time.perf_counter()
    lay = HilbertLayout(30)
    probe = default_probe()
    amps = [amplitude_for_nbar(probe, nb) for nb in (0.5, 1.0, 2.0, 3.0, 4.0)]
    checks = []
    for k in (0.5, 1.0, 2.0):
        got = single_tone_kerr(k, probe, amps, lay).kerr_mhz
        checks.append((f"single-tone {k} -> {got:.4f}", abs(got - k) <= 0.05 * k))
    dev = table_device()
    fp = mode_parameters(0.4026 * TWO_PI, dev)
    kf = single_tone_kerr(fp, probe, amps, lay).kerr_mhz
    checks.append((f"Kerr-free point {kf * 1e3:.1f} kHz", abs(kf) < 0.070))
    for k in (2.0, 5.21, -3.0):
        got = two_tone_kerr(k, lay).kerr_mhz
        checks.append((f"two-tone {k} -> {got:.4f}", abs(got - k) <= 0.02 * abs(k)))
    for k in (2.0, 2.5, 3.0):
        a = single_tone_kerr(k, probe, amps, lay).kerr_mhz
        b = two_tone_kerr(k, lay).kerr_mhz
        checks.append((f"routes at {k}: {a:.3f} vs {b:.3f}", abs(a - b) / abs(b) < 0.10))
    verdict(5, "measurement closed loop", checks, time.perf_counter() - t0, 60)


def test_criterion_6_photon_calibration(verdict):
    t0 = time.perf_counter()
    freqs = np.arange(-40.0, 5.0 + 1e-9, 0.1)
    spec = qubit_spectroscopy(coherent(math.sqrt(1.92), HilbertLayout(30)), CHI, freqs)
    nb = fit_poisson(fit_spectrum_peaks(spec, 4.0).weights).nbar
    checks = [(f"N̄ {nb:.4f}", abs(nb - 1.92) <= 0.02 * 1.92)]
    lay = HilbertLayout(30)
    amps = [0.0, 7.0, 14.0, 21.0, 28.0]
    states = [pumped_state(a, lay, kerr_mhz=0.05) for a in amps]
    nbars = [float(np.dot(np.arange(30), np.abs(s.data) ** 2)) for s in states]
    cal_p = calibrate_photon_number([qubit_spectroscopy(s, CHI, freqs) for s in states], amps, 4.0)
    cal_w = calibrate_photon_number_wigner([wigner_fast(s, reference_grid(2.2, 81)) for s in states], amps)
    rel = abs(cal_p.gain - cal_w.gain) / abs(cal_w.gain)
    checks.append((f"max N̄ {max(nbars):.2f}", max(nbars) <= 5.0))
    checks.append((f"G Poisson {cal_p.gain:.5f} vs Wigner {cal_w.gain:.5f}", rel <= 0.03))
    verdict(6, "photon calibration", checks, time.perf_counter() - t0)


def test_criterion_7_preservation_contrast(verdict):
    t0 = time.perf_counter()
    lay = HilbertLayout(40)
    psi = coherent(ALPHA, lay)
    dts = [0.0, 100.0, 200.0, 300.0, 400.0, 500.0]
    f0 = [fidelity_trace(s, psi) for s in preserve_state(psi, dts)]
    f5 = [fidelity_trace(s, psi) for s in preserve_state(psi, dts, kerr_residual_mhz=0.5)]
    checks = [(f"K=0 min F {min(f0):.9f}", min(f0) >= 1 - 1e-6),
              (f"K=0.5 F(500 ns) {f5[-1]:.4f}", f5[-1] < 0.9)]
    fit = calibrate_decoherence(PRESERVATION_TARGETS, kerr_cat_sequence(ALPHA, 5.21, 2, HilbertLayout(24)), dt_ns=0.1)
    f = fit.fidelities
    checks.append((f"fitted {100 * f[0]:.1f}/{100 * f[1]:.1f}/{100 * f[2]:.1f}%, RMS {100 * fit.rms:.2f} points",
                   fit.rms < 0.02))
    checks.append(("monotone decrease", f[0] > f[1] > f[2]))
    verdict(7, "preservation contrast", checks, time.perf_counter() - t0)


def _random_state(rng, lay):
    v = rng.normal(size=lay.dim) + 1j * rng.normal(size=lay.dim)
    return QuantumState(lay, v / np.linalg.norm(v))


def test_criterion_8_property_suites(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    checks = []

    # invariants over 100 randomized instances
    worst = {"unitarity": 0.0, "parity": 0.0, "trace": 0.0, "hermiticity": 0.0}
    lay = HilbertLayout(26, 2)
    small = HilbertLayout(6, 2)
    for _ in range(100):
        alpha = complex(*rng.uniform(-1.5, 1.5, 2))
        U = displacement(alpha, HilbertLayout(40)).matrix
        worst["unitarity"] = max(worst["unitarity"], np.max(np.abs(U.conj().T @ U - np.eye(40))[:20, :20]))
        H = assemble_hamiltonian(RotatingFrameHamiltonian(lay, kerr_mhz=rng.uniform(-6, 6),
                                                          chi_mhz=rng.uniform(0, 5)))
        psi = _random_state(rng, lay)
        P = parity_operator(lay)
        p_after = expectation(P, evolve_unitary(H, rng.uniform(0, 300), psi)).real
        worst["parity"] = max(worst["parity"], abs(p_after - expectation(P, psi).real))
        Hs = assemble_hamiltonian(RotatingFrameHamiltonian(small, kerr_mhz=2.0, drive_mhz=rng.uniform(0, 3),
                                                           chi_mhz=4.0))
        ch = [CollapseChannel("photon_loss", rng.uniform(0, 3)), CollapseChannel("qubit_dephasing", rng.uniform(0, 3))]
        rho = evolve_lindblad(Hs, ch, _random_state(rng, small), 10.0, 0.1, check=False).data
        worst["trace"] = max(worst["trace"], abs(np.trace(rho).real - 1.0))
        worst["hermiticity"] = max(worst["hermiticity"], np.max(np.abs(rho - rho.conj().T)))
    for name, val in worst.items():
        checks.append((f"{name} {val:.1e}", val < 1e-9))

    # RK4 order
    lay8 = HilbertLayout(8, 2)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay8, kerr_mhz=20.0, drive_mhz=15.0, chi_mhz=30.0,
                                                      qubit_drive_mhz=20.0))
    ch = [CollapseChannel("photon_loss", 5.0), CollapseChannel("qubit_decay", 3.0)]
    ref = evolve_lindblad(H, ch, fock(lay8, 0), 40.0, 0.005, check=False).data
    steps = np.array([0.5, 0.25, 0.125, 0.0625])
    errs = [np.max(np.abs(evolve_lindblad(H, ch, fock(lay8, 0), 40.0, h, check=False).data - ref)) for h in steps]
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    checks.append((f"RK4 slope {slope:.3f}", abs(slope - 4.0) < 0.3))

    # finite-difference Taylor coefficients vs analytic oracle
    dev = table_device()
    worst_rel = 0.0
    for f in rng.uniform(0.0, 0.5, 20):
        tc = snail.taylor_coefficients(f * TWO_PI, dev)
        _, c2, c3, c4 = snail_taylor_analytic(f * TWO_PI, dev.beta, dev.r)
        for got, want in ((tc.c2, c2), (tc.c3, c3), (tc.c4, c4)):
            if abs(want) > 1e-6:
                worst_rel = max(worst_rel, abs(got - want) / abs(want))
    checks.append((f"Taylor rel err {worst_rel:.1e}", worst_rel < 1e-5))

    # Wigner normalization on a refined grid
    l40 = HilbertLayout(40)
    spec = reference_grid(ALPHA, 201)
    worst_norm = max(abs(wigner_fast(s, spec).integral() - 1.0)
                     for s in (generate_kerr_cat(ALPHA, 5.21, 2, l40), generate_kerr_cat(ALPHA, 5.21, 3, l40),
                               fock(l40, 4)))
    checks.append((f"normalization {worst_norm:.1e}", worst_norm < 5e-3))
    verdict(8, "property suites", checks, time.perf_counter() - t0)
