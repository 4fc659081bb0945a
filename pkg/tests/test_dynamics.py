import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from kerrcat.dynamics import (MHZ, CollapseChannel, PulseEnvelope, RotatingFrameHamiltonian, assemble_hamiltonian,
                              evolve_lindblad, evolve_pulse, evolve_unitary, kerr_cat_propagator,
                              lindblad_snapshots, propagator, sample_envelope)
from kerrcat.errors import LayoutMismatch, NonHermitian, OutOfWindow, StepTooLarge
from kerrcat.hilbert import (HilbertLayout, OperatorMatrix, QuantumState, coherent, expectation, fidelity_trace, fock,
                             make_ladder, parity_operator, trace_distance)


def _driven(lay, **kw):
    return assemble_hamiltonian(RotatingFrameHamiltonian(lay, kerr_mhz=5.0, drive_mhz=2.0, **kw))


def test_hamiltonian_terms_and_signs():
    lay = HilbertLayout(5, 2)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay, detuning_res_mhz=1.0, kerr_mhz=2.0, chi_mhz=3.0,
                                                      qubit_detuning_mhz=4.0))
    d = np.diag(H.matrix).real / MHZ
    n = 3
    assert d[n] == pytest.approx(1.0 * n + 0.5 * 2.0 * n * n)
    assert d[5 + n] == pytest.approx(1.0 * n + 0.5 * 2.0 * n * n - 3.0 * n + 4.0)
    with pytest.raises(LayoutMismatch):
        assemble_hamiltonian(RotatingFrameHamiltonian(HilbertLayout(5), chi_mhz=1.0))


def test_propagator_matches_scipy_and_rejects_nonhermitian():
    lay = HilbertLayout(10)
    H = _driven(lay)
    U = propagator(H, 37.0)
    assert np.max(np.abs(U.matrix - expm(-37.0j * H.matrix))) < 1e-11
    bad = OperatorMatrix(lay, H.matrix + 0.1j * np.eye(10))
    with pytest.raises(NonHermitian):
        propagator(bad, 1.0)


def test_kerr_propagator_sign_and_period():
    lay = HilbertLayout(30)
    tau0 = 1e3 / 5.21
    U = kerr_cat_propagator(5.21, tau0, lay)
    # a full Kerr period is the identity up to the n-parity pattern exp(iπ n²) = (-1)^n
    assert np.allclose(np.diag(U.matrix), (-1.0) ** np.arange(30))
    n = np.arange(30)
    U2 = kerr_cat_propagator(5.21, 10.0, lay)
    assert np.allclose(np.diag(U2.matrix), np.exp(0.5j * MHZ * 5.21 * 10.0 * n**2))


def test_lindblad_without_channels_equals_unitary():
    lay = HilbertLayout(14)
    H = _driven(lay)
    psi = coherent(0.5, lay)
    rho = evolve_lindblad(H, [], psi, 40.0, 0.05)
    ref = evolve_unitary(H, 40.0, psi)
    assert trace_distance(rho.data, ref.density()) < 1e-9


def test_photon_loss_decays_mean_number():
    lay = HilbertLayout(24)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay))
    kappa = 2.0
    psi = coherent(1.5, lay)
    t = 300.0
    rho = evolve_lindblad(H, [CollapseChannel("photon_loss", kappa)], psi, t, 0.5)
    _, _, num = make_ladder(lay)
    nbar = expectation(num, rho).real
    assert nbar == pytest.approx(1.5**2 * math.exp(-kappa * 1e-3 * t), rel=1e-8)
    # a coherent state stays coherent under pure loss
    assert fidelity_trace(rho, coherent(1.5 * math.exp(-0.5 * kappa * 1e-3 * t), lay)) > 1 - 1e-8


def test_qubit_dephasing_rate_convention():
    lay = HilbertLayout(2, 2)
    v = np.zeros(4, complex)
    v[0] = v[2] = 1 / math.sqrt(2)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay))
    rho = evolve_lindblad(H, [CollapseChannel("qubit_dephasing", 1.0)], QuantumState(lay, v), 500.0, 1.0)
    assert abs(rho.data[0, 2]) == pytest.approx(0.5 * math.exp(-0.5), rel=1e-8)


def test_rk4_convergence_order():
    lay = HilbertLayout(8, 2)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay, kerr_mhz=20.0, drive_mhz=15.0, chi_mhz=30.0,
                                                      qubit_drive_mhz=20.0))
    ch = [CollapseChannel("photon_loss", 5.0), CollapseChannel("qubit_decay", 3.0)]
    rho0 = fock(lay, 0)
    t = 40.0
    ref = evolve_lindblad(H, ch, rho0, t, 0.005, check=False).data
    steps = np.array([0.5, 0.25, 0.125, 0.0625])
    errs = [np.max(np.abs(evolve_lindblad(H, ch, rho0, t, h, check=False).data - ref)) for h in steps]
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert abs(slope - 4.0) < 0.3, (slope, errs)


def test_step_halving_check_raises():
    lay = HilbertLayout(8)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay, kerr_mhz=200.0, drive_mhz=100.0))
    with pytest.raises(StepTooLarge):
        evolve_lindblad(H, [CollapseChannel("photon_loss", 1.0)], fock(lay, 0), 20.0, 2.0, check=True)


def test_snapshots_match_single_runs():
    lay = HilbertLayout(10)
    H = _driven(lay)
    ch = [CollapseChannel("photon_loss", 1.0)]
    snaps = lindblad_snapshots(H, ch, fock(lay, 0), [0.0, 10.0, 25.0], 0.05, check=False)
    one = evolve_lindblad(H, ch, fock(lay, 0), 25.0, 0.05, check=False)
    assert trace_distance(snaps[-1].data, one.data) < 1e-10
    assert snaps[0].data[0, 0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lindblad_snapshots(H, ch, fock(lay, 0), [10.0, 5.0], 0.05)


def test_pulse_envelopes_and_window():
    g = PulseEnvelope("gaussian", 2.0, 60.0)
    assert sample_envelope(g, 30.0) == pytest.approx(2.0)
    assert g.area_ns() == pytest.approx(10.0 * math.sqrt(2 * math.pi) * math.erf(3 / math.sqrt(2)), rel=1e-6)
    with pytest.raises(OutOfWindow):
        sample_envelope(g, 61.0)
    with pytest.raises(ValueError):
        PulseEnvelope("triangle", 1.0, 10.0)


def test_sinc_spectrum_is_flat_inside_band():
    p = PulseEnvelope("sinc", 1.0, 2000.0, sinc_width_ns=25.0)
    dt = 0.25
    t = np.arange(0.0, 2000.0 + dt / 2, dt)
    env = np.real(sample_envelope(p, t))
    spec = np.abs(np.fft.rfft(env)) * dt
    f = np.fft.rfftfreq(t.size, dt)  # 1/ns
    band = 1.0 / 25.0  # half-width of the rectangular spectrum
    inner = spec[f < 0.8 * band]
    outer = spec[f > 1.2 * band]
    assert inner.max() / inner.min() < 1.05
    assert outer.max() < 0.05 * inner.mean()


def test_square_pulse_equals_constant_hamiltonian():
    lay = HilbertLayout(12)
    base = RotatingFrameHamiltonian(lay, kerr_mhz=3.0)
    p = PulseEnvelope("square", 4.0, 40.0)
    out = evolve_pulse(base, p, fock(lay, 0))
    ref = evolve_unitary(assemble_hamiltonian(RotatingFrameHamiltonian(lay, kerr_mhz=3.0, drive_mhz=4.0)),
                         40.0, fock(lay, 0))
    assert fidelity_trace(out, ref) > 1 - 1e-12


def test_qubit_pulse_rotates_qubit():
    lay = HilbertLayout(3, 2)
    T = 100.0
    p = PulseEnvelope("square", 1e3 / (2 * T), T)  # Ω T = 1/2 cycle -> π pulse
    out = evolve_pulse(RotatingFrameHamiltonian(lay), p, fock(lay, 0), target="qubit")
    assert abs(out.data[3]) ** 2 == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- randomized invariants

_k = st.floats(-10.0, 10.0, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(kerr=_k, chi=st.floats(0.0, 20.0), tau=st.floats(0.0, 500.0), alpha=st.floats(0.0, 2.0))
def test_kerr_dispersive_evolution_conserves_parity_and_unitarity(kerr, chi, tau, alpha):
    lay = HilbertLayout(26, 2)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay, kerr_mhz=kerr, chi_mhz=chi))
    U = propagator(H, tau)
    assert np.max(np.abs(U.matrix.conj().T @ U.matrix - np.eye(lay.dim))) < 1e-10
    P = parity_operator(lay).matrix
    assert np.max(np.abs(U.matrix @ P - P @ U.matrix)) < 1e-10
    v = np.concatenate([coherent(alpha, lay.resonator_only()).data, np.zeros(26)])
    psi = QuantumState(lay, v)
    p0 = expectation(P, psi).real
    assert expectation(P, U.apply(psi)).real == pytest.approx(p0, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(kappa=st.floats(0.0, 5.0), gamma=st.floats(0.0, 5.0), eps=st.floats(0.0, 3.0), seed=st.integers(0, 10**6))
def test_lindblad_preserves_trace_hermiticity_positivity(kappa, gamma, eps, seed):
    lay = HilbertLayout(6, 2)
    H = assemble_hamiltonian(RotatingFrameHamiltonian(lay, kerr_mhz=2.0, drive_mhz=eps, chi_mhz=4.0))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=12) + 1j * rng.normal(size=12)
    psi = QuantumState(lay, v / np.linalg.norm(v))
    ch = [CollapseChannel("photon_loss", kappa), CollapseChannel("qubit_dephasing", gamma)]
    rho = evolve_lindblad(H, ch, psi, 20.0, 0.1, check=False).data
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-13
    assert np.linalg.eigvalsh(rho).min() > -1e-9
