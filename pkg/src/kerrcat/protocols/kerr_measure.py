"""Closed-loop Kerr measurements: single-tone photon-number shift and two-tone anharmonicity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from ..dynamics import MHZ, PulseEnvelope, RotatingFrameHamiltonian, assemble_hamiltonian, evolve_pulse
from ..errors import PeaksUnresolved, ShiftExceedsLinewidth
from ..hilbert import HilbertLayout, QuantumState, fock, matrix_exponential, photon_distribution
from ..snail import FluxPoint


def _kerr_of(dev_point) -> float:
    return dev_point.k_mhz if isinstance(dev_point, FluxPoint) else float(dev_point)


def default_probe() -> PulseEnvelope:
    return PulseEnvelope("gaussian", 1.0, 50.0)


def pull_factor(drive: PulseEnvelope, n: int = 2001) -> float:
    """Effective fraction of the final photon number that shifts the drive resonance.

    The resonator fills as N(t) = N̄ (∫_0^t ε / ∫ ε)²; the Kerr phase it picks up
    after time t is proportional to Φ(t) = ∫_t^T N. Linearising the response in
    the detuning, the resonance moves by K·c·N̄ with c the envelope-weighted
    regression slope of Φ on (T - t).
    """
    T = drive.duration_ns
    t = np.linspace(0.0, T, n)
    env = drive.shape_values(t)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (env[1:] + env[:-1]) * np.diff(t))])
    N = (cum / cum[-1]) ** 2
    tail = np.concatenate([np.cumsum((0.5 * (N[1:] + N[:-1]) * np.diff(t))[::-1])[::-1], [0.0]])
    w = env / env.sum()
    u = T - t

    def cov(x, y):
        return np.sum(w * x * y) - np.sum(w * x) * np.sum(w * y)

    return float(cov(u, tail) / cov(u, u))


def nbar_for_amplitude(drive: PulseEnvelope, amplitude_mhz: float) -> float:
    """Linear-response photon number |∫ε dt|² of a resonant drive."""
    return (MHZ * amplitude_mhz * drive.area_ns()) ** 2


def amplitude_for_nbar(drive: PulseEnvelope, nbar: float) -> float:
    return math.sqrt(nbar) / (MHZ * drive.area_ns())


def _mean_photons(state: QuantumState) -> float:
    # number-selective π-pulse probes give P(n) directly
    p = photon_distribution(state)
    return float(np.dot(np.arange(p.size), p))


@dataclass(frozen=True)
class SingleToneResult:
    kerr_mhz: float
    nbars: tuple
    centers_mhz: tuple
    slope_mhz: float
    intercept_mhz: float
    r_squared: float
    pull_factor: float


def single_tone_kerr(dev_point, drive: PulseEnvelope | None, amp_list, layout: HilbertLayout,
                     n_slices: int = 100) -> SingleToneResult:
    """Kerr coefficient from the drive-frequency shift of the resonator response.

    For every amplitude the resonator is driven from vacuum with ``drive`` at a
    swept frequency and the mean photon number is read through Fock-selective
    probes; the response maximum gives the centre. K = slope / c of the centre
    (drive frequency offset, MHz) against N̄, with c the envelope pull factor.
    """
    kerr = _kerr_of(dev_point)
    drive = drive or default_probe()
    lay = layout.resonator_only()
    amps = [float(a) for a in amp_list]
    if len(amps) < 2:
        raise ValueError("need at least two drive amplitudes")
    nbars = [nbar_for_amplitude(drive, a) for a in amps]
    c = pull_factor(drive)
    linewidth = 1e3 / drive.duration_ns
    if abs(kerr) * max(nbars) > linewidth:
        raise ShiftExceedsLinewidth(
            f"|K| N̄ = {abs(kerr) * max(nbars):.3g} MHz exceeds the drive linewidth {linewidth:.3g} MHz")
    vac = fock(lay, 0)
    centers = []
    for a, nb in zip(amps, nbars):
        pulse = drive.with_amplitude(a)

        def response(f):
            base = RotatingFrameHamiltonian(lay, detuning_res_mhz=-f, kerr_mhz=kerr)
            return -_mean_photons(evolve_pulse(base, pulse, vac, n_slices=n_slices))

        guess = kerr * (c * nb + 0.5)
        half = 0.2 * linewidth
        r = minimize_scalar(response, bounds=(guess - half, guess + half), method="bounded",
                            options={"xatol": 1e-6})
        centers.append(float(r.x))
    nb = np.array(nbars)
    ce = np.array(centers)
    slope, intercept = np.polyfit(nb, ce, 1)
    pred = slope * nb + intercept
    ss = np.sum((ce - ce.mean()) ** 2)
    r2 = 1.0 - np.sum((ce - pred) ** 2) / ss if ss > 0 else 1.0
    return SingleToneResult(float(slope / c), tuple(nbars), tuple(centers), float(slope),
                            float(intercept), float(r2), c)


@dataclass(frozen=True)
class TwoToneResult:
    kerr_mhz: float
    f01_mhz: float
    f12_mhz: float
    rabi_times_ns: tuple
    rabi_01: tuple
    rabi_12: tuple
    rabi_freq_01_mhz: float
    rabi_freq_12_mhz: float


def _square_drive_unitary(lay, kerr, f, eps_mhz, T):
    base = RotatingFrameHamiltonian(lay, detuning_res_mhz=-f, kerr_mhz=kerr, drive_mhz=eps_mhz)
    return matrix_exponential(-1j * T * assemble_hamiltonian(base).matrix)


def _peak(fun, lo, hi, step):
    grid = np.arange(lo, hi + step, step)
    vals = np.array([fun(f) for f in grid])
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    r = minimize_scalar(lambda f: -fun(f), bounds=(a, b), method="bounded", options={"xatol": 1e-7})
    return float(r.x), float(-r.fun)


def fit_rabi_frequency(times, pop) -> float:
    """Rabi frequency (MHz) from P(t) = A (1 - cos 2πΩt)/2."""
    times = np.asarray(times, dtype=float)
    pop = np.asarray(pop, dtype=float)
    dt = times[1] - times[0]
    spec = np.abs(np.fft.rfft(pop - pop.mean()))
    freqs = np.fft.rfftfreq(pop.size, dt)
    f0 = freqs[int(np.argmax(spec[1:])) + 1]

    def resid(p):
        return p[0] * 0.5 * (1.0 - np.cos(2 * math.pi * p[1] * times)) - pop

    sol = least_squares(resid, [pop.max(), f0], x_scale=[1.0, f0])
    return float(sol.x[1] * 1e3)


def two_tone_kerr(dev_point, layout: HilbertLayout, pulse_ns: float = 4000.0, span_mhz: float | None = None,
                  rabi_drive_mhz: float = 0.1, rabi_window_ns: float = 30000.0) -> TwoToneResult:
    """K = f12 - f01 from the two lowest resonator transitions.

    A weak square π pulse (duration ``pulse_ns``) is swept to find the |0>→|1>
    peak; starting from the state it prepares, a second pulse with the
    ladder-corrected amplitude locates |1>→|2>.
    """
    kerr = _kerr_of(dev_point)
    lay = HilbertLayout(max(6, min(layout.resonator_dim, 8)))
    linewidth = 1e3 / pulse_ns
    if abs(kerr) < 2.0 * linewidth:
        raise PeaksUnresolved(f"|K| = {abs(kerr):.3g} MHz is below twice the probe linewidth {linewidth:.3g} MHz")
    span = span_mhz if span_mhz is not None else max(10.0, 2.5 * abs(kerr))
    eps = 1e3 / (4.0 * pulse_ns)  # π pulse on a unit matrix element
    step = 0.25 * linewidth
    vac = np.zeros(lay.dim, dtype=complex)
    vac[0] = 1.0

    def p1(f):
        psi = _square_drive_unitary(lay, kerr, f, eps, pulse_ns) @ vac
        return abs(psi[1]) ** 2

    f01, _ = _peak(p1, -span, span, step)
    psi1 = _square_drive_unitary(lay, kerr, f01, eps, pulse_ns) @ vac

    def p2(f):
        psi = _square_drive_unitary(lay, kerr, f, eps / math.sqrt(2.0), pulse_ns) @ psi1
        return abs(psi[2]) ** 2

    lo, hi = (f01, f01 + 2 * span) if kerr > 0 else (f01 - 2 * span, f01)
    # exclude the already-populated 0-1 line from the second sweep
    excl = 2.0 * linewidth
    lo, hi = (lo + excl, hi) if kerr > 0 else (lo, hi - excl)
    f12, _ = _peak(p2, lo, hi, step)

    times = np.linspace(0.0, rabi_window_ns, 601)
    dt = times[1] - times[0]
    U01 = _square_drive_unitary(lay, kerr, f01, rabi_drive_mhz, dt)
    U12 = _square_drive_unitary(lay, kerr, f12, rabi_drive_mhz, dt)
    tr01, tr12 = [], []
    a = vac.copy()
    b = np.zeros(lay.dim, dtype=complex)
    b[1] = 1.0
    for _ in times:
        tr01.append(abs(a[1]) ** 2)
        tr12.append(abs(b[2]) ** 2)
        a = U01 @ a
        b = U12 @ b
    return TwoToneResult(f12 - f01, f01, f12, tuple(times), tuple(tr01), tuple(tr12),
                         fit_rabi_frequency(times, tr01), fit_rabi_frequency(times, tr12))
