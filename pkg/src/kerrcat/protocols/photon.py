"""Photon-number calibration: number-resolved qubit spectroscopy with Poisson fits,
and the coherent-state Wigner route α = G·V."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, least_squares, minimize_scalar, nnls
from scipy.stats import poisson

from ..dynamics import MHZ, PulseEnvelope, RotatingFrameHamiltonian, evolve_pulse
from ..errors import FitDiverged, PeaksUnresolved, PoissonFitPoor, TruncationTooSmall
from ..hilbert import HilbertLayout, QuantumState, fock, photon_distribution, truncation_guard
from .sequence import sample_shots

SPECTRUM_HEADER = ["freq_mhz", "p_excited"]


def rabi_lineshape(detuning_mhz, rabi_mhz: float, pulse_ns: float):
    """Excited population after a square pulse of Rabi frequency Ω detuned by δ (cyclic MHz)."""
    d = np.asarray(detuning_mhz, dtype=float)
    gen = np.sqrt(rabi_mhz**2 + d**2)
    return rabi_mhz**2 / gen**2 * np.sin(math.pi * gen * pulse_ns * 1e-3) ** 2


def pi_pulse_rabi(pulse_ns: float) -> float:
    return 1e3 / (2.0 * pulse_ns)


def lineshape_fwhm(pulse_ns: float) -> float:
    """Full width at half maximum of the resonant π-pulse line (MHz)."""
    om = pi_pulse_rabi(pulse_ns)
    half = brentq(lambda d: rabi_lineshape(d, om, pulse_ns) - 0.5, 0.0, om)
    return 2.0 * half


@dataclass(frozen=True)
class SpectroscopyResult:
    frequencies: tuple
    response: tuple
    centers_mhz: tuple = ()
    widths_mhz: tuple = ()
    weights: tuple = ()
    pulse_ns: float = 1000.0
    residual_rms: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.response, dtype=float)
        if np.any(r < -1e-12) or np.any(r > 1 + 1e-12):
            raise ValueError("response values must lie in [0, 1]")
        if len(self.frequencies) != len(self.response):
            raise ValueError("frequencies and response differ in length")

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SPECTRUM_HEADER)
            for f, p in zip(self.frequencies, self.response):
                w.writerow([repr(float(f)), repr(float(p))])
        return path

    @classmethod
    def read_csv(cls, path, pulse_ns: float = 1000.0) -> "SpectroscopyResult":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != SPECTRUM_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SPECTRUM_HEADER)}")
        f = tuple(float(r[0]) for r in rows[1:])
        p = tuple(float(r[1]) for r in rows[1:])
        return cls(f, p, pulse_ns=pulse_ns)


def qubit_spectroscopy(state: QuantumState, chi_mhz: float, freqs, pulse_ns: float = 1000.0,
                       shots: int | None = None, rng: np.random.Generator | None = None) -> SpectroscopyResult:
    """Excited-state probability after a weak square π pulse at each probe frequency.

    The probe frequency is measured from the bare (n = 0) qubit line, so the
    n-photon line sits at -χ n. The joint generator is block-diagonal in n,
    hence each photon number contributes its own two-level response weighted
    by P(n).
    """
    p_n = photon_distribution(state)
    n = np.arange(p_n.size)
    freqs = np.asarray(freqs, dtype=float)
    om = pi_pulse_rabi(pulse_ns)
    det = freqs[:, None] + chi_mhz * n[None, :]
    resp = rabi_lineshape(det, om, pulse_ns) @ p_n
    resp = np.clip(resp, 0.0, 1.0)
    if shots:
        rng = rng if rng is not None else np.random.default_rng(0)
        resp = np.array([sample_shots(p, shots, rng) for p in resp])
    return SpectroscopyResult(tuple(freqs), tuple(resp), pulse_ns=pulse_ns)


def joint_spectroscopy_point(state: QuantumState, chi_mhz: float, freq_mhz: float, pulse_ns: float = 1000.0) -> float:
    """Same observable computed by propagating the full qubit⊗resonator state (slow reference)."""
    lay = HilbertLayout(state.layout.resonator_dim, 2)
    rho_r = state.density() if state.layout.qubit_levels == 1 else None
    if rho_r is None:
        raise ValueError("pass the resonator state; the ancilla starts in |g>")
    rho = np.zeros((lay.dim, lay.dim), dtype=complex)
    d = lay.resonator_dim
    rho[:d, :d] = rho_r
    base = RotatingFrameHamiltonian(lay, chi_mhz=chi_mhz, qubit_detuning_mhz=-freq_mhz)
    pulse = PulseEnvelope("square", pi_pulse_rabi(pulse_ns), pulse_ns)
    out = evolve_pulse(base, pulse, QuantumState(lay, rho, check=False), target="qubit", n_slices=4)
    return float(np.real(np.trace(out.data)[()] - np.trace(out.data[:d, :d])))


def fit_spectrum_peaks(spec: SpectroscopyResult, chi_guess_mhz: float, n_peaks: int | None = None,
                       fit_rabi: bool = True) -> SpectroscopyResult:
    """Fit P(f) = Σ_n w_n L(f + χ n - f0) with the π-pulse line L.

    Offsets (f0, χ, Ω) are found by nonlinear least squares with the weights
    eliminated by non-negative least squares at every step.
    """
    f = np.asarray(spec.frequencies, dtype=float)
    y = np.asarray(spec.response, dtype=float)
    T = spec.pulse_ns
    om0 = pi_pulse_rabi(T)
    width = lineshape_fwhm(T)
    if abs(chi_guess_mhz) <= width:
        raise PeaksUnresolved(f"χ = {abs(chi_guess_mhz):.3g} MHz does not exceed the line width {width:.3g} MHz")
    span = f.max() - f.min()
    n = np.arange(int(math.ceil(span / (0.7 * abs(chi_guess_mhz)) + 3.0 * width / abs(chi_guess_mhz))) + 2)

    def design(p):
        f0, chi, om = p[0], p[1], (p[2] if fit_rabi else om0)
        return rabi_lineshape(f[:, None] - f0 + chi * n[None, :], om, T)

    def resid(p):
        A = design(p)
        w, _ = nnls(A, y)
        return A @ w - y

    # coarse scan of χ first: a start a fraction of a line width off lets later peaks slip past their lines
    grid = chi_guess_mhz * np.linspace(0.7, 1.3, 241)
    cost = [float(np.sum(resid([0.0, c, om0][: 3 if fit_rabi else 2]) ** 2)) for c in grid]
    chi0 = float(grid[int(np.argmin(cost))])
    p0 = [0.0, chi0, om0] if fit_rabi else [0.0, chi0]
    sol = least_squares(resid, p0, x_scale=[width, width, om0][: len(p0)], xtol=1e-13, ftol=1e-13)
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise FitDiverged(f"spectrum fit did not converge: {sol.message}")
    A = design(sol.x)
    w, _ = nnls(A, y)
    rms = float(np.sqrt(np.mean((A @ w - y) ** 2)))
    f0, chi = sol.x[0], sol.x[1]
    if abs(chi) <= width:
        raise PeaksUnresolved(f"fitted χ = {abs(chi):.3g} MHz does not exceed the line width {width:.3g} MHz")
    if n_peaks is None:
        # report only lines whose centres lie inside the sweep; the rest were nuisance terms
        centres = f0 - chi * n
        n_peaks = int(np.count_nonzero((centres >= f.min()) & (centres <= f.max())))
        if n_peaks < 1:
            raise PeaksUnresolved("no photon-number line falls inside the sweep")
    k = np.arange(n_peaks)
    return SpectroscopyResult(spec.frequencies, spec.response, tuple(float(c) for c in f0 - chi * k),
                              tuple(np.full(n_peaks, width)), tuple(float(x) for x in w[:n_peaks]), T, rms)


@dataclass(frozen=True)
class PoissonFit:
    nbar: float
    scale: float
    chi2: float
    weights: tuple


def fit_poisson(weights, max_rel_residual: float = 0.05, noise: float = 0.0) -> PoissonFit:
    """Fit peak weights to s·Poisson(n; N̄).

    Raises PoissonFitPoor when ‖w - model‖ exceeds ``max_rel_residual``·‖w‖
    plus three times the noise floor ``noise``·√(number of peaks).
    """
    w = np.asarray(weights, dtype=float)
    n = np.arange(w.size)
    if not np.any(w > 0):
        raise PeaksUnresolved("no spectral weight found")
    if w[0] > 0 and np.all(w[1:] <= 1e-12 * w[0]):
        return PoissonFit(0.0, float(w[0]), 0.0, tuple(w))

    def model(nb):
        pm = poisson.pmf(n, nb)
        s = float(np.dot(pm, w) / np.dot(pm, pm))
        return s, s * pm

    mean0 = float(np.dot(n, w) / w.sum())
    r = minimize_scalar(lambda nb: float(np.sum((model(nb)[1] - w) ** 2)),
                        bounds=(max(mean0 * 0.5 - 0.5, 1e-9), mean0 * 1.5 + 1.0), method="bounded",
                        options={"xatol": 1e-10})
    s, m = model(r.x)
    chi2 = float(np.sum((m - w) ** 2))
    allowed = max_rel_residual * float(np.linalg.norm(w)) + 3.0 * noise * math.sqrt(w.size)
    fit = PoissonFit(float(r.x), s, chi2, tuple(w))
    if math.sqrt(chi2) > allowed:
        raise PoissonFitPoor(f"Poisson fit residual {math.sqrt(chi2):.3g} exceeds the allowed {allowed:.3g}")
    return fit


@dataclass(frozen=True)
class PhotonCalibration:
    gain: float  # G, with α = G·V
    intercept: float
    intercept_err: float
    gain_err: float
    amplitudes: tuple
    alphas: tuple  # √N̄ (Poisson route) or |α0| (Wigner route)
    method: str

    @property
    def intercept_consistent(self) -> bool:
        return abs(self.intercept) <= 3.0 * self.intercept_err + 1e-9


def _linear_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(x.size - 2, 1)
    s2 = float(np.sum((A @ coef - y) ** 2)) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1]))


def calibrate_photon_number(spectra, amps, chi_guess_mhz: float, max_rel_residual: float = 0.05) -> PhotonCalibration:
    """G from √N̄ = G·V + b, with N̄ from Poisson fits to the number-resolved spectra."""
    amps = [float(a) for a in amps]
    if len(spectra) != len(amps) or len(amps) < 2:
        raise ValueError("need matching spectra and amplitudes (at least two)")
    roots = []
    for s in spectra:
        fitted = s if s.weights else fit_spectrum_peaks(s, chi_guess_mhz)
        roots.append(math.sqrt(fit_poisson(fitted.weights, max_rel_residual, fitted.residual_rms).nbar))
    g, b, gerr, berr = _linear_fit(amps, roots)
    return PhotonCalibration(g, b, berr, gerr, tuple(amps), tuple(roots), "poisson")


def calibrate_photon_number_wigner(grids, amps) -> PhotonCalibration:
    """G from |α0| = G·V + b, with α0 the centre of a Gaussian fit to each coherent-state Wigner map."""
    from ..tomography import fit_coherent_gaussian

    amps = [float(a) for a in amps]
    if len(grids) != len(amps) or len(amps) < 2:
        raise ValueError("need matching Wigner grids and amplitudes (at least two)")
    mags = [abs(fit_coherent_gaussian(g)[0]) for g in grids]
    g, b, gerr, berr = _linear_fit(amps, mags)
    return PhotonCalibration(g, b, berr, gerr, tuple(amps), tuple(mags), "wigner_gaussian")


def pumped_state(amplitude_mhz: float, layout: HilbertLayout, pump: PulseEnvelope | None = None,
                 kerr_mhz: float = 0.0, n_slices: int | None = None) -> QuantumState:
    """Resonator state after a finite-duration resonant pump of peak ``amplitude_mhz``."""
    pump = pump or PulseEnvelope("gaussian", 1.0, 30.0)
    lay = layout.resonator_only()
    est = MHZ * abs(amplitude_mhz) * pump.area_ns()
    if truncation_guard(est) > lay.resonator_dim:
        raise TruncationTooSmall(f"pump reaches |α| ≈ {est:.3g}; resonator_dim must be >= {truncation_guard(est)}")
    base = RotatingFrameHamiltonian(lay, kerr_mhz=kerr_mhz)
    return evolve_pulse(base, pump.with_amplitude(amplitude_mhz), fock(lay, 0), n_slices=n_slices)


def pump_gain(pump: PulseEnvelope | None = None) -> float:
    """Linear-response gain |α|/V of a resonant pump (1/MHz)."""
    pump = pump or PulseEnvelope("gaussian", 1.0, 30.0)
    return MHZ * pump.area_ns()
