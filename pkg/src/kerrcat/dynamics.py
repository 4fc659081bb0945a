"""Rotating-frame Hamiltonians, unitary and Lindblad propagation, pulse envelopes.

Public frequencies are cyclic MHz (f = ω/2π) and times are ns; internally
Hamiltonians are in rad/ns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LayoutMismatch, NonHermitian, OutOfWindow, StepTooLarge
from .hilbert import HilbertLayout, OperatorMatrix, QuantumState, matrix_exponential, trace_distance

MHZ = 2.0 * math.pi * 1e-3  # cyclic MHz -> rad/ns

SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class RotatingFrameHamiltonian:
    """H/ħ = Δ_s n + (K/2) n² - χ n q + Δ_q q + (ε a† + h.c.) + (Ω/2 σ+ + h.c.).

    All coefficients are cyclic MHz; q is the qubit excitation number.
    """

    layout: HilbertLayout
    detuning_res_mhz: float = 0.0
    kerr_mhz: float = 0.0
    chi_mhz: float = 0.0
    drive_mhz: complex = 0.0
    qubit_detuning_mhz: float = 0.0
    qubit_drive_mhz: complex = 0.0


def diagonal_energies(params: RotatingFrameHamiltonian) -> np.ndarray:
    lay = params.layout
    n = lay.photon_numbers().astype(float)
    q = lay.qubit_numbers().astype(float)
    return MHZ * (params.detuning_res_mhz * n + 0.5 * params.kerr_mhz * n**2
                  - params.chi_mhz * n * q + params.qubit_detuning_mhz * q)


def assemble_hamiltonian(params: RotatingFrameHamiltonian) -> OperatorMatrix:
    lay = params.layout
    if lay.qubit_levels == 1 and (params.chi_mhz or params.qubit_detuning_mhz or params.qubit_drive_mhz):
        raise LayoutMismatch("qubit terms need a layout with qubit_levels = 2")
    H = np.diag(diagonal_energies(params)).astype(complex)
    if params.drive_mhz:
        d = lay.resonator_dim
        a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)
        eps = MHZ * complex(params.drive_mhz)
        H += lay.embed(eps * a.T + np.conj(eps) * a)
    if params.qubit_drive_mhz:
        om = 0.5 * MHZ * complex(params.qubit_drive_mhz)
        H += lay.embed_qubit(om * SIGMA_MINUS.T + np.conj(om) * SIGMA_MINUS)
    return OperatorMatrix(lay, H)


def _check_hermitian(H: np.ndarray) -> None:
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise NonHermitian("Hamiltonian is not Hermitian")


def propagator(H: OperatorMatrix, t: float) -> OperatorMatrix:
    """exp(-i H t) for Hermitian H (rad/ns) and t in ns."""
    _check_hermitian(H.matrix)
    return OperatorMatrix(H.layout, matrix_exponential(-1j * t * H.matrix), unitary_tol=1e-8)


def evolve_unitary(H: OperatorMatrix, t: float, state: QuantumState) -> QuantumState:
    if H.layout != state.layout:
        raise LayoutMismatch("Hamiltonian and state layouts differ")
    if t == 0:
        _check_hermitian(H.matrix)
        return state
    return propagator(H, t).apply(state)


def kerr_cat_propagator(kerr_mhz: float, tau_ns: float, layout: HilbertLayout) -> OperatorMatrix:
    """Diagonal exp(+i (K/2) n² τ) on the resonator factor."""
    n = np.arange(layout.resonator_dim, dtype=float)
    phases = np.exp(0.5j * MHZ * kerr_mhz * tau_ns * n**2)
    return OperatorMatrix(layout, layout.embed(np.diag(phases)), unitary_tol=1e-12)


# ---------------------------------------------------------------- open system

CHANNEL_KINDS = ("photon_loss", "qubit_decay", "qubit_dephasing")


@dataclass(frozen=True)
class CollapseChannel:
    """Dissipation channel with rate in 1/μs.

    qubit_dephasing uses L = sqrt(rate/2) σz so that qubit coherences decay at ``rate``.
    """

    kind: str
    rate_per_us: float

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not self.rate_per_us >= 0.0:
            raise ValueError("channel rate must be non-negative")

    def operator(self, layout: HilbertLayout) -> np.ndarray:
        rate = self.rate_per_us * 1e-3  # 1/ns
        if self.kind == "photon_loss":
            d = layout.resonator_dim
            return math.sqrt(rate) * layout.embed(np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1))
        if layout.qubit_levels != 2:
            raise LayoutMismatch(f"{self.kind} needs a qubit in the layout")
        if self.kind == "qubit_decay":
            return math.sqrt(rate) * layout.embed_qubit(SIGMA_MINUS)
        return math.sqrt(0.5 * rate) * layout.embed_qubit(SIGMA_Z)


def _lindblad_rhs(heff, jumps):
    heff_dag = heff.conj().T
    jumps_dag = [L.conj().T for L in jumps]

    def rhs(rho):
        out = -1j * (heff @ rho - rho @ heff_dag)
        for L, Ld in zip(jumps, jumps_dag):
            out += L @ rho @ Ld
        return out

    return rhs


def _rk4(rhs, rho, n_steps, h):
    for _ in range(n_steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h * k2)
        k4 = rhs(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
    return rho


def _generator(H: OperatorMatrix, channels):
    _check_hermitian(H.matrix)
    jumps = [c.operator(H.layout) for c in channels if c.rate_per_us > 0]
    heff = np.array(H.matrix)
    for L in jumps:
        heff = heff - 0.5j * (L.conj().T @ L)
    return _lindblad_rhs(heff, jumps)


def evolve_lindblad(H: OperatorMatrix, channels, rho: QuantumState, t: float, dt: float,
                    check: bool = True, tol: float = 1e-6) -> QuantumState:
    """Fixed-step RK4 for the Lindblad equation.

    The step is shrunk to t/ceil(t/dt). With ``check`` the run is repeated at
    half the step and StepTooLarge is raised when the two differ by more than
    ``tol`` in trace distance; the finer result is returned.
    """
    if H.layout != rho.layout:
        raise LayoutMismatch("Hamiltonian and state layouts differ")
    if t < 0 or dt <= 0:
        raise ValueError("need t >= 0 and dt > 0")
    r0 = rho.density()
    if t == 0:
        return QuantumState(rho.layout, r0, check=False)
    if dt > t:
        raise ValueError(f"dt={dt} exceeds the evolution time t={t}")
    rhs = _generator(H, channels)
    n = max(1, int(math.ceil(t / dt - 1e-9)))
    out = _rk4(rhs, r0, n, t / n)
    if check:
        fine = _rk4(rhs, r0, 2 * n, t / (2 * n))
        err = trace_distance(out, fine)
        if err > tol:
            raise StepTooLarge(f"step halving changed the state by {err:.3g} (> {tol:g}); reduce dt")
        out = fine
    return QuantumState(rho.layout, out, check=False)


def lindblad_snapshots(H: OperatorMatrix, channels, rho: QuantumState, times, dt: float,
                       check: bool = True, tol: float = 1e-6) -> list:
    """States at each of the (non-decreasing) ``times``, integrating piecewise."""
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be non-negative and non-decreasing")
    out, cur, t_prev = [], rho.to_density(), 0.0
    for t in times:
        span = t - t_prev
        if span > 0:
            cur = evolve_lindblad(H, channels, cur, span, min(dt, span), check=check, tol=tol)
        out.append(cur)
        t_prev = t
    return out


# ---------------------------------------------------------------- pulses

SHAPES = ("square", "gaussian", "sinc")


@dataclass(frozen=True)
class PulseEnvelope:
    """Pulse on [0, duration_ns].

    ``amplitude_mhz`` is the peak drive strength (cyclic MHz). Gaussians use
    ``sigma_ns`` (default duration/6); sinc pulses are centred with zeros
    spaced by half of ``sinc_width_ns`` (the main-lobe width, default duration/4).
    """

    shape: str
    amplitude_mhz: float
    duration_ns: float
    carrier_detuning_mhz: float = 0.0
    sigma_ns: float | None = None
    sinc_width_ns: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if not self.duration_ns > 0:
            raise ValueError("pulse duration must be positive")
        if self.sigma_ns is not None and not self.sigma_ns > 0:
            raise ValueError("sigma_ns must be positive")
        if self.sinc_width_ns is not None and not self.sinc_width_ns > 0:
            raise ValueError("sinc_width_ns must be positive")

    @property
    def sigma(self) -> float:
        return self.sigma_ns if self.sigma_ns is not None else self.duration_ns / 6.0

    @property
    def sinc_width(self) -> float:
        return self.sinc_width_ns if self.sinc_width_ns is not None else self.duration_ns / 4.0

    def shape_values(self, t):
        """Real envelope shape, 1 at the peak."""
        t = np.asarray(t, dtype=float)
        mid = 0.5 * self.duration_ns
        if self.shape == "square":
            return np.ones_like(t)
        if self.shape == "gaussian":
            return np.exp(-0.5 * ((t - mid) / self.sigma) ** 2)
        return np.sinc(2.0 * (t - mid) / self.sinc_width)

    def area_ns(self, n: int = 4001) -> float:
        """∫ shape dt over the window."""
        t = np.linspace(0.0, self.duration_ns, n)
        return float(np.trapezoid(self.shape_values(t), t))

    def with_amplitude(self, amplitude_mhz: float) -> "PulseEnvelope":
        from dataclasses import replace

        return replace(self, amplitude_mhz=amplitude_mhz)


def sample_envelope(p: PulseEnvelope, t):
    """Complex drive amplitude (cyclic MHz) at time t (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-12) or np.any(t_arr > p.duration_ns + 1e-12):
        raise OutOfWindow(f"t outside [0, {p.duration_ns}] ns")
    val = (p.amplitude_mhz * p.shape_values(t_arr) * np.exp(1j * p.phase)
           * np.exp(-1j * MHZ * p.carrier_detuning_mhz * t_arr))
    return complex(val) if np.ndim(t) == 0 else val


def evolve_pulse(base: RotatingFrameHamiltonian, pulse: PulseEnvelope, state: QuantumState,
                 target: str = "resonator", n_slices: int | None = None, return_unitary: bool = False):
    """Piecewise-constant (midpoint) propagation under ``base`` plus a shaped drive.

    ``target`` selects the resonator drive ε or the qubit drive Ω. If
    ``return_unitary`` the full propagator is returned instead of the state.
    """
    lay = base.layout
    if n_slices is None:
        n_slices = max(50, int(math.ceil(pulse.duration_ns / 0.5)))
    h = pulse.duration_ns / n_slices
    tm = (np.arange(n_slices) + 0.5) * h
    amps = sample_envelope(pulse, tm)
    d = lay.resonator_dim
    if target == "resonator":
        a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)
        X = lay.embed(a.T)
    elif target == "qubit":
        X = 0.5 * lay.embed_qubit(SIGMA_MINUS.T)
    else:
        raise ValueError("target must be 'resonator' or 'qubit'")
    static = np.array(assemble_hamiltonian(base).matrix)
    vec = None if return_unitary else (state.data if state.is_pure else state.density())
    U_tot = np.eye(lay.dim, dtype=complex) if return_unitary else None
    for e in amps:
        c = MHZ * e
        H = static + c * X + np.conj(c) * X.conj().T
        U = matrix_exponential(-1j * h * H)
        if return_unitary:
            U_tot = U @ U_tot
        elif vec.ndim == 1:
            vec = U @ vec
        else:
            vec = U @ vec @ U.conj().T
    if return_unitary:
        return OperatorMatrix(lay, U_tot)
    return QuantumState(lay, vec, check=False)
