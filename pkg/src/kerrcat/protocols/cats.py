"""Kerr-evolution m-component cats and the ancilla-assisted odd/even cat."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConditionWindowTooWide, LayoutMismatch, TruncationTooSmall
from ..hilbert import (HilbertLayout, QuantumState, coherent_amplitudes, project_qubit,
                       truncation_guard)
from .sequence import Displace, FluxWindow, PulseSequence, QubitRotation, Wait, run_sequence


def kerr_period_ns(kerr_mhz: float) -> float:
    """τ0 = 2π/K for K given as cyclic MHz."""
    if kerr_mhz == 0:
        raise ValueError("Kerr coefficient must be nonzero")
    return 1e3 / abs(kerr_mhz)


def kerr_cat_sequence(alpha: complex, kerr_mhz: float, m: int, layout: HilbertLayout) -> PulseSequence:
    if int(m) != m or m < 1:
        raise ValueError("m must be an integer >= 1")
    return PulseSequence((Displace(alpha), FluxWindow(kerr_mhz, kerr_period_ns(kerr_mhz) / m)), layout)


def generate_kerr_cat(alpha: complex, kerr_mhz: float, m: int, layout: HilbertLayout) -> QuantumState:
    """D(α)|0> followed by the Kerr phase exp(+i(K/2)n²τ) with τ = τ0/m."""
    if truncation_guard(alpha) > layout.resonator_dim:
        raise TruncationTooSmall(f"alpha={abs(alpha):.4g} needs resonator_dim >= {truncation_guard(alpha)}")
    seq = kerr_cat_sequence(alpha, kerr_mhz, m, layout)
    return run_sequence(seq).state


def kerr_cat_components(m: int):
    """Leg coefficients c_k with exp(iπn²/m) = Σ_k c_k exp(2πi k n / M), M the phase period.

    Returns (M, c). The m-cat is then Σ_k c_k |α e^{2πik/M}>.
    """
    period = m if m % 2 == 0 else 2 * m
    n = np.arange(period)
    phases = np.exp(1j * math.pi * n**2 / m)
    return period, np.fft.ifft(phases)


def kerr_cat_reference(alpha: complex, m: int, layout: HilbertLayout) -> QuantumState:
    """Superposition of coherent legs with the Fock-phase coefficients (no Kerr propagation)."""
    period, c = kerr_cat_components(m)
    vec = np.zeros(layout.resonator_dim, dtype=complex)
    for k in range(period):
        if abs(c[k]) > 1e-12:
            vec += c[k] * coherent_amplitudes(alpha * np.exp(2j * math.pi * k / period), layout.resonator_dim)
    if layout.qubit_levels == 2:
        vec = np.concatenate([vec, np.zeros_like(vec)])
    return QuantumState(layout, vec / np.linalg.norm(vec))


def lobe_angles(state: QuantumState, radius: float, n_theta: int = 720, rel_height: float = 0.05):
    """Angles of local maxima of |<r e^{iθ}|ψ>|² on a circle (the Husimi ring)."""
    from ..hilbert import reduce_to_resonator

    rho = reduce_to_resonator(state).density()
    d = rho.shape[0]
    th = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    amps = np.array([coherent_amplitudes(radius * np.exp(1j * t), d) for t in th])
    q = np.real(np.einsum("ti,ij,tj->t", amps.conj(), rho, amps))
    peak = (q > np.roll(q, 1)) & (q >= np.roll(q, -1)) & (q > rel_height * q.max())
    return th[peak]


ODD, EVEN = "odd", "even"


def odd_even_sequence(alpha: complex, chi_mhz: float, branch: str, layout: HilbertLayout,
                      window=None) -> PulseSequence:
    """π/2 → D(α) → wait π/χ (odd) or 3π/χ (even) → D(α) → conditional π → D(-α).

    ``window`` lists the Fock numbers addressed by the conditional π-pulse;
    default is the vacuum only.
    """
    if layout.qubit_levels != 2:
        raise LayoutMismatch("odd/even cat preparation needs a qubit")
    if branch not in (ODD, EVEN):
        raise ValueError("branch must be 'odd' or 'even'")
    if chi_mhz <= 0:
        raise ValueError("chi must be positive")
    if truncation_guard(2 * alpha) > layout.resonator_dim:
        raise TruncationTooSmall(f"2*alpha needs resonator_dim >= {truncation_guard(2 * alpha)}")
    window = (0,) if window is None else tuple(int(n) for n in window)
    if max(window) >= layout.resonator_dim:
        raise ConditionWindowTooWide(f"conditional window reaches n={max(window)} >= resonator_dim")
    half_turn = 500.0 / chi_mhz  # π/χ in ns
    tau = half_turn if branch == ODD else 3.0 * half_turn
    steps = (
        QubitRotation("x", math.pi / 2),
        Displace(alpha),
        Wait(tau),
        Displace(alpha),
        QubitRotation("y", -math.pi, window),
        Displace(-alpha),
    )
    return PulseSequence(steps, layout)


def literal_window(alpha: complex) -> tuple:
    """Fock numbers n < 4|α|² (the cutoff written with the protocol)."""
    return tuple(range(int(math.ceil(4 * abs(alpha) ** 2))))


def generate_odd_even_cat(alpha: complex, chi_mhz: float, branch: str, layout: HilbertLayout,
                          window=None, return_joint: bool = False):
    """Resonator state after projecting the ancilla on |g>.

    The dispersive wait runs in the frame where the qubit is detuned by χ/2, so
    the two qubit branches acquire opposite phases ±χnt/2.
    """
    seq = odd_even_sequence(alpha, chi_mhz, branch, layout, window)
    res = run_sequence(seq, chi_mhz=chi_mhz, qubit_detuning_mhz=0.5 * chi_mhz, record=return_joint)
    state, _ = project_qubit(res.state, 0)
    if return_joint:
        return state, res.history
    return state
