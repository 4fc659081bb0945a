"""State preservation at (or near) the Kerr-free point and decoherence-rate calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from ..dynamics import CollapseChannel, RotatingFrameHamiltonian, assemble_hamiltonian, diagonal_energies, lindblad_snapshots
from ..errors import FitDiverged
from ..hilbert import QuantumState, fidelity_trace
from .sequence import PulseSequence, _apply_diag, run_sequence


def preserve_state(state: QuantumState, dt_list, channels=(), kerr_residual_mhz: float = 0.0,
                   dt_ns: float = 0.05, check: bool = True) -> list:
    """Snapshots of ``state`` stored for each Δt in ``dt_list`` (ns).

    The residual Kerr acts like a flux window, exp(+i (K/2) n² Δt); channels
    switch the evolution to the Lindblad integrator. Without channels pure
    states stay pure.
    """
    dts = [float(t) for t in dt_list]
    if not dts:
        raise ValueError("dt_list is empty")
    if any(t < 0 for t in dts):
        raise ValueError("storage times must be non-negative")
    params = RotatingFrameHamiltonian(state.layout, kerr_mhz=-kerr_residual_mhz)
    channels = [c for c in channels if c.rate_per_us > 0]
    if not channels:
        E = diagonal_energies(params)
        return [_apply_diag(np.exp(-1j * t * E), state) for t in dts]
    order = np.argsort(dts, kind="stable")
    snaps = lindblad_snapshots(assemble_hamiltonian(params), channels, state.to_density(),
                               [dts[i] for i in order], dt_ns, check=check)
    out = [None] * len(dts)
    for k, i in enumerate(order):
        out[i] = snaps[k]
    return out


def fidelity_decay(protocol: PulseSequence, times, channels=(), kerr_residual_mhz: float = 0.0,
                   dt_ns: float = 0.05, check: bool = False, reference: QuantumState | None = None) -> np.ndarray:
    """Fidelity to the ideal protocol output after preparation plus storage for each time.

    Channels act during the preparation and the storage.
    """
    ideal = reference if reference is not None else run_sequence(protocol).state
    channels = [c for c in channels if c.rate_per_us > 0]
    prepared = run_sequence(protocol, channels=channels, dt_ns=dt_ns, check=check).state
    snaps = preserve_state(prepared, times, channels, kerr_residual_mhz, dt_ns, check=check)
    return np.array([fidelity_trace(s, ideal) for s in snaps])


@dataclass(frozen=True)
class DecoherenceFit:
    kappa_per_us: float
    dephasing_per_us: float
    rms: float
    residuals: tuple
    fidelities: tuple
    times_ns: tuple

    @property
    def channels(self) -> tuple:
        ch = [CollapseChannel("photon_loss", self.kappa_per_us)]
        if self.dephasing_per_us > 0:
            ch.append(CollapseChannel("qubit_dephasing", self.dephasing_per_us))
        return tuple(ch)


def calibrate_decoherence(targets, protocol: PulseSequence, fit_dephasing: bool = False,
                          kerr_residual_mhz: float = 0.0, dt_ns: float = 0.05,
                          kappa_max_per_us: float = 50.0, xatol: float = 1e-5) -> DecoherenceFit:
    """Fit the photon-loss rate κ (1/μs), optionally with qubit dephasing, to
    fidelity-vs-storage-time targets ``[(Δt_ns, F), ...]``.

    κ alone is found by a bounded scalar search; with dephasing a bounded
    least-squares fit runs from the κ-only solution.
    """
    pts = sorted((float(t), float(f)) for t, f in targets)
    if len(pts) < 2:
        raise ValueError("need at least two target points")
    times = [t for t, _ in pts]
    want = np.array([f for _, f in pts])
    if fit_dephasing and protocol.layout.qubit_levels != 2:
        raise ValueError("qubit dephasing needs a protocol with a qubit")
    ideal = run_sequence(protocol).state

    def model(kappa, gphi=0.0):
        ch = [CollapseChannel("photon_loss", max(kappa, 0.0))]
        if gphi > 0:
            ch.append(CollapseChannel("qubit_dephasing", gphi))
        return fidelity_decay(protocol, times, ch, kerr_residual_mhz, dt_ns, reference=ideal)

    def cost(kappa):
        return float(np.sum((model(kappa) - want) ** 2))

    r = minimize_scalar(cost, bounds=(0.0, kappa_max_per_us), method="bounded", options={"xatol": xatol})
    if not r.success or not math.isfinite(r.fun):
        raise FitDiverged(f"κ search failed: {r.message}")
    kappa, gphi = float(r.x), 0.0
    if fit_dephasing:
        sol = least_squares(lambda p: model(p[0], p[1]) - want, [kappa, 0.1],
                            bounds=([0.0, 0.0], [kappa_max_per_us, kappa_max_per_us]), xtol=1e-10)
        if not sol.success:
            raise FitDiverged(f"κ/dephasing fit failed: {sol.message}")
        kappa, gphi = float(sol.x[0]), float(sol.x[1])
    fid = model(kappa, gphi)
    if not np.all(np.isfinite(fid)):
        raise FitDiverged("model fidelities are not finite")
    res = fid - want
    return DecoherenceFit(kappa, gphi, float(np.sqrt(np.mean(res**2))), tuple(res), tuple(fid), tuple(times))


PRESERVATION_TARGETS = ((0.0, 0.891), (100.0, 0.819), (200.0, 0.758))
