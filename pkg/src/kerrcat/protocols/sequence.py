"""Typed pulse sequences, their JSON form, and an executor."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import (MHZ, CollapseChannel, RotatingFrameHamiltonian, assemble_hamiltonian,
                        diagonal_energies, evolve_lindblad)
from ..errors import LayoutMismatch, TruncationTooSmall
from ..hilbert import HilbertLayout, QuantumState, displacement, expectation, parity_operator

FORMAT_TAG = "kerrcat.sequence/1"


@dataclass(frozen=True)
class Displace:
    alpha: complex


@dataclass(frozen=True)
class FluxWindow:
    """Kerr window: the resonator acquires exp(+i (K/2) n² τ)."""

    kerr_mhz: float
    tau_ns: float


@dataclass(frozen=True)
class QubitRotation:
    """exp(-i θ σ_axis / 2), optionally only on the Fock components in ``photons``."""

    axis: str
    angle_rad: float
    photons: tuple | None = None


@dataclass(frozen=True)
class Wait:
    tau_ns: float


@dataclass(frozen=True)
class MeasureQubit:
    pass


@dataclass(frozen=True)
class MeasureParity:
    pass


STEP_TYPES = {
    "displace": Displace,
    "flux_window": FluxWindow,
    "qubit_rotation": QubitRotation,
    "wait": Wait,
    "measure_qubit": MeasureQubit,
    "measure_parity": MeasureParity,
}
_TYPE_NAMES = {v: k for k, v in STEP_TYPES.items()}


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple
    layout: HilbertLayout

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        d = self.layout.resonator_dim
        for i, st in enumerate(self.steps):
            if type(st) not in _TYPE_NAMES:
                raise TypeError(f"step {i}: unsupported step {st!r}")
            if isinstance(st, (FluxWindow, Wait)) and not st.tau_ns >= 0:
                raise ValueError(f"step {i}: negative duration")
            if isinstance(st, QubitRotation):
                if self.layout.qubit_levels != 2:
                    raise LayoutMismatch(f"step {i}: qubit rotation needs a qubit in the layout")
                if st.axis not in ("x", "y"):
                    raise ValueError(f"step {i}: axis must be 'x' or 'y'")
                if st.photons is not None:
                    ph = tuple(int(n) for n in st.photons)
                    if any(n < 0 or n >= d for n in ph):
                        raise ValueError(f"step {i}: conditional photon numbers must lie in [0, {d})")
                    object.__setattr__(st, "photons", ph)
            if isinstance(st, MeasureQubit) and self.layout.qubit_levels != 2:
                raise LayoutMismatch(f"step {i}: qubit measurement needs a qubit in the layout")

    def duration_ns(self) -> float:
        return sum(st.tau_ns for st in self.steps if isinstance(st, (FluxWindow, Wait)))

    def max_displacement(self) -> float:
        return max((abs(st.alpha) for st in self.steps if isinstance(st, Displace)), default=0.0)

    # ---- JSON

    def to_dict(self) -> dict:
        steps = []
        for st in self.steps:
            name = _TYPE_NAMES[type(st)]
            if isinstance(st, Displace):
                steps.append({"type": name, "alpha_re": float(np.real(st.alpha)), "alpha_im": float(np.imag(st.alpha))})
            elif isinstance(st, FluxWindow):
                steps.append({"type": name, "kerr_mhz": float(st.kerr_mhz), "tau_ns": float(st.tau_ns)})
            elif isinstance(st, QubitRotation):
                d = {"type": name, "axis": st.axis, "angle_rad": float(st.angle_rad)}
                if st.photons is not None:
                    d["photons"] = list(st.photons)
                steps.append(d)
            elif isinstance(st, Wait):
                steps.append({"type": name, "tau_ns": float(st.tau_ns)})
            else:
                steps.append({"type": name})
        return {
            "format": FORMAT_TAG,
            "layout": {"resonator_dim": self.layout.resonator_dim, "qubit_levels": self.layout.qubit_levels},
            "steps": steps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "PulseSequence":
        _require_keys(doc, {"format", "layout", "steps"}, {"format", "layout", "steps"}, "sequence")
        if doc["format"] != FORMAT_TAG:
            raise ValueError(f"unsupported sequence format {doc['format']!r}")
        _require_keys(doc["layout"], {"resonator_dim", "qubit_levels"}, {"resonator_dim"}, "layout")
        layout = HilbertLayout(int(doc["layout"]["resonator_dim"]), int(doc["layout"].get("qubit_levels", 1)))
        steps = []
        for i, s in enumerate(doc["steps"]):
            kind = s.get("type")
            where = f"steps[{i}]"
            if kind == "displace":
                _require_keys(s, {"type", "alpha_re", "alpha_im"}, {"type", "alpha_re"}, where)
                steps.append(Displace(complex(float(s["alpha_re"]), float(s.get("alpha_im", 0.0)))))
            elif kind == "flux_window":
                _require_keys(s, {"type", "kerr_mhz", "tau_ns"}, {"type", "kerr_mhz", "tau_ns"}, where)
                steps.append(FluxWindow(float(s["kerr_mhz"]), float(s["tau_ns"])))
            elif kind == "qubit_rotation":
                _require_keys(s, {"type", "axis", "angle_rad", "photons"}, {"type", "axis", "angle_rad"}, where)
                ph = s.get("photons")
                steps.append(QubitRotation(s["axis"], float(s["angle_rad"]), None if ph is None else tuple(ph)))
            elif kind == "wait":
                _require_keys(s, {"type", "tau_ns"}, {"type", "tau_ns"}, where)
                steps.append(Wait(float(s["tau_ns"])))
            elif kind in ("measure_qubit", "measure_parity"):
                _require_keys(s, {"type"}, {"type"}, where)
                steps.append(STEP_TYPES[kind]())
            else:
                raise ValueError(f"{where}: unknown step type {kind!r}")
        return cls(tuple(steps), layout)

    @classmethod
    def from_json(cls, text: str) -> "PulseSequence":
        return cls.from_dict(json.loads(text))


def _require_keys(d, allowed, required, where):
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ValueError(f"{where}: unknown keys {sorted(extra)}")
    missing = set(required) - set(d)
    if missing:
        raise ValueError(f"{where}: missing keys {sorted(missing)}")


# ---------------------------------------------------------------- execution


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    return np.array([[c, -s], [s, c]], dtype=complex)


def conditional_rotation(layout: HilbertLayout, axis: str, angle: float, photons=None) -> np.ndarray:
    """Projector-controlled qubit rotation: R on Fock components in ``photons`` (all if None)."""
    d = layout.resonator_dim
    R = rotation_matrix(axis, angle)
    mask = np.ones(d) if photons is None else np.isin(np.arange(d), photons).astype(float)
    U = np.zeros((2 * d, 2 * d), dtype=complex)
    for q in range(2):
        for p in range(2):
            U[q * d:(q + 1) * d, p * d:(p + 1) * d] = np.diag(mask * R[q, p] + (1 - mask) * (q == p))
    return U


@dataclass
class SequenceResult:
    state: QuantumState
    measurements: list = field(default_factory=list)
    history: list = field(default_factory=list)


def sample_shots(p: float, shots: int, rng: np.random.Generator) -> float:
    """Binomial estimate of a probability from ``shots`` single-shot outcomes."""
    p = min(max(float(p), 0.0), 1.0)
    return rng.binomial(int(shots), p) / int(shots)


def run_sequence(seq: PulseSequence, initial: QuantumState | None = None, *, chi_mhz: float = 0.0,
                 qubit_detuning_mhz: float = 0.0, idle_kerr_mhz: float = 0.0, channels=(),
                 dt_ns: float = 0.05, check: bool = False, shots: int | None = None,
                 rng: np.random.Generator | None = None, record: bool = False) -> SequenceResult:
    """Execute a sequence.

    Waits evolve under the dispersive coupling ``chi_mhz``, the qubit frame
    detuning and ``idle_kerr_mhz``; flux windows apply their Kerr phase on top
    of the same terms. Without channels evolution is exact and pure states
    stay pure; with channels segments are integrated by RK4.
    """
    lay = seq.layout
    if initial is None:
        vec = np.zeros(lay.dim, dtype=complex)
        vec[0] = 1.0
        state = QuantumState(lay, vec)
    else:
        if initial.layout != lay:
            raise LayoutMismatch("initial state layout differs from sequence layout")
        state = initial
    channels = [c for c in channels if c.rate_per_us > 0]
    if channels:
        state = state.to_density()
    if lay.qubit_levels == 1 and (chi_mhz or qubit_detuning_mhz):
        raise LayoutMismatch("dispersive terms need a qubit in the layout")
    res = SequenceResult(state)
    rng = rng if rng is not None else np.random.default_rng(0)

    for st in seq.steps:
        if isinstance(st, Displace):
            state = displacement(st.alpha, lay).apply(state)
        elif isinstance(st, QubitRotation):
            U = conditional_rotation(lay, st.axis, st.angle_rad, st.photons)
            state = _apply(U, state)
        elif isinstance(st, (Wait, FluxWindow)):
            kerr = idle_kerr_mhz if isinstance(st, Wait) else -st.kerr_mhz
            params = RotatingFrameHamiltonian(lay, kerr_mhz=kerr, chi_mhz=chi_mhz,
                                              qubit_detuning_mhz=qubit_detuning_mhz)
            if st.tau_ns > 0:
                if channels:
                    H = assemble_hamiltonian(params)
                    state = evolve_lindblad(H, channels, state, st.tau_ns, min(dt_ns, st.tau_ns), check=check)
                else:
                    phases = np.exp(-1j * st.tau_ns * diagonal_energies(params))
                    state = _apply_diag(phases, state)
        elif isinstance(st, MeasureQubit):
            d = lay.resonator_dim
            proj = np.zeros(lay.dim)
            proj[d:] = 1.0
            p = float(np.real(expectation(np.diag(proj), state)))
            if shots:
                p = sample_shots(p, shots, rng)
            res.measurements.append(("p_excited", p))
        elif isinstance(st, MeasureParity):
            res.measurements.append(("parity", float(np.real(expectation(parity_operator(lay), state)))))
        if record:
            res.history.append(state)
    res.state = state
    return res


def _apply(U, state):
    if state.is_pure:
        return QuantumState(state.layout, U @ state.data, check=False)
    return QuantumState(state.layout, U @ state.data @ U.conj().T, check=False)


def _apply_diag(phases, state):
    if state.is_pure:
        return QuantumState(state.layout, phases * state.data, check=False)
    return QuantumState(state.layout, phases[:, None] * state.data * phases.conj()[None, :], check=False)


def check_truncation(seq: PulseSequence) -> None:
    from ..hilbert import truncation_guard

    need = truncation_guard(seq.max_displacement())
    if need > seq.layout.resonator_dim:
        raise TruncationTooSmall(f"sequence needs resonator_dim >= {need}")


__all__ = [
    "Displace", "FluxWindow", "QubitRotation", "Wait", "MeasureQubit", "MeasureParity",
    "PulseSequence", "SequenceResult", "run_sequence", "conditional_rotation", "rotation_matrix",
    "sample_shots", "MHZ", "CollapseChannel",
]
