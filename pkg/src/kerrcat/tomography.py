"""Wigner functions by displaced parity, Ramsey parity tomography, phase-space fidelity.

Convention: W(γ) = (2/π) Tr[D(-γ) ρ D(γ) P], so the vacuum peaks at +2/π.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .dynamics import MHZ, PulseEnvelope, sample_envelope
from .errors import FitDiverged, GridMismatch, LayoutMismatch, TruncationTooSmall
from .hilbert import QuantumState, reduce_to_resonator, truncation_guard

CONVENTION = "W(gamma) = (2/pi) Tr[D(-gamma) rho D(gamma) P]"
CSV_HEADER = ["re_gamma", "im_gamma", "w"]
MAX_PAD = 600


@dataclass(frozen=True)
class GridSpec:
    re_range: tuple
    im_range: tuple
    nx: int
    ny: int

    def __post_init__(self):
        object.__setattr__(self, "re_range", (float(self.re_range[0]), float(self.re_range[1])))
        object.__setattr__(self, "im_range", (float(self.im_range[0]), float(self.im_range[1])))
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 points per axis")
        if not (self.re_range[1] > self.re_range[0] and self.im_range[1] > self.im_range[0]):
            raise ValueError("grid ranges must be increasing")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(*self.re_range, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(*self.im_range, self.ny)

    @property
    def cell_area(self) -> float:
        dx = (self.re_range[1] - self.re_range[0]) / (self.nx - 1)
        dy = (self.im_range[1] - self.im_range[0]) / (self.ny - 1)
        return dx * dy

    def points(self) -> np.ndarray:
        """Complex γ with shape (ny, nx)."""
        return self.xs[None, :] + 1j * self.ys[:, None]

    def to_dict(self) -> dict:
        return {"re_range": list(self.re_range), "im_range": list(self.im_range), "nx": self.nx, "ny": self.ny}


def reference_grid(alpha: complex, n: int = 101) -> GridSpec:
    """Square grid ±(|α| + 3) with n points per axis."""
    h = abs(alpha) + 3.0
    return GridSpec((-h, h), (-h, h), n, n)


@dataclass(frozen=True)
class WignerGrid:
    spec: GridSpec
    values: np.ndarray
    convention: str = CONVENTION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.spec.ny, self.spec.nx):
            raise ValueError(f"values shape {v.shape} does not match grid ({self.spec.ny}, {self.spec.nx})")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        return float(self.values.sum() * self.spec.cell_area)

    def value_at(self, gamma: complex) -> float:
        ix = int(np.argmin(np.abs(self.spec.xs - gamma.real)))
        iy = int(np.argmin(np.abs(self.spec.ys - gamma.imag)))
        return float(self.values[iy, ix])

    # ---- files

    def sidecar(self) -> dict:
        return {"convention": self.convention, "grid": self.spec.to_dict(), "meta": self.meta}

    def write(self, csv_path) -> tuple:
        """Write the CSV and its JSON sidecar (same stem, .json)."""
        csv_path = Path(csv_path)
        xs, ys = self.spec.xs, self.spec.ys
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for iy in range(self.spec.ny):
                for ix in range(self.spec.nx):
                    w.writerow([repr(float(xs[ix])), repr(float(ys[iy])), repr(float(self.values[iy, ix]))])
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return csv_path, side

    @classmethod
    def read(cls, csv_path) -> "WignerGrid":
        csv_path = Path(csv_path)
        side = json.loads(csv_path.with_suffix(".json").read_text())
        g = side["grid"]
        spec = GridSpec(tuple(g["re_range"]), tuple(g["im_range"]), int(g["nx"]), int(g["ny"]))
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != CSV_HEADER:
            raise ValueError(f"{csv_path}: expected header {','.join(CSV_HEADER)}")
        body = np.array([[float(x) for x in r] for r in rows[1:]])
        if body.shape != (spec.nx * spec.ny, 3):
            raise GridMismatch(f"{csv_path}: {body.shape[0]} rows for a {spec.nx}x{spec.ny} grid")
        vals = body[:, 2].reshape(spec.ny, spec.nx)
        return cls(spec, vals, side.get("convention", CONVENTION), side.get("meta", {}))

    def plot(self, png_path, title: str | None = None) -> Path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        vmax = float(np.max(np.abs(self.values))) or 1.0
        fig, ax = plt.subplots(figsize=(4.6, 4.0), dpi=110)
        im = ax.imshow(self.values, origin="lower", cmap="RdBu_r", vmin=-vmax, vmax=vmax,
                       extent=(*self.spec.re_range, *self.spec.im_range), interpolation="nearest")
        ax.set_xlabel("Re γ")
        ax.set_ylabel("Im γ")
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, label="W")
        fig.tight_layout()
        fig.savefig(png_path, metadata={"Software": None})
        plt.close(fig)
        return Path(png_path)


# ---------------------------------------------------------------- displaced parity


@lru_cache(maxsize=16)
def _quadrature_eig(dim: int):
    """Eigenpairs of i(a† - a) on a dim-level ladder."""
    off = np.sqrt(np.arange(1, dim, dtype=float))
    X = np.zeros((dim, dim), dtype=complex)
    X[np.arange(1, dim), np.arange(dim - 1)] = 1j * off
    X[np.arange(dim - 1), np.arange(1, dim)] = -1j * off
    lam, V = np.linalg.eigh(X)
    V.flags.writeable = False
    lam.flags.writeable = False
    return lam, V


def _pad_for(radius: float, support: int) -> int:
    d = max(truncation_guard(radius + math.sqrt(support)), support)
    d = int(8 * math.ceil(d / 8))
    if d > MAX_PAD:
        raise TruncationTooSmall(f"|γ| = {radius:.3g} would need a {d}-level padded space (limit {MAX_PAD})")
    return d


def _radial_columns(radii: np.ndarray, dim: int, support: int) -> np.ndarray:
    """B(r) = exp(r (a† - a))[:, :support] for each radius, shape (len(radii), dim, support)."""
    lam, V = _quadrature_eig(dim)
    E = np.exp(1j * radii[:, None] * lam[None, :])
    right = E[:, :, None] * V.conj().T[None, :, :support]
    return np.matmul(V[None], right)


def _resonator_density(state: QuantumState) -> np.ndarray:
    return reduce_to_resonator(state).density()


def _unique_radii(gam: np.ndarray):
    r = np.abs(gam).ravel()
    key = np.round(r, 12)
    ur, inv = np.unique(key, return_inverse=True)
    return ur, inv


def _parity_moments(rho: np.ndarray, radii: np.ndarray, chunk: int = 64) -> np.ndarray:
    """s_d(r) = Σ_{j-k=d} ρ_jk G_jk(r) with G(r) = B(r)^T P B(r)^*, for d = -(S-1)..S-1."""
    S = rho.shape[0]
    out = np.zeros((radii.size, 2 * S - 1), dtype=complex)
    pads = np.array([_pad_for(r, S) for r in radii])
    for dim in np.unique(pads):
        idx = np.nonzero(pads == dim)[0]
        sign = (-1.0) ** np.arange(dim)
        for s in range(0, idx.size, chunk):
            sel = idx[s:s + chunk]
            B = _radial_columns(radii[sel], int(dim), S)
            G = np.einsum("rmj,m,rmk->rjk", B, sign, B.conj(), optimize=True)
            H = G * rho[None]
            for d in range(-(S - 1), S):
                out[sel, d + S - 1] = np.trace(H, offset=-d, axis1=1, axis2=2)
    return out


def wigner_exact(state: QuantumState, spec: GridSpec, threads: int = 1) -> WignerGrid:
    """Displaced-parity Wigner function on ``spec``.

    The state is embedded in a padded ladder sized for the largest |γ|; the
    displacement is applied through one eigendecomposition of the quadrature
    i(a† - a) per padded size, and the azimuthal dependence reduces to phases.
    """
    rho = _resonator_density(state)
    S = rho.shape[0]
    gam = spec.points()
    ur, inv = _unique_radii(gam)
    if threads > 1 and ur.size > 1:
        parts = np.array_split(np.arange(ur.size), threads)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(lambda p: _parity_moments(rho, ur[p]), parts))
        mom = np.concatenate(res, axis=0)
    else:
        mom = _parity_moments(rho, ur)
    theta = np.angle(gam).ravel()
    d = np.arange(-(S - 1), S)
    vals = np.einsum("pd,pd->p", mom[inv], np.exp(-1j * theta[:, None] * d[None, :])).real
    return WignerGrid(spec, (2.0 / math.pi) * vals.reshape(spec.ny, spec.nx),
                      meta={"method": "displaced_parity", "resonator_dim": S})


def wigner_fast(state: QuantumState, spec: GridSpec) -> WignerGrid:
    """Laguerre-recurrence evaluation through the compiled kernel (or its numpy fallback)."""
    rho = np.ascontiguousarray(_resonator_density(state))
    vals = kernels.wigner_laguerre(rho, np.ascontiguousarray(spec.xs), np.ascontiguousarray(spec.ys))
    return WignerGrid(spec, np.asarray(vals), meta={"method": "laguerre", "resonator_dim": rho.shape[0],
                                                     "backend": kernels.BACKEND})


# ---------------------------------------------------------------- Ramsey parity


def _block_propagate(h_ge, e_diag, t):
    """exp(-i t H) for 2x2 blocks H = [[0, conj(h)], [h, e]] (vectorized over blocks)."""
    c0 = 0.5 * e_diag
    hx, hy, hz = h_ge.real, h_ge.imag, -0.5 * e_diag
    w = np.sqrt(hx**2 + hy**2 + hz**2)
    sinc = np.where(w > 0, np.sin(w * t) / np.where(w > 0, w, 1.0), t)
    cos = np.cos(w * t)
    ph = np.exp(-1j * c0 * t)
    U = np.empty(e_diag.shape + (2, 2), dtype=complex)
    # H - c0 = hx σx + hy σy + hz σz with σ+ = |e><g|
    U[..., 0, 0] = ph * (cos - 1j * sinc * hz)
    U[..., 1, 1] = ph * (cos + 1j * sinc * hz)
    U[..., 0, 1] = ph * (-1j * sinc * (hx - 1j * hy))
    U[..., 1, 0] = ph * (-1j * sinc * (hx + 1j * hy))
    return U


def _pulse_blocks(pulse: PulseEnvelope, chi_mhz: float, dim: int, n_slices: int | None = None):
    n = np.arange(dim, dtype=float)
    if n_slices is None:
        n_slices = max(100, int(math.ceil(pulse.duration_ns / 0.25)))
    h = pulse.duration_ns / n_slices
    tm = (np.arange(n_slices) + 0.5) * h
    amps = sample_envelope(pulse, tm)
    e_diag = -MHZ * chi_mhz * n
    U = np.broadcast_to(np.eye(2, dtype=complex), (dim, 2, 2)).copy()
    for a in amps:
        U = np.matmul(_block_propagate(np.full(dim, 0.5 * MHZ * a), e_diag, h), U)
    return U


def half_pi_pulse(pulse: PulseEnvelope) -> PulseEnvelope:
    """Rescale ``pulse`` so its area gives a π/2 rotation on the n = 0 line."""
    amp = (math.pi / 2.0) / (MHZ * pulse.area_ns())
    return pulse.with_amplitude(amp)


def ramsey_weights(chi_mhz: float, dim: int, pulse: PulseEnvelope | None = None) -> np.ndarray:
    """w_n = P(e | g, n) after π/2 - free evolution - π/2 with pulse centres π/χ apart.

    The joint generator is block-diagonal in photon number, so the qubit
    readout operator restricted to |g> is diagonal in n with entries w_n.
    """
    if chi_mhz <= 0:
        raise ValueError("chi must be positive")
    n = np.arange(dim, dtype=float)
    spacing = 500.0 / chi_mhz  # π/χ
    if pulse is None:
        c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
        P = np.broadcast_to(np.array([[c, -1j * s], [-1j * s, c]]), (dim, 2, 2))
        wait = spacing
    else:
        p = half_pi_pulse(pulse)
        if p.duration_ns > spacing:
            raise ValueError(f"pulse of {p.duration_ns} ns does not fit in the π/χ spacing {spacing:.4g} ns")
        P = _pulse_blocks(p, chi_mhz, dim)
        wait = spacing - p.duration_ns
    free = np.zeros((dim, 2, 2), dtype=complex)
    free[:, 0, 0] = 1.0
    free[:, 1, 1] = np.exp(1j * MHZ * chi_mhz * n * wait)
    U = P @ free @ P
    return np.abs(U[:, 1, 0]) ** 2


def wigner_ramsey(prep, chi_mhz: float, spec: GridSpec, pulses: PulseEnvelope | None = None,
                  shots: int | None = None, rng: np.random.Generator | None = None) -> WignerGrid:
    """Parity tomography by Ramsey interferometry on the ancilla.

    ``prep`` is a PulseSequence (executed from vacuum, ancilla then projected
    on |g>) or a QuantumState. For each γ the resonator is displaced by -γ,
    the ancilla runs π/2 - π/χ - π/2 (ideal rotations or the shaped ``pulses``)
    and W = (2/π)(2 p_e - 1); the vacuum reads +2/π.
    """
    from .protocols.sequence import PulseSequence, run_sequence
    from .hilbert import project_qubit

    if isinstance(prep, PulseSequence):
        if prep.layout.qubit_levels != 2:
            raise LayoutMismatch("Ramsey tomography needs a qubit in the layout")
        st = run_sequence(prep).state
        state, _ = project_qubit(st, 0)
    else:
        state = prep
    rho = _resonator_density(state)
    S = rho.shape[0]
    gam = spec.points().ravel()
    ur, inv = _unique_radii(gam.reshape(spec.ny, spec.nx))
    pads = np.array([_pad_for(r, S) for r in ur])
    pe = np.empty(gam.size)
    for dim in np.unique(pads):
        w = ramsey_weights(chi_mhz, int(dim), pulses)
        ridx = np.nonzero(pads == dim)[0]
        B = _radial_columns(ur[ridx], int(dim), S)
        lookup = {int(r): i for i, r in enumerate(ridx)}
        pts = np.nonzero(np.isin(inv, ridx))[0]
        phases_out = np.arange(dim)
        phases_in = np.arange(S)
        for p in pts:
            th = np.angle(gam[p])
            Bm = B[lookup[int(inv[p])]]
            M = np.exp(1j * th * phases_out)[:, None] * Bm * np.exp(-1j * th * phases_in)[None, :]
            diag = np.einsum("mj,jk,mk->m", M, rho, M.conj()).real
            pe[p] = float(np.dot(w, diag))
    if shots:
        rng = rng if rng is not None else np.random.default_rng(0)
        pe = rng.binomial(int(shots), np.clip(pe, 0.0, 1.0)) / int(shots)
    vals = (2.0 / math.pi) * (2.0 * pe - 1.0)
    meta = {"method": "ramsey", "chi_mhz": float(chi_mhz), "pulse": "ideal" if pulses is None else pulses.shape}
    return WignerGrid(spec, vals.reshape(spec.ny, spec.nx), meta=meta)


# ---------------------------------------------------------------- fidelity and fits


def fidelity_wigner(w_meas: WignerGrid, w_cal: WignerGrid) -> float:
    """F = π ∫ W_meas W_cal d²γ as a Riemann sum."""
    if w_meas.spec != w_cal.spec:
        raise GridMismatch("Wigner grids differ")
    return float(math.pi * np.sum(w_meas.values * w_cal.values) * w_meas.spec.cell_area)


def fit_coherent_gaussian(w: WignerGrid):
    """Fit W = A exp(-2|γ - α0|²); returns (α0, A)."""
    xs, ys = np.meshgrid(w.spec.xs, w.spec.ys)
    vals = w.values
    iy, ix = np.unravel_index(int(np.argmax(vals)), vals.shape)
    x0 = [xs[iy, ix], ys[iy, ix], vals[iy, ix]]

    def resid(p):
        return p[2] * np.exp(-2.0 * ((xs - p[0]) ** 2 + (ys - p[1]) ** 2)).ravel() - vals.ravel()

    try:
        sol = least_squares(resid, x0, method="lm", xtol=1e-14, ftol=1e-14)
    except ValueError as exc:
        raise FitDiverged(str(exc)) from exc
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise FitDiverged(f"Gaussian fit did not converge: {sol.message}")
    return complex(sol.x[0], sol.x[1]), float(sol.x[2])
