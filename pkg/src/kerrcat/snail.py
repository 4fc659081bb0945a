"""SNAIL-terminated resonator: potential, effective-mode expansion and Kerr coefficient.

Energies are E/h in GHz. Mode frequencies and couplings are cyclic
(f = ω/2π): ``omega_s_ghz`` in GHz, the rest in MHz. External flux
``phi_ext`` is a phase in radians (2π·Φ_ext/Φ0).
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import (DerivativeUnstable, FitDiverged, MinimizationFailed, MultipleMinima,
                     NoSignChange, ReportedWithResidual)

TWO_PI = 2.0 * math.pi

SWEEP_HEADER = ["phi_ext_over_2pi", "omega_s_ghz", "g3_mhz", "g4_mhz", "ks_mhz", "kqs_mhz", "k_mhz"]
CURVE_HEADER = ["phi_ext_over_2pi", "omega_s_ghz"]

# Table values of the reference device.
BETA = 0.095
EJ_GHZ = 830.0
KQ_MHZ = -420.0
OMEGA_Q_GHZ = 5.095
OMEGA_S0_GHZ = 4.223
KERR_FREE_FLUX = 0.4026  # in units of Φ0
CHI0_MHZ = 4.35


@dataclass(frozen=True)
class ChiTable:
    """Dispersive shift χ/2π (MHz) tabulated against flux in units of Φ0.

    Linear interpolation on the flux folded into [0, 0.5].
    """

    flux: tuple = (0.0, KERR_FREE_FLUX, 0.5)
    chi_mhz: tuple = (18.0, CHI0_MHZ, 3.5)

    def __post_init__(self):
        if len(self.flux) != len(self.chi_mhz) or len(self.flux) < 1:
            raise ValueError("flux and chi_mhz must have equal nonzero length")
        if any(np.diff(self.flux) <= 0):
            raise ValueError("chi table flux values must be strictly increasing")

    def __call__(self, phi_ext: float) -> float:
        f = (phi_ext / TWO_PI) % 1.0
        f = min(f, 1.0 - f)
        return float(np.interp(f, self.flux, self.chi_mhz))

    @classmethod
    def constant(cls, chi_mhz: float) -> "ChiTable":
        return cls((0.0,), (float(chi_mhz),))


@dataclass(frozen=True)
class SnailDevice:
    beta: float
    EJ: float
    EL: float
    EC: float
    chi: ChiTable = field(default_factory=ChiTable)
    Kq: float = KQ_MHZ
    omega_q: float = OMEGA_Q_GHZ

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        for name in ("EJ", "EL", "EC"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not self.Kq < 0.0:
            raise ValueError("Kq must be negative")
        if not isinstance(self.chi, ChiTable):
            object.__setattr__(self, "chi", ChiTable.constant(self.chi))

    @property
    def r(self) -> float:
        return self.EL / self.EJ

    def scaled(self, s: float) -> "SnailDevice":
        return replace(self, EJ=self.EJ * s, EL=self.EL * s, EC=self.EC * s)


class TaylorCoefficients(NamedTuple):
    phi_min: float
    c2: float
    c3: float
    c4: float


@dataclass(frozen=True)
class FluxPoint:
    phi_ext: float
    phi_min: float
    c2: float
    c3: float
    c4: float
    omega_s_ghz: float
    g3_mhz: float
    g4_mhz: float
    ks_mhz: float
    kqs_mhz: float
    k_mhz: float
    chi_mhz: float

    @property
    def flux(self) -> float:
        """External flux in units of Φ0."""
        return self.phi_ext / TWO_PI

    def row(self):
        return [self.flux, self.omega_s_ghz, self.g3_mhz, self.g4_mhz,
                self.ks_mhz, self.kqs_mhz, self.k_mhz]


def snail_potential(phi, phi_ext, dev: SnailDevice):
    """U = -β E_J cos φ - 3 E_J cos((φ_ext - φ)/3)."""
    phi = np.asarray(phi, dtype=float)
    return -dev.beta * dev.EJ * np.cos(phi) - 3.0 * dev.EJ * np.cos((phi_ext - phi) / 3.0)


def _snail_gradient(s, phi_ext, beta):
    return beta * np.sin(s) - np.sin((phi_ext - s) / 3.0)


def _locate_minimum(phi_ext: float, beta: float, guess: float | None = None) -> float:
    """Minimum of the SNAIL potential in units of E_J; it is also the minimum of the
    effective potential. Raises if the well is not unique over one period."""
    s = np.linspace(phi_ext - 3.0 * math.pi, phi_ext + 3.0 * math.pi, 4001)
    g = _snail_gradient(s, phi_ext, beta)
    up = np.nonzero((g[:-1] < 0.0) & (g[1:] >= 0.0))[0]
    if up.size == 0:
        raise MinimizationFailed(f"no stationary point found at phi_ext={phi_ext:.6g}")
    if up.size > 1:
        raise MultipleMinima(f"potential has {up.size} minima at phi_ext={phi_ext:.6g}")
    i = up[0]
    if guess is not None and s[i] <= guess <= s[i + 1]:
        lo, hi = guess - 1e-3, guess + 1e-3
        if not (_snail_gradient(lo, phi_ext, beta) < 0.0 < _snail_gradient(hi, phi_ext, beta)):
            lo, hi = s[i], s[i + 1]
    else:
        lo, hi = s[i], s[i + 1]
    return brentq(_snail_gradient, lo, hi, args=(phi_ext, beta), xtol=1e-15, rtol=1e-15)


def _delta_outward(phis, phi_ext, beta, r, phi_m):
    """ΔU/E_J relative to the minimum, relaxing φ_s by continuation outward from φ_m."""
    phis = np.asarray(phis, dtype=float)
    out = np.empty_like(phis)
    upper = np.nonzero(phis >= phi_m)[0]
    lower = np.nonzero(phis < phi_m)[0]
    upper = upper[np.argsort(phis[upper])]
    lower = lower[np.argsort(-phis[lower])]
    for idx in (upper, lower):
        if idx.size:
            d, _ = kernels.snail_effective_delta(np.ascontiguousarray(phis[idx]), phi_ext, beta, r, phi_m, phi_m)
            out[idx] = d
    if not np.all(np.isfinite(out)):
        raise MinimizationFailed(f"inner SNAIL relaxation failed at phi_ext={phi_ext:.6g}")
    return out


def effective_potential(phi, phi_ext, dev: SnailDevice):
    """min over φ_s of ½E_L(φ-φ_s)² + U_SNAIL(φ_s), in GHz."""
    phi_m = _locate_minimum(phi_ext, dev.beta)
    u_m = float(snail_potential(phi_m, phi_ext, dev)) / dev.EJ
    scalar = np.ndim(phi) == 0
    delta = _delta_outward(np.atleast_1d(phi), phi_ext, dev.beta, dev.r, phi_m)
    out = dev.EJ * (u_m + delta)
    return float(out[0]) if scalar else out


def _richardson(levels, tol):
    """Romberg tableau on a sequence with even-power error expansion."""
    rows = []
    best, best_err = levels[0], np.inf
    for i, val in enumerate(levels):
        row = [val]
        for k in range(1, i + 1):
            row.append(row[k - 1] + (row[k - 1] - rows[i - 1][k - 1]) / (4.0**k - 1.0))
        rows.append(row)
        if i >= 1:
            err = abs(row[-1] - rows[i - 1][-1])
            if err < best_err:
                best, best_err = row[-1], err
            if err <= tol(row[-1]):
                return row[-1], err
    return best, best_err


def _taylor_from_delta(delta_fn, scale_hint: float = 1.0, h0: float = 0.2, n_levels: int = 7):
    """c2, c3, c4 from second-order central stencils at h0/2^i, Richardson-extrapolated."""
    hs = h0 / 2.0 ** np.arange(n_levels)
    pts = np.outer(hs, [-2.0, -1.0, 1.0, 2.0]).ravel()
    vals = delta_fn(pts).reshape(n_levels, 4)
    m2, m1, p1, p2 = vals.T
    d2 = (p1 + m1) / hs**2
    d3 = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * hs**3)
    d4 = (p2 - 4.0 * p1 - 4.0 * m1 + m2) / hs**4
    out = []
    for seq, order in ((d2, 2), (d3, 3), (d4, 4)):
        floor = 1e-12 * scale_hint

        def tol(v):
            return 1e-10 * abs(v) + floor

        val, err = _richardson(list(seq), tol)
        if not np.isfinite(val) or err > 1e-7 * abs(val) + 1e-9 * scale_hint:
            raise DerivativeUnstable(f"order-{order} derivative did not converge (err {err:.3g})")
        out.append(val)
    return out


def taylor_coefficients(phi_ext: float, dev: SnailDevice, order: int = 4, guess: float | None = None):
    """(phi_min, c2, c3, c4) with c_j = U_eff^(j)(φ_min)/E_J."""
    if order != 4:
        raise ValueError("only order 4 is supported")
    return _taylor_reduced(phi_ext, dev.beta, dev.r, guess)


def _taylor_reduced(phi_ext, beta, r, guess=None):
    phi_m = _locate_minimum(phi_ext, beta, guess)
    c2, c3, c4 = _taylor_from_delta(
        lambda h: _delta_outward(phi_m + h, phi_ext, beta, r, phi_m), scale_hint=r / (1.0 + r))
    if not c2 > 0.0:
        raise MinimizationFailed(f"non-positive curvature c2={c2:.3g} at phi_ext={phi_ext:.6g}")
    return TaylorCoefficients(float(phi_m), float(c2), float(c3), float(c4))


def _mode_from_taylor(tc: TaylorCoefficients, phi_ext: float, dev: SnailDevice) -> FluxPoint:
    _, c2, c3, c4 = tc
    omega = math.sqrt(8.0 * dev.EC * dev.EJ * c2)  # GHz
    g3 = c3 * math.sqrt(dev.EC * omega) / (6.0 * c2) * 1e3
    g4 = c4 * dev.EC / (12.0 * c2) * 1e3
    ks = 12.0 * (g4 - 5.0 * g3**2 / (omega * 1e3))
    chi = dev.chi(phi_ext)
    kqs = chi**2 / (4.0 * dev.Kq)
    return FluxPoint(float(phi_ext), tc.phi_min, c2, c3, c4, omega, float(g3), float(g4),
                     float(ks), float(kqs), float(ks + kqs), chi)


def mode_parameters(phi_ext: float, dev: SnailDevice, guess: float | None = None) -> FluxPoint:
    """ω_s, g3, g4 and K = K_s + K_qs at one flux point."""
    return _mode_from_taylor(taylor_coefficients(phi_ext, dev, guess=guess), phi_ext, dev)


def flux_sweep(dev: SnailDevice, phi_exts, workers: int = 1) -> list:
    """Mode parameters along a flux list; sequential sweeps continue from the previous minimum."""
    phi_exts = [float(p) for p in phi_exts]
    if workers > 1 and len(phi_exts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: mode_parameters(p, dev), phi_exts))
    out, guess = [], None
    for p in phi_exts:
        fp = mode_parameters(p, dev, guess=guess)
        guess = fp.phi_min
        out.append(fp)
    return out


def kerr_free_flux(dev: SnailDevice, bracket=(0.35 * TWO_PI, 0.45 * TWO_PI)) -> float:
    """Flux phase where K = K_s + K_qs vanishes inside ``bracket`` (radians)."""
    lo, hi = sorted(float(b) for b in bracket)

    def k(p):
        return mode_parameters(p, dev).k_mhz

    k_lo, k_hi = k(lo), k(hi)
    if k_lo == 0.0:
        return lo
    if k_hi == 0.0:
        return hi
    if np.sign(k_lo) == np.sign(k_hi):
        raise NoSignChange(f"K has the same sign at both bracket ends ({k_lo:.4g}, {k_hi:.4g} MHz)")
    root = brentq(k, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=200)
    if abs(k(root)) >= 1e-4:
        raise NoSignChange(f"root refinement stalled with |K| = {abs(k(root)) * 1e3:.3g} kHz")
    return root


def kerr_extremes(dev: SnailDevice, flux_span=(0.0, 0.5), n_grid: int = 51):
    """(K_min, flux_min, K_max, flux_max) over a flux span in units of Φ0, refined locally."""
    from scipy.optimize import minimize_scalar

    fl = np.linspace(flux_span[0], flux_span[1], n_grid)
    ks = np.array([fp.k_mhz for fp in flux_sweep(dev, fl * TWO_PI)])
    out = []
    for sgn, i in ((1.0, int(np.argmin(ks))), (-1.0, int(np.argmax(ks)))):
        a, b = fl[max(i - 1, 0)], fl[min(i + 1, n_grid - 1)]
        res = minimize_scalar(lambda f: sgn * mode_parameters(f * TWO_PI, dev).k_mhz,
                              bounds=(a, b), method="bounded", options={"xatol": 1e-6})
        if sgn * res.fun <= sgn * ks[i]:
            out += [sgn * res.fun, float(res.x)]
        else:
            out += [float(ks[i]), float(fl[i])]
    return tuple(out)


def check_single_well(dev: SnailDevice, phi_exts) -> None:
    for p in phi_exts:
        _locate_minimum(float(p), dev.beta)


# ---------------------------------------------------------------- calibration


@dataclass(frozen=True)
class Anchors:
    """Hard constraints ω_s(flux) = omega_s_ghz and K(flux) = 0; flux in units of Φ0."""

    flux: float = KERR_FREE_FLUX
    omega_s_ghz: float = OMEGA_S0_GHZ


@dataclass(frozen=True)
class CalibrationResult:
    device: SnailDevice
    rms_mhz: float
    residuals_mhz: tuple
    kerr_extremes_mhz: tuple | None
    nfev: int


def anchored_device(beta: float, EJ: float, anchors: Anchors = Anchors(), chi: ChiTable | None = None,
                    Kq: float = KQ_MHZ, omega_q: float = OMEGA_Q_GHZ, r_guess: float = 1.0) -> SnailDevice:
    """Device whose E_C and E_L satisfy both anchors exactly for given β and E_J.

    For each trial r = E_L/E_J the frequency anchor fixes E_C = ω0²/(8 E_J c2);
    r is then the root of K(anchor flux).
    """
    chi = chi if chi is not None else ChiTable()
    p = anchors.flux * TWO_PI
    kqs = chi(p) ** 2 / (4.0 * Kq)
    w0 = anchors.omega_s_ghz

    def kerr(log_r):
        _, c2, c3, c4 = _taylor_reduced(p, beta, math.exp(log_r))
        ec = w0**2 / (8.0 * EJ * c2)
        return ec / c2 * (c4 - 5.0 * c3**2 / (3.0 * c2)) * 1e3 + kqs

    x0 = math.log(r_guess)
    lo, hi = x0 - 0.2, x0 + 0.2
    if np.sign(kerr(lo)) == np.sign(kerr(hi)):
        grid = np.linspace(math.log(0.02), math.log(50.0), 41)
        vals = np.array([kerr(x) for x in grid])
        idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if idx.size == 0:
            raise NoSignChange(f"no E_L satisfies the Kerr-free anchor for beta={beta:.4g}, EJ={EJ:.4g}")
        i = idx[np.argmin(np.abs(grid[idx] - x0))]
        lo, hi = grid[i], grid[i + 1]
    log_r = brentq(kerr, lo, hi, xtol=1e-14)
    r = math.exp(log_r)
    c2 = _taylor_reduced(p, beta, r).c2
    return SnailDevice(beta, EJ, r * EJ, w0**2 / (8.0 * EJ * c2), chi, Kq, omega_q)


_PARAMS = ("beta", "EJ", "EC", "EL")


def _to_internal(name, v):
    return math.log(v / (1.0 - v)) if name == "beta" else math.log(v)


def _from_internal(name, x):
    return 1.0 / (1.0 + math.exp(-x)) if name == "beta" else math.exp(x)


def _check_curve(phis, omegas, need):
    if phis.size < need:
        raise ValueError(f"calibration needs at least {need} curve samples, got {phis.size}")
    if phis.size >= 2:
        order = np.argsort(phis)
        d = np.diff(omegas[order])
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("curve samples must span a monotone flux segment")


def calibrate(target_curve, anchors: Anchors | None = None, initial_guess: SnailDevice | None = None,
              free=None, kerr_range=None, kerr_weight: float = 20.0,
              rms_threshold_mhz: float | None = None, max_nfev: int = 200) -> CalibrationResult:
    """Least-squares fit of the device to a frequency-vs-flux curve.

    ``target_curve`` is a sequence of (phi_ext [rad], omega_s [GHz]) pairs. With
    ``anchors`` E_C and E_L are eliminated exactly (see :func:`anchored_device`)
    and only the remaining ``free`` parameters are fitted. ``kerr_range``
    optionally adds (K_min, K_max) targets in MHz over flux [0, 0.5]Φ0.
    """
    curve = np.asarray(list(target_curve), dtype=float).reshape(-1, 2)
    phis, omegas = curve[:, 0], curve[:, 1]
    guess = initial_guess or SnailDevice(BETA, EJ_GHZ, EJ_GHZ, 0.0128)
    if free is None:
        free = (("EJ",) if kerr_range is not None else ("beta",)) if anchors else ("beta", "EC", "EL")
    free = tuple(free)
    allowed = ("beta", "EJ") if anchors else _PARAMS
    if not free or any(f not in allowed for f in free):
        raise ValueError(f"free parameters must be a nonempty subset of {allowed}")
    n_res = phis.size + (2 if kerr_range is not None else 0)
    if anchors is None and kerr_range is None:
        _check_curve(phis, omegas, 4)
    else:
        _check_curve(phis, omegas, 0)
    if n_res < len(free) + 1:
        raise ValueError("calibration problem is not overdetermined")

    base = {k: getattr(guess, k) for k in _PARAMS}
    state = {"r": guess.r}

    def build(x):
        vals = dict(base)
        vals.update({k: _from_internal(k, xi) for k, xi in zip(free, x)})
        if anchors:
            dev = anchored_device(vals["beta"], vals["EJ"], anchors, guess.chi, guess.Kq,
                                  guess.omega_q, r_guess=state["r"])
            state["r"] = dev.r
            return dev
        return SnailDevice(vals["beta"], vals["EJ"], vals["EL"], vals["EC"], guess.chi, guess.Kq, guess.omega_q)

    def parts(dev):
        om = np.array([fp.omega_s_ghz for fp in flux_sweep(dev, phis)]) if phis.size else np.zeros(0)
        fres = (om - omegas) * 1e3
        ext = None
        kres = np.zeros(0)
        if kerr_range is not None:
            ext = kerr_extremes(dev)
            kres = kerr_weight * np.array([ext[0] - kerr_range[0], ext[2] - kerr_range[1]])
        return fres, kres, ext

    def resid(x):
        try:
            fres, kres, _ = parts(build(x))
        except (ValueError, MinimizationFailed, NoSignChange, DerivativeUnstable):
            return np.full(n_res, 1e6)
        return np.concatenate([fres, kres])

    from scipy.optimize import least_squares

    x0 = np.array([_to_internal(k, base[k]) for k in free])
    r0 = resid(x0)
    sol = least_squares(resid, x0, method="lm", xtol=1e-12, ftol=1e-12, max_nfev=max_nfev)
    if not np.all(np.isfinite(sol.fun)) or (not sol.success and sol.cost >= 0.5 * r0 @ r0) \
            or sol.cost > 0.5 * r0 @ r0 or np.max(np.abs(sol.fun)) >= 1e6:
        raise FitDiverged(f"calibration did not reduce the residual ({sol.message})")
    dev = build(sol.x)
    fres, _, ext = parts(dev)
    rms = float(np.sqrt(np.mean(fres**2))) if fres.size else 0.0
    result = CalibrationResult(dev, rms, tuple(float(v) for v in fres), ext, int(sol.nfev))
    if rms_threshold_mhz is not None and rms > rms_threshold_mhz:
        raise ReportedWithResidual(f"calibration RMS {rms:.4g} MHz exceeds {rms_threshold_mhz} MHz", result)
    return result


_PRESETS = {}


def table_device() -> SnailDevice:
    """β and E_J from the parameter table, E_C and E_L from the two anchors."""
    if "table" not in _PRESETS:
        _PRESETS["table"] = anchored_device(BETA, EJ_GHZ)
    return _PRESETS["table"]


# Kerr extremes read off the flux-tuning figure, MHz.
TARGET_KERR_RANGE = (-5.0, 6.0)


def tuned_device() -> SnailDevice:
    """Anchored device with E_J fitted so that K spans TARGET_KERR_RANGE (MHz) over [0, 0.5] flux quanta."""
    if "tuned" not in _PRESETS:
        guess = replace(table_device(), EJ=230.0)
        res = calibrate([], anchors=Anchors(), initial_guess=guess, free=("EJ",),
                        kerr_range=TARGET_KERR_RANGE)
        _PRESETS["tuned"] = res.device
    return _PRESETS["tuned"]


# ---------------------------------------------------------------- I/O


def read_frequency_curve(path):
    """CSV ``phi_ext_over_2pi,omega_s_ghz`` -> (phi_ext radians, omega_s GHz) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != CURVE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CURVE_HEADER)}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns")
            try:
                rows.append([float(row[0]), float(row[1])])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0] * TWO_PI, arr[:, 1]


def write_frequency_curve(path, phi_exts, omegas):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for p, o in zip(phi_exts, omegas):
            w.writerow([repr(float(p) / TWO_PI), repr(float(o))])


def write_sweep_csv(path, points):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for fp in points:
            w.writerow([repr(float(v)) for v in fp.row()])


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SWEEP_HEADER:
            raise ValueError(f"{path}: unexpected header")
        return np.array([[float(v) for v in row] for row in reader if row], dtype=float)
