"""Command-line front end driven by a strict JSON run configuration.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure
(the error class name is written to ``report.json``).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import snail
from .dynamics import CollapseChannel, PulseEnvelope
from .errors import ConfigError, KerrcatError, NoSignChange
from .hilbert import (HilbertLayout, QuantumState, coherent, expectation, fidelity_trace, fock,
                      parity_operator, reduce_to_resonator, superposition, truncation_guard)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# ---------------------------------------------------------------- configuration schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChiTableConfig(_Strict):
    flux_phi0: list[float]
    chi_mhz: list[float]


class AnchorConfig(_Strict):
    flux_phi0: float = snail.KERR_FREE_FLUX
    omega_s_ghz: float = snail.OMEGA_S0_GHZ


class DeviceConfig(_Strict):
    preset: Literal["tuned", "table"] | None = None
    beta: float | None = None
    EJ_ghz: float | None = None
    EC_ghz: float | None = None
    EL_ghz: float | None = None
    calibration_curve: str | None = None
    anchors: AnchorConfig | None = None
    chi_table: ChiTableConfig | None = None
    Kq_mhz: float = snail.KQ_MHZ
    omega_q_ghz: float = snail.OMEGA_Q_GHZ

    @model_validator(mode="after")
    def _one_source(self):
        explicit = [self.beta, self.EJ_ghz, self.EC_ghz, self.EL_ghz]
        if self.preset is not None and (self.calibration_curve is not None or any(v is not None for v in explicit)):
            raise ValueError("give either a preset, explicit energies or a calibration curve")
        if self.calibration_curve is None and any(v is not None for v in explicit) and None in explicit:
            raise ValueError("explicit devices need beta, EJ_ghz, EC_ghz and EL_ghz")
        if self.anchors is not None and self.calibration_curve is None:
            raise ValueError("anchors only apply together with calibration_curve")
        if self.preset is None and self.calibration_curve is None and all(v is None for v in explicit):
            object.__setattr__(self, "preset", "tuned")
        return self


class SimulationConfig(_Strict):
    resonator_dim: int = Field(40, ge=2)
    dt_ns: float = Field(0.05, gt=0)
    shots: int | None = Field(None, ge=1)
    threads: int = Field(1, ge=1)


class OutputConfig(_Strict):
    directory: str = "kerrcat_out"
    plot: bool = True


class ChannelConfig(_Strict):
    kind: Literal["photon_loss", "qubit_decay", "qubit_dephasing"]
    rate_per_us: float = Field(ge=0)


class PulseConfig(_Strict):
    shape: Literal["square", "gaussian", "sinc"] = "sinc"
    duration_ns: float = Field(100.0, gt=0)
    sinc_width_ns: float | None = Field(None, gt=0)
    sigma_ns: float | None = Field(None, gt=0)

    def envelope(self) -> PulseEnvelope:
        return PulseEnvelope(self.shape, 1.0, self.duration_ns, sigma_ns=self.sigma_ns,
                             sinc_width_ns=self.sinc_width_ns)


class GridConfig(_Strict):
    half_width: float | None = Field(None, gt=0)
    points: int = Field(101, ge=2)


class FluxSweepConfig(_Strict):
    start_phi0: float = 0.0
    stop_phi0: float = 0.5
    points: int = 51
    root_bracket_phi0: tuple[float, float] = (0.35, 0.45)

    @model_validator(mode="after")
    def _range(self):
        if self.points < 1:
            raise ValueError("flux range is empty (points must be >= 1)")
        if self.stop_phi0 < self.start_phi0:
            raise ValueError("flux range is empty (stop_phi0 < start_phi0)")
        if self.points == 1 and self.stop_phi0 != self.start_phi0:
            raise ValueError("a single-point sweep needs start_phi0 == stop_phi0")
        return self


class CatConfig(_Strict):
    kind: Literal["kerr", "odd_even"] = "kerr"
    alpha_re: float = 1.42
    alpha_im: float = 0.0
    kerr_mhz: float = 5.21
    m: int = Field(2, ge=1)
    branch: Literal["odd", "even"] = "odd"
    chi_mhz: float = Field(snail.CHI0_MHZ, gt=0)
    window: list[int] | None = None
    channels: list[ChannelConfig] = []
    tomography: list[Literal["exact", "ramsey"]] = ["exact"]
    grid: GridConfig = GridConfig()
    ramsey_pulse: PulseConfig | None = None


class MeasureKerrConfig(_Strict):
    route: Literal["single_tone", "two_tone", "both"] = "both"
    kerr_mhz: list[float] = [0.0, 0.5, 2.0, 5.21]
    nbars: list[float] = [0.5, 1.0, 2.0, 3.0, 4.0]
    probe_ns: float = Field(50.0, gt=0)
    two_tone_pulse_ns: float = Field(4000.0, gt=0)

    @model_validator(mode="after")
    def _lists(self):
        if not self.kerr_mhz:
            raise ValueError("kerr_mhz list is empty")
        if len(self.nbars) < 2:
            raise ValueError("single-tone needs at least two photon numbers")
        return self


class PreserveConfig(_Strict):
    state: Literal["coherent", "cat2"] = "coherent"
    alpha_re: float = 1.42
    alpha_im: float = 0.0
    kerr_mhz: float = 5.21
    dt_ns: list[float] = [0.0, 100.0, 200.0, 300.0, 400.0, 500.0]
    kerr_residual_mhz: list[float] = [0.0, 0.5]
    channels: list[ChannelConfig] = []
    calibrate_targets: list[tuple[float, float]] | None = None
    fit_dephasing: bool = False

    @model_validator(mode="after")
    def _nonempty(self):
        if not self.dt_ns:
            raise ValueError("dt_ns list is empty")
        if any(t < 0 for t in self.dt_ns):
            raise ValueError("dt_ns values must be non-negative")
        return self


class CalibrateConfig(_Strict):
    use_anchors: bool = True
    free: list[Literal["beta", "EJ", "EC", "EL"]] | None = None
    kerr_range_mhz: tuple[float, float] | None = None
    rms_threshold_mhz: float | None = None
    max_nfev: int = Field(200, ge=1)


class StateConfig(_Strict):
    kind: Literal["fock", "coherent", "kerr_cat", "odd_even"] = "coherent"
    n: int = Field(0, ge=0)
    alpha_re: float = 1.42
    alpha_im: float = 0.0
    m: int = Field(2, ge=1)
    kerr_mhz: float = 5.21
    branch: Literal["odd", "even"] = "odd"
    chi_mhz: float = Field(snail.CHI0_MHZ, gt=0)


class WignerConfig(_Strict):
    state_path: str | None = None
    state: StateConfig | None = None
    method: Literal["exact", "fast", "ramsey"] = "exact"
    chi_mhz: float = Field(snail.CHI0_MHZ, gt=0)
    ramsey_pulse: PulseConfig | None = None
    grid: GridConfig = GridConfig()

    @model_validator(mode="after")
    def _source(self):
        if (self.state_path is None) == (self.state is None):
            raise ValueError("give exactly one of state_path or state")
        return self


class FidelityConfig(_Strict):
    a: str
    b: str


class ProtocolConfig(_Strict):
    flux_sweep: FluxSweepConfig = FluxSweepConfig()
    cat: CatConfig = CatConfig()
    measure_kerr: MeasureKerrConfig = MeasureKerrConfig()
    preserve: PreserveConfig = PreserveConfig()
    calibrate: CalibrateConfig = CalibrateConfig()
    wigner: WignerConfig | None = None
    fidelity: FidelityConfig | None = None


class RunConfig(_Strict):
    device: DeviceConfig = DeviceConfig()
    simulation: SimulationConfig = SimulationConfig()
    protocol: ProtocolConfig = ProtocolConfig()
    output: OutputConfig = OutputConfig()
    seed: int = Field(0, ge=0, lt=2**64)


def _line_of(text: str, loc) -> int | None:
    """Best-effort line number of the JSON key path ``loc``."""
    pos, line = 0, None
    for key in loc:
        if isinstance(key, int):
            continue
        i = text.find(f'"{key}"', pos)
        if i < 0:
            break
        pos = i + 1
        line = text.count("\n", 0, i) + 1
    return line


def load_config(path: str | None) -> tuple[RunConfig, Path]:
    if path is None:
        return RunConfig(), Path.cwd()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"]) or "<root>"
            line = _line_of(text, err["loc"])
            where = f"{path}:{line}" if line else str(path)
            msgs.append(f"{where}: {loc}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from None
    return cfg, p.parent.resolve()


# ---------------------------------------------------------------- helpers


def _chi_table(cfg: DeviceConfig) -> snail.ChiTable:
    if cfg.chi_table is None:
        return snail.ChiTable()
    return snail.ChiTable(tuple(cfg.chi_table.flux_phi0), tuple(cfg.chi_table.chi_mhz))


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def build_device(cfg: DeviceConfig, base: Path):
    """Device described by the config, with the calibration result when a curve was fitted."""
    if cfg.calibration_curve is not None:
        return _calibrate_from_curve(cfg, base, CalibrateConfig())
    if cfg.preset == "tuned":
        dev = snail.tuned_device()
    elif cfg.preset == "table":
        dev = snail.table_device()
    else:
        dev = snail.SnailDevice(cfg.beta, cfg.EJ_ghz, cfg.EL_ghz, cfg.EC_ghz)
    from dataclasses import replace

    dev = replace(dev, chi=_chi_table(cfg) if cfg.chi_table else dev.chi, Kq=cfg.Kq_mhz, omega_q=cfg.omega_q_ghz)
    return dev, None


def _calibrate_from_curve(cfg: DeviceConfig, base: Path, cal: CalibrateConfig):
    try:
        phis, omegas = snail.read_frequency_curve(_resolve(base, cfg.calibration_curve))
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    anchors = None
    if cal.use_anchors:
        a = cfg.anchors or AnchorConfig()
        anchors = snail.Anchors(a.flux_phi0, a.omega_s_ghz)
    guess = None
    if cfg.beta is not None and cfg.EJ_ghz is not None:
        guess = snail.SnailDevice(cfg.beta, cfg.EJ_ghz, cfg.EL_ghz or cfg.EJ_ghz, cfg.EC_ghz or 0.0128,
                                  chi=_chi_table(cfg), Kq=cfg.Kq_mhz, omega_q=cfg.omega_q_ghz)
    else:
        guess = snail.SnailDevice(snail.BETA, snail.EJ_GHZ, snail.EJ_GHZ, 0.0128, chi=_chi_table(cfg),
                                  Kq=cfg.Kq_mhz, omega_q=cfg.omega_q_ghz)
    res = snail.calibrate(list(zip(phis, omegas)), anchors=anchors, initial_guess=guess,
                          free=tuple(cal.free) if cal.free else None,
                          kerr_range=tuple(cal.kerr_range_mhz) if cal.kerr_range_mhz else None,
                          rms_threshold_mhz=cal.rms_threshold_mhz, max_nfev=cal.max_nfev)
    return res.device, res


def _device_dict(dev) -> dict:
    return {"beta": dev.beta, "EJ_ghz": dev.EJ, "EL_ghz": dev.EL, "EC_ghz": dev.EC, "Kq_mhz": dev.Kq,
            "omega_q_ghz": dev.omega_q,
            "chi_table": {"flux_phi0": list(dev.chi.flux), "chi_mhz": list(dev.chi.chi_mhz)}}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return path


def _channels(chs) -> list:
    return [CollapseChannel(c.kind, c.rate_per_us) for c in chs]


def _grid(alpha: complex, g: GridConfig):
    from .tomography import GridSpec, reference_grid

    if g.half_width is None:
        return reference_grid(alpha, g.points)
    h = g.half_width
    return GridSpec((-h, h), (-h, h), g.points, g.points)


def _line_plot(path: Path, xs, series: dict, xlabel: str, ylabel: str, marks=()):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=110)
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o" if len(xs) < 20 else None, ms=3, label=label)
    for x in marks:
        ax.axvline(x, color="k", lw=0.8, ls="--")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


# ---------------------------------------------------------------- commands


def cmd_flux_sweep(cfg: RunConfig, base: Path, out: Path, threads: int) -> dict:
    fs = cfg.protocol.flux_sweep
    dev, _ = build_device(cfg.device, base)
    flux = np.linspace(fs.start_phi0, fs.stop_phi0, fs.points)
    pts = snail.flux_sweep(dev, flux * snail.TWO_PI, workers=threads)
    snail.write_sweep_csv(out / "flux_sweep.csv", pts)
    files = ["flux_sweep.csv"]
    try:
        root = snail.kerr_free_flux(dev, tuple(b * snail.TWO_PI for b in fs.root_bracket_phi0)) / snail.TWO_PI
        k_root = snail.mode_parameters(root * snail.TWO_PI, dev).k_mhz
    except NoSignChange:
        root, k_root = None, None
    ks = [p.k_mhz for p in pts]
    if cfg.output.plot:
        _line_plot(out / "flux_sweep.png", flux, {"K (MHz)": ks}, "Φ_ext / Φ0", "K/2π (MHz)",
                   marks=() if root is None else (root,))
        files.append("flux_sweep.png")
    return {
        "device": _device_dict(dev),
        "points": len(pts),
        "k_min_mhz": min(ks), "k_min_flux_phi0": float(flux[int(np.argmin(ks))]),
        "k_max_mhz": max(ks), "k_max_flux_phi0": float(flux[int(np.argmax(ks))]),
        "omega_s_range_ghz": [min(p.omega_s_ghz for p in pts), max(p.omega_s_ghz for p in pts)],
        "kerr_free_flux_phi0": root, "k_at_root_khz": None if k_root is None else k_root * 1e3,
        "files": files,
    }


def _make_state(sc: StateConfig, dim: int) -> QuantumState:
    from .protocols.cats import generate_kerr_cat, generate_odd_even_cat

    alpha = complex(sc.alpha_re, sc.alpha_im)
    lay = HilbertLayout(dim)
    if sc.kind == "fock":
        if sc.n >= dim:
            raise ConfigError(f"Fock level {sc.n} does not fit in resonator_dim {dim}")
        return fock(lay, sc.n)
    if sc.kind == "coherent":
        return coherent(alpha, lay)
    if sc.kind == "kerr_cat":
        return generate_kerr_cat(alpha, sc.kerr_mhz, sc.m, lay)
    return generate_odd_even_cat(alpha, sc.chi_mhz, sc.branch, lay.with_qubit())


def _save_state(path: Path, state: QuantumState) -> Path:
    np.save(path, np.asarray(reduce_to_resonator(state).data))
    return path


def _load_state(path: Path) -> QuantumState:
    try:
        arr = np.load(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot load state ({exc})") from None
    return QuantumState(HilbertLayout(arr.shape[0]), arr)


def _wigner_outputs(out: Path, stem: str, grid, plot: bool, title: str) -> list:
    grid.write(out / f"{stem}.csv")
    files = [f"{stem}.csv", f"{stem}.json"]
    if plot:
        grid.plot(out / f"{stem}.png", title)
        files.append(f"{stem}.png")
    return files


def cmd_cat(cfg: RunConfig, base: Path, out: Path, threads: int) -> dict:
    from .protocols.cats import (kerr_cat_reference, kerr_cat_sequence, lobe_angles, odd_even_sequence)
    from .protocols.sequence import check_truncation, run_sequence
    from .hilbert import project_qubit
    from .tomography import fidelity_wigner, wigner_exact, wigner_ramsey

    cc = cfg.protocol.cat
    alpha = complex(cc.alpha_re, cc.alpha_im)
    dim = cfg.simulation.resonator_dim
    chans = _channels(cc.channels)
    if cc.kind == "kerr":
        lay = HilbertLayout(dim)
        seq = kerr_cat_sequence(alpha, cc.kerr_mhz, cc.m, lay)
        check_truncation(seq)
        state = run_sequence(seq, channels=chans, dt_ns=cfg.simulation.dt_ns).state
        ref = kerr_cat_reference(alpha, cc.m, lay)
        extra = {"m": cc.m, "tau_ns": seq.steps[1].tau_ns,
                 "lobes": int(len(lobe_angles(state, abs(alpha))))}
    else:
        lay = HilbertLayout(dim, 2)
        seq = odd_even_sequence(alpha, cc.chi_mhz, cc.branch, lay, cc.window)
        joint = run_sequence(seq, chi_mhz=cc.chi_mhz, qubit_detuning_mhz=0.5 * cc.chi_mhz, channels=chans,
                             dt_ns=cfg.simulation.dt_ns).state
        state, p_g = project_qubit(joint, 0)
        rlay = HilbertLayout(dim)
        ref = superposition([alpha, -alpha], [1.0, -1.0 if cc.branch == "odd" else 1.0], rlay)
        extra = {"branch": cc.branch, "ancilla_g_probability": p_g}
    state_r = reduce_to_resonator(state)
    ref_r = reduce_to_resonator(ref)
    parity = float(np.real(expectation(parity_operator(state_r.layout), state_r)))
    spec = _grid(alpha, cc.grid)
    files = [_save_state(out / "state.npy", state_r).name]
    w_ref = wigner_exact(ref_r, spec, threads=threads)
    files += _wigner_outputs(out, "wigner_reference", w_ref, False, "")
    report = {"kind": cc.kind, "alpha": alpha, "kerr_mhz": cc.kerr_mhz, "resonator_dim": dim,
              "fidelity_trace": fidelity_trace(state_r, ref_r), "parity": parity,
              "channels": [c.model_dump() for c in cc.channels], "wigner": {}}
    report.update(extra)
    for method in cc.tomography:
        if method == "exact":
            w = wigner_exact(state_r, spec, threads=threads)
        else:
            pulse = cc.ramsey_pulse.envelope() if cc.ramsey_pulse else None
            rng = np.random.default_rng(cfg.seed)
            w = wigner_ramsey(state_r, cc.chi_mhz, spec, pulse, shots=cfg.simulation.shots, rng=rng)
        stem = f"wigner_{method}"
        files += _wigner_outputs(out, stem, w, cfg.output.plot, f"{cc.kind} cat ({method})")
        report["wigner"][method] = {"fidelity_vs_reference": fidelity_wigner(w, w_ref),
                                    "w_origin": float(w.values[spec.ny // 2, spec.nx // 2]),
                                    "integral": w.integral()}
    report["files"] = files
    return report


def cmd_measure_kerr(cfg: RunConfig, base: Path, out: Path, threads: int) -> dict:
    from .protocols.kerr_measure import amplitude_for_nbar, single_tone_kerr, two_tone_kerr

    mk = cfg.protocol.measure_kerr
    probe = PulseEnvelope("gaussian", 1.0, mk.probe_ns)
    amps = [amplitude_for_nbar(probe, nb) for nb in mk.nbars]
    dim = max(cfg.simulation.resonator_dim, truncation_guard(math.sqrt(max(mk.nbars))))
    lay = HilbertLayout(dim)
    rows = []
    for k in mk.kerr_mhz:
        row = {"programmed_mhz": k}
        if mk.route in ("single_tone", "both"):
            try:
                r = single_tone_kerr(k, probe, amps, lay)
                row["single_tone_mhz"] = r.kerr_mhz
                row["single_tone_r2"] = r.r_squared
            except KerrcatError as exc:
                row["single_tone_error"] = type(exc).__name__
        if mk.route in ("two_tone", "both"):
            try:
                r = two_tone_kerr(k, lay, pulse_ns=mk.two_tone_pulse_ns)
                row["two_tone_mhz"] = r.kerr_mhz
                row["rabi_ratio"] = r.rabi_freq_12_mhz / r.rabi_freq_01_mhz
            except KerrcatError as exc:
                row["two_tone_error"] = type(exc).__name__
        for key in ("single_tone_mhz", "two_tone_mhz"):
            if key in row and k != 0:
                row[key.replace("_mhz", "_rel_err")] = row[key] / k - 1.0
        rows.append(row)
    cols = ["programmed_mhz", "single_tone_mhz", "two_tone_mhz"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(repr(float(row[c])) if c in row else "" for c in cols))
    (out / "measure_kerr.csv").write_text("\n".join(lines) + "\n")
    return {"route": mk.route, "nbars": mk.nbars, "rows": rows, "files": ["measure_kerr.csv"]}


def cmd_preserve(cfg: RunConfig, base: Path, out: Path, threads: int) -> dict:
    from .protocols.cats import generate_kerr_cat, kerr_cat_sequence
    from .protocols.preservation import calibrate_decoherence, fidelity_decay, preserve_state

    pc = cfg.protocol.preserve
    alpha = complex(pc.alpha_re, pc.alpha_im)
    lay = HilbertLayout(cfg.simulation.resonator_dim)
    state = coherent(alpha, lay) if pc.state == "coherent" else generate_kerr_cat(alpha, pc.kerr_mhz, 2, lay)
    chans = _channels(pc.channels)
    table = {}
    for kres in pc.kerr_residual_mhz:
        snaps = preserve_state(state, pc.dt_ns, chans, kres, cfg.simulation.dt_ns)
        table[f"K={kres!r} MHz"] = [fidelity_trace(s, state) for s in snaps]
    report = {"state": pc.state, "alpha": alpha, "dt_ns": pc.dt_ns, "fidelity": table,
              "channels": [c.model_dump() for c in pc.channels]}
    lines = ["dt_ns," + ",".join(f"fidelity_k{k!r}_mhz" for k in pc.kerr_residual_mhz)]
    for i, t in enumerate(pc.dt_ns):
        lines.append(",".join([repr(float(t))] + [repr(float(v[i])) for v in table.values()]))
    (out / "preservation.csv").write_text("\n".join(lines) + "\n")
    files = ["preservation.csv"]
    if pc.calibrate_targets:
        seq = kerr_cat_sequence(alpha, pc.kerr_mhz, 2, lay)
        fit = calibrate_decoherence(pc.calibrate_targets, seq, fit_dephasing=pc.fit_dephasing,
                                    dt_ns=cfg.simulation.dt_ns)
        report["decoherence_fit"] = {
            "kappa_per_us": fit.kappa_per_us, "dephasing_per_us": fit.dephasing_per_us,
            "times_ns": fit.times_ns, "fidelities": fit.fidelities, "targets": [f for _, f in sorted(pc.calibrate_targets)],
            "rms_points": 100.0 * fit.rms,
        }
        curve_t = sorted(set(pc.dt_ns) | set(fit.times_ns))
        report["decoherence_fit"]["curve"] = {
            "dt_ns": curve_t,
            "fidelity": list(fidelity_decay(seq, curve_t, fit.channels, dt_ns=cfg.simulation.dt_ns)),
        }
    if cfg.output.plot:
        _line_plot(out / "preservation.png", pc.dt_ns, table, "Δt (ns)", "fidelity")
        files.append("preservation.png")
    report["files"] = files
    return report


def cmd_calibrate(cfg: RunConfig, base: Path, out: Path, threads: int) -> dict:
    dc = cfg.device
    if dc.calibration_curve is not None:
        dev, res = _calibrate_from_curve(dc, base, cfg.protocol.calibrate)
        fit = {"rms_mhz": res.rms_mhz, "residuals_mhz": res.residuals_mhz, "nfev": res.nfev}
    else:
        dev, _ = build_device(dc, base)
        fit = None
    root = snail.kerr_free_flux(dev) / snail.TWO_PI
    kmin, fmin, kmax, fmax = snail.kerr_extremes(dev)
    fp = snail.mode_parameters(root * snail.TWO_PI, dev)
    write_json(out / "device.json", _device_dict(dev))
    return {"device": _device_dict(dev), "fit": fit, "kerr_free_flux_phi0": root, "k_at_root_khz": fp.k_mhz * 1e3,
            "omega_s_at_root_ghz": fp.omega_s_ghz, "kqs_at_root_khz": fp.kqs_mhz * 1e3,
            "kerr_extremes": {"k_min_mhz": kmin, "flux_min_phi0": fmin, "k_max_mhz": kmax, "flux_max_phi0": fmax},
            "files": ["device.json"]}


def cmd_wigner(cfg: RunConfig, base: Path, out: Path, threads: int) -> dict:
    from .tomography import wigner_exact, wigner_fast, wigner_ramsey

    wc = cfg.protocol.wigner
    if wc is None:
        raise ConfigError("protocol.wigner block is required for the wigner command")
    if wc.state_path is not None:
        state = _load_state(_resolve(base, wc.state_path))
        alpha = 0.0
    else:
        state = _make_state(wc.state, cfg.simulation.resonator_dim)
        alpha = complex(wc.state.alpha_re, wc.state.alpha_im) if wc.state.kind != "fock" else math.sqrt(wc.state.n)
    state = reduce_to_resonator(state)
    spec = _grid(alpha, wc.grid)
    if wc.method == "exact":
        w = wigner_exact(state, spec, threads=threads)
    elif wc.method == "fast":
        w = wigner_fast(state, spec)
    else:
        pulse = wc.ramsey_pulse.envelope() if wc.ramsey_pulse else None
        w = wigner_ramsey(state, wc.chi_mhz, spec, pulse, shots=cfg.simulation.shots,
                          rng=np.random.default_rng(cfg.seed))
    files = _wigner_outputs(out, "wigner", w, cfg.output.plot, f"Wigner ({wc.method})")
    return {"method": wc.method, "grid": spec.to_dict(), "integral": w.integral(),
            "w_min": float(w.values.min()), "w_max": float(w.values.max()), "files": files}


def cmd_fidelity(cfg: RunConfig, base: Path, out: Path, threads: int) -> dict:
    from .tomography import WignerGrid, fidelity_wigner

    fc = cfg.protocol.fidelity
    if fc is None:
        raise ConfigError("protocol.fidelity block is required for the fidelity command")
    grids = []
    for p in (fc.a, fc.b):
        path = _resolve(base, p)
        try:
            grids.append(WignerGrid.read(path))
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: cannot read Wigner grid ({exc})") from None
    return {"a": fc.a, "b": fc.b, "fidelity": fidelity_wigner(*grids), "files": []}


COMMANDS = {
    "flux-sweep": cmd_flux_sweep,
    "cat": cmd_cat,
    "measure-kerr": cmd_measure_kerr,
    "preserve": cmd_preserve,
    "calibrate": cmd_calibrate,
    "wigner": cmd_wigner,
    "fidelity": cmd_fidelity,
}


def _failing_module(exc: BaseException) -> str:
    """Dotted name (relative to the package) of the innermost package module in the traceback."""
    pkg = Path(__file__).resolve().parent
    name = "cli"
    tb = exc.__traceback__
    while tb is not None:
        f = Path(tb.tb_frame.f_code.co_filename).resolve()
        if pkg in f.parents and f.stem != "cli":
            name = ".".join(f.relative_to(pkg).with_suffix("").parts)
        tb = tb.tb_next
    return name


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kerrcat", description="Kerr-tunable resonator simulator and calibration toolkit")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--seed", type=int, help="seed for shot sampling (overrides the config)")
    ap.add_argument("--threads", type=int, help="worker threads (overrides simulation.threads)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, base = load_config(args.config)
        upd = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            upd["seed"] = args.seed
        if upd:
            cfg = cfg.model_copy(update=upd)
        threads = args.threads if args.threads is not None else cfg.simulation.threads
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out) if args.out else _resolve(Path.cwd(), cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        body = COMMANDS[args.command](cfg, base, out, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        write_json(out / "report.json", {"command": args.command, "status": "config_error", "message": str(exc)})
        return EXIT_CONFIG
    except KerrcatError as exc:
        module = _failing_module(exc)
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        write_json(out / "report.json", {"command": args.command, "status": "error", "error": type(exc).__name__,
                                         "module": module, "message": str(exc)})
        return EXIT_NUMERIC
    report = {"command": args.command, "status": "ok", "seed": cfg.seed}
    report.update(body)
    report["files"] = sorted(body.get("files", []) + ["report.json"])
    write_json(out / "report.json", report)
    print(json.dumps({"command": args.command, "status": "ok", "out": str(out)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
