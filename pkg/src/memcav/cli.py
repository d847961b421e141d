"""Command-line front end.

Usage::

    memcav stopband --preset SB
    memcav finesse-spectrum --preset SB --output-dir out/
    memcav dispersion --preset SA --threads 4
    memcav purcell --preset SB --q 7.4e4 --v-lambda3 12 --n 2.63
    memcav fit-g2 data.csv --exclude 12:22 --exclude -22:-12
    memcav fit-lifetime --synthetic --seed 3

Every run writes its outputs, the resolved configuration (``config.yaml``)
and a manifest (``report.json``) into the output directory.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import config as cfgmod
from . import synthetic
from .analysis import (
    CorrelationHistogram,
    Trace,
    fit_g2_pulsed,
    fit_lifetime,
    fit_lorentzian,
    lorentzian,
    noise_rms_from_fft,
    zpl_frequency_distribution,
)
from .cavity import (
    POLARIZATIONS,
    classify_modes,
    coupling_period,
    dispersion_map,
    finesse_spectrum,
    fit_membrane_thickness,
    write_finesse_csv,
)
from .errors import DataError, MemcavError, NumericalError, UsageError
from .io import (
    ingest_csv_trace,
    ingest_spectrometer_map,
    read_spectrometer_csv,
    sha256,
    write_json,
    write_spectrometer_csv,
)
from .purcell import EmitterParams, PurcellInputs, contact_mode, effective_length, lifetime_vs_detuning, report
from .tmm import _fmt, stack_response, stopband, stopband_center

OUTPUT_DIR_ENV = "MEMCAV_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "memcav-output"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("memcav")


@dataclass(frozen=True)
class RunConfig:
    command: str
    preset: str
    inputs: tuple[Path, ...]
    overrides: dict[str, Any]
    output_dir: Path
    seed: int
    threads: int
    synthetic: bool
    config: dict
    config_echo: str


@dataclass
class RunReport:
    command: str
    preset: str
    config: dict
    outputs: list[Path] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    status: str = "ok"
    error: str | None = None
    exit_code: int = EXIT_OK

    def as_dict(self, root: Path) -> dict:
        return {
            "command": self.command,
            "preset": self.preset,
            "status": self.status,
            "error": self.error,
            "config": self.config,
            "outputs": [{"file": p.relative_to(root).as_posix(), "sha256": sha256(p)} for p in self.outputs],
            "warnings": self.warnings,
            "wall_time_s": self.wall_time_s,
        }


class _Run:
    """Handler context: resolved config, output helpers and failure flags."""

    def __init__(self, rc: RunConfig, rep: RunReport):
        self.rc = rc
        self.cfg = rc.config
        self.report = rep
        self.numerical_failures: list[str] = []

    def path(self, name: str) -> Path:
        return self.rc.output_dir / name

    def wrote(self, *paths: Path) -> None:
        self.report.outputs.extend(Path(p) for p in paths)

    def json(self, name: str, obj) -> Path:
        p = write_json(obj, self.path(name))
        self.wrote(p)
        return p

    def text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        self.wrote(p)
        return p

    def check_fit(self, name: str, fit) -> None:
        if not fit.converged:
            why = fit.metadata.get("diagnostic")
            self.numerical_failures.append("fit did not converge" + (f" ({why})" if why else ""))

    def input(self) -> Path:
        return self.rc.inputs[0]


def _grid(lo: float, hi: float, step: float, what: str) -> np.ndarray:
    if not step > 0 or not hi > lo:
        raise DataError(f"{what}: need max > min and step > 0 (got {lo}, {hi}, {step})")
    return lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)


def _scan(cfg) -> tuple[np.ndarray, np.ndarray]:
    s = cfg["scan"]
    wl = _grid(s["wavelength_min_nm"], s["wavelength_max_nm"], s["wavelength_step_nm"], "scan wavelengths")
    gaps = _grid(s["gap_min_nm"], s["gap_max_nm"], s["gap_step_nm"], "scan gaps")
    return wl, gaps


def _emitter(cfg) -> EmitterParams:
    e = cfg["emitter"]
    return EmitterParams(
        zpl_wavelength=float(e["zpl_wavelength_nm"]),
        tau0=float(e["tau0_ns"]),
        debye_waller=float(e["debye_waller"]),
        quantum_efficiency=float(e["quantum_efficiency"]),
        host_index=float(e["host_index"]),
    )


# --------------------------------------------------------------------------
# simulation commands


def cmd_stopband(run: _Run) -> None:
    cfg = run.cfg
    s = cfg["stopband"]
    wl = _grid(s["wavelength_min_nm"], s["wavelength_max_nm"], s["wavelength_step_nm"], "stopband grid")
    media = cfgmod.build_media(cfg)
    zpl = float(cfg["emitter"]["zpl_wavelength_nm"])
    summary = {}
    for name in ("fiber", "planar"):
        section = f"{name}_mirror"
        mirror = cfgmod.build_mirror(cfg, section, media)
        resp = stopband(mirror, wl)
        run.wrote(resp.to_csv(run.path(f"stopband_{name}.csv")))
        info = stopband_center(resp)
        design = float(cfg[section]["center_wavelength_nm"])
        probes = sorted({design, zpl, 980.0})
        summary[name] = {
            "layers": len(mirror.layers),
            "center_nm": None if info is None else info.center,
            "short_edge_nm": None if info is None else info.short_edge,
            "long_edge_nm": None if info is None else info.long_edge,
            "T_min_ppm": None if info is None else info.t_min * 1e6,
            "T_ppm": {_fmt(x): float(stack_response(mirror, x).T) * 1e6 for x in probes},
        }
        if info is None:
            warnings.warn(f"{name} mirror: no stopband inside the grid")
    run.json("stopband.json", summary)


def cmd_finesse_spectrum(run: _Run) -> None:
    cfg = run.cfg
    cav = cfgmod.build_cavity(cfg)
    wl, _ = _scan(cfg)
    zpl = float(cfg["emitter"]["zpl_wavelength_nm"])
    spectra = [finesse_spectrum(cav, wl, pol, threads=run.rc.threads) for pol in POLARIZATIONS]
    run.wrote(write_finesse_csv(spectra, run.path("finesse_spectrum.csv")))
    summary = {}
    for s in spectra:
        i = int(np.argmax(s.finesse))
        probes = [x for x in sorted({zpl, 980.0}) if wl[0] <= x <= wl[-1]]
        summary[s.polarization] = {
            "max_finesse": float(s.finesse[i]),
            "max_wavelength_nm": float(s.wavelength[i]),
            "finesse_at": {_fmt(x): s.at(x) for x in probes},
            "local_maxima_nm": s.local_maxima().tolist(),
        }
    summary["excess_loss_ppm"] = cav.excess_loss_ppm
    run.json("finesse_summary.json", summary)


def _simulated_map(run: _Run):
    cav = cfgmod.build_cavity(run.cfg)
    wl, gaps = _scan(run.cfg)
    mm = dispersion_map(cav, gaps, wl, threads=run.rc.threads, points_per_fsr=int(run.cfg["scan"]["points_per_fsr"]))
    return cav, mm


def _map_summary(mm) -> dict:
    out = {}
    for pol in POLARIZATIONS:
        cp = coupling_period(mm, pol)
        out[pol] = {
            "n_branches": len(mm.branches_for(pol)),
            "avoided_crossings_nm": cp.crossings.tolist(),
            "wavenumber_period_per_nm": cp.wavenumber_period,
            "wavelength_period_nm": cp.wavelength_period,
        }
    return out


def cmd_dispersion(run: _Run) -> None:
    _, mm = _simulated_map(run)
    run.wrote(*mm.write(run.path("dispersion_map.csv"), run.path("dispersion_branches.json")))
    run.json("dispersion_summary.json", _map_summary(mm))


def cmd_classify(run: _Run) -> None:
    cav, mm = _simulated_map(run)
    mm = classify_modes(mm, cav)
    run.wrote(*mm.write(run.path("dispersion_map.csv"), run.path("classified_branches.json")))
    counts: dict[str, dict[str, int]] = {}
    for b in mm.branches:
        c = counts.setdefault(b.polarization, {"air_like": 0, "mixed": 0, "dielectric_like": 0})
        for tag in b.character:
            c[tag] += 1
    run.json("classify_summary.json", counts)


def cmd_fit_thickness(run: _Run) -> None:
    cfg = run.cfg
    meas = cfg["measurement"]
    gap0, step = meas["gap_at_frame0_nm"], meas["gap_step_nm"]
    if run.rc.synthetic:
        _, truth = _simulated_map(run)
        rows = synthetic.spectrometer_frames(truth)
        rng = np.random.default_rng(run.rc.seed)
        rows = [(f, x, float(rng.poisson(c))) for f, x, c in rows]
        src = write_spectrometer_csv(rows, run.path("input_spectrometer.csv"))
        run.wrote(src)
        gap0, step = float(truth.gap_values[0]), float(truth.gap_values[1] - truth.gap_values[0])
    else:
        src = run.input()
    measured = ingest_spectrometer_map(src, gap0, step, prominence=float(meas["peak_prominence"]))
    run.text("measured_branches.json", measured.branches_json())
    template = cfgmod.build_cavity(cfg)
    if template.membrane is None:
        warnings.warn("preset has no membrane; only the gap offset is identifiable")
    ft = cfg["fit_thickness"]
    fit = fit_membrane_thickness(
        measured, template, float(ft["d_initial_nm"]), search_fraction=float(ft["search_fraction"])
    )
    run.text("fit_thickness.json", fit.to_json())
    run.check_fit("fit-thickness", fit)


def cmd_purcell(run: _Run) -> None:
    cfg = run.cfg
    p = cfg["purcell"]
    em = _emitter(cfg)
    w0 = p["waist_um"]
    if p["effective_length_from_cavity"]:
        cav = cfgmod.build_cavity(cfg)
        res, prof = contact_mode(cav, em.zpl_wavelength, "extraordinary")
        run.wrote(prof.to_csv(run.path("contact_mode_profile.csv")))
        if w0 is None:
            raise UsageError("purcell.waist_um is required with effective_length_from_cavity")
        inputs = PurcellInputs(float(p["quality_factor"]), None, float(w0), effective_length(prof), em.zpl_wavelength)
        extra = {"contact_mode_wavelength_nm": res.wavelength}
    else:
        if p["mode_volume_lambda3"] is None:
            raise UsageError("set purcell.mode_volume_lambda3 or purcell.effective_length_from_cavity=true")
        inputs = PurcellInputs(
            float(p["quality_factor"]),
            float(p["mode_volume_lambda3"]),
            None if w0 is None else float(w0),
            None,
            em.zpl_wavelength,
        )
        extra = {}
    tau_cav = cfg["emitter"]["tau_cavity_ns"]
    rep = report(inputs, em, None if tau_cav is None else float(tau_cav), float(p["overlap"]))
    out = dict(rep.__dict__, **extra)
    run.json("purcell.json", out)
    kappa = float(p["linewidth_ghz"])
    c_eff = rep.C_eff_measured if rep.C_eff_measured is not None else rep.C_eff_predicted
    det = np.linspace(-5 * kappa, 5 * kappa, 201)
    tau = lifetime_vs_detuning(em, c_eff, kappa, det)
    run.wrote(Trace(det, tau, "GHz", "ns", "lifetime").to_csv(run.path("lifetime_vs_detuning.csv"), "detuning_ghz", "lifetime_ns"))


# --------------------------------------------------------------------------
# analysis commands


def _input_trace(run: _Run, units, make: Callable[[], Trace], name: str) -> Trace:
    if run.rc.synthetic:
        tr = make()
        cols = {"s": "time_s", "ns": "delay_ns", "Hz": "frequency_hz", "GHz": "frequency_ghz"}
        run.wrote(tr.to_csv(run.path(name), cols.get(tr.x_unit), f"{tr.name}_{tr.y_unit.lower()}"))
        return ingest_csv_trace(run.path(name), units)
    return ingest_csv_trace(run.input(), units)


def cmd_fit_line(run: _Run) -> None:
    a = run.cfg["analysis"]
    speed = float(a["scan_speed_ghz_per_s"])
    tr = _input_trace(
        run,
        None,
        lambda: synthetic.cavity_line_scan(
            float(run.cfg["purcell"]["linewidth_ghz"]), speed, noise_v=0.005, seed=run.rc.seed
        ),
        "input_line_scan.csv",
    )
    if tr.x_unit == "s":
        tr = tr.rescaled(speed, "GHz")
    elif tr.x_unit != "GHz":
        raise DataError(f"fit-line needs x in s or GHz, got {tr.x_unit}")
    fit = fit_lorentzian(tr, int(a["line_n_peaks"]))
    run.text("fit_line.json", fit.to_json())
    n = int(a["line_n_peaks"])
    model = fit["baseline"] + sum(lorentzian(tr.x, fit[f"amplitude_{k}"], fit[f"center_{k}"], fit[f"fwhm_{k}"]) for k in range(n))
    run.wrote(Trace(tr.x, model, "GHz", tr.y_unit, "model").to_csv(run.path("fit_line_model.csv"), "detuning_ghz", f"model_{tr.y_unit.lower()}"))
    run.check_fit("fit-line", fit)


def cmd_fit_lifetime(run: _Run) -> None:
    a = run.cfg["analysis"]
    tau = float(run.cfg["emitter"]["tau_cavity_ns"])
    tr = _input_trace(
        run, ("ns", None), lambda: synthetic.lifetime_histogram(tau, offset=2.0, seed=run.rc.seed), "input_lifetime.csv"
    )
    fit = fit_lifetime(tr, float(a["lifetime_t_start_ns"]))
    run.text("fit_lifetime.json", fit.to_json())
    run.check_fit("fit-lifetime", fit)


def cmd_fit_g2(run: _Run) -> None:
    a = run.cfg["analysis"]
    period = float(a["g2_period_ns"])

    def make():
        h = synthetic.g2_histogram(period_ns=period, artifact_amplitude=20.0, seed=run.rc.seed)
        return Trace(h.tau_bins, h.coincidences, "ns", "counts", "g2")

    tr = _input_trace(run, ("ns", None), make, "input_g2.csv")
    hist = CorrelationHistogram.from_trace(tr, period)
    windows = tuple(tuple(float(v) for v in w) for w in (a["g2_exclude_ns"] or ()))
    fit = fit_g2_pulsed(hist, windows, fit_period=bool(a["g2_fit_period"]))
    run.text("fit_g2.json", fit.to_json())
    run.check_fit("fit-g2", fit)


def cmd_noise(run: _Run) -> None:
    a = run.cfg["analysis"]
    F, lam = float(a["noise_finesse"]), float(a["noise_wavelength_nm"])
    tr = _input_trace(
        run,
        ("Hz", None),
        lambda: synthetic.length_noise_spectrum(45.0, F, lam, seed=run.rc.seed)[0],
        "input_noise_asd.csv",
    )
    f_max = a["noise_f_max_hz"]
    res = noise_rms_from_fft(tr, F, lam, None if f_max is None else float(f_max))
    run.json(
        "noise.json",
        {"sigma_rms_pm": res.sigma_rms_pm, "finesse": F, "wavelength_nm": lam, "f_max_hz": f_max, "n_bins": len(res.frequency)},
    )
    run.wrote(res.to_trace().to_csv(run.path("noise_cumulative.csv"), "frequency_hz", "cumulative_rms_pm"))


def cmd_zpl_dist(run: _Run) -> None:
    a = run.cfg["analysis"]
    slope = float(a["zpl_slope_ghz_per_step"])
    if run.rc.synthetic:
        stack, _ = synthetic.zpl_stack(slope_ghz_per_step=slope, n_steps=101, seed=run.rc.seed)
        rows = [(i, x, y) for i, s in enumerate(stack) for x, y in zip(s.x, s.y)]
        src = write_spectrometer_csv(rows, run.path("input_zpl_stack.csv"))
        run.wrote(src)
    else:
        src = run.input()
    frames, wl, counts = read_spectrometer_csv(src)
    stack = [Trace(wl, row, "nm", "counts", f"frame{f}") for f, row in zip(frames, counts)]
    n = a["zpl_n_peaks"]
    dist = zpl_frequency_distribution(stack, slope, None if n is None else int(n))
    run.wrote(dist.spectrum.to_csv(run.path("zpl_distribution.csv"), "detuning_ghz", "integrated_counts"))
    run.text("zpl_fit.json", dist.fit.to_json())
    run.check_fit("zpl-dist", dist.fit)


# --------------------------------------------------------------------------
# argument parsing


@dataclass(frozen=True)
class _Command:
    handler: Callable[[_Run], None]
    help: str
    takes_input: bool
    flags: tuple[tuple[str, str, dict], ...] = ()  # (flag, config key, argparse kwargs)


COMMANDS: dict[str, _Command] = {
    "stopband": _Command(cmd_stopband, "DBR reflectance/transmission spectra and stopband centers", False),
    "finesse-spectrum": _Command(cmd_finesse_spectrum, "finesse vs wavelength for both polarizations", False),
    "dispersion": _Command(cmd_dispersion, "transmission map vs air gap and tracked mode branches", False),
    "classify": _Command(cmd_classify, "dispersion map with air-like/dielectric-like mode tags", False),
    "fit-thickness": _Command(
        cmd_fit_thickness,
        "membrane thickness from a measured spectrometer map",
        True,
        (
            ("--d-initial-nm", "fit_thickness.d_initial_nm", {"type": float}),
            ("--gap-at-frame0-nm", "measurement.gap_at_frame0_nm", {"type": float}),
            ("--gap-step-nm", "measurement.gap_step_nm", {"type": float}),
        ),
    ),
    "purcell": _Command(
        cmd_purcell,
        "predicted and measured Purcell factors",
        False,
        (
            ("--q", "purcell.quality_factor", {"type": float}),
            ("--v-lambda3", "purcell.mode_volume_lambda3", {"type": float}),
            ("--n", "emitter.host_index", {"type": float}),
            ("--w0-um", "purcell.waist_um", {"type": float}),
            ("--tau-cavity-ns", "emitter.tau_cavity_ns", {"type": float}),
            ("--from-cavity", "purcell.effective_length_from_cavity", {"action": "store_const", "const": True}),
        ),
    ),
    "fit-line": _Command(
        cmd_fit_line,
        "Lorentzian fit of a cavity transmission scan",
        True,
        (
            ("--n-peaks", "analysis.line_n_peaks", {"type": int}),
            ("--scan-speed-ghz-per-s", "analysis.scan_speed_ghz_per_s", {"type": float}),
        ),
    ),
    "fit-lifetime": _Command(
        cmd_fit_lifetime,
        "monoexponential fit of a decay histogram",
        True,
        (("--t-start-ns", "analysis.lifetime_t_start_ns", {"type": float}),),
    ),
    "fit-g2": _Command(
        cmd_fit_g2,
        "pulsed autocorrelation fit for g2(0)",
        True,
        (
            ("--exclude", "analysis.g2_exclude_ns", {"action": "append", "metavar": "LO:HI"}),
            ("--no-exclude", "analysis.g2_exclude_ns", {"action": "store_const", "const": []}),
            ("--period-ns", "analysis.g2_period_ns", {"type": float}),
        ),
    ),
    "noise": _Command(
        cmd_noise,
        "cavity length noise RMS from a transmission amplitude spectrum",
        True,
        (
            ("--finesse", "analysis.noise_finesse", {"type": float}),
            ("--wavelength-nm", "analysis.noise_wavelength_nm", {"type": float}),
            ("--f-max-hz", "analysis.noise_f_max_hz", {"type": float}),
        ),
    ),
    "zpl-dist": _Command(
        cmd_zpl_dist,
        "emitter frequency distribution from a spectrum stack",
        True,
        (
            ("--slope-ghz-per-step", "analysis.zpl_slope_ghz_per_step", {"type": float}),
            ("--n-peaks", "analysis.zpl_n_peaks", {"type": int}),
        ),
    ),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dest(flag: str) -> str:
    return "opt_" + flag.lstrip("-").replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    def fmt(prog):
        return argparse.HelpFormatter(prog, width=100, max_help_position=34)

    common = _Parser(add_help=False, formatter_class=fmt)
    g = common.add_argument_group("common options")
    g.add_argument("--preset", default="SB", help="shipped preset (SA, SB, bare) or a preset YAML path")
    g.add_argument("--config", type=Path, help="YAML file layered onto the preset")
    g.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key, e.g. membrane.thickness_nm=2850 (repeatable)")
    g.add_argument("--output-dir", type=Path, help=f"output directory (default ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    g.add_argument("--seed", type=int, default=0, help="seed for synthetic data generation (default 0)")
    g.add_argument("--threads", type=int, help="worker threads for grid scans (default: available cores)")
    g.add_argument("--synthetic", action="store_true", help="generate a seeded input instead of reading one")

    parser = _Parser(prog="memcav", description="Membrane fiber-cavity simulation and analysis.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True, parser_class=_Parser)
    for name, c in COMMANDS.items():
        sp = sub.add_parser(name, help=c.help, description=c.help, parents=[common], formatter_class=fmt)
        if c.takes_input:
            sp.add_argument("input", nargs="?", type=Path, help="input CSV (omit with --synthetic)")
        if c.flags:
            cg = sp.add_argument_group(f"{name} options")
            for flag, key, kw in c.flags:
                cg.add_argument(flag, dest=_dest(flag), help=f"sets {key}", **kw)
    return parser


def _parse_window(text: str) -> list[float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--exclude expects LO:HI in ns, got {text!r}") from None
    if not lo < hi:
        raise UsageError(f"--exclude {text}: LO must be below HI")
    return [lo, hi]


def _join_windows(argv: list[str]) -> list[str]:
    # "--exclude -22:-12" would otherwise be read as an unknown option
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--exclude" and i + 1 < len(argv):
            out.append(f"--exclude={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def _prepare_output_dir(path: Path) -> Path:
    path = path.expanduser()
    if path.exists():
        if not path.is_dir():
            raise UsageError(f"output path {path} exists and is not a directory")
    elif path.parent.is_dir():
        path.mkdir()
    else:
        raise UsageError(f"cannot create output directory {path}: parent {path.parent} does not exist")
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def parse_config(argv: Sequence[str] | None = None, environ=None) -> RunConfig:
    """Resolve presets, config file, ``--set`` overrides and command flags (in that order)."""
    environ = os.environ if environ is None else environ
    ns = build_parser().parse_args(_join_windows(sys.argv[1:] if argv is None else list(argv)))
    cmd = COMMANDS[ns.command]

    base = cfgmod.load_preset(ns.preset)
    cfg = base
    if ns.config is not None:
        if not ns.config.is_file():
            raise UsageError(f"config file not found: {ns.config}")
        import yaml

        try:
            file_cfg = yaml.safe_load(ns.config.read_text())
        except yaml.YAMLError as exc:
            raise UsageError(f"{ns.config}: cannot parse YAML: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError(f"{ns.config}: top level must be a mapping")
        if file_cfg.get("schema_version", cfgmod.SCHEMA_VERSION) != cfgmod.SCHEMA_VERSION:
            raise UsageError(f"{ns.config}: unsupported schema_version {file_cfg.get('schema_version')!r}")
        cfg = cfgmod.merge_file(cfg, file_cfg)

    overrides: dict[str, Any] = {}
    for text in ns.overrides:
        k, v = cfgmod.parse_override(text)
        overrides[k] = v
    for flag, key, _ in cmd.flags:
        val = getattr(ns, _dest(flag))
        if val is None:
            continue
        if flag == "--exclude":
            val = [_parse_window(t) for t in val]
        overrides[key] = val
    cfg = cfgmod.apply_overrides(cfg, overrides)

    inputs: tuple[Path, ...] = ()
    given = getattr(ns, "input", None)
    if cmd.takes_input:
        if ns.synthetic and given is not None:
            raise UsageError("give either an input file or --synthetic, not both")
        if not ns.synthetic:
            if given is None:
                raise UsageError(f"{ns.command} needs an input CSV (or --synthetic)")
            if not given.is_file():
                raise UsageError(f"input file not found: {given}")
            inputs = (given,)
    elif ns.synthetic:
        raise UsageError(f"{ns.command} computes from the preset and takes no --synthetic input")

    if ns.threads is not None and ns.threads < 1:
        raise UsageError("--threads must be >= 1")
    out = ns.output_dir or Path(environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)

    preset_src = Path(ns.preset)
    is_file = preset_src.suffix in (".yaml", ".yml") and preset_src.exists()
    echo = (preset_src.read_text() if is_file else cfgmod.preset_text(ns.preset)) if cfg == base else cfgmod.dump(cfg)
    return RunConfig(
        command=ns.command,
        preset=str(ns.preset),
        inputs=inputs,
        overrides=overrides,
        output_dir=out,
        seed=int(ns.seed),
        threads=int(ns.threads or os.cpu_count() or 1),
        synthetic=bool(ns.synthetic),
        config=cfg,
        config_echo=echo,
    )


class _LogCapture(logging.Handler):
    def __init__(self, sink: list[str]):
        super().__init__(logging.WARNING)
        self.sink = sink

    def emit(self, record):
        self.sink.append(f"{record.name}: {record.getMessage()}")


def dispatch(rc: RunConfig) -> RunReport:
    """Run one command; errors are recorded in the report and re-raised."""
    rep = RunReport(rc.command, rc.preset, rc.config)
    run = _Run(rc, rep)
    run.text("config.yaml", rc.config_echo)
    handler = _LogCapture(rep.warnings)
    log.addHandler(handler)
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            np_err = np.seterr(all="ignore")
            try:
                COMMANDS[rc.command].handler(run)
            finally:
                np.seterr(**np_err)
        rep.warnings.extend(f"{w.category.__name__}: {w.message}" for w in caught)
        if run.numerical_failures:
            raise NumericalError("; ".join(run.numerical_failures))
    except Exception as exc:
        rep.status = "error"
        rep.error = f"{rc.command}: {exc}"
        rep.exit_code = exit_code_for(exc)
        raise
    finally:
        log.removeHandler(handler)
        rep.wall_time_s = time.perf_counter() - t0
        emit_results(rc, rep)
    return rep


def emit_results(rc: RunConfig, rep: RunReport) -> Path:
    """Write ``report.json``: config echo, output manifest with hashes, warnings, wall time."""
    rep.outputs = [p for p in dict.fromkeys(rep.outputs) if p.exists()]
    return write_json(rep.as_dict(rc.output_dir), rc.output_dir / "report.json")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (DataError, OSError, ValueError, KeyError, TypeError)):
        return EXIT_DATA
    return EXIT_NUMERICAL


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = parse_config(argv)
        rc = RunConfig(**{**rc.__dict__, "output_dir": _prepare_output_dir(rc.output_dir)})
    except MemcavError as exc:
        print(f"memcav: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    try:
        rep = dispatch(rc)
    except Exception as exc:  # noqa: BLE001 - mapped to the exit-code contract
        print(f"memcav: error: {rc.command}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{rc.command}: wrote {len(rep.outputs)} files to {rc.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
