"""Command-line front end.

Subcommands ``design``, ``sweep``, ``fit {scaling|ic|tdr|iip|rt|resonance}``
and ``noise`` share the flags ``--config``, ``--out``, ``--threads``,
``--dry-run`` and ``--format csv|json``. Each run writes into one output
directory with ``design/``, ``sweep/``, ``fit/`` and ``noise/`` subtrees and a
``manifest.json`` listing every artifact with its SHA-256. Outputs carry no
timestamps, so identical inputs give byte-identical files, independent of
``--threads``. Failures print a JSON error object on stderr and exit nonzero
(2 for usage and configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

import kitsim
from kitsim import io as kio
from kitsim.cascade import dispersion, find_bandgap, s21_spectrum
from kitsim.cellmodel import (
    design_curve,
    permittivity_from_resonance,
    sheet_inductance_from_rt,
    stub_length_for_impedance,
    supercell_impedance,
)
from kitsim.characterize import (
    PhaseBiasTrace,
    TdrTrace,
    TwoToneSweep,
    critical_current,
    extract_compression,
    phase_shift_model,
    fit_scaling_currents,
    resonance_peak,
    tdr_impedance_profile,
)
from kitsim.config import ProjectConfig, load_config
from kitsim.errors import ConfigError, KitsimError
from kitsim.gainsim import bloch_dispersion, pump_sweep
from kitsim.noisecal import (
    SntjTrace,
    TransmittivityChain,
    fit_system_noise,
    noise_bandwidth,
    thermal_occupancy,
    transform_even_split,
    transform_reference_plane,
)

FIT_KINDS = ("scaling", "ic", "tdr", "iip", "rt", "resonance")


class UsageError(KitsimError, ValueError):
    """Invalid command-line usage."""


# ---------------------------------------------------------------------------
# Run directory
# ---------------------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class RunDirectory:
    """Collects artifacts of one subcommand and updates the manifest."""

    def __init__(self, root: Path, section: str, fmt: str):
        self.root = root
        self.section = section
        self.fmt = fmt
        self.files: dict[str, str] = {}

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / self.section / name
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        path.write_bytes(data)
        self.files[f"{self.section}/{name}"] = _sha256(data)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, kio.json_text(obj))

    def write_table(self, stem: str, columns, data, metadata: Optional[dict] = None) -> Path:
        if self.fmt == "csv":
            return self.write_text(f"{stem}.csv", kio.csv_text(columns, data, metadata))
        arr = np.asarray(data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        obj = {"columns": list(columns), "metadata": metadata or {},
               "data": {c: arr[:, j] for j, c in enumerate(columns)}}
        return self.write_json(f"{stem}.json", obj)

    def finish(self, command: dict) -> Path:
        path = self.root / "manifest.json"
        manifest = {"kitsim_version": kitsim.__version__, "runs": {}}
        if path.exists():
            try:
                old = json.loads(path.read_text())
                if isinstance(old.get("runs"), dict):
                    manifest["runs"] = old["runs"]
            except (json.JSONDecodeError, AttributeError):
                pass
        manifest["runs"][command["name"]] = {**command, "outputs": dict(sorted(self.files.items()))}
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(kio.json_text(manifest))
        return path


def _file_digest(path) -> str:
    return _sha256(Path(path).read_bytes())


def _record(name: str, cfg_path: Optional[str], inputs: Sequence[str], fmt: str) -> dict:
    return {
        "name": name,
        "config_sha256": _file_digest(cfg_path) if cfg_path else None,
        "inputs": {str(Path(p).name): _file_digest(p) for p in inputs},
        "format": fmt,
    }


def _output_root(args, cfg: Optional[ProjectConfig]) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None:
        return Path(cfg.output.directory)
    return Path("kitsim-run")


def _conventions(cfg: Optional[ProjectConfig]) -> dict:
    if cfg is None:
        return {"transmittivity_db": "amplitude", "photon_energy": "angular"}
    return {"transmittivity_db": cfg.conventions.transmittivity,
            "photon_energy": cfg.conventions.photon_energy}


def _require_config(args) -> ProjectConfig:
    if not args.config:
        raise UsageError(f"'{args.command}' needs --config")
    return load_config(args.config)


def _collect_warnings(caught) -> list[str]:
    return sorted({str(w.message) for w in caught})


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------


def design_report(cfg: ProjectConfig) -> tuple[dict, object]:
    film = cfg.film_properties()
    diel = cfg.dielectric_properties()
    geom = cfg.geometry.build()
    d = cfg.design
    cap_model = cfg.capacitance_model()
    cu, cl = cfg.cell("unloaded"), cfg.cell("loaded")
    inductance = d.inductance if d.inductance is not None else cu.series_inductance
    n = int(round((d.stub_length_stop - d.stub_length_start) / d.stub_length_step)) + 1
    lengths = np.linspace(d.stub_length_start, d.stub_length_start + (n - 1) * d.stub_length_step, n)
    curve = design_curve(lengths, inductance, cap_model)
    solved = []
    for z in d.targets:
        ell = stub_length_for_impedance(
            z, geom, film, diel, inductance=inductance, capacitance_model=cap_model,
            bounds=(float(lengths[0]), float(lengths[-1])),
        )
        solved.append({"target_impedance_ohm": z, "stub_length_m": ell,
                       "capacitance_f": float(cap_model(ell))})

    def cell_dict(c):
        return {
            "series_inductance_h": c.series_inductance,
            "shunt_capacitance_f": c.shunt_capacitance,
            "finger_inductance_h": c.finger_inductance,
            "pitch_m": c.pitch,
            "impedance_ohm": c.characteristic_impedance,
            "stub_resonance_hz": c.stub_resonance / (2 * math.pi),
        }

    report = {
        "capacitance_model": type(cap_model).__name__,
        "inductance_per_cell_h": inductance,
        "specific_capacitance_f_per_m2": diel.specific_capacitance,
        "solved_stub_lengths": solved,
        "cells": {"unloaded": cell_dict(cu), "loaded": cell_dict(cl)},
        "supercell": {
            "n_unloaded": cfg.device.n_unloaded,
            "n_loaded": cfg.device.n_loaded,
            "impedance_ohm": supercell_impedance(cfg.device.n_unloaded, cfg.device.n_loaded, cu, cl),
        },
    }
    return report, curve


def cmd_design(args) -> dict:
    cfg = _require_config(args)
    report, curve = design_report(cfg)
    if args.dry_run:
        return {"status": "ok", "dry_run": True, "command": "design"}
    run = RunDirectory(_output_root(args, cfg), "design", args.format)
    run.write_table("design_curve", kio.FORMATS["design"],
                    np.column_stack([curve.stub_length, curve.z0, curve.inductance, curve.capacitance]))
    run.write_json("design.json", report)
    run.finish(_record("design", args.config, [], args.format))
    return {"status": "ok", "command": "design", "outputs": sorted(run.files)}


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(args) -> dict:
    cfg = _require_config(args)
    sw = cfg.require_sweep()
    spec = cfg.device_spec()
    freqs = sw.frequency_grid.values()
    pumps = sw.pump_grid.values()
    template = cfg.cme_template()
    if pumps.size == 0:
        raise UsageError("empty pump grid")
    if args.dry_run:
        return {"status": "ok", "dry_run": True, "command": "sweep",
                "n_frequencies": int(freqs.size), "n_pumps": int(pumps.size)}
    threads = max(1, int(args.threads))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spectrum = s21_spectrum(spec, freqs, threads=threads)
        disp = dispersion(spec, spectrum, sw.dispersion_baseline)
        lo, hi, center = find_bandgap(spectrum, sw.bandgap_threshold_db)
        f_need = float(pumps.max()) * (2.0 if sw.harmonics else 1.0)
        bloch = bloch_dispersion(spec, f_need * 1.001 + 1e6, sw.dispersion_step)
        result = pump_sweep(spec, template, pumps, bloch, threads=threads,
                            window=sw.smoothing_window)

    run = RunDirectory(_output_root(args, cfg), "sweep", args.format)
    run.write_text("device.s2p", kio.touchstone_text(
        spectrum.frequencies, spectrum.s11, spectrum.s21, spectrum.s12, spectrum.s22,
        spectrum.z_ref, comments=("kitsim device S-parameters",)))
    run.write_table("dispersion", kio.FORMATS["dispersion"],
                    np.column_stack([disp.frequencies, disp.arg_s21, disp.k_star]),
                    {"baseline": disp.baseline})
    rows = [np.column_stack([np.full(p.signal_frequencies.size, fp), p.signal_frequencies, p.gain_db])
            for fp, p in zip(result.pump_frequencies, result.profiles)]
    run.write_table("gain", kio.FORMATS["gain"], np.vstack(rows))

    finite = ~spectrum.pole & ~spectrum.evanescent
    s21, s11 = spectrum.s21, spectrum.s11
    metrics = {
        "bandgap": {"low_hz": lo, "high_hz": hi, "center_hz": center,
                    "threshold_db": sw.bandgap_threshold_db},
        "integrity": {
            "max_det_error": float(np.nanmax(np.abs(spectrum.det - 1))),
            "max_reciprocity_error": float(np.nanmax(np.abs(spectrum.s21 - spectrum.s12))),
            "max_power_balance_error": float(np.max(np.abs(np.abs(s11[finite]) ** 2 + np.abs(s21[finite]) ** 2 - 1)))
            if finite.any() else None,
            "n_pole_points": int(spectrum.pole.sum()),
            "n_evanescent_points": int(spectrum.evanescent.sum()),
            "n_ambiguous_dispersion_points": int(disp.ambiguous.sum()),
        },
        "device": {"length_m": spec.length, "n_cells": spec.n_cells, "z_ref_ohm": spec.z_ref},
        "sweep": {"depleted": sw.depleted, "harmonics": sw.harmonics,
                  "smoothing_window": sw.smoothing_window, **result.summary()},
        "warnings": _collect_warnings(caught),
    }
    run.write_json("metrics.json", metrics)
    run.finish(_record("sweep", args.config, [], args.format))
    return {"status": "ok", "command": "sweep", "bandgap_center_hz": center,
            "outputs": sorted(run.files)}


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _model_delay(cfg: Optional[ProjectConfig]) -> Optional[float]:
    if cfg is None:
        return None
    spec = cfg.device_spec()
    lu = spec.dressed_inductance(spec.unloaded)
    ll = spec.dressed_inductance(spec.loaded)
    lsum = spec.n_unloaded * lu + spec.n_loaded * ll
    csum = spec.n_unloaded * spec.unloaded.shunt_capacitance + spec.n_loaded * spec.loaded.shunt_capacitance
    return spec.n_supercells * math.sqrt(lsum * csum)


def _fit_scaling(table, cfg, fc):
    freq = fc.scaling.frequency if fc.scaling.frequency is not None else table.meta_float("freq_hz")
    tau = fc.scaling.traversal_time
    if tau is None and "tau_s" in table.metadata:
        tau = table.meta_float("tau_s")
    model = None if tau is not None else _model_delay(cfg)
    if tau is None and model is None:
        raise ConfigError("scaling fit needs '# tau_s=' in the trace, fit.scaling.traversal_time, or a device config")
    trace = PhaseBiasTrace(table["bias_a"], table["phase_rad"], freq, tau, None, model)
    fit = fit_scaling_currents(trace, fc.scaling.min_points)
    y = (trace.phase - trace.theta0) / trace.reference_phase
    resid = y - phase_shift_model(trace.bias, fit.scaling_current_2, fit.scaling_current_4)
    out = {**fit.as_dict(), "probe_frequency_hz": freq, "reference_phase_rad": trace.reference_phase}
    return out, ("bias_a", "residual"), np.column_stack([trace.bias, resid])


def _fit_ic(table, cfg, fc):
    b, s = table["bias_a"], table["s21_db"]
    ic = critical_current(b, s, fc.ic.threshold_db, fc.ic.baseline_fraction)
    n0 = max(3, int(fc.ic.baseline_fraction * b.size))
    base = float(np.median(s[:n0]))
    out = {"critical_current_a": ic, "baseline_s21_db": base, "threshold_db": fc.ic.threshold_db}
    return out, ("bias_a", "residual_db"), np.column_stack([b, s - base])


def _fit_tdr(table, cfg, fc):
    prof = tdr_impedance_profile(TdrTrace(table["time_s"], table["rho"], fc.tdr.z_ref), fc.tdr.threshold)
    ref = prof.mean_impedance if prof.mean_impedance is not None else fc.tdr.z_ref
    out = {**prof.as_dict(), "z_ref_ohm": fc.tdr.z_ref}
    return out, ("time_s", "z_ohm", "residual_ohm"), np.column_stack([prof.time, prof.impedance, prof.impedance - ref])


def _fit_iip(table, cfg, fc):
    sweep = TwoToneSweep(table["pin_dbm"], table["pout_f1_dbm"], table["pout_f2_dbm"], table["pout_imd_dbm"])
    c = fc.iip
    res = extract_compression(sweep, c.slope_tolerance, c.compression_db, c.noise_floor_dbm,
                              linear_db=c.linear_db)
    r1 = sweep.pout_f1_dbm - (sweep.pin_dbm + res.gain_db)
    r3 = sweep.pout_imd_dbm - (3 * sweep.pin_dbm + res.imd_offset_db)
    out = {**res.as_dict(), "compression_definition_db": c.compression_db}
    return out, ("pin_dbm", "residual_f1_db", "residual_imd_db"), np.column_stack([sweep.pin_dbm, r1, r3])


def _fit_rt(table, cfg, fc):
    r = sheet_inductance_from_rt(table["temp_k"], table["resistance_ohm"], fc.rt.n_squares, fc.rt.plateau_fraction)
    out = {"sheet_inductance_h_per_sq": r.sheet_inductance, "normal_resistance_ohm": r.normal_resistance,
           "critical_temperature_k": r.critical_temperature, "n_squares": r.n_squares}
    t = table["temp_k"]
    resid = np.where(t >= r.critical_temperature, table["resistance_ohm"] - r.normal_resistance, 0.0)
    return out, ("temp_k", "residual_ohm"), np.column_stack([t, resid])


def _fit_resonance(table, cfg, fc):
    rc = fc.resonance
    f, m = table["freq_hz"], table["s21_db"]
    f0 = resonance_peak(f, m, rc.kind)
    out = {"resonance_frequency_hz": f0, "extremum": rc.kind}
    thickness = rc.thickness if rc.thickness is not None else (None if cfg is None else cfg.dielectric.thickness)
    if rc.total_inductance is not None and rc.plate_area is not None and thickness is not None:
        rf = permittivity_from_resonance(f0, rc.total_inductance, rc.plate_area, thickness)
        out.update({"relative_permittivity": rf.relative_permittivity,
                    "specific_capacitance_f_per_m2": rf.specific_capacitance,
                    "capacitance_f": rf.capacitance, "assumed_thickness_m": thickness})
    i = int(np.argmin(np.abs(f - f0)))
    sl = slice(max(0, i - 2), min(f.size, i + 3))
    p = np.polyfit(f[sl] - f0, m[sl], 2)
    resid = np.zeros_like(f)
    resid[sl] = m[sl] - np.polyval(p, f[sl] - f0)
    return out, ("freq_hz", "residual_db"), np.column_stack([f, resid])


_FITTERS = {"scaling": _fit_scaling, "ic": _fit_ic, "tdr": _fit_tdr, "iip": _fit_iip,
            "rt": _fit_rt, "resonance": _fit_resonance}


def cmd_fit(args) -> dict:
    cfg = load_config(args.config) if args.config else None
    fc = cfg.fit if cfg is not None else ProjectConfig.model_fields["fit"].default
    table = kio.read_trace(args.trace, args.kind)
    out, cols, resid = _FITTERS[args.kind](table, cfg, fc)
    if args.dry_run:
        return {"status": "ok", "dry_run": True, "command": f"fit {args.kind}"}
    out = {"kind": args.kind, "trace": Path(args.trace).name, **out,
           "residual_rms": out.get("residual_rms", float(np.sqrt(np.mean(resid[:, -1] ** 2)))),
           "residuals": resid[:, -1], "conventions": _conventions(cfg)}
    run = RunDirectory(_output_root(args, cfg), "fit", args.format)
    run.write_json(f"{args.kind}.json", out)
    run.write_table(f"{args.kind}_residuals", cols, resid)
    run.finish(_record(f"fit {args.kind}", args.config, [args.trace], args.format))
    return {"status": "ok", "command": f"fit {args.kind}", "outputs": sorted(run.files)}


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


def noise_report(cfg: ProjectConfig, tables) -> dict:
    nc = cfg.noise
    if nc is None:
        raise ConfigError("config has no 'noise' section (eta chains are required)")
    conv = cfg.conventions
    chain0 = TransmittivityChain.from_losses(nc.eta0_losses_db, conv.transmittivity)
    chain1 = TransmittivityChain.from_losses(nc.eta1_losses_db, conv.transmittivity)
    eta0, eta1 = chain0.eta, chain1.eta
    rows = []
    for t in tables:
        trace = SntjTrace(t["v_volt"], t["nout_quanta"], t.meta_float("freq_hz"), t.meta_float("te_k"))
        fi = t.meta_float("idler_hz", -1.0)
        fi = None if fi <= 0 else fi
        fit = fit_system_noise(trace, eta0, eta1, nc.gain_ratio, fi, conv.photon_energy,
                               nc.min_bias_ratio, region=nc.fit_region)
        n_t = thermal_occupancy(nc.thermal_temperature, trace.omega)
        if nc.even_split:
            moved = transform_even_split(fit.excess_noise, eta1, nc.gain_ratio, n_t)
        else:
            moved = transform_reference_plane(fit.excess_noise, 0.0, eta1, eta1, nc.gain_ratio, n_t)
        rows.append({**fit.as_dict(), "thermal_occupancy": n_t, "transformed_excess_noise_quanta": moved,
                     "trace": Path(t.source).name})
    rows.sort(key=lambda r: r["frequency_hz"])
    f = np.array([r["frequency_hz"] for r in rows])
    n = np.array([r["excess_noise_quanta"] for r in rows])
    bandwidth = None
    if f.size >= 2 and np.all(np.diff(f) > 0):
        floor = float(n.min())
        try:
            bandwidth = noise_bandwidth(f, n, floor, nc.bandwidth_factor)
        except KitsimError:
            bandwidth = None
    return {
        "eta0": eta0, "eta1": eta1,
        "eta0_losses_db": list(nc.eta0_losses_db), "eta1_losses_db": list(nc.eta1_losses_db),
        "transmittivity_db_convention": conv.transmittivity,
        "photon_energy_convention": conv.photon_energy,
        "fit_region": nc.fit_region,
        "noise_bandwidth_hz": bandwidth,
        "bandwidth_factor": nc.bandwidth_factor,
        "per_frequency": rows,
    }


def cmd_noise(args) -> dict:
    cfg = _require_config(args)
    if not args.traces:
        raise UsageError("noise needs at least one SNTJ trace file")
    tables = [kio.read_trace(p, "sntj") for p in args.traces]
    report = noise_report(cfg, tables)
    if args.dry_run:
        return {"status": "ok", "dry_run": True, "command": "noise"}
    run = RunDirectory(_output_root(args, cfg), "noise", args.format)
    run.write_json("noise.json", report)
    rows = report["per_frequency"]
    run.write_table("noise", ("freq_hz", "system_gain", "excess_noise_quanta", "transformed_excess_noise_quanta"),
                    np.array([[r["frequency_hz"], r["system_gain"], r["excess_noise_quanta"],
                               r["transformed_excess_noise_quanta"]] for r in rows]))
    run.finish(_record("noise", args.config, args.traces, args.format))
    return {"status": "ok", "command": "noise", "outputs": sorted(run.files)}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="project YAML file")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--dry-run", action="store_true", help="validate inputs only; write nothing")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="encoding of tabular outputs")

    parser = argparse.ArgumentParser(prog="kitsim", description="Kinetic inductance TWPA design and analysis")
    parser.add_argument("--version", action="version", version=f"kitsim {kitsim.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("design", parents=[common], help="stub-length design curve and cell electricals")
    sub.add_parser("sweep", parents=[common], help="S-parameters, dispersion and pump sweep")
    fit = sub.add_parser("fit", parents=[common], help="fit a measurement trace")
    fit.add_argument("kind", choices=FIT_KINDS)
    fit.add_argument("trace", help="CSV trace file")
    noise = sub.add_parser("noise", parents=[common], help="SNTJ system-noise analysis")
    noise.add_argument("traces", nargs="*", help="SNTJ CSV traces, one per frequency")
    return parser


_COMMANDS = {"design": cmd_design, "sweep": cmd_sweep, "fit": cmd_fit, "noise": cmd_noise}


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"status": "error", "error": type(exc).__name__, "message": str(exc)},
                                sort_keys=True) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        return _fail(UsageError("--threads must be >= 1"), 2)
    try:
        result = _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        return _fail(exc, 2)
    except (KitsimError, OSError) as exc:
        return _fail(exc, 1)
    sys.stdout.write(json.dumps(kio._clean(result), sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
