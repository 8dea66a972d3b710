"""Command-line front end.

    phononbs <command> --config run.json --out results/ [--seed N] [--threads N]

Every command writes its CSV/JSON outputs plus ``manifest.json`` into the
output directory. Failures print a JSON error object on stderr and exit
with 2 (configuration), 3 (numerical failure) or 4 (invariant violation).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .core import TWO_PI, to_angular, to_mhz
from .errors import InvariantViolation, PhononBSError, ValidationError

KHZ = TWO_PI * 1e-3


class Outputs:
    """Collects files for one run and writes them with a manifest."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: Dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def add_json(self, name: str, obj):
        self.add(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def add_rows(self, name: str, header: List[str], rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.add(name, buf.getvalue())

    def write(self, manifest: dict):
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.dir / name).write_text(text, encoding="utf-8")
        manifest = dict(manifest, outputs=sorted(self.files))
        (self.dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- commands -------------------------------------------------------------------

def cmd_sidebands(cfg: RunConfig, out: Outputs, args):
    from .driven_qubit import modulation_depth
    from .effective_coupling import THREE_MODE_EQUAL, regime_finder
    from .specfun import bessel_table

    sec = cfg.section("sidebands")
    depths = sec["depths"]
    summary = {"three_mode_equal_depth": regime_finder(THREE_MODE_EQUAL)}
    if depths is None:
        point = cfg.point()
        if hasattr(point, "modulation_depth"):
            depths = [point.modulation_depth]
        else:
            spectrum = modulation_depth(point, cfg.device.qubit)
            summary.update(lambda_raw_mhz=to_mhz(spectrum.lambda_raw),
                           lambda_corrected_mhz=to_mhz(spectrum.lambda_corrected),
                           delta_q_ss_mhz=to_mhz(spectrum.delta_q_ss))
            depths = [spectrum.modulation_depth]
    rows = []
    for x in depths:
        table = bessel_table(float(x), sec["n_max"])
        rows.extend((float(x), int(n), float(table[n])) for n in table.orders)
    out.add_rows("sidebands.csv", ["modulation_depth", "n", "amplitude"], rows)
    out.add_json("summary.json", summary)


def cmd_spectroscopy(cfg: RunConfig, out: Outputs, args):
    from .driven_qubit import ProbeConfig, spectroscopy_response

    if cfg.drive is None:
        raise ValidationError("spectroscopy needs a drive section", field="drive")
    sec = cfg.section("spectroscopy")
    freqs = np.linspace(to_angular(sec["probe_start_mhz"]), to_angular(sec["probe_stop_mhz"]),
                        sec["points"])
    curve = spectroscopy_response(cfg.device, cfg.drive,
                                  ProbeConfig(freqs, to_angular(sec["Omega_p_mhz"])))
    out.add_rows("spectroscopy.csv", ["probe_mhz", "p_e"],
                 zip(curve.frequencies / TWO_PI, curve.p_e))


def _model_for(cfg: RunConfig, modes, solve_pair=None, symmetrized=True):
    from .effective_coupling import (build_effective_model, operating_point_from_drive,
                                     resonance_solver)

    point = cfg.point()
    if solve_pair is not None:
        op = point if hasattr(point, "modulation_depth") else operating_point_from_drive(
            cfg.device, point, solve_pair[0])
        if op.delta_21 is None:
            op = op.with_delta_21(resonance_solver(cfg.device, op, solve_pair).delta_21_star)
        point = op
    return build_effective_model(cfg.device, point, modes, symmetrized=symmetrized)


def cmd_effective(cfg: RunConfig, out: Outputs, args):
    from .effective_coupling import build_effective_model, resonance_solver

    sec = cfg.section("effective")
    modes = sec["modes"] or list(cfg.device.ladder.labels)
    model = _model_for(cfg, modes, symmetrized=sec["symmetrized"])
    result = model.to_dict()
    m, k = model.reference_pair
    if sec["solve_resonance"] and m != k:
        sol = resonance_solver(cfg.device, cfg.point(), (m, k))
        result["resonance"] = {"pair": [m, k], "delta_21_star_mhz": to_mhz(sol.delta_21_star),
                               "offset_from_fsr_khz": 1e3 * to_mhz(sol.delta_21_star - model.fsr),
                               "iterations": sol.iterations}
    out.add_json("effective.json", result)
    if sec["depths"]:
        op = cfg.operating_point
        if op is None:
            raise ValidationError("a depth sweep needs an operating_point", field="effective.depths")
        pairs = [(a, b) for i, a in enumerate(model.modes) for b in model.modes[i + 1:]]
        rows = []
        for x in sec["depths"]:
            swept = type(op)(float(x), op.reference_mode, op.detuning_tilde, op.delta_21, op.phi)
            mx = build_effective_model(cfg.device, swept, modes, symmetrized=sec["symmetrized"])
            rows.append([float(x)] + [to_mhz(mx.shifts[l]) for l in mx.modes]
                        + [to_mhz(mx.g(a, b)) for a, b in pairs])
        header = (["modulation_depth"] + [f"shift_{l}_mhz" for l in model.modes]
                  + [f"g_{a}{b}_mhz" for a, b in pairs])
        out.add_rows("effective_sweep.csv", header, rows)


def _scan_grids(sec):
    deltas = np.linspace(sec["delta_min_khz"], sec["delta_max_khz"], sec["delta_points"]) * KHZ
    taus = np.linspace(0.0, sec["tau_max_us"], sec["tau_points"])
    return deltas, taus


def _chevron(cfg: RunConfig, args, default_modes):
    from .modeswap import chevron_scan

    sec = cfg.section("chevron")
    modes = sec["modes"] or default_modes
    model = _model_for(cfg, modes)
    deltas, taus = _scan_grids(sec)
    cmap = chevron_scan(model, deltas, taus, sec["initial_mode"], convention=sec["convention"],
                        threads=args.threads)
    if sec["smoothing_window"] > 1:
        cmap = cmap.smoothed(sec["smoothing_window"])
    if sec["noise"] > 0 or sec["readout_offset"] != 0:
        rng = np.random.default_rng(cfg.rng_seed if args.seed is None else args.seed)
        pops = {}
        for m in cmap.population:
            arr = cmap.population[m] + sec["readout_offset"]
            if sec["noise"] > 0:
                arr = arr + rng.normal(0.0, sec["noise"], arr.shape)
            pops[m] = arr
        cmap = type(cmap)(cmap.delta_grid, cmap.tau_grid, pops, cmap.model)
    return model, cmap, sec


def cmd_chevron(cfg: RunConfig, out: Outputs, args):
    model, cmap, _ = _chevron(cfg, args, ["b", "c"])
    out.add("chevron.csv", cmap.to_csv())
    out.add("chevron.json", cmap.to_json() + "\n")


def cmd_three_mode(cfg: RunConfig, out: Outputs, args):
    from .estimation import MODES, params_from_model
    from .modeswap import bright_dark, exchange_frequency, integrate_eom

    model, cmap, sec = _chevron(cfg, args, list(cfg.device.ladder.labels))
    readout = [m for m in ("a", "b", "c") if m in cmap.population]
    cmap = type(cmap)(cmap.delta_grid, cmap.tau_grid, {m: cmap.population[m] for m in readout},
                      cmap.model)
    out.add("chevron.csv", cmap.to_csv())
    taus = np.linspace(0.0, sec["tau_max_us"], 4 * sec["tau_points"])
    traj = integrate_eom(model, {sec["initial_mode"]: 1.0}, 0.0, taus, convention=sec["convention"])
    summary = {"exchange_frequency_khz": 1e3 * to_mhz(exchange_frequency(traj, "b"))}
    pb = traj.population("b")
    turning = np.flatnonzero(np.diff(np.sign(np.diff(pb))) > 0)
    if turning.size:
        summary["first_min_b_population"] = float(pb[turning[0] + 1])
    if all(m in model.modes for m in ("a", "b", "c")):
        bd = bright_dark(model.g("a", "b"), model.g("b", "c"), model.g("a", "c"))
        summary["bright_dark"] = {
            "predicted_exchange_freq_khz": 1e3 * to_mhz(bd.predicted_exchange_freq),
            "predicted_min_b_population": bd.predicted_min_b_population,
            "resonance_offset_ab_khz": 1e3 * to_mhz(bd.resonance_offset_ab),
            "resonance_offset_bc_khz": 1e3 * to_mhz(bd.resonance_offset_bc),
        }
    out.add_json("summary.json", summary)
    if tuple(model.modes) == MODES:
        truth = params_from_model(model)
        out.add_json("truth.json", {k: v / KHZ for k, v in truth.items()})


def cmd_hom(cfg: RunConfig, out: Outputs, args):
    from .fock import hom_experiment, hom_results_csv

    sec = cfg.section("hom")
    kwargs = dict(decoherence=sec["decoherence"], residual_jc=sec["residual_jc"],
                  modes=tuple(sec["modes"]), preparation=sec["preparation"],
                  qubit_levels=sec["qubit_levels"], cutoff=sec["cutoff"])
    times = [float(t) for t in sec["gate_times_us"]]
    results = hom_experiment(cfg.device, cfg.point(), times, **kwargs)
    out.add("hom.csv", hom_results_csv(results))
    if sec["g_band"] > 0:
        band = [hom_experiment(cfg.device, cfg.point(), times, g_scale=1 + s * sec["g_band"], **kwargs)
                for s in (-1.0, 1.0)]
        rows = []
        for i, t in enumerate(times):
            vals = [r[i].ratio_bunched for r in band] + [results[i].ratio_bunched]
            rows.append((t, min(vals), max(vals)))
        out.add_rows("hom_band.csv", ["tau_us", "ratio_min", "ratio_max"], rows)


def cmd_tomography(cfg: RunConfig, out: Outputs, args):
    from . import tomography as tm

    sec = cfg.section("tomography")
    steps = sec["fidelity_steps"] or tm.TABLE_S2_STEPS
    model = tm.compose_fidelities({k: [tuple(s) for s in v] for k, v in steps.items()})
    seed = cfg.rng_seed if args.seed is None else args.seed
    if sec["records"]:
        records = tm.records_from_csv(cfg.resolve(sec["records"]).read_text(encoding="utf-8"))
    else:
        f = sec["target_fidelity"]
        psi = tm.bell_state(0.0)
        rho = f * np.outer(psi, psi.conj())
        rho[0, 0] += 1.0 - f
        records = tm.synthetic_records(rho, model, sec["shots"], np.random.default_rng(seed))
        out.add("records.csv", tm.records_to_csv(records))
    rho_lin = tm.linear_inversion(records, model)
    fit = tm.mle_reconstruct(records, model, seed=seed)
    fid, phi = tm.bell_fidelity(fit.rho)
    summary = {"bell_fidelity": fid, "phi_opt": phi,
               "linear_min_eigenvalue": float(np.linalg.eigvalsh(rho_lin).min()),
               "fidelity_model": {"first": list(model.first), "second": list(model.second)}}
    if sec["bootstrap"]:
        summary["bell_fidelity_std"] = tm.bootstrap_errors(records, model, sec["bootstrap"], seed,
                                                           threads=args.threads)
    out.add("rho_linear.json", tm.rho_to_json(rho_lin) + "\n")
    out.add("rho_mle.json", tm.rho_to_json(fit.rho) + "\n")
    out.add_json("summary.json", summary)


def cmd_fit(cfg: RunConfig, out: Outputs, args):
    from .estimation import (FREE_DEFAULT, MODES, ChevronDataset, fit_chevron, params_from_model,
                             residual_error_bars)
    from .modeswap import ChevronMap

    sec = cfg.section("fit")
    cmap = ChevronMap.from_csv(cfg.resolve(sec["data"]).read_text(encoding="utf-8"))
    data = ChevronDataset.from_map(cmap, sec["readout_offset"])
    model = _model_for(cfg, list(MODES))
    theory = params_from_model(model)
    init = dict(theory)
    for k, v in (sec["init_khz"] or {}).items():
        if k not in theory:
            raise ValidationError(f"unknown parameter {k!r}", field=f"fit.init_khz.{k}")
        init[k] = v * KHZ
    free = tuple(sec["free"] or FREE_DEFAULT)
    fit = fit_chevron(data, init, theory, model.decay, free, method=sec["method"])
    if sec["error_bars"]:
        fit = replace(fit, error_bars=residual_error_bars(fit, data))
    out.add("fit.json", fit.to_json() + "\n")


def cmd_calibrate(cfg: RunConfig, out: Outputs, args):
    from .driven_qubit import calibrate_eta, stark_shift_single_drive

    sec = cfg.section("calibrate")
    q = cfg.device.qubit
    delta = to_angular(sec["drive_mhz"])
    if sec["data"]:
        rows = list(csv.reader(io.StringIO(cfg.resolve(sec["data"]).read_text(encoding="utf-8"))))
        data = [(float(r[0]), to_angular(float(r[1]))) for r in rows[1:] if r]
        synthetic = False
    else:
        dac = sec["dac_values"] or list(np.linspace(0.02, 0.2, 10))
        eta = to_angular(sec["eta_mhz"])
        rng = np.random.default_rng(cfg.rng_seed if args.seed is None else args.seed)
        data = []
        for d in dac:
            shift = stark_shift_single_drive(eta * d, delta, q.alpha)
            shift += rng.normal(0.0, sec["noise_khz"] * KHZ) if sec["noise_khz"] > 0 else 0.0
            data.append((float(d), q.omega_q + shift))
        synthetic = True
    result = calibrate_eta(data, delta, q.alpha, omega_q=q.omega_q)
    out.add_rows("calibration_data.csv", ["dac", "qubit_freq_mhz"],
                 [(d, to_mhz(w)) for d, w in data])
    out.add_json("calibration.json", {"eta_mhz": to_mhz(result.eta),
                                      "fit_residual": result.fit_residual,
                                      "synthetic": synthetic})


def cmd_oracle_check(cfg: RunConfig, out: Outputs, args):
    from .checks import run_checks

    rows = run_checks(cfg.device, seed=cfg.rng_seed if args.seed is None else args.seed)
    out.add_rows("oracle_checks.csv", ["check", "value", "tolerance", "passed"],
                 [(r.name, r.value, r.tolerance, int(r.passed)) for r in rows])
    failed = [r.name for r in rows if not r.passed]
    if failed:
        out.write({"command": "oracle-check", "version": __version__, "config": cfg.raw,
                   "seed": cfg.rng_seed if args.seed is None else args.seed, "failed": failed})
        raise InvariantViolation(f"failed checks: {', '.join(failed)}")


COMMANDS: Dict[str, Callable] = {
    "sidebands": cmd_sidebands,
    "spectroscopy": cmd_spectroscopy,
    "effective": cmd_effective,
    "chevron": cmd_chevron,
    "three-mode": cmd_three_mode,
    "hom": cmd_hom,
    "tomography": cmd_tomography,
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phononbs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override rng_seed from the config")
    p.add_argument("--threads", type=int, default=1)
    return p


def _report(out_dir, payload: dict, status: int) -> int:
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "error.json").write_text(text + "\n", encoding="utf-8")
    except OSError:
        pass
    return status


def run(command: str, config_path, out_dir, seed=None, threads: int = 1) -> int:
    """Execute one command; returns the process exit status."""
    args = argparse.Namespace(seed=seed, threads=max(1, threads))
    try:
        cfg = load_config(config_path)
        out = Outputs(Path(out_dir))
        COMMANDS[command](cfg, out, args)
        resolved = dict(cfg.raw, rng_seed=cfg.rng_seed if seed is None else seed)
        out.write({"command": command, "version": __version__, "config": resolved,
                   "seed": resolved["rng_seed"]})
        return 0
    except PhononBSError as exc:
        return _report(out_dir, exc.to_dict(), exc.exit_status)
    except (OSError, ValueError) as exc:
        return _report(out_dir, {"error": "input", "message": str(exc)}, 2)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _report(out_dir, {"error": "numerical", "message": str(exc)}, 3)
    except Exception as exc:  # noqa: BLE001 - still report machine-readably
        return _report(out_dir, {"error": "internal", "type": type(exc).__name__,
                                 "message": str(exc)}, 3)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return run(ns.command, ns.config, ns.out, ns.seed, ns.threads)


if __name__ == "__main__":
    sys.exit(main())
