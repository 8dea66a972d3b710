"""Run configuration files.

A configuration is one JSON document in MHz / kHz / us units. Every key is
checked against a fixed schema; unknown keys are rejected so that a typo can
never silently fall back to a default. ``"device": "table_s1"`` selects the
shipped device profile, and an object with the same layout overrides it.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Optional

from .core import (DeviceParameters, DriveConfiguration, ModeLadder, ModeSpec, OperatingPoint,
                   QubitParams, ideal_ladder, to_angular)
from .errors import ParseError, ValidationError

_NUM = (int, float)

# leaf: (types, default); default REQUIRED marks mandatory keys
REQUIRED = object()

QUBIT = {
    "omega_q_mhz": (_NUM, REQUIRED),
    "alpha_mhz": (_NUM, REQUIRED),
    "t1_us": (_NUM, REQUIRED),
    "t2_star_us": (_NUM, REQUIRED),
    "t2_echo_us": (_NUM, None),
}
LADDER = {
    "labels": (list, None),
    "anchor": (str, None),
    "anchor_mhz": (_NUM, None),
    "fsr_mhz": (_NUM, REQUIRED),
    "g_mhz": (_NUM, None),
    "gamma_khz": (dict, None),
    "modes": (list, None),
}
MODE = {
    "label": (str, REQUIRED),
    "omega_mhz": (_NUM, REQUIRED),
    "g_mhz": (_NUM, REQUIRED),
    "gamma_khz": (_NUM, 0.0),
}
DEVICE = {"qubit": (QUBIT, REQUIRED), "ladder": (LADDER, REQUIRED)}
DRIVE = {
    "omega_1_mhz": (_NUM, REQUIRED),
    "omega_2_mhz": (_NUM, REQUIRED),
    "Omega_1_mhz": (_NUM, REQUIRED),
    "Omega_2_mhz": (_NUM, REQUIRED),
    "phi": (_NUM, 0.0),
}
OPERATING_POINT = {
    "modulation_depth": (_NUM, REQUIRED),
    "reference_mode": (str, "b"),
    "detuning_tilde_mhz": (_NUM, REQUIRED),
    "delta_21_mhz": (_NUM, None),
    "phi": (_NUM, 0.0),
}
SIDEBANDS = {"n_max": (int, 5), "depths": (list, None)}
SPECTROSCOPY = {
    "probe_start_mhz": (_NUM, REQUIRED),
    "probe_stop_mhz": (_NUM, REQUIRED),
    "points": (int, 2001),
    "Omega_p_mhz": (_NUM, 0.05),
}
EFFECTIVE = {
    "modes": (list, None),
    "depths": (list, None),
    "symmetrized": (bool, True),
    "solve_resonance": (bool, False),
}
CHEVRON = {
    "modes": (list, None),
    "initial_mode": (str, "b"),
    "delta_min_khz": (_NUM, -140.0),
    "delta_max_khz": (_NUM, 140.0),
    "delta_points": (int, 71),
    "tau_max_us": (_NUM, 50.0),
    "tau_points": (int, 100),
    "convention": (str, "half"),
    "noise": (_NUM, 0.0),
    "readout_offset": (_NUM, 0.0),
    "smoothing_window": (int, 1),
}
HOM = {
    "modes": (list, ["b", "c"]),
    "gate_times_us": (list, REQUIRED),
    "decoherence": (bool, True),
    "residual_jc": (bool, True),
    "preparation": (str, "ideal"),
    "qubit_levels": (int, 3),
    "cutoff": (int, 4),
    "g_band": (_NUM, 0.0),
}
TOMOGRAPHY = {
    "records": (str, None),
    "target_fidelity": (_NUM, 0.69),
    "shots": (int, 5000),
    "fidelity_steps": (dict, None),
    "bootstrap": (int, 0),
}
FIT = {
    "data": (str, REQUIRED),
    "readout_offset": (_NUM, 0.06),
    "free": (list, None),
    "init_khz": (dict, None),
    "method": (str, "nelder-mead"),
    "error_bars": (bool, True),
}
CALIBRATE = {
    "data": (str, None),
    "drive_mhz": (_NUM, REQUIRED),
    "eta_mhz": (_NUM, 256.0),
    "dac_values": (list, None),
    "noise_khz": (_NUM, 0.0),
}
TOP = {
    "device": ((str, dict), "table_s1"),
    "drive": (DRIVE, None),
    "operating_point": (OPERATING_POINT, None),
    "sidebands": (SIDEBANDS, None),
    "spectroscopy": (SPECTROSCOPY, None),
    "effective": (EFFECTIVE, None),
    "chevron": (CHEVRON, None),
    "hom": (HOM, None),
    "tomography": (TOMOGRAPHY, None),
    "fit": (FIT, None),
    "calibrate": (CALIBRATE, None),
    "rng_seed": (int, 0),
}


def _check(obj: Dict[str, Any], schema: Dict[str, Any], path: str) -> Dict[str, Any]:
    if not isinstance(obj, dict):
        raise ValidationError("expected an object", field=path or "<root>")
    unknown = sorted(set(obj) - set(schema))
    if unknown:
        raise ValidationError(f"unknown key {unknown[0]!r}", field=f"{path}.{unknown[0]}".lstrip("."))
    out = {}
    for key, (kind, default) in schema.items():
        where = f"{path}.{key}".lstrip(".")
        if key not in obj or obj[key] is None:
            if default is REQUIRED:
                raise ValidationError("missing required key", field=where)
            out[key] = copy.deepcopy(default)
            continue
        val = obj[key]
        if isinstance(kind, dict):
            out[key] = _check(val, kind, where)
            continue
        if isinstance(val, bool) and kind is not bool and not (isinstance(kind, tuple) and bool in kind):
            raise ValidationError("expected a number, got a boolean", field=where)
        if not isinstance(val, kind):
            names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            raise ValidationError(f"expected {names}", field=where)
        out[key] = val
    return out


def _profile(name: str) -> Dict[str, Any]:
    try:
        text = resources.files("phononbs.profiles").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ValidationError(f"unknown device profile {name!r}", field="device") from None
    return json.loads(text)


def _parse(text: str, source: str) -> Any:
    if not text.strip():
        raise ParseError(f"{source}: empty configuration", line=1, column=1)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: {exc.msg}", line=exc.lineno, column=exc.colno) from None


@dataclass(frozen=True)
class RunConfig:
    raw: Dict[str, Any]
    device: DeviceParameters
    drive: Optional[DriveConfiguration]
    operating_point: Optional[OperatingPoint]
    rng_seed: int
    base_dir: Path = Path(".")

    def resolve(self, path: str) -> Path:
        """A data path from the config, taken relative to the config file."""
        return self.base_dir / Path(path).expanduser()

    def section(self, name: str) -> Dict[str, Any]:
        sec = self.raw.get(name)
        if sec is None:
            sec = _check({}, TOP[name][0], name) if _all_optional(TOP[name][0]) else None
        if sec is None:
            raise ValidationError(f"section {name!r} is required for this command", field=name)
        return sec

    def point(self):
        """Operating point if given, else the drive tones."""
        if self.operating_point is not None:
            return self.operating_point
        if self.drive is not None:
            return self.drive
        raise ValidationError("need an operating_point or drive section", field="operating_point")


def _all_optional(schema):
    return all(default is not REQUIRED for _, default in schema.values())


def build_device(dev: Dict[str, Any]) -> DeviceParameters:
    q = dev["qubit"]
    qubit = QubitParams(to_angular(q["omega_q_mhz"]), to_angular(q["alpha_mhz"]), q["t1_us"],
                        q["t2_star_us"], q["t2_echo_us"])
    lad = dev["ladder"]
    fsr = to_angular(lad["fsr_mhz"])
    if lad["modes"] is not None:
        modes = []
        for i, m in enumerate(lad["modes"]):
            m = _check(m, MODE, f"device.ladder.modes[{i}]")
            modes.append(ModeSpec(m["label"], to_angular(m["omega_mhz"]), to_angular(m["g_mhz"]),
                                  to_angular(1e-3 * m["gamma_khz"])))
        ladder = ModeLadder(tuple(modes), fsr)
    else:
        for key in ("labels", "anchor", "anchor_mhz", "g_mhz"):
            if lad[key] is None:
                raise ValidationError("missing required key (or give 'modes')",
                                      field=f"device.ladder.{key}")
        gam = {k: to_angular(1e-3 * v) for k, v in (lad["gamma_khz"] or {}).items()}
        if lad["anchor"] not in lad["labels"]:
            raise ValidationError("anchor must be one of the labels", field="device.ladder.anchor")
        ladder = ideal_ladder(lad["labels"], lad["anchor"], to_angular(lad["anchor_mhz"]), fsr,
                              to_angular(lad["g_mhz"]), gam)
    return DeviceParameters(qubit, ladder)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(data: Any, base_dir=".") -> RunConfig:
    top = _check(data, TOP, "")
    dev = top["device"]
    if isinstance(dev, str):
        dev = _profile(dev)
    elif "profile" in dev:
        dev = dict(dev)
        dev = _merge(_profile(dev.pop("profile")), dev)
    dev = _check(dev, DEVICE, "device")
    top["device"] = dev
    device = build_device(dev)
    drive = None
    if top["drive"] is not None:
        d = top["drive"]
        drive = DriveConfiguration(to_angular(d["omega_1_mhz"]), to_angular(d["omega_2_mhz"]),
                                   to_angular(d["Omega_1_mhz"]), to_angular(d["Omega_2_mhz"]),
                                   d["phi"])
    op = None
    if top["operating_point"] is not None:
        o = top["operating_point"]
        device.ladder.mode(o["reference_mode"])
        op = OperatingPoint(float(o["modulation_depth"]), o["reference_mode"],
                            to_angular(o["detuning_tilde_mhz"]),
                            None if o["delta_21_mhz"] is None else to_angular(o["delta_21_mhz"]),
                            o["phi"])
    return RunConfig(raw=top, device=device, drive=drive, operating_point=op,
                     rng_seed=top["rng_seed"], base_dir=Path(base_dir))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return config_from_dict(_parse(text, str(path)), path.parent)


def default_device() -> DeviceParameters:
    """The shipped table_s1 device."""
    return build_device(_check(_profile("table_s1"), DEVICE, "device"))
