"""INI run configuration for the command-line front end.

Frequencies are written in MHz.  With ``x2pi = true`` (the default) a value
``f`` means the angular frequency ``2*pi*f`` MHz; with ``x2pi = false`` it is
already angular (``f * 1e6`` rad/s).  Decay rates are plain rates in kHz
(``gamma_decay_khz = 2.4`` is ``2.4e3 /s``) and never get the ``2*pi``.
See ``configs/benchmark.ini`` for an annotated example of every key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import ChainConfig, ConfigurationError, SystemConfig, mhz, solve_antiblockade_V
from .pulses import GateParams, gate_preset

SECTIONS = {
    "system": {"x2pi", "omega11_mhz", "omega21_mhz", "omega22_mhz", "delta1_mhz", "delta2_mhz", "v_mhz", "gamma_decay_khz", "stark_terms", "track_detuning"},
    "gate": {"preset", "gamma", "theta", "phi", "t_us"},
    "simulation": {"model", "rtol", "grid_n", "samples", "fidelity_samples", "compare_v_mhz"},
    "sweep": {"axis", "eps_min", "eps_max", "eps_points", "gamma_khz", "model", "error_scale", "observable", "workers"},
    "transfer": {"n_atoms", "bell_pair", "windows", "omega_mhz", "couplings_mhz", "v1_mhz", "v2_mhz", "lab_check"},
    "teleport": {"mode", "runs", "u", "control", "target", "model"},
    "convert": {"kinds", "search", "physical"},
    "output": {"dir"},
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "system": {
        "x2pi": True,
        "omega11_mhz": 4.5,
        "omega21_mhz": 14.0,
        "omega22_mhz": 14.0,
        "delta1_mhz": 50.0,
        "delta2_mhz": 300.0,
        "v_mhz": None,
        "gamma_decay_khz": 2.4,
        "stark_terms": False,
        "track_detuning": True,
    },
    "gate": {"preset": "CNOT", "gamma": None, "theta": None, "phi": None, "t_us": 5.5},
    "simulation": {"model": "full", "rtol": None, "grid_n": 16, "samples": 201, "fidelity_samples": 56, "compare_v_mhz": None},
    "sweep": {"axis": "laser", "eps_min": -0.1, "eps_max": 0.1, "eps_points": 11, "gamma_khz": [0.2, 0.68, 1.16, 1.64, 2.12, 2.6, 3.08, 3.56, 4.04, 4.52, 5.0], "model": "effective", "error_scale": "effective", "observable": "average", "workers": 1},
    "transfer": {"n_atoms": 6, "bell_pair": [1, 2], "windows": [[2, 3, 4], [4, 5, 6]], "omega_mhz": 1.0, "couplings_mhz": None, "v1_mhz": 100.0, "v2_mhz": 30.0, "lab_check": True},
    "teleport": {"mode": "ideal", "runs": 100, "u": "random", "control": None, "target": None, "model": "full"},
    "convert": {"kinds": ["ghz_to_cluster", "cluster_to_ghz", "ghz_to_w", "w_to_ghz", "w_to_cluster", "w_to_cluster_unitary"], "search": True, "physical": False},
    "output": {"dir": "out"},
}

_CHOICES = {
    ("simulation", "model"): ("full", "effective", "ideal"),
    ("sweep", "axis"): ("laser", "decay"),
    ("sweep", "model"): ("full", "effective", "ideal"),
    ("sweep", "error_scale"): ("effective", "physical"),
    ("sweep", "observable"): ("average", "bright"),
    ("teleport", "mode"): ("ideal", "physical"),
    ("teleport", "model"): ("full", "effective"),
}


def _bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigurationError(f"{where}: expected true/false, got {text!r}")


def _float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigurationError(f"{where}: expected a number, got {text!r}") from None
    if not np.isfinite(v):
        raise ConfigurationError(f"{where}: value must be finite")
    return v


def _int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError(f"{where}: expected an integer, got {text!r}") from None


def _floats(text: str, where: str) -> list[float]:
    return [_float(x, where) for x in text.replace(";", ",").split(",") if x.strip()]


def _complexes(text: str, where: str) -> list[complex]:
    out = []
    for x in text.split(","):
        x = x.strip().replace(" ", "")
        if not x:
            continue
        try:
            out.append(complex(x))
        except ValueError:
            raise ConfigurationError(f"{where}: expected complex numbers, got {x!r}") from None
    return out


def _parse_value(section: str, key: str, raw: str, where: str):
    raw = raw.strip()
    default = DEFAULTS[section][key]
    if raw.lower() in ("", "none", "auto") and key in ("v_mhz", "rtol", "compare_v_mhz", "gamma", "theta", "phi", "couplings_mhz", "control", "target"):
        return None
    if key in ("x2pi", "stark_terms", "track_detuning", "lab_check", "search", "physical"):
        return _bool(raw, where)
    if key in ("grid_n", "samples", "fidelity_samples", "eps_points", "workers", "n_atoms", "runs"):
        return _int(raw, where)
    if key in ("gamma_khz", "couplings_mhz"):
        return _floats(raw, where)
    if key == "bell_pair":
        vals = [_int(x, where) for x in raw.split(",")]
        if len(vals) != 2:
            raise ConfigurationError(f"{where}: expected two atom numbers")
        return vals
    if key == "windows":
        return [[_int(a, where) for a in w.split("-")] for w in raw.replace(";", ",").split(",") if w.strip()]
    if key in ("control", "target"):
        return _complexes(raw, where)
    if key == "kinds":
        return [k.strip() for k in raw.split(",") if k.strip()]
    if isinstance(default, float) or key in ("v_mhz", "rtol", "compare_v_mhz", "gamma", "theta", "phi"):
        return _float(raw, where)
    value = raw
    choices = _CHOICES.get((section, key))
    if choices and value not in choices:
        raise ConfigurationError(f"{where}: expected one of {', '.join(choices)}, got {value!r}")
    return value


@dataclass
class RunConfig:
    """Resolved configuration: every key present, defaults filled in."""

    values: dict = field(default_factory=dict)
    source: str | None = None

    def section(self, name: str) -> dict:
        return self.values[name]

    def system(self) -> SystemConfig:
        s = self.values["system"]
        x2pi = s["x2pi"]
        return SystemConfig(
            omega11_peak=mhz(s["omega11_mhz"], x2pi),
            omega21_peak=mhz(s["omega21_mhz"], x2pi),
            omega22_peak=mhz(s["omega22_mhz"], x2pi),
            delta1=mhz(s["delta1_mhz"], x2pi),
            delta2=mhz(s["delta2_mhz"], x2pi),
            V=None if s["v_mhz"] is None else mhz(s["v_mhz"], x2pi),
            gamma_decay=s["gamma_decay_khz"] * 1e3,
            stark_terms=s["stark_terms"],
            track_detuning=s["track_detuning"],
        )

    def gate(self) -> GateParams:
        g = self.values["gate"]
        T = g["t_us"] * 1e-6
        if g["gamma"] is not None or g["theta"] is not None or g["phi"] is not None:
            if None in (g["gamma"], g["theta"], g["phi"]):
                raise ConfigurationError("[gate]: explicit angles need all of gamma, theta, phi")
            return GateParams(g["gamma"], g["theta"], g["phi"], T)
        try:
            return gate_preset(g["preset"], T)
        except ValueError as exc:
            raise ConfigurationError(f"[gate] preset: {exc}") from None

    def chain(self) -> ChainConfig:
        t = self.values["transfer"]
        x2pi = self.values["system"]["x2pi"]
        couplings = None if t["couplings_mhz"] is None else tuple(mhz(j, x2pi) for j in t["couplings_mhz"])
        return ChainConfig(
            n_atoms=t["n_atoms"],
            bell_pair=tuple(t["bell_pair"]),
            window_sequence=tuple(tuple(w) for w in t["windows"]),
            omega_base=mhz(t["omega_mhz"], x2pi),
            couplings=couplings,
            v1=mhz(t["v1_mhz"], x2pi),
            v2=mhz(t["v2_mhz"], x2pi),
        )

    def resolved(self) -> dict:
        """The configuration after defaulting, plus derived quantities."""
        out = {k: dict(sorted(v.items())) for k, v in sorted(self.values.items())}
        try:
            sysc = self.system()
            out["derived"] = {
                "V_solver_mhz_2pi": solve_antiblockade_V(sysc) / (2 * np.pi * 1e6),
                "V_used_mhz_2pi": sysc.V_resolved / (2 * np.pi * 1e6),
            }
        except ConfigurationError:
            pass
        return out


def parse_config(text: str, source: str | None = None) -> RunConfig:
    """Parse INI text into a :class:`RunConfig`.

    Raises
    ------
    ConfigurationError
        With the line or section/key of the offending entry.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigurationError(f"config syntax error: {exc}") from None
    values = {sec: dict(d) for sec, d in DEFAULTS.items()}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigurationError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SECTIONS[sec]:
                raise ConfigurationError(f"[{sec}] unknown key {key!r}")
            values[sec][key] = _parse_value(sec, key, raw, f"[{sec}] {key}")
    rc = RunConfig(values, source)
    # validate the physics sections eagerly so errors surface as config errors
    rc.system()
    rc.gate()
    rc.chain()
    return rc


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
