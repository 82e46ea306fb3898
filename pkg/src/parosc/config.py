"""JSON run configuration: schema, unit handling and environment overrides.

A config is a flat JSON object.  Rates and frequencies are plain numbers in
the unit named by ``unit`` (default ``s^-1``); prefixes are applied as pure
powers of ten, no factor 2 pi is ever inserted.
"""

from __future__ import annotations

import json
import logging
import math
import os
from pathlib import Path

from .dpo import DpoParams
from .errors import ValidationError
from .optomech import (
    CONVENTIONS,
    OptomechParams,
    benchmark_params,
    effective_frequency,
    harris15_params,
    n1_for_sigma,
)

log = logging.getLogger(__name__)

UNIT_SCALE = {"s^-1": 1.0, "1/s": 1.0, "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "THz": 1e12}

# key -> (kind, default).  kind drives parsing of environment overrides.
SCHEMA = {
    # general
    "model": ("str", None),
    "preset": ("str", None),
    "unit": ("str", "s^-1"),
    "convention": ("str", "sideband"),
    # degenerate parametric oscillator
    "sigma": ("float", None),
    "g": ("float", None),
    "gamma": ("float", 1.0),
    "omega0": ("float", 0.0),
    # optomechanics (rates in `unit`)
    "Omega": ("rate", None),
    "gamma_m": ("rate", None),
    "gamma_q": ("rate", None),
    "delta_q": ("rate", None),
    "omega_q": ("rate", None),
    "g_q": ("rate", None),
    "E0": ("rate", None),
    "E1": ("rate", None),
    "omega_cavity": ("rate", None),
    "C_l": ("float", None),
    "phi": ("float", None),
    "n0": ("float", None),
    "n1": ("float", None),
    "P0": ("float", None),
    "P1": ("float", None),
    # benchmark preset knobs
    "ratio": ("float", 30.0),
    "omega_eff_over_gamma_q": ("float", 5.0),
    # solver settings
    "trunc": ("trunc", "auto"),
    "N_mech": ("int", 12),
    "N_opt": ("int", 3),
    "t_end": ("float", None),
    "n_out": ("int", 200),
    "rtol": ("float", 1e-8),
    "atol": ("float", 1e-12),
    "rel_tol": ("float", 1e-6),
    "samples": ("int", 64),
    "max_periods": ("int", 10_000),
    "seed": ("float", 1e-8),
    "rho0": ("str", "vacuum"),
    "horizon": ("float", 12.0),
    "tier": ("str", "dpo"),
    "frame": ("str", "rotating"),
    "grid_extent": ("float", None),
    "grid_points": ("int", 161),
    # sweeps
    "sweep": ("json", None),
}

RATE_KEYS = tuple(k for k, (kind, _) in SCHEMA.items() if kind == "rate")
OM_PHYSICAL = ("Omega", "gamma_m", "gamma_q", "delta_q", "omega_q", "g_q", "E0", "E1", "C_l", "phi",
               "n0", "n1", "P0", "P1", "omega_cavity")


def defaults() -> dict:
    return {k: d for k, (_, d) in SCHEMA.items()}


def _parse(key, raw: str):
    kind = SCHEMA[key][0]
    try:
        if kind in ("float", "rate"):
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "trunc":
            return raw if raw == "auto" else int(raw)
        if kind == "json":
            return json.loads(raw)
    except ValueError as exc:
        raise ValidationError(f"cannot parse {key}={raw!r}: {exc}") from None
    return raw


def check_keys(cfg: dict, where="config"):
    for key in cfg:
        if key not in SCHEMA:
            raise ValidationError(f"unknown key {key!r} in {where}")


def load_config(path) -> dict:
    """Read a JSON config, or the config snapshot stored in a run manifest."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    if "tool_version" in data and "config" in data:
        data = data["config"]
    check_keys(data)
    return data


def env_overrides(environ=None) -> dict:
    """PAROSC_<KEY> variables (key matched case-insensitively)."""
    environ = os.environ if environ is None else environ
    upper = {k.upper(): k for k in SCHEMA}
    out = {}
    for name, raw in environ.items():
        if not name.startswith("PAROSC_"):
            continue
        tail = name[len("PAROSC_"):]
        if tail in ("BACKEND", "OUT", "WORKERS"):
            continue
        if tail not in upper:
            raise ValidationError(f"unknown key {tail!r} in environment variable {name}")
        key = upper[tail]
        out[key] = _parse(key, raw)
    return out


def resolve(file_cfg=None, env=None, flags=None) -> dict:
    """defaults < config file < environment < command-line flags."""
    cfg = defaults()
    for layer, where in ((file_cfg, "config"), (env, "environment"), (flags, "flags")):
        if layer:
            check_keys(layer, where)
            cfg.update({k: v for k, v in layer.items() if v is not None})
    validate(cfg)
    return cfg


def validate(cfg: dict):
    if cfg["unit"] not in UNIT_SCALE:
        raise ValidationError(f"unknown unit {cfg['unit']!r}; use one of {sorted(UNIT_SCALE)}")
    if cfg["convention"] not in CONVENTIONS:
        raise ValidationError(f"unknown convention {cfg['convention']!r}")
    if cfg["tier"] not in ("dpo", "kerr", "nrw"):
        raise ValidationError(f"unknown tier {cfg['tier']!r}")
    if cfg["preset"] not in (None, "harris15", "benchmark"):
        raise ValidationError(f"unknown preset {cfg['preset']!r}")
    trunc = cfg["trunc"]
    if trunc != "auto" and not (isinstance(trunc, int) and trunc >= 2):
        raise ValidationError(f"trunc must be 'auto' or an integer >= 2, got {trunc!r}")
    for k, (kind, _) in SCHEMA.items():
        v = cfg.get(k)
        if kind in ("float", "rate") and v is not None and not math.isfinite(float(v)):
            raise ValidationError(f"{k} must be finite")
    has_power = cfg.get("P0") is not None or cfg.get("P1") is not None
    has_numbers = cfg.get("n0") is not None or cfg.get("n1") is not None
    if has_power and has_numbers:
        log.warning("config mixes laser powers (W) with photon numbers; photon numbers take precedence")


def model_of(cfg: dict) -> str:
    if cfg.get("model"):
        if cfg["model"] not in ("dpo", "om"):
            raise ValidationError(f"unknown model {cfg['model']!r}")
        return cfg["model"]
    if cfg.get("preset") or any(cfg.get(k) is not None for k in OM_PHYSICAL):
        return "om"
    return "dpo"


def dpo_params(cfg: dict) -> DpoParams:
    if cfg.get("sigma") is None or cfg.get("g") is None:
        raise ValidationError("the DPO model needs 'sigma' and 'g'")
    return DpoParams(float(cfg["sigma"]), float(cfg["g"]), float(cfg["gamma"]), float(cfg["omega0"]))


def om_params(cfg: dict) -> OptomechParams:
    """OptomechParams from a resolved config (rates converted to s^-1)."""
    from .effective import power_conversion

    scale = UNIT_SCALE[cfg["unit"]]
    conv = cfg["convention"]
    rate = {k: (None if cfg.get(k) is None else float(cfg[k]) * scale) for k in RATE_KEYS}
    preset = cfg.get("preset")
    if preset == "benchmark":
        if cfg.get("sigma") is None:
            raise ValidationError("the benchmark preset needs 'sigma'")
        return benchmark_params(float(cfg["sigma"]), g=float(cfg["g"] or 0.8), ratio=float(cfg["ratio"]),
                                omega_eff_over_gamma_q=float(cfg["omega_eff_over_gamma_q"]),
                                convention=conv)
    if preset == "harris15":
        base = harris15_params(convention=conv)
        fields = {"Omega": base.Omega, "gamma_m": base.gamma_m, "gamma_q": base.gamma_q, "g_q": base.g_q,
                  "C_l": base.C_l, "omega_cavity": base.omega_cavity, "n0": base.n0, "n1": base.n1}
    else:
        fields = {}
    for k in ("Omega", "gamma_m", "gamma_q", "g_q", "omega_cavity"):
        if rate[k] is not None:
            fields[k] = rate[k]
    for k in ("C_l", "n0", "n1"):
        if cfg.get(k) is not None:
            fields[k] = float(cfg[k])
    missing = [k for k in ("Omega", "gamma_m", "gamma_q", "g_q") if k not in fields]
    if missing:
        raise ValidationError(f"optomechanical config is missing {missing}")
    phi = None if cfg.get("phi") is None else float(cfg["phi"])
    common = dict(phi=phi, convention=conv, omega_cavity=fields.get("omega_cavity"))

    if rate["E0"] is not None:
        # fully explicit drive
        need = [k for k in ("delta_q", "omega_q", "E1") if rate[k] is None]
        if need:
            raise ValidationError(f"explicit drive amplitudes also need {need}")
        p = OptomechParams(fields["Omega"], fields["gamma_m"], fields["gamma_q"], rate["delta_q"],
                           rate["omega_q"], fields["g_q"], rate["E0"], rate["E1"], fields.get("C_l", 1.0),
                           **common)
    else:
        n0, n1 = fields.get("n0"), fields.get("n1")
        if n0 is None or n1 is None:
            n0, n1 = _photons_from_power(cfg, fields, rate, conv, n0, n1, power_conversion)
        p = OptomechParams.from_photon_numbers(
            fields["Omega"], fields["gamma_m"], fields["gamma_q"], fields["g_q"], n0, n1,
            fields.get("C_l", 1.0), delta_q=rate["delta_q"], omega_q=rate["omega_q"], **common,
        )
    if cfg.get("sigma") is not None:
        p = p.with_photon_numbers(n1=n1_for_sigma(p, float(cfg["sigma"])), relock=rate["delta_q"] is None)
    return p


def _photons_from_power(cfg, fields, rate, conv, n0, n1, power_conversion):
    if fields.get("omega_cavity") is None:
        raise ValidationError("laser powers need 'omega_cavity'")
    # detunings depend on Omega_eff, which depends on the photon numbers: fixed-point iterate
    guess0 = n0 if n0 is not None else 0.0
    guess1 = n1 if n1 is not None else 0.0
    for _ in range(100):
        w = effective_frequency(fields["Omega"], fields["g_q"], guess0, guess1, conv)
        dq = rate["delta_q"] if rate["delta_q"] is not None else -2 * w
        wq = rate["omega_q"] if rate["omega_q"] is not None else 2 * w
        new0 = n0 if n0 is not None else _power_n(cfg, "P0", fields, dq, power_conversion)
        new1 = n1 if n1 is not None else _power_n(cfg, "P1", fields, dq + wq, power_conversion)
        if abs(new0 - guess0) <= 1e-12 * max(new0, 1) and abs(new1 - guess1) <= 1e-12 * max(new1, 1):
            return new0, new1
        guess0, guess1 = new0, new1
    raise ValidationError("photon numbers from laser powers did not settle")


def _power_n(cfg, key, fields, detuning, power_conversion):
    if cfg.get(key) is None:
        raise ValidationError(f"need either photon number or laser power for {key}")
    return power_conversion(float(cfg[key]), fields["gamma_q"], fields["omega_cavity"], detuning).n
