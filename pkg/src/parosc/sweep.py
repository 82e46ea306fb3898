"""Parameter sweeps over independent points, serial or on a process pool."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from .errors import AllPointsFailedError, ValidationError

TASKS = ("classical", "quantum", "effective", "regime")

COLUMNS = {
    ("dpo", "classical"): ("alpha_abs_classical", "alpha_abs_closed_form"),
    ("dpo", "quantum"): ("n_quantum", "a_abs", "trunc_N"),
    ("om", "classical"): ("n_bar", "delta_n", "n_expected"),
    ("om", "quantum"): ("n_bar", "delta_n", "n_effective", "rel_diff", "modulation_ratio"),
    ("om", "effective"): ("sigma_eff", "g_eff", "gamma_eff", "omega0_eff", "C_q"),
    ("om", "regime"): ("rwa", "resolved_sideband", "weak_sideband", "markov", "kerr", "all_pass"),
}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    base: dict
    task: str

    def __post_init__(self):
        if self.parameter not in cfgmod.SCHEMA or cfgmod.SCHEMA[self.parameter][0] not in ("float", "rate", "int"):
            raise ValidationError(f"sweep parameter {self.parameter!r} is not a numeric config key")
        if not self.values:
            raise ValidationError("sweep grid is empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("sweep grid must be finite")
        if self.task not in TASKS:
            raise ValidationError(f"unknown sweep task {self.task!r}; use one of {TASKS}")
        if (cfgmod.model_of(self.base), self.task) not in COLUMNS:
            raise ValidationError(f"task {self.task!r} is not defined for model {cfgmod.model_of(self.base)!r}")

    @classmethod
    def from_config(cls, cfg: dict) -> "SweepSpec":
        sw = cfg.get("sweep")
        if not isinstance(sw, dict):
            raise ValidationError("config needs a 'sweep' object with parameter, grid and task")
        unknown = set(sw) - {"parameter", "values", "start", "stop", "step", "num", "task"}
        if unknown:
            raise ValidationError(f"unknown key {sorted(unknown)[0]!r} in sweep")
        if "parameter" not in sw:
            raise ValidationError("sweep needs 'parameter'")
        base = {k: v for k, v in cfg.items() if k != "sweep"}
        return cls(sw["parameter"], grid_values(sw), base, sw.get("task", "classical"))

    @property
    def columns(self):
        return ("index", self.parameter, "status") + COLUMNS[(cfgmod.model_of(self.base), self.task)] + ("error",)


def grid_values(sw: dict) -> tuple:
    if "values" in sw:
        return tuple(float(v) for v in sw["values"])
    try:
        start, stop = float(sw["start"]), float(sw["stop"])
    except KeyError as exc:
        raise ValidationError(f"sweep grid needs 'values' or start/stop (missing {exc})") from None
    if "step" in sw:
        step = float(sw["step"])
        if step <= 0:
            raise ValidationError("sweep step must be > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 12) for k in range(n))
    return tuple(float(v) for v in np.linspace(start, stop, int(sw.get("num", 11))))


def run_point(model: str, task: str, cfg: dict) -> dict:
    """Evaluate one grid point; returns the task columns."""
    if model == "dpo":
        from .dpo import classical_dpo_integrate, relaxation_time, stable_amplitude

        p = cfgmod.dpo_params(cfg)
        if task == "classical":
            T = relaxation_time(p, cfg["seed"]) if cfg.get("t_end") is None else cfg["t_end"]
            amp = abs(classical_dpo_integrate(p, cfg["seed"], (0.0, T), n_out=2).final)
            return {"alpha_abs_classical": amp, "alpha_abs_closed_form": stable_amplitude(p)}
        from .dpo import dpo_steady_state
        from .fock import annihilation, expectation, number
        from .lindblad import adapt_truncation

        if cfg["trunc"] == "auto":
            N, _, _ = adapt_truncation(lambda n: _dpo_n(p, n), 10, 10, 120)
        else:
            N = int(cfg["trunc"])
        rho = dpo_steady_state(p, N)
        return {"n_quantum": expectation(number(rho.space), rho).real,
                "a_abs": abs(expectation(annihilation(rho.space), rho)), "trunc_N": N}

    from .effective import effective_occupation, map_parameters, regime_check
    from .optomech import classical_static_phonons, om_quantum_asymptotics

    p = cfgmod.om_params(cfg)
    if task == "classical":
        fit, _ = classical_static_phonons(p, horizon=cfg["horizon"])
        return {"n_bar": fit.n_bar, "delta_n": fit.delta_n, "n_expected": fit.extras["expected"]}
    if task == "quantum":
        N_mech = cfg["N_mech"] if cfg["trunc"] == "auto" else int(cfg["trunc"])
        fit, _ = om_quantum_asymptotics(p, N_mech, cfg["N_opt"], rho0=cfg["rho0"], samples=cfg["samples"],
                                        rel_tol=cfg["rel_tol"], max_periods=cfg["max_periods"],
                                        rtol=cfg["rtol"], atol=cfg["atol"])
        n_eff, _ = effective_occupation(p, max(N_mech, 30), cfg["tier"])
        return {"n_bar": fit.n_bar, "delta_n": fit.delta_n, "n_effective": n_eff,
                "rel_diff": fit.n_bar / n_eff - 1 if n_eff else math.nan,
                "modulation_ratio": fit.delta_n / fit.n_bar if fit.n_bar else math.nan}
    if task == "effective":
        ep = map_parameters(p)
        return {"sigma_eff": ep.sigma, "g_eff": ep.g, "gamma_eff": ep.gamma, "omega0_eff": ep.omega0,
                "C_q": p.C_q}
    rep = regime_check(p)
    out = {c.name: c.value for c in rep.checks}
    out["all_pass"] = int(rep.passed)
    return out


def _dpo_n(p, n):
    from .dpo import steady_occupation

    return steady_occupation(p, n)


def _worker(args):
    index, parameter, value, model, task, cfg = args
    try:
        res = run_point(model, task, dict(cfg, **{parameter: value}))
        return index, "ok", res, ""
    except Exception as exc:  # recorded per point, the sweep carries on
        return index, "failed", {}, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepTable:
    columns: tuple
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def column(self, name):
        return [r.get(name) for r in self.rows]

    @property
    def n_failed(self):
        return sum(r["status"] == "failed" for r in self.rows)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def orchestrate_sweep(spec: SweepSpec, workers: int = 1) -> SweepTable:
    """Run every grid point; rows come back in grid order whatever the completion order."""
    model = cfgmod.model_of(spec.base)
    jobs = [(i, spec.parameter, v, model, spec.task, spec.base) for i, v in enumerate(spec.values)]
    if workers <= 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))
    results.sort(key=lambda r: r[0])
    rows = []
    for (index, status, res, err), value in zip(results, spec.values):
        row = {"index": index, spec.parameter: value, "status": status, "error": err}
        row.update(res)
        rows.append(row)
    table = SweepTable(spec.columns, rows)
    if table.n_failed == len(rows):
        raise AllPointsFailedError(f"all {len(rows)} sweep points failed; first error: {rows[0]['error']}")
    return table
