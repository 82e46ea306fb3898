"""Command-line entry point.

    parosc dpo steady   --config cfg.json --out run/
    parosc dpo classical | dpo wigner
    parosc om quantum | om classical
    parosc map effective
    parosc regime check
    parosc sweep --workers 4

Every command writes CSV/JSON artifacts and a manifest.json into --out.
Exit codes: 0 success, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import config as cfgmod
from .errors import SolverError, ValidationError

log = logging.getLogger("parosc")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


class RunManifest:
    """Reproducibility record written next to the artifacts of one run."""

    def __init__(self, command, config):
        self.command = command
        self.config = config
        self.derived = {}
        self.solver = {}
        self.outputs = {}
        self.notes = []
        self._t0 = time.perf_counter()

    def add_output(self, out_dir: Path, name: str, text: str):
        atomic_write(out_dir / name, text)
        self.outputs[name] = hashlib.sha256(text.encode()).hexdigest()

    def to_dict(self):
        return {
            "tool_version": __version__,
            "command": self.command,
            "config": self.config,
            "derived": self.derived,
            "solver": self.solver,
            "conventions": {
                "omega_eff": self.config.get("convention"),
                "vectorization": "column-major",
                "tensor_order": "optical x mechanical",
                "dissipator": "2 J rho J^dag - J^dag J rho - rho J^dag J",
                "quadratures": "x = a + a^dag, p = i(a^dag - a)",
            },
            "kernel_backend": kernels.BACKEND,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "wall_clock_s": time.perf_counter() - self._t0,
            "outputs": self.outputs,
            "notes": self.notes,
        }

    def write(self, out_dir: Path):
        atomic_write(out_dir / "manifest.json", dumps(self.to_dict()))


# commands

def _trunc_or(cfg, default):
    return default if cfg["trunc"] == "auto" else int(cfg["trunc"])


def _dpo_steady_state(cfg, man):
    from .dpo import dpo_steady_state, steady_occupation
    from .lindblad import adapt_truncation

    p = cfgmod.dpo_params(cfg)
    if cfg["trunc"] == "auto":
        N, _, history = adapt_truncation(lambda n: steady_occupation(p, n), 10, 10, 160)
        man.solver["truncation_history"] = history
    else:
        N = int(cfg["trunc"])
    man.solver["N"] = N
    return p, N, dpo_steady_state(p, N)


def cmd_dpo_steady(cfg, out, man):
    from .fock import annihilation, expectation, number, parity

    p, N, rho = _dpo_steady_state(cfg, man)
    n = expectation(number(rho.space), rho).real
    a = expectation(annihilation(rho.space), rho)
    U = parity(rho.space).toarray()
    res = {"sigma": p.sigma, "g": p.g, "N": N, "n": n, "a": a, "a_abs": abs(a),
           "parity_residual": float(np.linalg.norm(U @ rho.data @ U.conj().T - rho.data))}
    man.add_output(out, "steady.json", dumps(res))
    man.add_output(out, "rho.json", dumps(rho.to_json_dict()))
    print(f"<n> = {n:.3f}  |<a>| = {abs(a):.3e}  N = {N}")


def cmd_dpo_classical(cfg, out, man):
    from .dpo import classical_dpo_integrate, classical_fixed_points, relaxation_time

    p = cfgmod.dpo_params(cfg)
    T = cfg["t_end"] if cfg["t_end"] is not None else relaxation_time(p, cfg["seed"])
    traj = classical_dpo_integrate(p, cfg["seed"], (0.0, T), n_out=cfg["n_out"])
    fps = [{"branch": f.branch, "amplitude": f.amplitude, "eigenvalues": list(f.eigenvalues), "stable": f.stable}
           for f in classical_fixed_points(p)]
    man.solver.update({"t_end": T, "seed": cfg["seed"], "rtol": 1e-10, "atol": 1e-14, "nfev": traj.nfev})
    man.add_output(out, "fixed_points.json", dumps({"sigma": p.sigma, "g": p.g, "fixed_points": fps,
                                                    "final_abs": abs(traj.final)}))
    rows = [(t, z.real, z.imag, abs(z)) for t, z in zip(traj.t, traj.alpha)]
    man.add_output(out, "trajectory.csv", csv_text(("t", "re_alpha", "im_alpha", "abs_alpha"), rows))
    print(f"|alpha(T)| = {abs(traj.final):.6g}")
    for f in fps:
        print(f"  {f['branch']:>8s}  alpha = {abs(f['amplitude']):.6g}  stable = {f['stable']}")


def cmd_dpo_wigner(cfg, out, man):
    from .fock import expectation, number
    from .phase_space import detect_lobes, make_grid, marginal, wigner

    p, N, rho = _dpo_steady_state(cfg, man)
    n = expectation(number(rho.space), rho).real
    extent = cfg["grid_extent"] or 3.2 * math.sqrt(max(n, 0.0)) + 5.0
    xs, ps = make_grid(extent, cfg["grid_points"])
    W = wigner(rho.clamped(), xs, ps)
    xm, px, _ = marginal(W, "x")
    lobes = detect_lobes(W)
    meta = W.metadata()
    meta.update({"lobes": [{"x": l[0][0], "p": l[0][1], "height": l[1]} for l in lobes],
                 "marginal_lobes": [{"x": l[0], "height": l[1]} for l in detect_lobes(px, xm)],
                 "n": n, "N": N})
    man.add_output(out, "wigner.csv", W.to_csv())
    man.add_output(out, "wigner.json", dumps(meta))
    man.add_output(out, "marginal_x.csv", csv_text(("x", "P"), zip(xm, px)))
    print(f"{len(lobes)} lobe(s): " + ", ".join(f"({l[0][0]:.3f}, {l[0][1]:.3f})" for l in lobes))


def cmd_om_quantum(cfg, out, man):
    from .effective import effective_occupation
    from .optomech import om_quantum_asymptotics

    p = cfgmod.om_params(cfg)
    N_mech = _trunc_or(cfg, cfg["N_mech"])
    fit, rep = om_quantum_asymptotics(p, N_mech, cfg["N_opt"], rho0=cfg["rho0"], samples=cfg["samples"],
                                      rel_tol=cfg["rel_tol"], max_periods=cfg["max_periods"],
                                      rtol=cfg["rtol"], atol=cfg["atol"])
    n_eff, dn_eff = effective_occupation(p, max(N_mech, 30), cfg["tier"])
    man.derived.update(p.derived())
    man.solver.update({"N_mech": N_mech, "N_opt": cfg["N_opt"], **rep.settings, "periods": rep.periods,
                       "drift": rep.drift})
    res = {**fit.to_dict(), "n_effective": n_eff, "delta_n_effective": dn_eff, "tier": cfg["tier"],
           "rel_diff": fit.n_bar / n_eff - 1 if n_eff else None}
    man.add_output(out, "om_quantum.json", dumps(res))
    rows = zip(rep.times, rep.observables["n_b"].real, rep.observables["n_a"].real)
    man.add_output(out, "series.csv", csv_text(("t", "n_b", "n_a"), rows))
    print(f"n_bar = {fit.n_bar:.6g}  delta_n = {fit.delta_n:.3g}  effective ({cfg['tier']}) = {n_eff:.6g}")


def cmd_om_classical(cfg, out, man):
    from .optomech import classical_static_phonons

    p = cfgmod.om_params(cfg)
    fit, traj = classical_static_phonons(p, horizon=cfg["horizon"], rtol=cfg["rtol"], atol=cfg["atol"])
    man.derived.update(p.derived())
    man.solver.update({"rtol": cfg["rtol"], "atol": cfg["atol"], "horizon": cfg["horizon"],
                       "n_accepted": traj.n_accepted, "n_rejected": traj.n_rejected})
    man.add_output(out, "om_classical.json", dumps(fit.to_dict()))
    rows = [(t, *y) for t, y in zip(traj.t, traj.y)]
    man.add_output(out, "trajectory.csv", csv_text(("t", "x", "p", "re_alpha", "im_alpha"), rows))
    print(f"n_bar = {fit.n_bar:.6g}  delta_n = {fit.delta_n:.3g}  2(sigma-1)/g^2 = {fit.extras['expected']:.6g}")


def cmd_map_effective(cfg, out, man):
    from .effective import map_parameters

    p = cfgmod.om_params(cfg)
    ep = map_parameters(p)
    man.derived.update(p.derived())
    man.add_output(out, "effective.json", dumps({"optomech": p.to_dict(), "effective": ep.to_dict()}))
    print(f"omega0 = {ep.omega0:.6g}  gamma = {ep.gamma:.6g}  g = {ep.g:.6g}  sigma = {ep.sigma:.6g}")


def cmd_regime_check(cfg, out, man):
    from .effective import regime_check

    p = cfgmod.om_params(cfg)
    rep = regime_check(p, reference=cfg.get("preset") == "harris15")
    man.derived.update(p.derived())
    man.add_output(out, "regime_report.json", dumps(rep.to_dict()))
    for c in rep.checks:
        ref = "" if c.paper_reference_value is None else f"  (ref {c.paper_reference_value:.3g})"
        print(f"{c.name:>18s}  {c.value:.4g}  {c.grade}{ref}")


def cmd_sweep(cfg, out, man, workers=1):
    from .sweep import SweepSpec, orchestrate_sweep

    spec = SweepSpec.from_config(cfg)
    table = orchestrate_sweep(spec, workers)
    man.solver.update({"parameter": spec.parameter, "task": spec.task, "points": len(spec.values),
                       "failed": table.n_failed})
    man.add_output(out, "sweep.csv", table.to_csv())
    print(f"{len(table.rows)} points, {table.n_failed} failed -> {out / 'sweep.csv'}")


COMMANDS = {
    ("dpo", "steady"): cmd_dpo_steady,
    ("dpo", "classical"): cmd_dpo_classical,
    ("dpo", "wigner"): cmd_dpo_wigner,
    ("om", "quantum"): cmd_om_quantum,
    ("om", "classical"): cmd_om_classical,
    ("map", "effective"): cmd_map_effective,
    ("regime", "check"): cmd_regime_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a manifest.json to replay)")
    common.add_argument("--out", help="output directory (default: ./parosc-out)")
    common.add_argument("--workers", type=int, help="worker processes for sweeps")
    common.add_argument("--trunc", help="Fock truncation: integer or 'auto'")
    common.add_argument("--tier", choices=("dpo", "kerr", "nrw"), help="effective-model tier")
    common.add_argument("--convention", choices=("carrier", "sideband"), help="Omega_eff convention")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="parosc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"parosc {__version__}")
    groups = parser.add_subparsers(dest="group", required=True)
    for group, actions in (("dpo", ("steady", "classical", "wigner")), ("om", ("quantum", "classical")),
                           ("map", ("effective",)), ("regime", ("check",))):
        g = groups.add_parser(group)
        sub = g.add_subparsers(dest="action", required=True)
        for a in actions:
            sub.add_parser(a, parents=[common])
    groups.add_parser("sweep", parents=[common])
    return parser


def _flag_layer(args) -> dict:
    flags = {}
    if args.trunc is not None:
        flags["trunc"] = cfgmod._parse("trunc", args.trunc)
    if args.tier is not None:
        flags["tier"] = args.tier
    if args.convention is not None:
        flags["convention"] = args.convention
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        cfgmod.check_keys({key: None}, "--set")
        flags[key] = cfgmod._parse(key, raw)
    return flags


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    command = args.group if args.group == "sweep" else f"{args.group} {args.action}"
    try:
        file_cfg = cfgmod.load_config(args.config) if args.config else {}
        cfg = cfgmod.resolve(file_cfg, cfgmod.env_overrides(), _flag_layer(args))
        out = Path(args.out or os.environ.get("PAROSC_OUT", "parosc-out"))
        workers = args.workers if args.workers is not None else int(os.environ.get("PAROSC_WORKERS", "1"))
        if workers < 1:
            raise ValidationError("--workers must be >= 1")
        man = RunManifest(command, cfg)
        if args.group == "sweep":
            cmd_sweep(cfg, out, man, workers)
        else:
            COMMANDS[(args.group, args.action)](cfg, out, man)
        man.write(out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
