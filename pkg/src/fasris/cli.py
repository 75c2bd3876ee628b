"""Experiment runner: declarative sweep configs in, flat result tables out.

An experiment file (TOML, or JSON with the same shape) names a sweep
variable, fixed system parameters, one or more curves of overrides, and what
to evaluate at every sweep point: analytic outage models plus the simulation
oracle, throughput solvers under pilot-overhead policies, or an empirical
density with its theoretical overlay.  Outputs are plot-ready CSV or JSON;
identical config and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import montecarlo, optimize, outage
from .blockapprox import fit_for_config
from .channel import build_config, jakes_correlation, load_config_file
from .errors import ConfigError, NumericError
from .outage import MODELS, OVERHEAD_POLICIES, SCHEMES, OutageQuery

__all__ = ["Experiment", "load_experiment", "run_experiment", "emit", "main"]

SWEEP_VARIABLES = ("P", "N", "R", "M", "W")
SOLVERS = ("gda", "bsm", "pgda", "cf", "es")
KINDS = ("outage", "throughput", "pdf")
_INT_SWEEPS = ("N", "M")


@dataclass
class Experiment:
    """One declarative experiment: a sweep plus what to evaluate per point."""

    name: str
    kind: str
    sweep_variable: str
    sweep_from: float
    sweep_to: float
    sweep_steps: int
    fixed: dict = field(default_factory=dict)
    curves: list = field(default_factory=list)  # [(label, overrides), ...]
    models: list = field(default_factory=list)  # ["scheme:model", ...]
    solvers: list = field(default_factory=list)  # ["scheme:solver", ...]
    overhead_policies: list = field(default_factory=lambda: ["none"])
    trials: int = 100_000
    rate: float = 2.0
    r_min: float = 0.01
    r_max: float = 15.0
    bins: int = 80
    seed: int = 1
    inner_samples: int = 5000
    quad_nodes: int = 64
    grid_points: int = 10_000
    step: float = 0.05
    tol: float = 1e-9
    max_iter: int = 20_000
    output: str = "results.csv"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind: {self.kind}")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable: {self.sweep_variable}")
        if self.sweep_steps < 1:
            raise ConfigError("sweep needs at least one step")
        if self.sweep_steps > 1 and self.sweep_to <= self.sweep_from:
            raise ConfigError("sweep range is empty")
        if not self.curves:
            self.curves = [("all", {})]
        for label, spec in (("model", m) for m in self.models):
            _split_pair(spec, MODELS + ("simulation",), label)
        for label, spec in (("solver", s) for s in self.solvers):
            _split_pair(spec, SOLVERS, label)
        for pol in self.overhead_policies:
            if pol not in OVERHEAD_POLICIES:
                raise ConfigError(f"unknown overhead policy: {pol}")
        if self.kind == "outage" and not self.models:
            raise ConfigError("outage experiments need a models list")
        if self.kind == "throughput" and not self.solvers:
            raise ConfigError("throughput experiments need a solvers list")

    def sweep_values(self):
        if self.sweep_steps == 1:
            vals = np.array([self.sweep_from], dtype=float)
        else:
            vals = np.linspace(self.sweep_from, self.sweep_to, self.sweep_steps)
        if self.sweep_variable in _INT_SWEEPS:
            vals = np.rint(vals)
        return [float(v) for v in vals]


def _split_pair(spec: str, allowed, label: str):
    parts = spec.split(":")
    if len(parts) != 2 or parts[0] not in SCHEMES or parts[1] not in allowed:
        raise ConfigError(f"unknown {label} spec: {spec!r}")
    return parts[0], parts[1]


def load_experiment(path) -> Experiment:
    raw = load_config_file(path)
    return experiment_from_dict(raw)


def experiment_from_dict(raw: dict) -> Experiment:
    if not isinstance(raw, dict):
        raise ConfigError("experiment file must hold a table")
    raw = dict(raw)
    sweep = raw.pop("sweep", None)
    if not isinstance(sweep, dict) or not {"variable", "from", "to", "steps"} <= set(sweep):
        raise ConfigError("experiment needs a sweep table with variable/from/to/steps")
    curves_raw = raw.pop("curves", [])
    curves = []
    for c in curves_raw:
        c = dict(c)
        label = str(c.pop("label", f"curve{len(curves)}"))
        curves.append((label, c))
    known = {f for f in Experiment.__dataclass_fields__ if f not in (
        "sweep_variable", "sweep_from", "sweep_to", "sweep_steps", "curves")}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
    try:
        return Experiment(
            name=str(raw.pop("name", "experiment")),
            kind=str(raw.pop("kind", "outage")),
            sweep_variable=str(sweep["variable"]),
            sweep_from=float(sweep["from"]),
            sweep_to=float(sweep["to"]),
            sweep_steps=int(sweep["steps"]),
            curves=curves,
            **raw,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _point_config(exp: Experiment, overrides: dict, value: float):
    """SystemConfig and rate for one sweep point of one curve."""
    params = {"M": 2, "N": 100, "seed": exp.seed}
    params.update(exp.fixed)
    params.update({k: v for k, v in overrides.items() if k != "rate"})
    rate = float(overrides.get("rate", exp.fixed.get("rate", exp.rate)))
    params.pop("rate", None)
    var = exp.sweep_variable
    if var == "P":
        params["P_dBm"] = value
    elif var == "N":
        params["N"] = int(value)
    elif var == "M":
        params["M"] = int(value)
    elif var == "W":
        params["W"] = value
    else:
        rate = value
    return build_config(params), rate


def _outage_row(exp: Experiment, label: str, overrides: dict, value: float) -> dict:
    cfg, rate = _point_config(exp, overrides, value)
    structure = fit_for_config(cfg)
    corr = jakes_correlation(cfg.N, cfg.W)
    row = {exp.sweep_variable: value, "curve": label}
    for spec in exp.models:
        scheme, model = _split_pair(spec, MODELS + ("simulation",), "model")
        try:
            if model == "simulation":
                res = montecarlo.estimate_outage(cfg, corr, scheme, rate, trials=exp.trials, seed=exp.seed)
                row[spec] = res.p_hat
                row[spec + "_ci"] = res.half_width_95
            else:
                q = OutageQuery(cfg=cfg, structure=structure, R=rate, scheme=scheme, model=model)
                est = outage.evaluate(q, inner_samples=exp.inner_samples, quad_nodes=exp.quad_nodes)
                row[spec] = est.p
                row[spec + "_err"] = est.numeric_error
        except NumericError as exc:
            row[spec] = None
            row[spec + "_failure"] = str(exc)
    return row


def _throughput_row(exp: Experiment, label: str, overrides: dict, value: float) -> dict:
    cfg, rate = _point_config(exp, overrides, value)
    structure = fit_for_config(cfg)
    bounds = optimize.RateBounds(exp.r_min, exp.r_max)
    mom = outage.csi_based_moments(cfg)
    momf = outage.csi_free_moments(cfg)
    B = structure.B
    row = {exp.sweep_variable: value, "curve": label}
    if exp.sweep_variable == "R":
        row["csi-based:iae_T"] = optimize.tbar(rate, mom, B)
        row["csi-free:iae_T"] = optimize.tcheck(rate, momf.lambda_a, B, cfg)

    for spec in exp.solvers:
        scheme, solver = _split_pair(spec, SOLVERS, "solver")
        if scheme == "csi-based":
            if solver == "gda":
                sol = optimize.gda_csi_based(
                    bounds, mom, B, step=exp.step, tol=exp.tol, max_iter=exp.max_iter
                )
            elif solver == "bsm":
                sol = optimize.bsm_csi_based(bounds, mom, B, tol=max(exp.tol, 1e-12))
            elif solver == "es":
                sol = optimize.exhaustive(bounds, lambda r: optimize.tbar(r, mom, B), exp.grid_points)
            else:
                raise ConfigError(f"solver {solver} is not defined for the csi-based scheme")
            policies = exp.overhead_policies
        else:
            if solver == "pgda":
                sol = optimize.pgda_csi_free(
                    bounds, momf.lambda_a, B, cfg, step=exp.step, tol=exp.tol, max_iter=exp.max_iter
                )
            elif solver == "cf":
                sol = optimize.closed_form_csi_free(bounds, momf.lambda_a, B, cfg)
            elif solver == "es":
                sol = optimize.exhaustive(
                    bounds, lambda r: optimize.tcheck(r, momf.lambda_a, B, cfg), exp.grid_points
                )
            else:
                raise ConfigError(f"solver {solver} is not defined for the csi-free scheme")
            policies = ["none"]  # random-phase scheme sends no pilots

        for pol in policies:
            q = OutageQuery(cfg=cfg, structure=structure, R=1.0, scheme=scheme, model="iae")
            tau = outage.apply_overhead(q, pol).overhead_slots
            frac = 1.0 - tau / q.total_slots
            name = spec if pol == "none" else f"{spec}:{pol}"
            row[name + "_r"] = sol.r_star
            row[name + "_t"] = frac * sol.t_star
    return row


def _pdf_rows(exp: Experiment) -> list:
    label, overrides = exp.curves[0]
    cfg, _ = _point_config(exp, overrides, exp.sweep_values()[0])
    if not exp.models:
        raise ConfigError("pdf experiments need a models list with one scheme entry")
    scheme = _split_pair(exp.models[0], MODELS + ("simulation",), "model")[0]
    if scheme == "csi-based":
        samples, v = montecarlo.sample_conditional_csi_based(cfg, exp.trials, seed=exp.seed)
        sigma0_sq = (1.0 - cfg.mu_b_sq) * cfg.pathloss().alpha / (cfg.K + 1.0)
        mu_k, var_k = outage.conditional_port_moments(v, sigma0_sq, cfg.pathloss().beta)
        pdf = montecarlo.empirical_pdf(samples, bins=exp.bins)
        centers = pdf.bin_centers
        theory = np.exp(-((centers - mu_k) ** 2) / (2.0 * var_k)) / np.sqrt(2.0 * np.pi * var_k)
    else:
        corr = jakes_correlation(cfg.N, cfg.W)
        amps = montecarlo.collect_envelopes(cfg, corr, "csi-free", exp.trials, seed=exp.seed)
        samples = amps**2
        lam = outage.csi_free_moments(cfg).lambda_a
        pdf = montecarlo.empirical_pdf(samples, bins=exp.bins)
        centers = pdf.bin_centers
        theory = lam * np.exp(-lam * centers)
    return [
        {"bin_center": float(c), "density": float(d), "theory_density": float(t), "curve": label}
        for c, d, t in zip(centers, pdf.densities, theory)
    ]


def _eval_point(payload):
    exp = experiment_from_dict(payload["exp"])
    label, overrides = payload["curve"]
    value = payload["value"]
    t0 = time.perf_counter()
    if exp.kind == "outage":
        row = _outage_row(exp, label, dict(overrides), value)
    else:
        row = _throughput_row(exp, label, dict(overrides), value)
    row["_runtime_ms"] = (time.perf_counter() - t0) * 1000.0
    return row


def _experiment_payloads(exp: Experiment, raw: dict):
    for label, overrides in exp.curves:
        for value in exp.sweep_values():
            yield {"exp": raw, "curve": (label, overrides), "value": value}


def run_experiment(exp: Experiment, raw: dict | None = None, workers: int = 1) -> list:
    """Evaluate every sweep point of every curve, in declaration order."""
    if exp.kind == "pdf":
        return _pdf_rows(exp)
    if raw is None:
        raw = _experiment_to_dict(exp)
    payloads = list(_experiment_payloads(exp, raw))
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_eval_point, payloads))
    else:
        rows = [_eval_point(p) for p in payloads]
    return rows


def _experiment_to_dict(exp: Experiment) -> dict:
    d = {
        f: getattr(exp, f)
        for f in Experiment.__dataclass_fields__
        if f not in ("sweep_variable", "sweep_from", "sweep_to", "sweep_steps", "curves")
    }
    d["sweep"] = {
        "variable": exp.sweep_variable,
        "from": exp.sweep_from,
        "to": exp.sweep_to,
        "steps": exp.sweep_steps,
    }
    d["curves"] = [dict(ov, label=lb) for lb, ov in exp.curves]
    return d


def emit(rows: list, fmt: str, path) -> None:
    """Write rows as CSV (header + one line per row) or a JSON array.

    Volatile columns (leading underscore, e.g. runtimes) are dropped so that
    reruns with the same config and seed are byte-identical.
    """
    if not rows:
        raise ConfigError("nothing to emit: empty row list")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format: {fmt}")
    cols = []
    for row in rows:
        for k in row:
            if not k.startswith("_") and k not in cols:
                cols.append(k)
    clean = [{c: row.get(c) for c in cols} for row in rows]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(json.dumps(clean, indent=2) + "\n")
        return
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in clean:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _cmd_run(args) -> int:
    exp = load_experiment(args.config)
    raw = load_config_file(args.config)
    if args.seed is not None:
        exp.seed = args.seed
        raw["seed"] = args.seed
    if args.trials is not None:
        exp.trials = args.trials
        raw["trials"] = args.trials
    rows = run_experiment(exp, raw=raw, workers=args.workers)
    failed = any(k.endswith("_failure") for row in rows for k in row)
    out = Path(args.out) / exp.output if args.out else Path(exp.output)
    fmt = args.format or ("json" if out.suffix == ".json" else "csv")
    if args.format:
        out = out.with_suffix("." + args.format)
    emit(rows, fmt, out)
    runtimes = [r.get("_runtime_ms") for r in rows if r.get("_runtime_ms") is not None]
    if runtimes:
        print(
            f"{exp.name}: {len(rows)} rows -> {out} "
            f"(total {sum(runtimes)/1000.0:.1f}s, max point {max(runtimes)/1000.0:.1f}s)",
            file=sys.stderr,
        )
    else:
        print(f"{exp.name}: {len(rows)} rows -> {out}", file=sys.stderr)
    if failed:
        print("one or more points hit a numeric failure; see *_failure columns", file=sys.stderr)
        return 2
    return 0


def _cmd_list_models(_args) -> int:
    print("schemes:", ", ".join(SCHEMES))
    print("models:", ", ".join(MODELS + ("simulation",)))
    print("solvers:", ", ".join(SOLVERS))
    print("overhead policies:", ", ".join(OVERHEAD_POLICIES))
    return 0


def _cmd_validate(args) -> int:
    exp = load_experiment(args.config)
    for _, overrides in exp.curves:
        _point_config(exp, dict(overrides), exp.sweep_values()[0])
    print(f"{args.config}: OK ({exp.name}, kind={exp.kind}, "
          f"{len(exp.curves)} curve(s) x {exp.sweep_steps} point(s))")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fasris", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--trials", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--format", choices=("csv", "json"), default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list-models", help="list known schemes, models, solvers")
    p_list.set_defaults(func=_cmd_list_models)

    p_val = sub.add_parser("validate", help="check an experiment config")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
