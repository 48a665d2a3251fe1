"""Command-line front end: scenario files in, CSV and JSON out.

Scenario files are INI documents with sections ``group_a``, ``group_b``,
``dynamics``, ``init``, ``horizon`` and ``experiment``; see the README for the
keys. Exit status is 0 on success, 1 when the scenario fails validation and 2
when a computation fails.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .dist import SubgroupDistribution
from .dynamics import DYNAMICS_KINDS, DynamicsModel, RetentionFn
from .errors import ConfigError, FairDynError, IoError
from .fairsolve import Criterion, DecisionPair, one_shot, uniform_decision_table
from .horizon import (COLUMNS, ConvergenceSpec, SweepResult, Trajectory, simulate, suboptimality_witness,
                      sweep_final_proportion, tradeoff_curve, visited_decisions)
from .popmodel import GroupSpec, PopulationState, expected_loss

SWEEP_COLUMNS = ("beta_a", "beta_b", "final_alpha_a", "final_theta_a", "final_theta_b",
                 "final_loss_a", "final_loss_b", "converged")
EXPERIMENTS = ("simulate", "sweep", "visited", "oneshot", "tradeoff", "quality")
SECTIONS = ("group_a", "group_b", "dynamics", "init", "horizon", "experiment")


@dataclass
class ScenarioConfig:
    name: str
    group_a: GroupSpec
    group_b: GroupSpec
    model: DynamicsModel
    init: Optional[PopulationState]
    conv: ConvergenceSpec
    horizon_T: Optional[int]
    experiment: str
    criteria: tuple[Criterion, ...]
    betas: tuple[tuple[float, float], ...] = ()
    ratio: Optional[float] = None
    burn_in: int = 0
    seed: int = 0
    grid_points: int = 41
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- parsing

def _num(sec, key: str, path: str, default=None, kind=float):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing")
        return default
    raw = sec[key].strip()
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{path}.{key}", f"not a valid {kind.__name__}: {raw!r}") from None


def _float_list(sec, key: str, path: str) -> list[float]:
    raw = sec.get(key, "").replace(",", " ").split()
    try:
        return [float(x) for x in raw]
    except ValueError:
        raise ConfigError(f"{path}.{key}", f"expected numbers, got {sec[key]!r}") from None


def _pairs(sec, key: str, path: str) -> list[tuple[float, float]]:
    out = []
    for item in sec.get(key, "").replace(",", " ").split():
        try:
            a, b = item.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"{path}.{key}", f"expected beta_a:beta_b pairs, got {item!r}") from None
    return out


def _density(sec, label: str, path: str) -> SubgroupDistribution:
    p = f"{path}.{label}"
    kind = sec.get(f"{label}_kind", "uniform").strip()
    lo = _num(sec, f"{label}_lo", path)
    hi = _num(sec, f"{label}_hi", path)
    try:
        if kind == "uniform":
            return SubgroupDistribution.uniform(lo, hi)
        if kind == "truncated_normal":
            return SubgroupDistribution.truncated_normal(_num(sec, f"{label}_mu", path),
                                                         _num(sec, f"{label}_sigma", path), lo, hi)
    except FairDynError as e:
        raise ConfigError(p, str(e)) from None
    raise ConfigError(f"{p}_kind", f"unknown distribution kind {kind!r}")


def _group(cp, name: str) -> GroupSpec:
    sec = cp[name]
    g0 = _num(sec, "g0", name)
    g1 = _num(sec, "g1", name, default=1.0 - g0)
    if not 0.0 <= g0 <= 1.0:
        raise ConfigError(f"{name}.g0", f"must lie in [0, 1], got {g0}")
    if abs(g0 + g1 - 1.0) > 1e-12:
        raise ConfigError(f"{name}.g1", f"g0 + g1 must equal 1, got {g0} + {g1}")
    f0, f1 = _density(sec, "f0", name), _density(sec, "f1", name)
    try:
        return GroupSpec(g0, g1, f0, f1)
    except FairDynError as e:
        raise ConfigError(f"{name}.supports", str(e)) from None


def _retention(sec) -> RetentionFn:
    kind = sec.get("retention", "one_minus_x").strip()
    try:
        if kind == "table":
            knots = _pairs(sec, "retention_table", "dynamics")
            return RetentionFn("table", tuple(knots))
        return RetentionFn(kind)
    except FairDynError as e:
        raise ConfigError("dynamics.retention", str(e)) from None


def _model(cp, seed_override: Optional[int]) -> DynamicsModel:
    sec = cp["dynamics"]
    kind = sec.get("kind", "accuracy").strip()
    if kind not in DYNAMICS_KINDS:
        raise ConfigError("dynamics.kind", f"unknown dynamics kind {kind!r}")
    seed = _num(sec, "seed", "dynamics", default=0, kind=int) if seed_override is None else seed_override
    ma = _num(sec, "arrival_mean_a", "dynamics", default=-1.0)
    mb = _num(sec, "arrival_mean_b", "dynamics", default=-1.0)
    try:
        return DynamicsModel(kind, _retention(sec), _num(sec, "beta_a", "dynamics"), _num(sec, "beta_b", "dynamics"),
                             seed, None if ma < 0 else ma, None if mb < 0 else mb)
    except ConfigError:
        raise
    except FairDynError as e:
        raise ConfigError("dynamics", str(e)) from None


def _init(cp) -> Optional[PopulationState]:
    if "init" not in cp:
        return None
    sec = cp["init"]
    mode = sec.get("mode", "near_empty").strip()
    if mode == "near_empty":
        return None
    if mode != "counts":
        raise ConfigError("init.mode", f"expected near_empty or counts, got {mode!r}")
    try:
        if "n_a0" in sec:
            return PopulationState.from_subgroups(*(_num(sec, k, "init") for k in ("n_a0", "n_a1", "n_b0", "n_b1")))
        return PopulationState(_num(sec, "n_a", "init"), _num(sec, "n_b", "init"))
    except ConfigError:
        raise
    except FairDynError as e:
        raise ConfigError("init", str(e)) from None


def _criteria(sec) -> tuple[Criterion, ...]:
    raw = sec.get("criteria", sec.get("criterion", "")).replace(",", " ").split()
    if not raw:
        raise ConfigError("experiment.criterion", "missing")
    try:
        return tuple(Criterion.parse(x) for x in raw)
    except FairDynError as e:
        raise ConfigError("experiment.criterion", str(e)) from None


def resolve_config(path: str) -> str:
    """Filesystem path, or the name of a bundled scenario with or without ``.cfg``."""
    if os.path.exists(path):
        return path
    name = os.path.basename(path)
    if not name.endswith(".cfg"):
        name += ".cfg"
    bundled = resources.files("fairdyn") / "configs" / name
    if bundled.is_file():
        return str(bundled)
    raise ConfigError("file", f"cannot read {path!r}")


def bundled_configs() -> list[str]:
    root = resources.files("fairdyn") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def load_config(path: str, seed: Optional[int] = None) -> ScenarioConfig:
    """Parse and validate a scenario file; every failure names its field."""
    real = resolve_config(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(real, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError("file", str(e)) from None
    for s in SECTIONS:
        if s not in cp and s != "init":
            raise ConfigError(s, "section missing")
    ga, gb = _group(cp, "group_a"), _group(cp, "group_b")
    model = _model(cp, seed)
    init = _init(cp)
    hs = cp["horizon"]
    try:
        conv = ConvergenceSpec(_num(hs, "eps", "horizon", default=1e-8), _num(hs, "window", "horizon", 10, int),
                               _num(hs, "max_steps", "horizon", 100_000, int),
                               _num(hs, "tail_fraction", "horizon", 0.2))
    except ConfigError:
        raise
    except FairDynError as e:
        raise ConfigError("horizon", str(e)) from None
    horizon_T = _num(hs, "T", "horizon", default=-1, kind=int)
    es = cp["experiment"]
    exp = es.get("type", "").strip()
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment.type", f"expected one of {', '.join(EXPERIMENTS)}, got {exp!r}")
    betas = _pairs(es, "betas", "experiment")
    if "beta_a_values" in es or "beta_b_values" in es:
        av, bv = _float_list(es, "beta_a_values", "experiment"), _float_list(es, "beta_b_values", "experiment")
        if not av or not bv:
            raise ConfigError("experiment.beta_a_values", "both beta_a_values and beta_b_values are needed")
        betas += [(a, b) for a in av for b in bv]
    if exp in ("sweep", "visited") and not betas:
        raise ConfigError("experiment.betas", f"{exp} needs at least one beta pair")
    if any(a < 0 or b < 0 for a, b in betas):
        raise ConfigError("experiment.betas", "arrival rates must be nonnegative")
    ratio = _num(es, "ratio", "experiment", default=-1.0)
    if exp == "oneshot" and "ratio" in es and not ratio > 0:
        raise ConfigError("experiment.ratio", f"must be positive, got {ratio}")
    if exp in ("visited", "tradeoff") and model.kind != "accuracy":
        raise ConfigError("dynamics.kind", f"{exp} experiments use accuracy dynamics")
    if exp == "quality" and model.kind != "arrival_coupled":
        raise ConfigError("dynamics.kind", "quality experiments use arrival_coupled dynamics")
    criteria = _criteria(es) if exp != "tradeoff" else (Criterion.SIMPLE, Criterion.EQLOS, Criterion.MINMAX)
    exp_seed = _num(es, "seed", "experiment", default=0, kind=int) if seed is None else seed
    name = es.get("name", os.path.splitext(os.path.basename(real))[0]).strip()
    extra = {}
    if exp == "quality":
        extra["large_beta"] = _num(es, "large_beta", "experiment", default=0.0)
    if exp == "tradeoff":
        extra["witness_criterion"] = Criterion.parse(es.get("witness_criterion", "Simple"))
    return ScenarioConfig(name, ga, gb, model, init, conv, None if horizon_T < 0 else horizon_T, exp, criteria,
                          tuple(betas), None if ratio <= 0 else ratio,
                          _num(es, "burn_in", "experiment", default=0, kind=int), exp_seed,
                          _num(es, "grid_points", "experiment", default=41, kind=int), extra)


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, str)):
        return str(v)
    return f"{float(v):.12g}"


def _write_rows(path: str, header: Sequence[str], rows) -> None:
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None


def emit_trajectory(traj: Trajectory, path: str) -> None:
    _write_rows(path, COLUMNS, traj.rows)


def emit_sweep(result: SweepResult, path: str) -> None:
    rows = [(c.beta_a, c.beta_b, c.final_alpha_a, c.final_theta_a, c.final_theta_b,
             c.final_loss_a, c.final_loss_b, c.converged) for c in result.cells]
    _write_rows(path, SWEEP_COLUMNS, rows)


def _write_json(path: str, payload) -> None:
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None


def _short(x: float) -> str:
    return f"{round(x, 2):g}"


def format_pair(pair) -> str:
    a, b = pair
    return f"({_short(a)},{_short(b)})"


def pair_json(pair: DecisionPair, ga: GroupSpec, gb: GroupSpec, alpha_a: float) -> dict:
    return {"criterion": pair.criterion.value, "theta_a": pair.theta_a, "theta_b": pair.theta_b,
            "loss_a": float(expected_loss(ga, pair.theta_a)), "loss_b": float(expected_loss(gb, pair.theta_b)),
            "alpha_a": alpha_a, "residual": pair.residual}


# ---------------------------------------------------------------- experiments

def _out(out_dir: str, *parts: str) -> str:
    return os.path.join(out_dir, "_".join(parts))


def _run_simulate(cfg: ScenarioConfig, out_dir: str, jobs) -> str:
    notes = []
    for c in cfg.criteria:
        traj = simulate(cfg.group_a, cfg.group_b, c, cfg.model, cfg.init, cfg.horizon_T, cfg.conv)
        emit_trajectory(traj, _out(out_dir, cfg.name, c.value + ".csv"))
        f = traj.final
        notes.append(f"{c.value}: {traj.stop_reason} after {len(traj)} rows, final alpha_a={f['alpha_a']:.6g}, "
                     f"pair={format_pair((f['theta_a'], f['theta_b']))}")
    return "; ".join(notes)


def _run_sweep(cfg: ScenarioConfig, out_dir: str, jobs) -> str:
    notes = []
    for c in cfg.criteria:
        res = sweep_final_proportion(cfg.group_a, cfg.group_b, c, cfg.model, cfg.betas, cfg.horizon_T,
                                     cfg.conv, jobs)
        emit_sweep(res, _out(out_dir, cfg.name, c.value + ".csv"))
        bad = [cell for cell in res.cells if cell.error]
        for cell in bad:
            print(f"cell ({cell.beta_a:g},{cell.beta_b:g}) failed: {cell.error}", file=sys.stderr)
        notes.append(f"{c.value}: {len(res.cells)} cells, {len(bad)} failed")
    return "; ".join(notes)


def _run_visited(cfg: ScenarioConfig, out_dir: str, jobs) -> str:
    payload, lines = [], []
    for c in cfg.criteria:
        table = uniform_decision_table(c, cfg.group_a, cfg.group_b)
        for ba, bb in cfg.betas:
            vd = visited_decisions(table, cfg.group_a, cfg.group_b, cfg.model.with_betas(ba, bb), cfg.init)
            listing = ", ".join(format_pair(p) for p in vd.pairs)
            lines.append(f"{c.value} beta=({ba:g},{bb:g}): [{listing}]")
            payload.append({"criterion": c.value, "beta_a": ba, "beta_b": bb,
                            "visits": [{"theta_a": p[0], "theta_b": p[1], "first_step": s} for p, s in vd.visits],
                            "extrapolated": table.extrapolated})
    _write_json(_out(out_dir, cfg.name, "visited.json"), payload)
    for line in lines:
        print(line)
    return f"{len(lines)} visited lists"


def _run_oneshot(cfg: ScenarioConfig, out_dir: str, jobs, ratio: Optional[float] = None) -> str:
    r = ratio if ratio is not None else cfg.ratio
    if r is None:
        raise ConfigError("experiment.ratio", "oneshot needs a ratio (config or --ratio)")
    alpha_a = r / (1.0 + r)
    out = [pair_json(one_shot(c, cfg.group_a, cfg.group_b, alpha_a, 1.0 - alpha_a), cfg.group_a, cfg.group_b, alpha_a)
           for c in cfg.criteria]
    print(json.dumps(out[0] if len(out) == 1 else out, sort_keys=True))
    return f"{len(out)} decision(s) at ratio {r:g}"


def _run_tradeoff(cfg: ScenarioConfig, out_dir: str, jobs) -> str:
    pts = tradeoff_curve(cfg.group_a, cfg.group_b, cfg.model, cfg.horizon_T, cfg.conv)
    _write_rows(_out(out_dir, cfg.name, "tradeoff.csv"), ("criterion", "avg_total_loss", "final_alpha_a", "converged"),
                [(p.criterion, p.avg_total_loss, p.final_alpha_a, p.converged) for p in pts])
    w = suboptimality_witness(cfg.group_a, cfg.group_b, cfg.extra["witness_criterion"], cfg.model, cfg.conv,
                              cfg.grid_points)
    _write_json(_out(out_dir, cfg.name, "witness.json"),
                {"found": w.found, "pair": w.pair, "pair_average": w.pair_average, "greedy_average": w.greedy_average})
    parts = [f"{p.criterion} avg_loss={p.avg_total_loss:.6g} alpha_a={p.final_alpha_a:.6g}" for p in pts]
    parts.append(f"witness {'found' if w.found else 'not found'}")
    return "; ".join(parts)


def _run_quality(cfg: ScenarioConfig, out_dir: str, jobs) -> str:
    from .empirics import quality_experiment

    T = cfg.horizon_T if cfg.horizon_T is not None else 100
    notes = []
    for c in cfg.criteria:
        model = cfg.model
        if c is Criterion.EQLOS and cfg.extra.get("large_beta", 0.0) > 0:
            model = model.with_betas(cfg.extra["large_beta"], cfg.extra["large_beta"])
        bayes, learned = quality_experiment(cfg.group_a, cfg.group_b, c, model, T, cfg.seed, cfg.init)
        emit_trajectory(bayes, _out(out_dir, cfg.name, c.value, "bayes.csv"))
        emit_trajectory(learned, _out(out_dir, cfg.name, c.value, "learned.csv"))
        tail = f", {learned.extinct_group} extinct" if learned.extinct_group else ""
        notes.append(f"{c.value}: bayes alpha_a={bayes.final['alpha_a']:.4g} "
                     f"learned alpha_a={learned.final['alpha_a']:.4g}{tail}")
    return "; ".join(notes)


_RUNNERS = {"simulate": _run_simulate, "sweep": _run_sweep, "visited": _run_visited,
            "oneshot": _run_oneshot, "tradeoff": _run_tradeoff, "quality": _run_quality}


def run(config_path: str, jobs: Optional[int] = None, out_dir: str = ".", seed: Optional[int] = None) -> int:
    try:
        cfg = load_config(config_path, seed)
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 1
    try:
        summary = _RUNNERS[cfg.experiment](cfg, out_dir, jobs)
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 1
    except (FairDynError, ArithmeticError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    print(f"{cfg.name} [{cfg.experiment}] {summary}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="fairdyn", description="Fair threshold decisions under population dynamics.")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment a scenario file describes")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
    p_run.add_argument("--out", default=".", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario's seeds")
    p_val = sub.add_parser("validate", help="check a scenario file without running it")
    p_val.add_argument("config")
    p_one = sub.add_parser("oneshot", help="print the one-shot decision for a weight ratio as JSON")
    p_one.add_argument("config")
    p_one.add_argument("--ratio", type=float, required=True, help="alpha_a / alpha_b")
    sub.add_parser("list", help="list bundled scenario files")
    args = ap.parse_args(argv)

    if args.command == "run":
        return run(args.config, args.jobs, args.out, args.seed)
    if args.command == "list":
        for name in bundled_configs():
            print(name)
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 1
    if args.command == "validate":
        print(f"{cfg.name}: ok ({cfg.experiment}, {', '.join(c.value for c in cfg.criteria)})")
        return 0
    if not args.ratio > 0:
        print("invalid config: --ratio: must be positive", file=sys.stderr)
        return 1
    try:
        _run_oneshot(cfg, ".", None, args.ratio)
    except FairDynError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
