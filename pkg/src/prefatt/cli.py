"""Command-line front end.

Every subcommand prints one JSON summary line on stdout and writes bulk data
to ``--out`` (CSV by default). Exit codes: 0 success, 2 configuration
error, 3 validation or assertion failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import hubs, process, rates, rules, theory
from .streams import DEFAULT_SEED, run_replicas

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3


class ConfigError(Exception):
    pass


class ValidationFailure(Exception):
    pass


# ----------------------------------------------------------------------------
# configuration and output

@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int
    threads: int | None
    out: Path
    fmt: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.fmt!r}")
        if self.params.get("replicas", 1) < 1:
            raise ConfigError("replicas must be >= 1")
        if self.params.get("n", 1) < 1:
            raise ConfigError("n must be >= 1")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _plain(v):
    """JSON-safe value: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def write_table(cfg: ExperimentConfig, name: str, header, rows) -> Path:
    rows = [[_plain(x) for x in r] for r in rows]
    if cfg.fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        path = cfg.out / f"{name}.csv"
        atomic_write(path, buf.getvalue())
    else:
        path = cfg.out / f"{name}.json"
        atomic_write(path, json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n")
    return path


def write_json(cfg: ExperimentConfig, name: str, payload) -> Path:
    path = cfg.out / f"{name}.json"
    atomic_write(path, json.dumps(_plain(payload), indent=1, sort_keys=True) + "\n")
    return path


def _rule(text: str) -> rules.AttachmentRule:
    try:
        rule = rules.parse_rule(text)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    report = rules.validate(rule)
    if not report.valid:
        raise ValidationFailure(f"invalid rule: {report.detail}")
    return rule


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def _checkpoints(text: str | None, n: int) -> list[int]:
    if text is None:
        return [n]
    cps = _int_list(text)
    if not cps or any(b <= a for a, b in zip(cps, cps[1:])):
        raise ConfigError("checkpoints must be strictly increasing")
    if cps[0] < 1 or cps[-1] > n:
        raise ConfigError("checkpoints must lie in [1, n]")
    return cps


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


# ----------------------------------------------------------------------------
# subcommands

def cmd_validate_rule(cfg, a):
    rule = rules.parse_rule(a.rule)
    report = rules.validate(rule, a.probe_bound)
    out = {"rule": rule.spec(), **report.to_dict()}
    if report.valid:
        out["preference"] = rules.classify_preference(rule).value
    if not report.valid:
        raise ValidationFailure(json.dumps(_plain(out)))
    return out


def predict_summary(rule: rules.AttachmentRule, n: int) -> dict:
    out = {"rule": rule.spec(), "n": n}
    pref = rules.classify_preference(rule)
    out["preference"] = pref.value
    out["psi_n"] = rules.psi(n)
    out["mu"] = [float(x) for x in theory.mu_array(rule, 9)]
    try:
        out["lambda"] = theory.lam(rule)
        out["eta"] = theory.domination_constant(rule)
    except theory.NotDominatedError as exc:
        out["lambda"] = None
        out["lambda_error"] = str(exc)
    if n >= 2:
        out["lln_degree"] = theory.lln_prediction(rule, n)
    if pref is rules.Preference.STRONG:
        out["varphi_infinity"] = rules.varphi_infinity(rule)
    try:
        desc = rules.regvar_asymptotics(rule)
    except ValueError:
        return out
    out["regvar"] = {"alpha": desc.alpha, "c": desc.c, "lbar": desc.lbar}
    if isinstance(rule, rules.PowerLaw) and n >= 2:
        out["power_law_degree"] = float(theory.power_law_form(rule.gamma, rule.alpha, n))
    if desc.alpha < 0.5:
        hp = theory.hub_prediction(desc.alpha, rule)
        clt = theory.clt_scaling(desc.alpha, desc.c, math.log(n) if n > 1 else 1.0, 1.0)
        out["clt"] = {"exponent": clt.exponent, "variance_at_1": clt.variance}
        out["hub"] = {
            "u_max": hp.u_max,
            "log_hub_index": float(hp.log_hub_index(n)) if n > 1 else 0.0,
            "max_offset": float(hp.natural_max_offset(n)) if n > 1 else 0.0,
        }
    return out


def cmd_predict(cfg, a):
    rule = _rule(a.rule)
    out = predict_summary(rule, a.n)
    write_json(cfg, "predict", out)
    return out


def cmd_simulate(cfg, a):
    rule = _rule(a.rule)
    cps = _checkpoints(a.checkpoints, a.n)
    runs = run_replicas(
        lambda s: process.simulate_distribution(rule, a.n, cps, s), cfg.seed, a.replicas, cfg.threads
    )
    rows = [(r, *row) for r, run in enumerate(runs) for st in run.states for row in st.rows()]
    write_table(cfg, "distribution", ["replica", "n", "k", "count"], rows)
    edges = [run.states[-1].total_edges for run in runs]
    return {"rule": rule.spec(), "n": a.n, "checkpoints": cps, "replicas": a.replicas,
            "mean_edges": float(np.mean(edges))}


def degree_dist_report(rule, n, checkpoints, replicas, seed, threads=None) -> dict:
    """TV(X(n), mu) per checkpoint averaged over replicas, plus mean proportions."""
    runs = run_replicas(
        lambda s: process.simulate_distribution(rule, n, checkpoints, s), seed, replicas, threads
    )
    tv_rows, k_rows = [], []
    for i, c in enumerate(checkpoints):
        states = [run.states[i] for run in runs]
        tvs = [theory.tv_to_limit(rule, st.proportions) for st in states]
        mean, se = _mean_se(tvs)
        tv_rows.append((c, mean, se))
        width = max(st.counts.size for st in states)
        props = np.zeros(width)
        for st in states:
            props[: st.counts.size] += st.proportions
        props /= replicas
        weights = theory.mu_array(rule, width - 1)
        k_rows += [(c, k, props[k], weights[k]) for k in range(width)]
    return {"tv": tv_rows, "per_k": k_rows}


def cmd_degree_dist(cfg, a):
    rule = _rule(a.rule)
    cps = _checkpoints(a.checkpoints, a.n)
    rep = degree_dist_report(rule, a.n, cps, a.replicas, cfg.seed, cfg.threads)
    write_table(cfg, "tv", ["n", "mean_tv", "se"], rep["tv"])
    write_table(cfg, "per_k", ["n", "k", "mean_proportion", "mu"], rep["per_k"])
    return {"rule": rule.spec(), "replicas": a.replicas,
            "tv": [{"n": n, "mean": m, "se": s} for n, m, s in rep["tv"]]}


def outdegree_report(rule, n, replicas, seed, threads=None) -> dict:
    """Outdegree law of vertices born in [n/2, n] against Poisson(lambda)."""
    try:
        lmbda = theory.lam(rule)
    except theory.NotDominatedError as exc:
        raise ValidationFailure(str(exc)) from exc
    if n < 2:
        raise ConfigError("n must be >= 2")
    first = max(2, math.ceil(n / 2))
    runs = run_replicas(
        lambda s: process.simulate_distribution(rule, n, None, s, record_outdegree=True),
        seed, replicas, threads,
    )
    sample = np.concatenate([run.outdegree[first : n + 1] for run in runs])
    counts = np.bincount(sample)
    emp = counts / sample.size
    kmax = max(emp.size - 1, int(lmbda + 10 * math.sqrt(lmbda) + 10))
    pois = theory.poisson_pmf(lmbda, kmax)
    tv = theory.total_variation(emp, pois, max(0.0, 1.0 - math.fsum(pois)))
    rows = [(k, int(counts[k]) if k < counts.size else 0, emp[k] if k < emp.size else 0.0, pois[k])
            for k in range(kmax + 1)]
    return {"lambda": lmbda, "tv": tv, "vertices": int(sample.size), "rows": rows}


def cmd_outdegree(cfg, a):
    rule = _rule(a.rule)
    rep = outdegree_report(rule, a.n, a.replicas, cfg.seed, cfg.threads)
    write_table(cfg, "outdegree", ["k", "count", "empirical", "poisson"], rep["rows"])
    return {"rule": rule.spec(), "n": a.n, "replicas": a.replicas, "lambda": rep["lambda"],
            "tv": rep["tv"], "vertices": rep["vertices"]}


def cmd_evolution(cfg, a):
    rule = _rule(a.rule)
    if not 1 <= a.m <= a.n:
        raise ConfigError("need 1 <= m <= n")
    evs = run_replicas(lambda s: process.simulate_vertex(rule, a.m, a.n, s), cfg.seed,
                       a.replicas, cfg.threads)
    if cfg.fmt == "json":
        atomic_write(cfg.out / "evolutions.jsonl", "".join(e.to_json() + "\n" for e in evs))
    else:
        rows = [(r, e.birth, int(j)) for r, e in enumerate(evs) for j in e.jumps]
        write_table(cfg, "evolutions", ["replica", "m", "jump_step"], rows)
    finals = np.array([e.final_degree for e in evs], dtype=float)
    artificial = np.asarray(rules.phi(rule, finals)) / rules.psi(a.n) if a.n > 1 else finals
    out = {"rule": rule.spec(), "m": a.m, "n": a.n, "replicas": a.replicas,
           "mean_degree": float(finals.mean())}
    if a.n >= 2:
        out["lln_degree"] = theory.lln_prediction(rule, a.n)
        out["mean_phi_over_psi"] = float(np.mean(artificial))
    return out


def cmd_clock(cfg, a):
    rule = _rule(a.rule)
    if not a.t_max > 0:
        raise ConfigError("t-max must be positive")
    procs = run_replicas(lambda s: process.sample_clock_process(rule, a.t_max, s), cfg.seed,
                         a.replicas, cfg.threads)
    rows = [(r, j, float(t)) for r, p in enumerate(procs)
            for j, t in enumerate(p.entry_times) if t <= a.t_max]
    write_table(cfg, "clock", ["replica", "j", "entry_time"], rows)
    jumps = [p.jumps_by(a.t_max) for p in procs]
    return {"rule": rule.spec(), "t_max": a.t_max, "replicas": a.replicas,
            "mean_jumps": float(np.mean(jumps)), "mean_Z": float(np.mean([p.Z(a.t_max) for p in procs]))}


def cmd_couple(cfg, a):
    rule = _rule(a.rule)
    lams = [float(x) for x in a.lambdas.split(",")]
    try:
        reals = run_replicas(
            lambda s: process.couple_occupation_times(rule, a.m, a.j_max, s), cfg.seed,
            a.replicas, cfg.threads,
        )
    except process.CouplingHorizonError as exc:
        raise ValidationFailure(str(exc)) from exc
    d = np.array([r.discrepancy for r in reals])
    write_table(cfg, "coupling", ["replica", "discrepancy"], list(enumerate(d)))
    Kc = reals[0].K
    bounds = []
    for lm in lams:
        hit = (d >= lm + math.sqrt(2 * Kc)).astype(float)
        p, se = _mean_se(hit)
        bounds.append({"lambda": lm, "probability": p, "se": se,
                       "bound": 4 * math.exp(-lm * lm / (2 * Kc))})
    return {"rule": rule.spec(), "m": a.m, "j_max": a.j_max, "replicas": a.replicas,
            "K": Kc, "mean_discrepancy": float(d.mean()), "tail": bounds}


def cmd_hub(cfg, a):
    rule = _rule(a.rule)
    trajs = run_replicas(lambda s: hubs.track_hub(rule, a.n, s, a.audit_every), cfg.seed,
                         a.replicas, cfg.threads)
    rows = [(r, *row) for r, t in enumerate(trajs) for row in t.rows()]
    write_table(cfg, "events", ["replica", "n", "hub", "maxdeg"], rows)
    out = {"rule": rule.spec(), "n": a.n, "replicas": a.replicas,
           "preference": rules.classify_preference(rule).value,
           "median_changes": float(np.median([t.change_count for t in trajs])),
           "audit_failures": int(sum(t.audit_failures for t in trajs))}
    if a.n >= 10:
        rep = hubs.persistence_experiment(rule, a.n, a.replicas, cfg.seed, cfg.threads)
        write_table(cfg, "persistence", ["replica", "n", "hub", "maxdeg", "ties"], rep.rows())
        out["persistence"] = rep.summary()
    if out["audit_failures"]:
        raise ValidationFailure(json.dumps(_plain(out)))
    return out


def cmd_race(cfg, a):
    rule = _rule(a.rule)
    if not 1 <= a.m < a.m_prime <= a.n:
        raise ConfigError("need 1 <= m < m-prime <= n")
    res = run_replicas(lambda s: hubs.race(rule, a.m, a.m_prime, a.n, s), cfg.seed,
                       a.replicas, cfg.threads)
    write_table(cfg, "race", ["replica", "degree", "degree_prime", "score"],
                [(i, r.degree, r.degree_prime, r.score) for i, r in enumerate(res)])
    est, se = _mean_se([r.score for r in res])
    return {"rule": rule.spec(), "m": a.m, "m_prime": a.m_prime, "n": a.n,
            "replicas": a.replicas, "estimate": est, "se": se,
            "ties": sum(r.tie for r in res)}


def cmd_rate(cfg, a):
    try:
        path = rates.PiecewisePath.from_csv(a.path)
        params = rates.RateParams(a.alpha, a.c, a.f0)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    window = None
    if a.window:
        lo, hi = (float(v) for v in a.window.split(","))
        window = (lo, hi)
    diag = {"breakpoints": int(path.t.size), "final_slope": float(path.slopes[-1]),
            "x0": path.limit_at_zero()}
    out = {"alpha": a.alpha, "c": a.c, "f0": a.f0}
    anchored = path.t[0] == 0 and path.x[0] == 0
    if anchored:
        out["J"] = rates.ldp_rate_J(path, a.alpha, window)
        out["K"] = rates.ldp_rate_K(path, a.f0)
        if math.isfinite(out["K"]):
            diag["kink"] = rates.fit_kink(path)
    else:
        out["J"] = out["K"] = None
        diag["note"] = "J and K need a path through (0, 0)"
    out["I"] = rates.mdp_rate_I(path, params)
    out["diagnostics"] = diag
    write_json(cfg, "rate", out)
    return out


def cmd_scaling(cfg, a):
    rule = _rule(a.rule)
    grid = _int_list(a.n_grid)
    try:
        table = hubs.hub_scaling_experiment(rule, grid, a.replicas, cfg.seed, cfg.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_table(cfg, "scaling", list(hubs.SCALING_COLUMNS), table.rows)
    return {"rule": rule.spec(), "replicas": a.replicas, "rows": table.as_dicts()}


# ----------------------------------------------------------------------------
# parser

SCHEMAS = {
    "validate-rule": "no files; summary holds the validation report",
    "predict": "predict.json: all closed-form predictions for the rule at horizon n",
    "simulate": "distribution.csv: replica,n,k,count (occupied k only)",
    "degree-dist": "tv.csv: n,mean_tv,se ; per_k.csv: n,k,mean_proportion,mu",
    "outdegree": "outdegree.csv: k,count,empirical,poisson",
    "evolution": "evolutions.csv: replica,m,jump_step (or evolutions.jsonl with --format json)",
    "clock": "clock.csv: replica,j,entry_time",
    "couple": "coupling.csv: replica,discrepancy",
    "hub": "events.csv: replica,n,hub,maxdeg ; persistence.csv: replica,n,hub,maxdeg,ties",
    "race": "race.csv: replica,degree,degree_prime,score",
    "rate": "rate.json: J,K,I,diagnostics",
    "scaling": "scaling.csv: " + ",".join(hubs.SCALING_COLUMNS),
}


def _env_seed() -> int:
    raw = os.environ.get("PREFATT_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"PREFATT_SEED must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (default: $PREFATT_SEED or {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: cores)")
    common.add_argument("--out", default="prefatt-out", help="output directory")
    common.add_argument("--format", dest="fmt", default="csv", choices=["csv", "json"])

    p = argparse.ArgumentParser(prog="prefatt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, helptext):
        return sub.add_parser(name, parents=[common], help=helptext,
                              epilog="output: " + SCHEMAS[name])

    s = add("validate-rule", "check an attachment rule")
    s.add_argument("--rule", required=True)
    s.add_argument("--probe-bound", type=int, default=10_000)

    s = add("predict", "closed-form predictions")
    s.add_argument("--rule", required=True)
    s.add_argument("--n", type=int, required=True)

    for name, helptext in (("simulate", "bucketed degree counts"),
                           ("degree-dist", "TV distance to the limit law")):
        s = add(name, helptext)
        s.add_argument("--rule", required=True)
        s.add_argument("--n", type=int, required=True)
        s.add_argument("--checkpoints", default=None, help="comma separated, increasing")
        s.add_argument("--replicas", type=int, default=1)

    s = add("outdegree", "outdegrees of late vertices vs Poisson(lambda)")
    s.add_argument("--rule", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--replicas", type=int, default=1)

    s = add("evolution", "jump histories of one vertex")
    s.add_argument("--rule", required=True)
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--replicas", type=int, default=1)

    s = add("clock", "exponential clock process")
    s.add_argument("--rule", required=True)
    s.add_argument("--t-max", type=float, required=True)
    s.add_argument("--replicas", type=int, default=1)

    s = add("couple", "quantile coupling of occupation times")
    s.add_argument("--rule", required=True)
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--j-max", type=int, required=True)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--lambdas", default="1,2")

    s = add("hub", "hub trajectory and persistence")
    s.add_argument("--rule", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--audit-every", type=int, default=100)

    s = add("race", "degree race between two vertices")
    s.add_argument("--rule", required=True)
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--m-prime", type=int, default=2)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--replicas", type=int, default=1)

    s = add("rate", "rate functionals of a piecewise-linear path")
    s.add_argument("--path", required=True, help="CSV of breakpoints t,x")
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--f0", type=float, default=1.0)
    s.add_argument("--window", default=None, help="lo,hi for J on a finite window")

    s = add("scaling", "hub age and max degree against theory")
    s.add_argument("--rule", required=True)
    s.add_argument("--n-grid", required=True, help="comma separated horizons")
    s.add_argument("--replicas", type=int, default=1)
    return p


COMMANDS = {
    "validate-rule": cmd_validate_rule,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "degree-dist": cmd_degree_dist,
    "outdegree": cmd_outdegree,
    "evolution": cmd_evolution,
    "clock": cmd_clock,
    "couple": cmd_couple,
    "hub": cmd_hub,
    "race": cmd_race,
    "rate": cmd_rate,
    "scaling": cmd_scaling,
}


def _emit(payload) -> None:
    print(json.dumps(_plain(payload), sort_keys=True))


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        seed = args.seed if args.seed is not None else _env_seed()
        params = {k: v for k, v in vars(args).items() if k in ("n", "replicas")}
        cfg = ExperimentConfig(args.command, seed, args.threads, Path(args.out), args.fmt, params)
        result = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"prefatt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print(f"prefatt: validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"prefatt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit({"command": args.command, "seed": seed, "status": "ok", **result})
    return EXIT_OK


def main() -> None:
    sys.exit(run())
