"""Command-line entry point: every experiment as a subcommand over JSON configs.

Each run reads one JSON config, writes CSV artifacts plus a run manifest into
--out, and exits 0 on success, 2 on validation failure, 3 on non-convergence,
64 on an unknown subcommand.  Identical config and seed produce byte-identical
artifacts.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import market as mkt
from . import structure, waiting_room
from .artifacts import config_hash, fmt, write_csv, write_manifest
from .model import (
    CONGESTION_STATES,
    GeneratorConfig,
    ProblemInstance,
    instance_from_json,
    policy_from_names,
    validate_instance,
)
from .simulate import cross_validate
from .solve import (
    EnumerationCapError,
    backward_induction,
    enumerate_policies,
    solve_average_reward,
    stationary_terminals,
    verify_stationarity,
    zero_terminals,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_USAGE = 64

SUBCOMMANDS = (
    "solve",
    "enumerate",
    "stationarity",
    "classify",
    "wspt",
    "threshold-study",
    "queue-sweep",
    "design",
    "simulate",
)


class ValidationFailure(Exception):
    pass


class ConvergenceFailure(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    config: dict
    out_dir: Path
    seed: Optional[int] = None
    jobs: int = 1

    def seeded(self, default: int = 0) -> int:
        if self.seed is not None:
            return self.seed
        return int(self.config.get("seed", default))


def _load_instance(config: dict) -> ProblemInstance:
    if "instance" not in config:
        raise ValidationFailure("config must contain an 'instance' object")
    inst = instance_from_json(config["instance"])
    violations = validate_instance(inst)
    if violations:
        raise ValidationFailure("invalid instance: " + "; ".join(violations))
    return inst


def _comments(cfg: RunConfig) -> list[str]:
    return [f"config_sha256={config_hash(cfg.config)}", f"seed={cfg.seeded()}"]


def _run_solve(cfg: RunConfig) -> list[str]:
    inst = _load_instance(cfg.config)
    try:
        pol, ev = solve_average_reward(inst)
    except RuntimeError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    comments = _comments(cfg)

    rows = []
    for x in range(1, inst.S):
        rule = pol.rule_after(x)
        for (qf, af) in CONGESTION_STATES:
            rows.append((x, qf, af, rule.action(qf, af).name.lower(), rule.name))
    write_csv(cfg.out_dir / "policy.csv", ("X", "Q", "A", "action", "rule"), rows, comments)

    ev_rows = [("summary", "R", ev.R)]
    for key, val in ev.perf.to_json_dict().items():
        ev_rows.append(("summary", key, val))
    ev_rows += [("pi", lbl, p) for lbl, p, _ in ev.state_rows()]
    ev_rows += [("G", lbl, g) for lbl, _, g in ev.state_rows()]
    write_csv(cfg.out_dir / "evaluation.csv", ("section", "key", "value"), ev_rows, comments)

    cls = structure.classify_case(inst, ev.R)
    th = structure.compute_thresholds(inst)
    cls_rows = [
        (qf, af, th.value(qf, af), cls.mode(qf, af), cls.case_label)
        for (qf, af) in CONGESTION_STATES
    ]
    write_csv(cfg.out_dir / "classification.csv",
              ("Q", "A", "Rth", "preferred_mode", "case_label"), cls_rows, comments)
    return ["policy.csv", "evaluation.csv", "classification.csv"]


def _run_enumerate(cfg: RunConfig) -> list[str]:
    inst = _load_instance(cfg.config)
    ruleset = cfg.config.get("ruleset", "table-1")
    cap = int(cfg.config.get("cap", 10_000_000))
    top = cfg.config.get("top")
    ranked = enumerate_policies(inst, ruleset=ruleset, cap=cap)
    if top is not None:
        ranked = ranked[: int(top)]
    rows = [
        (rank + 1, "|".join(pol.names), R)
        for rank, (pol, R) in enumerate(ranked)
    ]
    write_csv(cfg.out_dir / "ranking.csv", ("rank", "policy", "R"), rows, _comments(cfg))
    return ["ranking.csv"]


def _run_stationarity(cfg: RunConfig) -> list[str]:
    inst = _load_instance(cfg.config)
    T = int(cfg.config.get("T", 200))
    pol, ev = solve_average_reward(inst)
    if cfg.config.get("terminals", "stationary") == "zero":
        terms = zero_terminals(inst)
    else:
        terms = stationary_terminals(inst, pol, ev)
    sol = backward_induction(inst, T, terms)
    stationary, first = verify_stationarity(sol)

    rows = []
    for t in range(1, T + 1):
        for x in range(1, inst.S):
            for qa, (qf, af) in enumerate(CONGESTION_STATES):
                rows.append((t, x, qf, af, ("continue", "warm", "cold")[sol.argmax[t, x - 1, qa]]))
    write_csv(cfg.out_dir / "argmax.csv", ("t", "X", "Q", "A", "action"), rows, _comments(cfg))
    outputs = ["argmax.csv"]
    if cfg.config.get("write_values", False):
        vrows = []
        for t in range(1, T + 2):
            for j, lbl in enumerate(sol.labels):
                vrows.append((t, lbl, sol.V[t, j]))
        write_csv(cfg.out_dir / "values.csv", ("t", "state", "V"), vrows, _comments(cfg))
        outputs.append("values.csv")
    verdict = "stationary" if stationary else f"violation at (t,X,Q,A)={first}"
    print(f"stationarity: {verdict}")
    return outputs


def _run_classify(cfg: RunConfig) -> list[str]:
    inst = _load_instance(cfg.config)
    if "r_star" in cfg.config:
        r_star = float(cfg.config["r_star"])
    else:
        r_star = solve_average_reward(inst)[1].R
    cls = structure.classify_case(inst, r_star)
    th = structure.compute_thresholds(inst)
    rows = [
        (qf, af, th.value(qf, af), cls.mode(qf, af), cls.case_label)
        for (qf, af) in CONGESTION_STATES
    ]
    write_csv(cfg.out_dir / "classification.csv",
              ("Q", "A", "Rth", "preferred_mode", "case_label"), rows, _comments(cfg))
    print(f"case {cls.case_label}; admissible rules: {', '.join(cls.admissible)}")
    return ["classification.csv"]


def _run_wspt(cfg: RunConfig) -> list[str]:
    inst = _load_instance(cfg.config)
    res = structure.check_wspt(inst)
    rows = [(res.condition, int(res.holds),
             res.first_violation if res.first_violation is not None else "")]
    write_csv(cfg.out_dir / "wspt.csv",
              ("condition", "holds", "first_violation"), rows, _comments(cfg))
    print(f"wspt: {res.status}")
    return ["wspt.csv"]


def _run_threshold_study(cfg: RunConfig) -> list[str]:
    gen = cfg.config.get("generator", {})
    seed = cfg.seed if cfg.seed is not None else int(cfg.config.get("seed", gen.get("seed", 0)))
    gen_cfg = GeneratorConfig(seed=seed, **{k: _tupled(v) for k, v in gen.items() if k != "seed"})
    n = int(cfg.config.get("n_instances", 100))
    s_list = [int(s) for s in cfg.config.get("S_list", [3])]
    report = structure.run_heuristic_study(gen_cfg, n, s_list, jobs=cfg.jobs)
    rows = [
        (row.S, row.n_instances, row.frac_threshold_opt, row.mean_gap_pct,
         row.max_gap_pct, row.seed_lo, row.seed_hi)
        for row in report.rows
    ]
    write_csv(cfg.out_dir / "study.csv",
              ("S", "n", "frac_threshold_opt", "mean_gap_pct", "max_gap_pct",
               "seed_lo", "seed_hi"), rows, _comments(cfg))
    return ["study.csv"]


def _tupled(value):
    return tuple(value) if isinstance(value, list) else value


def _load_queue_model(config: dict) -> waiting_room.QueueModel:
    if "queue" not in config:
        raise ValidationFailure("config must contain a 'queue' object")
    spec = config["queue"]
    base = waiting_room.default_queue_model()
    from .model import EconomicParams, ResolutionProfile

    model = waiting_room.QueueModel(
        N=int(spec.get("N", base.N)),
        profile=ResolutionProfile(tuple(spec.get("tau", base.profile.tau)),
                                  tuple(spec.get("rho", base.profile.rho))),
        econ=EconomicParams(r=float(spec.get("r", base.econ.r)), c_w=0.0,
                            c_c=float(spec.get("c_c", base.econ.c_c)), tau_w=1),
        q=float(spec.get("q", base.q)),
    )
    violations = waiting_room.validate_queue_model(model)
    if violations:
        raise ValidationFailure("invalid queue model: " + "; ".join(violations))
    return model


def _q_grid(config: dict) -> list[float]:
    grid = config.get("q_grid", {"start": 0.01, "stop": 1.0, "step": 0.01})
    if isinstance(grid, list):
        return [float(v) for v in grid]
    start, stop, step = grid["start"], grid["stop"], grid["step"]
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _run_queue_sweep(cfg: RunConfig) -> list[str]:
    model = _load_queue_model(cfg.config)
    grid = _q_grid(cfg.config)
    sweep = waiting_room.sweep_queue_policies(model, grid)
    comments = _comments(cfg) + [
        f"policies={len(sweep.policies)} q_points={len(sweep.q_grid)}"
    ]
    rows = [
        (rec["policy"], rec["q"], rec["profit"], rec["throughput"],
         rec["transfer_rate"], rec["blocking_rate"])
        for rec in sweep.records
    ]
    write_csv(cfg.out_dir / "sweep.csv",
              ("policy", "q", "profit", "throughput", "transfer_rate", "blocking_rate"),
              rows, comments)
    return ["sweep.csv"]


def _run_design(cfg: RunConfig) -> list[str]:
    inst = _load_instance(cfg.config) if "instance" in cfg.config else mkt.default_design_instance()
    market_spec = cfg.config.get("market", {})
    market = mkt.MarketParams(**{k: _tupled(v) for k, v in market_spec.items()})
    prefs = mkt.CustomerPrefs(**cfg.config.get("prefs", {}))
    bot_spec = cfg.config.get("bot", {})
    bot = mkt.BotChannel(p_succ=0.0, **{k: v for k, v in bot_spec.items() if k != "p_succ"})
    wage = cfg.config.get("wage")
    search = mkt.optimize_design(inst, market, prefs, bot, wage=wage)
    rows = [
        (res.design.k_agent, res.design.policy or "", res.design.p_succ, res.profit,
         res.q_per_agent, res.q_bot_effective, res.shares.agent, res.shares.bot_direct,
         res.shares.balk, res.converged)
        for res in search.results
    ]
    write_csv(cfg.out_dir / "design.csv",
              ("k", "policy", "p_succ", "profit", "q_agent", "q_bot",
               "share_agent", "share_bot", "share_balk", "converged"),
              rows, _comments(cfg))
    best = search.best
    print(
        f"best design: k={best.design.k_agent} policy={best.design.policy} "
        f"p_succ={best.design.p_succ} profit={fmt(best.profit)}"
    )
    if not best.converged:
        raise ConvergenceFailure("the best design's demand fixed point did not converge")
    return ["design.csv"]


def _run_simulate(cfg: RunConfig) -> list[str]:
    config = cfg.config
    horizon = int(config.get("horizon", 100_000))
    seed = cfg.seeded()
    targets = []
    for spec in config.get("targets", []):
        if "instance" in spec:
            inst = instance_from_json(spec["instance"])
            violations = validate_instance(inst)
            if violations:
                raise ValidationFailure("invalid instance: " + "; ".join(violations))
            pol = policy_from_names(spec["policy"])
            targets.append((inst, pol))
        elif "queue" in spec:
            model = _load_queue_model(spec)
            pol = waiting_room.queue_policy_from_label(spec["policy"])
            targets.append((model, pol))
        else:
            raise ValidationFailure("each target needs an 'instance' or 'queue' object")
    if not targets:
        raise ValidationFailure("config must list at least one target")
    reports = cross_validate(targets, horizon, seed)
    rows = [
        (rep.index, rep.kind, rep.analytic, rep.mean, rep.se, rep.passed)
        for rep in reports
    ]
    write_csv(cfg.out_dir / "sim.csv",
              ("target", "kind", "analytic", "mean", "se", "pass_3sigma"),
              rows, _comments(cfg))
    n_pass = sum(rep.passed for rep in reports)
    print(f"cross-validation: {n_pass}/{len(reports)} targets within 3 sigma")
    return ["sim.csv"]


_RUNNERS = {
    "solve": _run_solve,
    "enumerate": _run_enumerate,
    "stationarity": _run_stationarity,
    "classify": _run_classify,
    "wspt": _run_wspt,
    "threshold-study": _run_threshold_study,
    "queue-sweep": _run_queue_sweep,
    "design": _run_design,
    "simulate": _run_simulate,
}


def _apply_overrides(config: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ValidationFailure(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config


def usage() -> str:
    return (
        "usage: gatekeeper SUBCOMMAND --config PATH [--out DIR] [--seed U64] "
        "[--set key=value ...] [--jobs N]\n"
        "subcommands: " + ", ".join(SUBCOMMANDS)
    )


def run(cfg: RunConfig) -> int:
    """Dispatch a run; returns the process exit code and writes artifacts."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        outputs = _RUNNERS[cfg.subcommand](cfg)
    except (ValidationFailure, ValueError, EnumerationCapError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceFailure, RuntimeError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    write_manifest(cfg.out_dir, cfg.subcommand, cfg.config, cfg.seeded(), outputs)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(usage())
        return EXIT_OK
    sub = argv[0]
    if sub not in SUBCOMMANDS:
        print(usage(), file=sys.stderr)
        return EXIT_USAGE

    parser = argparse.ArgumentParser(prog=f"gatekeeper {sub}", add_help=True)
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--out", default="out", help="output directory for artifacts")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config entry (dotted keys)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    args = parser.parse_args(argv[1:])

    config_path = Path(args.config)
    if not config_path.exists():
        print(f"validation failure: config file {config_path} does not exist", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        config = json.loads(config_path.read_text(encoding="utf-8"))
        config = _apply_overrides(config, args.overrides)
    except (json.JSONDecodeError, ValidationFailure) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    cfg = RunConfig(
        subcommand=sub,
        config=config,
        out_dir=Path(args.out),
        seed=args.seed,
        jobs=max(1, args.jobs),
    )
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
