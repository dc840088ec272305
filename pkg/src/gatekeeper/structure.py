"""Structural analysis of optimal transfer behavior.

The warm-vs-cold choice in congestion state (Q, A) reduces to comparing the
channel's average reward against a per-state threshold
(c_c - c_w) / [tau_w - 1 + (1-A)/a + Q/q]: below the threshold a warm
transfer is preferred, at or above it a cold transfer.  Sorting the four
thresholds partitions instances into five cases, each with a small set of
admissible decision rules.  This module also provides the threshold-policy
heuristic (continue up to a per-state attempt index, then transfer with a
per-state mode), a sufficient optimality condition with a risk-adjusted
shortest-processing-time flavor, and the study harness measuring the
heuristic's optimality gap on random instances.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .evaluate import average_reward_batch
from .model import (
    Action,
    CONGESTION_STATES,
    GeneratorConfig,
    ProblemInstance,
    StationaryPolicy,
    generate_instance,
    rules_table,
    validate_instance,
)

GAP_TOL = 1e-9  # relative gap below which the heuristic counts as optimal


@dataclass(frozen=True)
class TransferThresholds:
    """Per-congestion-state reward thresholds for preferring a cold transfer."""

    values: tuple[float, float, float, float]  # canonical (Q, A) order

    def value(self, q: int, a: int) -> float:
        return self.values[CONGESTION_STATES.index((q, a))]

    @property
    def ordering(self) -> tuple[tuple[int, int], ...]:
        """Congestion states sorted by ascending threshold (stable)."""
        order = sorted(range(4), key=lambda i: self.values[i])
        return tuple(CONGESTION_STATES[i] for i in order)


def compute_thresholds(inst: ProblemInstance) -> TransferThresholds:
    """Thresholds (c_c - c_w)/[tau_w - 1 + (1-A)/a + Q/q] per (Q, A).

    A zero denominator (tau_w = 1 observed with Q = 0, A = 1) means a warm
    transfer costs the agent no time at all, so the threshold is +inf: warm
    is preferred in that state at any reward level.
    """
    econ, tr = inst.econ, inst.traffic
    savings = econ.c_c - econ.c_w
    vals = []
    for qf, af in CONGESTION_STATES:
        denom = econ.tau_w - 1 + (1 - af) / tr.a + qf / tr.q
        vals.append(savings / denom if denom > 0 else math.inf)
    return TransferThresholds(tuple(vals))


@dataclass(frozen=True)
class CaseClassification:
    """Where the average reward falls among the four transfer thresholds."""

    case_label: str                                  # "1", "2", "3w"/"3c", "4", "5"
    preferred_mode: tuple[str, str, str, str]        # "warm"/"cold", canonical order
    admissible: tuple[str, ...]                      # rule labels, quality order

    def mode(self, q: int, a: int) -> str:
        return self.preferred_mode[CONGESTION_STATES.index((q, a))]


def classify_case(inst: ProblemInstance, r_star: float) -> CaseClassification:
    """Preferred transfer mode per state and the surviving decision rules.

    Cold is preferred in (Q, A) iff r_star >= threshold(Q, A).  A rule is
    admissible iff each of its transfer actions uses the preferred mode for
    that state (its continue entries are unconstrained).  The case label
    counts crossed thresholds; the middle case is tagged by which pure
    transfer rule survives (T3w when the (0,0) threshold is crossed first,
    T3c when (1,1) is), which flips with the sign of 1/q - 1/a.
    """
    if r_star < 0:
        raise ValueError("r_star must be nonnegative")
    th = compute_thresholds(inst)
    modes = tuple("cold" if r_star >= v else "warm" for v in th.values)
    crossed = sum(1 for v in th.values if r_star >= v)
    if crossed == 2:
        label = "3w" if th.value(0, 0) <= th.value(1, 1) else "3c"
    else:
        label = {0: "1", 1: "2", 3: "4", 4: "5"}[crossed]

    admissible = []
    for lbl, rule in rules_table().items():
        ok = True
        for qa, act in enumerate(rule.actions):
            if act is Action.WARM and modes[qa] != "warm":
                ok = False
            elif act is Action.COLD and modes[qa] != "cold":
                ok = False
        if ok:
            admissible.append(lbl)
    return CaseClassification(case_label=label, preferred_mode=modes, admissible=tuple(admissible))


@dataclass(frozen=True)
class WsptCheck:
    """Outcome of the risk-adjusted shortest-processing-time condition."""

    condition: str                 # "a" or "q" depending on which side binds
    holds: bool
    first_violation: Optional[int]  # attempt index X of the first failure

    @property
    def status(self) -> str:
        return f"holds-{self.condition}" if self.holds else "fails"


def check_wspt(inst: ProblemInstance) -> WsptCheck:
    """Sufficient condition for a threshold policy to be optimal.

    Requires the risk-adjusted processing times tau_X/rho_X to be
    nondecreasing in X, with each step bounded above:
    0 <= tau_X/rho_X - tau_{X-1}/rho_{X-1} <= (1/p)/rho_X
    + ((1-p)/p)(1-rho_{X-1})/rho_{X-1}, where p = a when 1/a > 1/q and p = q
    otherwise.  Later attempts may be neither sharply better (a falling ratio
    makes deferring transfers attractive, breaking the threshold shape) nor
    too much worse than the congestion-adjusted slack allows.  The weights
    depend on uncertainty only through conditional probabilities.
    """
    bad = validate_instance(inst)
    if bad:
        raise ValueError("invalid instance: " + "; ".join(bad))
    q, a = inst.traffic.q, inst.traffic.a
    tau, rho = inst.profile.tau, inst.profile.rho
    if 1 / a > 1 / q:
        cond, p = "a", a
    else:
        cond, p = "q", q
    for x in range(2, inst.S + 1):
        step = tau[x - 1] / rho[x - 1] - tau[x - 2] / rho[x - 2]
        slack = (1 / p) / rho[x - 1] + ((1 - p) / p) * (1 - rho[x - 2]) / rho[x - 2]
        if not 0.0 <= step <= slack:
            return WsptCheck(condition=cond, holds=False, first_violation=x)
    return WsptCheck(condition=cond, holds=True, first_violation=None)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Continue through attempt n(Q,A)-1, then transfer with mode(Q,A).

    n = S means never transfer in that state (the final attempt resolves).
    """

    n: tuple[int, int, int, int]          # canonical (Q, A) order
    mode: tuple[Action, Action, Action, Action]

    def as_policy(self, S: int) -> StationaryPolicy:
        from .model import DecisionRule

        rules = []
        for x in range(1, S):
            acts = tuple(
                self.mode[qa] if x >= self.n[qa] else Action.CONTINUE for qa in range(4)
            )
            rules.append(DecisionRule(acts))
        return StationaryPolicy(tuple(rules))


def is_threshold_policy(pol: StationaryPolicy) -> bool:
    """True iff per state the actions are Continue then a single fixed mode."""
    for qa in range(4):
        seen_transfer: Optional[Action] = None
        for rule in pol.rules:
            act = rule.actions[qa]
            if seen_transfer is None:
                if act is not Action.CONTINUE:
                    seen_transfer = act
            elif act is not seen_transfer:
                return False
    return True


@lru_cache(maxsize=None)
def _threshold_options(S: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct (n, mode) choices per congestion state: 2(S-1) + 1 of them."""
    ns, modes = [], []
    for n in range(1, S):
        for mode in (Action.WARM, Action.COLD):
            ns.append(n)
            modes.append(int(mode))
    ns.append(S)               # never transfer; mode irrelevant
    modes.append(int(Action.COLD))
    return np.array(ns), np.array(modes)


@lru_cache(maxsize=None)
def _threshold_grid(S: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All distinct threshold policies as an (P, S-1, 4) action array."""
    ns, modes = _threshold_options(S)
    k = len(ns)
    idx = np.indices((k, k, k, k)).reshape(4, -1).T  # (P, 4) option per state
    n_grid = ns[idx]
    mode_grid = modes[idx]
    P = idx.shape[0]
    acts = np.zeros((P, S - 1, 4), dtype=np.int8)
    for x in range(1, S):
        acts[:, x - 1, :] = np.where(x >= n_grid, mode_grid, int(Action.CONTINUE))
    return acts, n_grid, mode_grid


def search_threshold_policies(inst: ProblemInstance) -> tuple[StationaryPolicy, float]:
    """Best threshold policy by exhaustive search over S^4 indices x 2^4 modes.

    Duplicate (index, mode) combinations that induce the same policy are
    collapsed before evaluation, so at most (2S-1)^4 <= 16 S^4 policies are
    evaluated.  Runs in polynomial time in S, unlike the exponential
    enumeration of unrestricted policies.
    """
    bad = validate_instance(inst)
    if bad:
        raise ValueError("invalid instance: " + "; ".join(bad))
    S = inst.S
    if S == 1:
        pol = StationaryPolicy(())
        return pol, float(average_reward_batch(inst, np.zeros((1, 0, 4), dtype=np.int8))[0])
    acts, n_grid, mode_grid = _threshold_grid(S)
    R = average_reward_batch(inst, acts)
    best = int(np.argmax(R))  # first max: deterministic in the enumeration order
    tp = ThresholdPolicy(
        n=tuple(int(v) for v in n_grid[best]),
        mode=tuple(Action(int(v)) for v in mode_grid[best]),
    )
    return tp.as_policy(S), float(R[best])


@lru_cache(maxsize=None)
def _table1_grid(S: int) -> np.ndarray:
    """All 11^(S-1) policies over the admissible rules, as an action array."""
    import itertools

    rules = list(rules_table().values())
    rule_acts = np.array([[int(a) for a in rule.actions] for rule in rules], dtype=np.int8)
    combos = np.array(list(itertools.product(range(len(rules)), repeat=S - 1)), dtype=np.int32)
    return rule_acts[combos]


def _study_one(inst: ProblemInstance) -> tuple[bool, float]:
    """(threshold-optimal?, relative gap) against the admissible-rule optimum."""
    r_opt = float(average_reward_batch(inst, _table1_grid(inst.S)).max())
    acts, _, _ = _threshold_grid(inst.S)
    r_thr = float(average_reward_batch(inst, acts).max())
    gap = max(0.0, (r_opt - r_thr) / r_opt)
    return gap <= GAP_TOL, gap


def _study_chunk(cfg: GeneratorConfig, S: int, seeds: list[int]) -> tuple[int, float, float]:
    n_opt, gap_sum, gap_max = 0, 0.0, 0.0
    for seed in seeds:
        inst = generate_instance(replace(cfg, S=S, seed=seed))
        opt, gap = _study_one(inst)
        n_opt += opt
        gap_sum += gap
        gap_max = max(gap_max, gap)
    return n_opt, gap_sum, gap_max


@dataclass(frozen=True)
class StudyRow:
    S: int
    n_instances: int
    frac_threshold_opt: float
    mean_gap_pct: float
    max_gap_pct: float
    seed_lo: int
    seed_hi: int


@dataclass(frozen=True)
class StudyReport:
    rows: tuple[StudyRow, ...]

    def row_for(self, S: int) -> StudyRow:
        return next(r for r in self.rows if r.S == S)


def run_heuristic_study(
    cfg: GeneratorConfig, n_instances: int, S_list: list[int], jobs: int = 1
) -> StudyReport:
    """Threshold-heuristic quality over random instances, per attempt count.

    For each S, draws n_instances instances on consecutive seeds, compares
    the best threshold policy against exhaustive enumeration over the
    admissible rules, and reports the optimal fraction plus mean and max
    relative gap in percent.  Seed blocks are disjoint across S values so
    parallel chunks never collide.
    """
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    rows = []
    for si, S in enumerate(S_list):
        seed_lo = cfg.seed + si * n_instances
        seeds = list(range(seed_lo, seed_lo + n_instances))
        if jobs > 1:
            chunks = [seeds[i::jobs] for i in range(jobs)]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(_study_chunk, [cfg] * jobs, [S] * jobs, chunks))
        else:
            parts = [_study_chunk(cfg, S, seeds)]
        n_opt = sum(p[0] for p in parts)
        gap_sum = sum(p[1] for p in parts)
        gap_max = max(p[2] for p in parts)
        rows.append(
            StudyRow(
                S=S,
                n_instances=n_instances,
                frac_threshold_opt=n_opt / n_instances,
                mean_gap_pct=100.0 * gap_sum / n_instances,
                max_gap_pct=100.0 * gap_max,
                seed_lo=seed_lo,
                seed_hi=seed_lo + n_instances - 1,
            )
        )
    return StudyReport(rows=tuple(rows))
