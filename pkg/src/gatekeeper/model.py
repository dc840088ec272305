"""Domain model for a gatekeeper service channel.

A channel is described by a resolution profile (an ordered list of attempts,
each with an integer processing time and a conditional success probability,
the last attempt always succeeding), the channel economics (revenue, warm and
cold transfer fees, handoff duration, wage) and the traffic environment
(per-period arrival and expert-availability probabilities).  After every
failed attempt the agent applies a decision rule mapping the observed
congestion state (Q, A) to one of three actions: continue with the next
attempt, warm transfer, or cold transfer.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

# Congestion states (Q, A) in canonical column order.  Q = 1 iff an arrival is
# waiting upstream, A = 1 iff an expert is available downstream.
CONGESTION_STATES: tuple[tuple[int, int], ...] = ((0, 0), (1, 0), (0, 1), (1, 1))
QA_INDEX = {qa: i for i, qa in enumerate(CONGESTION_STATES)}


class Action(IntEnum):
    """Action after a failed attempt. Enum order doubles as tie-break priority."""

    CONTINUE = 0
    WARM = 1
    COLD = 2

    @property
    def letter(self) -> str:
        return "nwc"[int(self)]


_ACTION_FROM_LETTER = {"n": Action.CONTINUE, "w": Action.WARM, "c": Action.COLD}


@dataclass(frozen=True)
class DecisionRule:
    """One action per congestion state, ordered as CONGESTION_STATES."""

    actions: tuple[Action, Action, Action, Action]
    label: Optional[str] = None

    def action(self, q: int, a: int) -> Action:
        return self.actions[QA_INDEX[(q, a)]]

    @property
    def letters(self) -> str:
        """Compact encoding, one of n/w/c per state (n = continue)."""
        return "".join(act.letter for act in self.actions)

    @property
    def name(self) -> str:
        return self.label if self.label is not None else self.letters

    @classmethod
    def from_letters(cls, letters: str, label: Optional[str] = None) -> "DecisionRule":
        if len(letters) != 4 or any(ch not in _ACTION_FROM_LETTER for ch in letters):
            raise ValueError(f"decision rule must be 4 letters from 'nwc', got {letters!r}")
        return cls(tuple(_ACTION_FROM_LETTER[ch] for ch in letters), label)


def _build_rules_table() -> dict[str, DecisionRule]:
    rows = [
        ("C", "nnnn"),
        ("H1", "nnww"),
        ("H2", "ncww"),
        ("H3", "ncwc"),
        ("H4", "ncnc"),
        ("T1", "wwww"),
        ("T2", "wcww"),
        ("T3w", "ccww"),
        ("T3c", "wcwc"),
        ("T4", "ccwc"),
        ("T5", "cccc"),
    ]
    return {label: DecisionRule.from_letters(s, label) for label, s in rows}


_RULES = _build_rules_table()
RULE_LABELS: tuple[str, ...] = tuple(_RULES)  # C first, T5 last (quality order)
_RULE_BY_LETTERS = {r.letters: r for r in _RULES.values()}


def rules_table() -> dict[str, DecisionRule]:
    """The 11 dominance-admissible decision rules, keyed by canonical label.

    Insertion order is the quality order: C (always continue) first, then the
    hybrid rules H1..H4, then the transfer rules T1..T5 with T5 (always cold)
    last.
    """
    return dict(_RULES)


def rule_quality_index(label: str) -> int:
    return RULE_LABELS.index(label)


def dominance_admissible(rule: DecisionRule) -> bool:
    """Mechanical dominance filter over a rule's four actions.

    A rule survives iff: for each A, warm (resp. continue) at (Q=1, A) implies
    warm (resp. continue) at (Q=0, A); and for each Q, cold (resp. continue)
    at (Q, A=1) implies cold (resp. continue) at (Q, A=0).
    """
    act = rule.action
    for a in (0, 1):
        if act(1, a) is Action.WARM and act(0, a) is not Action.WARM:
            return False
        if act(1, a) is Action.CONTINUE and act(0, a) is not Action.CONTINUE:
            return False
    for q in (0, 1):
        if act(q, 1) is Action.COLD and act(q, 0) is not Action.COLD:
            return False
        if act(q, 1) is Action.CONTINUE and act(q, 0) is not Action.CONTINUE:
            return False
    return True


def all_decision_rules() -> list[DecisionRule]:
    """All 81 action vectors; the 11 table rules keep their labels."""
    rules = []
    for combo in itertools.product(Action, repeat=4):
        letters = "".join(a.letter for a in combo)
        table_rule = _RULE_BY_LETTERS.get(letters)
        rules.append(table_rule if table_rule is not None else DecisionRule(tuple(combo)))
    return rules


@dataclass(frozen=True)
class StationaryPolicy:
    """One decision rule per attempt 1..S-1 (the final attempt always resolves)."""

    rules: tuple[DecisionRule, ...]

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    @property
    def n_decisions(self) -> int:
        return len(self.rules)

    def rule_after(self, x: int) -> DecisionRule:
        """Rule applied after failed attempt x (1-based)."""
        return self.rules[x - 1]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.rules)


def uniform_policy(rule: DecisionRule | str, S: int) -> StationaryPolicy:
    """The same rule after every attempt; `rule` may be a table label."""
    if isinstance(rule, str):
        rule = _RULES[rule]
    return StationaryPolicy(tuple([rule] * (S - 1)))


def policy_from_names(names: Sequence[str]) -> StationaryPolicy:
    """Build a policy from rule labels ("H2") and/or letter strings ("ncww")."""
    rules = []
    for name in names:
        if name in _RULES:
            rules.append(_RULES[name])
        elif name in _RULE_BY_LETTERS:
            rules.append(_RULE_BY_LETTERS[name])
        else:
            rules.append(DecisionRule.from_letters(name))
    return StationaryPolicy(tuple(rules))


@dataclass(frozen=True)
class ResolutionProfile:
    """Ordered attempt list: integer times tau and success probabilities rho."""

    tau: tuple[int, ...]
    rho: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "tau", tuple(int(t) for t in self.tau))
        object.__setattr__(self, "rho", tuple(float(p) for p in self.rho))

    @property
    def S(self) -> int:
        return len(self.tau)


@dataclass(frozen=True)
class EconomicParams:
    r: float
    c_w: float
    c_c: float
    tau_w: int
    c_wage: float = 0.0


@dataclass(frozen=True)
class TrafficParams:
    q: float  # per-period arrival probability
    a: float  # per-period expert-availability probability


@dataclass(frozen=True)
class ProblemInstance:
    profile: ResolutionProfile
    econ: EconomicParams
    traffic: TrafficParams

    @property
    def S(self) -> int:
        return self.profile.S

    def with_q(self, q: float) -> "ProblemInstance":
        return replace(self, traffic=replace(self.traffic, q=q))

    def to_json_dict(self) -> dict:
        """JSON form; tau/rho arrays are 0-based (index 0 = attempt 1)."""
        return {
            "profile": {"S": self.S, "tau": list(self.profile.tau), "rho": list(self.profile.rho)},
            "econ": {
                "r": self.econ.r,
                "c_w": self.econ.c_w,
                "c_c": self.econ.c_c,
                "tau_w": self.econ.tau_w,
                "c_wage": self.econ.c_wage,
            },
            "traffic": {"q": self.traffic.q, "a": self.traffic.a},
        }


def instance_from_json(data: dict) -> ProblemInstance:
    prof = data["profile"]
    if "S" in prof and int(prof["S"]) != len(prof["tau"]):
        raise ValueError("profile.S does not match len(profile.tau)")
    econ = data["econ"]
    traffic = data["traffic"]
    return ProblemInstance(
        profile=ResolutionProfile(tuple(prof["tau"]), tuple(prof["rho"])),
        econ=EconomicParams(
            r=float(econ["r"]),
            c_w=float(econ["c_w"]),
            c_c=float(econ["c_c"]),
            tau_w=int(econ["tau_w"]),
            c_wage=float(econ.get("c_wage", 0.0)),
        ),
        traffic=TrafficParams(q=float(traffic["q"]), a=float(traffic["a"])),
    )


def validate_instance(inst: ProblemInstance) -> list[str]:
    """Return every violated invariant as a human-readable message.

    An empty list means the instance is valid.  Violations are data, not
    exceptions, so callers can report all of them at once.
    """
    out: list[str] = []
    prof, econ, tr = inst.profile, inst.econ, inst.traffic
    S = prof.S
    if S < 1:
        out.append("profile must contain at least one attempt (S >= 1)")
        return out
    if len(prof.rho) != S:
        out.append("tau and rho must have the same length")
        return out
    for s, t in enumerate(prof.tau, start=1):
        if t < 1:
            out.append(f"tau[{s}] must be a positive integer")
    for s, p in enumerate(prof.rho[:-1], start=1):
        if not 0.0 < p <= 1.0:
            out.append(f"rho[{s}] must lie in (0, 1]")
    if prof.rho[-1] != 1.0:
        out.append("rho[S] must equal 1")
    if econ.r <= 0:
        out.append("r must be positive")
    if econ.c_w < 0:
        out.append("c_w must be nonnegative")
    if econ.c_c <= econ.c_w:
        out.append("c_c must exceed c_w")
    if econ.tau_w < 1:
        out.append("tau_w must be a positive integer")
    if econ.c_wage < 0:
        out.append("c_wage must be nonnegative")
    if not 0.0 < tr.q <= 1.0:
        out.append("q must lie in (0, 1]")
    if not 0.0 < tr.a <= 1.0:
        out.append("a must lie in (0, 1]")
    return out


@dataclass(frozen=True)
class GeneratorConfig:
    """Sampling ranges for the random instance generator.

    The defaults span all five threshold cases of the transfer classification
    in practice; heuristic-study statistics are interpreted relative to this
    generator.
    """

    seed: int
    S: int = 3
    tau_range: tuple[int, int] = (1, 20)
    rho_range: tuple[float, float] = (0.1, 0.9)
    q_range: tuple[float, float] = (0.05, 0.95)
    a_range: tuple[float, float] = (0.05, 0.95)
    r_range: tuple[float, float] = (5.0, 50.0)
    c_w_range: tuple[float, float] = (0.5, 10.0)
    cost_ratio_range: tuple[float, float] = (1.1, 3.0)
    tau_w_range: tuple[int, int] = (1, 5)


def _check_generator_config(cfg: GeneratorConfig) -> None:
    if cfg.seed < 0:
        raise ValueError("seed must be nonnegative")
    if cfg.S < 1:
        raise ValueError("S must be >= 1")
    for name in ("tau_range", "rho_range", "q_range", "a_range", "r_range",
                 "c_w_range", "cost_ratio_range", "tau_w_range"):
        lo, hi = getattr(cfg, name)
        if lo > hi:
            raise ValueError(f"{name} is empty: {lo} > {hi}")
    if cfg.tau_range[0] < 1 or cfg.tau_w_range[0] < 1:
        raise ValueError("processing times must be >= 1")
    if not (0.0 < cfg.rho_range[0] and cfg.rho_range[1] <= 1.0):
        raise ValueError("rho_range must lie in (0, 1]")
    for name in ("q_range", "a_range"):
        lo, hi = getattr(cfg, name)
        if not (0.0 < lo and hi <= 1.0):
            raise ValueError(f"{name} must lie in (0, 1]")
    if cfg.r_range[0] <= 0 or cfg.c_w_range[0] < 0:
        raise ValueError("r must be positive and c_w nonnegative")
    if cfg.cost_ratio_range[0] <= 1.0:
        raise ValueError("cold/warm cost ratio must exceed 1")


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based RNG; (seed, stream) pairs give independent streams.

    The same family backs the generator and every simulator, so seeds are
    portable across modules; parallel harnesses must use disjoint (seed,
    stream) pairs.
    """
    return np.random.Generator(np.random.Philox(key=(int(seed) & (2**64 - 1)) + (int(stream) << 64)))


def generate_instance(cfg: GeneratorConfig) -> ProblemInstance:
    """Draw one instance; deterministic in cfg.seed and always valid."""
    _check_generator_config(cfg)
    rng = rng_stream(cfg.seed)
    tau = rng.integers(cfg.tau_range[0], cfg.tau_range[1] + 1, size=cfg.S)
    rho = np.empty(cfg.S)
    rho[:-1] = rng.uniform(cfg.rho_range[0], cfg.rho_range[1], size=cfg.S - 1)
    rho[-1] = 1.0
    q = rng.uniform(*cfg.q_range)
    a = rng.uniform(*cfg.a_range)
    r = rng.uniform(*cfg.r_range)
    c_w = rng.uniform(*cfg.c_w_range)
    c_c = c_w * rng.uniform(*cfg.cost_ratio_range)
    tau_w = int(rng.integers(cfg.tau_w_range[0], cfg.tau_w_range[1] + 1))
    inst = ProblemInstance(
        profile=ResolutionProfile(tuple(int(t) for t in tau), tuple(rho)),
        econ=EconomicParams(r=r, c_w=c_w, c_c=c_c, tau_w=tau_w),
        traffic=TrafficParams(q=q, a=a),
    )
    violations = validate_instance(inst)
    if violations:  # pragma: no cover - generator enforces all invariants
        raise AssertionError(f"generator produced an invalid instance: {violations}")
    return inst
