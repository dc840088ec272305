"""Finite-waiting-room variant: two attempts, cold transfers only.

Arrivals that find the agent busy join a waiting room of capacity N (and are
blocked when it is full); after a failed first attempt the agent may cold
transfer, with the decision allowed to depend on Q, the number waiting plus
any same-period arrival.  Each admissible policy induces a per-period
discrete-time Markov chain whose stationary distribution yields profit per
period.  With N = 0 the chain reduces exactly to the no-waiting-room channel
restricted to the never/always-transfer rules.

Event order within a period: (1) arrival draw; (2) completion processing —
resolution draw, then the transfer decision using Q including the current
arrival; transfers are instantaneous; (3) a freed agent pulls the head of the
queue, else takes the current arrival directly; (4) an unconsumed arrival
joins the room if space remains, otherwise it is blocked; (5) one period of
service work elapses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .evaluate import stationary_distribution
from .model import EconomicParams, ResolutionProfile

IDLE = ("idle",)


@dataclass(frozen=True)
class QueueModel:
    N: int
    profile: ResolutionProfile
    econ: EconomicParams
    q: float

    @property
    def tau1(self) -> int:
        return self.profile.tau[0]

    @property
    def tau2(self) -> int:
        return self.profile.tau[1]

    @property
    def rho1(self) -> float:
        return self.profile.rho[0]

    def to_json_dict(self) -> dict:
        return {
            "N": self.N,
            "tau": list(self.profile.tau),
            "rho": list(self.profile.rho),
            "r": self.econ.r,
            "c_c": self.econ.c_c,
            "q": self.q,
        }


def validate_queue_model(model: QueueModel) -> list[str]:
    out = []
    if model.N < 0:
        out.append("N must be nonnegative")
    if model.profile.S != 2:
        out.append("waiting-room model requires exactly two attempts")
    elif model.profile.rho[-1] != 1.0:
        out.append("rho[2] must equal 1")
    if any(t < 1 for t in model.profile.tau):
        out.append("attempt times must be positive integers")
    if model.econ.r <= 0:
        out.append("r must be positive")
    if model.econ.c_c < 0:
        out.append("c_c must be nonnegative")
    if not 0.0 <= model.q <= 1.0:
        out.append("q must lie in [0, 1]")
    return out


def default_queue_model(N: int = 6, q: float = 0.5) -> QueueModel:
    """Default parameterization used for the policy sweeps."""
    return QueueModel(
        N=N,
        profile=ResolutionProfile((6, 15), (0.7, 1.0)),
        econ=EconomicParams(r=20.0, c_w=0.0, c_c=5.0, tau_w=1),
        q=q,
    )


@dataclass(frozen=True)
class QueuePolicy:
    """Admissible queue policies: never, always, or transfer when Q >= n."""

    kind: str               # "never" | "always" | "qge"
    n: int = 0

    @classmethod
    def never(cls) -> "QueuePolicy":
        return cls("never")

    @classmethod
    def always(cls) -> "QueuePolicy":
        return cls("always")

    @classmethod
    def when_queue_at_least(cls, n: int) -> "QueuePolicy":
        if n < 1:
            raise ValueError("threshold n must be >= 1")
        return cls("qge", n)

    def transfers(self, q_obs: int) -> bool:
        if self.kind == "never":
            return False
        if self.kind == "always":
            return True
        return q_obs >= self.n

    @property
    def label(self) -> str:
        return self.kind if self.kind != "qge" else f"qge{self.n}"


def queue_policy_from_label(label: str) -> QueuePolicy:
    if label == "never":
        return QueuePolicy.never()
    if label == "always":
        return QueuePolicy.always()
    if label.startswith("qge"):
        return QueuePolicy.when_queue_at_least(int(label[3:]))
    raise ValueError(f"unknown queue policy {label!r}")


def admissible_queue_policies(model: QueueModel) -> list[QueuePolicy]:
    """never, always, and one threshold policy per 1 <= n <= N."""
    pols = [QueuePolicy.never(), QueuePolicy.always()]
    pols += [QueuePolicy.when_queue_at_least(n) for n in range(1, model.N + 1)]
    return pols


def _check_policy(model: QueueModel, pol: QueuePolicy) -> None:
    if pol.kind == "qge" and not 1 <= pol.n <= model.N:
        raise ValueError(f"threshold n={pol.n} outside 1..N={model.N}")
    if pol.kind not in ("never", "always", "qge"):
        raise ValueError(f"unknown policy kind {pol.kind!r}")


def queue_states(model: QueueModel) -> list[tuple]:
    """States (activity, n_wait) at a period boundary.

    activity is idle, ("pend", k) with the completion decision due, or
    ("busy", k, j) with j work periods remaining.
    """
    acts: list[tuple] = [IDLE, ("pend", 1), ("pend", 2)]
    acts += [("busy", 1, j) for j in range(1, model.tau1)]
    acts += [("busy", 2, j) for j in range(1, model.tau2)]
    return [(act, w) for act in acts for w in range(model.N + 1)]


def _start_service(tau: int, attempt: int) -> tuple:
    return ("pend", attempt) if tau == 1 else ("busy", attempt, tau - 1)


@dataclass(frozen=True)
class QueueEvaluation:
    pi: np.ndarray
    states: tuple[tuple, ...]
    profit: float          # per period, wage excluded
    throughput: float      # admissions per period
    transfer_rate: float
    blocking_rate: float
    resolve_rate: float


def evaluate_queue_policy(model: QueueModel, pol: QueuePolicy) -> QueueEvaluation:
    """Stationary per-period profit and rates of one admissible policy."""
    bad = validate_queue_model(model)
    if bad:
        raise ValueError("invalid queue model: " + "; ".join(bad))
    _check_policy(model, pol)
    states = queue_states(model)
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    q, r, c_c = model.q, model.econ.r, model.econ.c_c
    rho1, tau1, tau2 = model.rho1, model.tau1, model.tau2

    P = np.zeros((n, n))
    reward = np.zeros(n)
    admit = np.zeros(n)
    transfer = np.zeros(n)
    block = np.zeros(n)
    resolve = np.zeros(n)

    def apply(i: int, p: float, activity: tuple, n_wait: int, arrival: bool,
              rew: float, res: int, tra: int) -> None:
        adm = blk = 0
        free = activity == IDLE
        if free:
            if n_wait > 0:
                n_wait -= 1
                activity = _start_service(tau1, 1)
            elif arrival:
                arrival = False
                adm = 1
                activity = _start_service(tau1, 1)
        if arrival:
            if n_wait < model.N:
                n_wait += 1
                adm = 1
            else:
                blk = 1
        P[i, index[(activity, n_wait)]] += p
        reward[i] += p * rew
        admit[i] += p * adm
        transfer[i] += p * tra
        block[i] += p * blk
        resolve[i] += p * res

    for i, (activity, n_wait) in enumerate(states):
        for arrival, p_arr in ((True, q), (False, 1 - q)):
            if p_arr == 0.0:
                continue
            if activity == IDLE:
                apply(i, p_arr, IDLE, n_wait, arrival, 0.0, 0, 0)
            elif activity[0] == "pend" and activity[1] == 1:
                if rho1 > 0:
                    apply(i, p_arr * rho1, IDLE, n_wait, arrival, r, 1, 0)
                if rho1 < 1:
                    q_obs = n_wait + (1 if arrival else 0)
                    if pol.transfers(q_obs):
                        apply(i, p_arr * (1 - rho1), IDLE, n_wait, arrival, r - c_c, 0, 1)
                    else:
                        apply(i, p_arr * (1 - rho1), _start_service(tau2, 2), n_wait,
                              arrival, 0.0, 0, 0)
            elif activity[0] == "pend":
                apply(i, p_arr, IDLE, n_wait, arrival, r, 1, 0)
            else:
                _, k, j = activity
                nxt = ("pend", k) if j == 1 else ("busy", k, j - 1)
                apply(i, p_arr, nxt, n_wait, arrival, 0.0, 0, 0)

    if q == 0.0:
        pi = np.zeros(n)
        pi[index[(IDLE, 0)]] = 1.0
    else:
        labels = tuple(f"{act}/{w}" for act, w in states)
        pi = stationary_distribution(P, labels)

    return QueueEvaluation(
        pi=pi,
        states=tuple(states),
        profit=float(pi @ reward),
        throughput=float(pi @ admit),
        transfer_rate=float(pi @ transfer),
        blocking_rate=float(pi @ block),
        resolve_rate=float(pi @ resolve),
    )


@dataclass(frozen=True)
class SweepResult:
    policies: tuple[str, ...]
    q_grid: tuple[float, ...]
    profit: np.ndarray        # (n_policies, n_q)
    records: tuple[dict, ...]  # flat rows for CSV export

    def profit_for(self, label: str) -> np.ndarray:
        return self.profit[self.policies.index(label)]


def sweep_queue_policies(model: QueueModel, q_grid: Iterable[float]) -> SweepResult:
    """Evaluate every admissible policy across an arrival-intensity grid."""
    grid = tuple(float(v) for v in q_grid)
    if any(not 0.0 < v <= 1.0 for v in grid):
        raise ValueError("q_grid values must lie in (0, 1]")
    pols = admissible_queue_policies(model)
    profit = np.zeros((len(pols), len(grid)))
    records = []
    for pi_, pol in enumerate(pols):
        for qi, qv in enumerate(grid):
            ev = evaluate_queue_policy(
                QueueModel(N=model.N, profile=model.profile, econ=model.econ, q=qv), pol
            )
            profit[pi_, qi] = ev.profit
            records.append(
                {
                    "policy": pol.label,
                    "q": qv,
                    "profit": ev.profit,
                    "throughput": ev.throughput,
                    "transfer_rate": ev.transfer_rate,
                    "blocking_rate": ev.blocking_rate,
                }
            )
    return SweepResult(
        policies=tuple(p.label for p in pols),
        q_grid=grid,
        profit=profit,
        records=tuple(records),
    )
