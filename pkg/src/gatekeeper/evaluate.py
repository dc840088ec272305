"""Exact evaluation of stationary policies on the embedded service chain.

The per-period service process embeds into a semi-Markov chain with
4 + 4S states: I0/I1 (agent idle, without/with an arrival), W0/W1 (agent
holding a warm transfer, expert unavailable/available) and C(X, Q, A)
(attempt X just completed under congestion (Q, A)).  Resolution and transfer
nodes have zero duration; every cycle passes through positive-duration
states, so the renewal-reward ratio over the embedded stationary distribution
gives the long-run average reward R, and the evaluation (Poisson) equations
anchored at G(I0) = 0 give the relative state values G.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    Action,
    CONGESTION_STATES,
    ProblemInstance,
    StationaryPolicy,
    validate_instance,
)

I0, I1, W0, W1 = 0, 1, 2, 3

_RESIDUAL_TOL = 1e-10


class EvaluationError(RuntimeError):
    """Raised when the chain's linear systems cannot be solved reliably."""


def n_states(S: int) -> int:
    return 4 + 4 * S


def c_index(x: int, qa: int) -> int:
    """Index of C(x, (Q,A)) with qa the CONGESTION_STATES position."""
    return 4 + 4 * (x - 1) + qa


def state_labels(S: int) -> tuple[str, ...]:
    labels = ["I0", "I1", "W0", "W1"]
    for x in range(1, S + 1):
        for q, a in CONGESTION_STATES:
            labels.append(f"C({x},{q},{a})")
    return tuple(labels)


def congestion_probs(inst: ProblemInstance) -> np.ndarray:
    """Fresh-draw probabilities of the four (Q, A) states, canonical order."""
    q, a = inst.traffic.q, inst.traffic.a
    return np.array([(1 - q) * (1 - a), q * (1 - a), (1 - q) * a, q * a])


@dataclass(frozen=True)
class EmbeddedChain:
    P: np.ndarray          # (n, n) transition matrix
    reward: np.ndarray     # per-state expected reward
    duration: np.ndarray   # per-state expected duration (periods)
    labels: tuple[str, ...]


def _check_policy(inst: ProblemInstance, pol: StationaryPolicy) -> None:
    S = inst.S
    if pol.n_decisions != S - 1:
        raise ValueError(
            f"policy must define rules for attempts 1..{S - 1}; "
            f"got {pol.n_decisions} rules (a rule at attempt {S} would allow an "
            f"unreachable Continue branch, since the final attempt always resolves)"
        )


def build_chain(inst: ProblemInstance, pol: StationaryPolicy) -> EmbeddedChain:
    """Embedded chain of the per-period process under a stationary policy."""
    bad = validate_instance(inst)
    if bad:
        raise ValueError("invalid instance: " + "; ".join(bad))
    _check_policy(inst, pol)

    S = inst.S
    q, a = inst.traffic.q, inst.traffic.a
    tau, rho = inst.profile.tau, inst.profile.rho
    r, c_w, c_c, tau_w = inst.econ.r, inst.econ.c_w, inst.econ.c_c, inst.econ.tau_w
    p_qa = congestion_probs(inst)

    n = n_states(S)
    P = np.zeros((n, n))
    reward = np.zeros(n)
    duration = np.zeros(n)

    # Idle, no arrival: wait one period, redraw the arrival.
    P[I0, I0] = 1 - q
    P[I0, I1] = q
    duration[I0] = 1.0
    # Idle with an arrival: attempt 1 runs tau_1 periods, fresh (Q, A) after.
    for j in range(4):
        P[I1, c_index(1, j)] = p_qa[j]
    duration[I1] = tau[0]
    # Holding a warm transfer, expert unavailable: wait one period.
    P[W0, W0] = 1 - a
    P[W0, W1] = a
    duration[W0] = 1.0
    # Expert available: handoff runs tau_w periods, then idle with fresh arrival.
    P[W1, I0] = 1 - q
    P[W1, I1] = q
    duration[W1] = tau_w

    for x in range(1, S + 1):
        for j, (qf, af) in enumerate(CONGESTION_STATES):
            i = c_index(x, j)
            idle = I1 if qf else I0
            p_res = rho[x - 1]
            P[i, idle] += p_res
            reward[i] += p_res * r
            if x == S:
                continue  # final attempt always resolves
            p_fail = 1 - p_res
            act = pol.rule_after(x).action(qf, af)
            if act is Action.CONTINUE:
                for jj in range(4):
                    P[i, c_index(x + 1, jj)] += p_fail * p_qa[jj]
                duration[i] += p_fail * tau[x]
            elif act is Action.WARM:
                P[i, W1 if af else W0] += p_fail
                reward[i] += p_fail * (r - c_w)
            else:
                P[i, idle] += p_fail
                reward[i] += p_fail * (r - c_c)

    return EmbeddedChain(P=P, reward=reward, duration=duration, labels=state_labels(S))


def _unreachable_states(P: np.ndarray, labels: tuple[str, ...], start: int = I0) -> list[str]:
    n = P.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(P[i] > 0)[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return [labels[i] for i in range(n) if not seen[i]]


def stationary_distribution(P: np.ndarray, labels: Optional[tuple[str, ...]] = None) -> np.ndarray:
    """Stationary distribution of a unichain transition matrix."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = np.max(np.abs(A @ pi - b))
    if resid > _RESIDUAL_TOL or np.min(pi) < -1e-12:
        lbl = labels or tuple(str(i) for i in range(n))
        raise EvaluationError(
            f"stationary distribution residual {resid:.2e} exceeds {_RESIDUAL_TOL:.0e}; "
            f"states unreachable from {lbl[I0]}: {_unreachable_states(P, lbl)}"
        )
    return np.clip(pi, 0.0, None)


@dataclass(frozen=True)
class PerformanceMeasures:
    """Customer-facing measures of a policy, per the embedded chain."""

    throughput: float   # admitted customers per period
    p_admit: float      # fraction of arrivals admitted
    p_resolve: float    # per-admitted-customer outcome probabilities ...
    p_warm: float
    p_cold: float
    t_channel: float    # expected periods an admitted customer spends in channel

    def to_json_dict(self) -> dict:
        return {
            "throughput": self.throughput,
            "p_admit": self.p_admit,
            "p_resolve": self.p_resolve,
            "p_warm": self.p_warm,
            "p_cold": self.p_cold,
            "t_channel": self.t_channel,
        }


@dataclass(frozen=True)
class PolicyEvaluation:
    R: float                  # average reward per period (wage excluded)
    G: np.ndarray             # relative state values, anchored G(I0) = 0
    pi: np.ndarray            # embedded-chain stationary distribution
    perf: PerformanceMeasures
    labels: tuple[str, ...]

    def g(self, label: str) -> float:
        return float(self.G[self.labels.index(label)])

    def to_json_dict(self) -> dict:
        return {
            "R": self.R,
            "G": {lbl: float(g) for lbl, g in zip(self.labels, self.G)},
            "pi": {lbl: float(p) for lbl, p in zip(self.labels, self.pi)},
            "perf": self.perf.to_json_dict(),
        }

    def state_rows(self) -> list[tuple[str, float, float]]:
        """(state, pi, G) rows for CSV export."""
        return [(lbl, float(p), float(g)) for lbl, p, g in zip(self.labels, self.pi, self.G)]


def _performance(inst: ProblemInstance, pol: StationaryPolicy, pi: np.ndarray,
                 duration: np.ndarray) -> PerformanceMeasures:
    S = inst.S
    rho = inst.profile.rho
    mean_dur = float(pi @ duration)
    admit_per_step = float(pi[I1])  # every admission enters I1 exactly once
    throughput = admit_per_step / mean_dur
    p_admit = throughput / inst.traffic.q

    res = warm = cold = 0.0
    for x in range(1, S + 1):
        for j, (qf, af) in enumerate(CONGESTION_STATES):
            p = float(pi[c_index(x, j)])
            res += p * rho[x - 1]
            if x < S:
                act = pol.rule_after(x).action(qf, af)
                if act is Action.WARM:
                    warm += p * (1 - rho[x - 1])
                elif act is Action.COLD:
                    cold += p * (1 - rho[x - 1])
    total = res + warm + cold
    if total <= 0:
        p_res = p_wrm = p_cld = 0.0
        t_channel = 0.0
    else:
        p_res, p_wrm, p_cld = res / total, warm / total, cold / total
        # Occupied time: everything except I0 idling (decision nodes have
        # zero duration; attempt/wait/handoff periods all carry the customer).
        occupied = mean_dur - float(pi[I0]) * duration[I0]
        t_channel = occupied / admit_per_step
    return PerformanceMeasures(
        throughput=throughput,
        p_admit=p_admit,
        p_resolve=p_res,
        p_warm=p_wrm,
        p_cold=p_cld,
        t_channel=t_channel,
    )


def evaluate_policy(inst: ProblemInstance, pol: StationaryPolicy) -> PolicyEvaluation:
    """Average reward, relative values, and performance of a stationary policy.

    R is the ratio of expected reward to expected duration under the embedded
    stationary distribution; G solves G = reward - R * duration + P G with
    G(I0) = 0.  Decisions depend only on differences of G, so the anchor is
    arbitrary; this one makes the idle/holding identities G(I1) - G(I0) = R/q
    and G(W1) - G(W0) = R/a read directly off the vector.
    """
    chain = build_chain(inst, pol)
    pi = stationary_distribution(chain.P, chain.labels)
    mean_dur = float(pi @ chain.duration)
    if mean_dur <= 0:
        raise EvaluationError("chain has zero mean duration; no recurrent time-consuming state")
    R = float(pi @ chain.reward) / mean_dur

    n = chain.P.shape[0]
    A = np.vstack([np.eye(n) - chain.P, np.zeros((1, n))])
    A[-1, I0] = 1.0
    b = np.concatenate([chain.reward - R * chain.duration, [0.0]])
    G, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = np.max(np.abs(A @ G - b))
    if resid > _RESIDUAL_TOL * max(1.0, float(np.max(np.abs(G)))):
        raise EvaluationError(
            f"relative-value system residual {resid:.2e}; "
            f"states unreachable from I0: {_unreachable_states(chain.P, chain.labels)}"
        )

    perf = _performance(inst, pol, pi, chain.duration)
    return PolicyEvaluation(R=R, G=G, pi=pi, perf=perf, labels=chain.labels)


# ---------------------------------------------------------------------------
# Fast renewal-cycle evaluator.
#
# Anchoring cycles at entries into I1 gives a closed recursion over attempts:
# starting attempt X earns expected reward W_X and consumes expected time D_X
# until the next admission, with transfers and resolutions followed by a
# geometric idle tail.  R = W_1 / D_1 exactly equals the chain ratio above;
# it is used for bulk policy enumeration where full evaluations would be slow.
# ---------------------------------------------------------------------------

def policy_actions(pol: StationaryPolicy) -> np.ndarray:
    """(S-1, 4) int array of actions, congestion states in canonical order."""
    return np.array([[int(act) for act in rule.actions] for rule in pol.rules], dtype=np.int8)


def average_reward_batch(inst: ProblemInstance, actions: np.ndarray) -> np.ndarray:
    """Average reward for a batch of policies given as an (P, S-1, 4) action array."""
    S = inst.S
    if actions.ndim != 3 or actions.shape[1] != S - 1 or actions.shape[2] != 4:
        raise ValueError(f"actions array must have shape (n, {S - 1}, 4)")
    q, a = inst.traffic.q, inst.traffic.a
    tau, rho = inst.profile.tau, inst.profile.rho
    r, c_w, c_c, tau_w = inst.econ.r, inst.econ.c_w, inst.econ.c_c, inst.econ.tau_w
    p_qa = congestion_probs(inst)

    idle_tail = (1 - q) / q                       # E[idle periods after release]
    idle_by_state = np.array([1 / q, 0.0, 1 / q, 0.0])   # given observed Q
    warm_by_state = np.array([1 / a, 1 / a, 0.0, 0.0]) + tau_w + idle_tail

    n_pol = actions.shape[0]
    W = np.full(n_pol, r)
    D = np.full(n_pol, tau[S - 1] + idle_tail, dtype=float)
    for x in range(S - 1, 0, -1):
        act = actions[:, x - 1, :]
        w_act = np.where(act == 0, W[:, None], np.where(act == 1, r - c_w, r - c_c))
        d_act = np.where(act == 0, D[:, None],
                         np.where(act == 1, warm_by_state[None, :], idle_by_state[None, :]))
        p_fail = 1 - rho[x - 1]
        W = rho[x - 1] * r + p_fail * (w_act @ p_qa)
        D = tau[x - 1] + rho[x - 1] * idle_tail + p_fail * (d_act @ p_qa)
    return W / D


def average_reward(inst: ProblemInstance, pol: StationaryPolicy) -> float:
    """Scalar renewal-cycle average reward of one policy."""
    _check_policy(inst, pol)
    if inst.S == 1:
        acts = np.zeros((1, 0, 4), dtype=np.int8)
    else:
        acts = policy_actions(pol)[None, :, :]
    return float(average_reward_batch(inst, acts)[0])
