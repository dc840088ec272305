"""Optimal stationary policies and the finite-horizon recursion.

Policy iteration maximizes the long-run average reward over stationary
policies.  Its gain R* and relative values G also provide horizon-closing
terminal values, affine in R*, under which the finite-horizon optimal action
at every decision node is the stationary one for all t: the shift effectively
hands unfinished work to the next shift at a pro-rated value R*(T+1-t) +
G(state).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evaluate import (
    I0,
    I1,
    W0,
    W1,
    PolicyEvaluation,
    average_reward_batch,
    c_index,
    congestion_probs,
    evaluate_policy,
    n_states,
    state_labels,
)
from .model import (
    Action,
    CONGESTION_STATES,
    DecisionRule,
    ProblemInstance,
    StationaryPolicy,
    all_decision_rules,
    rules_table,
    uniform_policy,
    validate_instance,
)


class EnumerationCapError(RuntimeError):
    """Raised when an exhaustive enumeration would exceed the configured cap."""


def _action_values(inst: ProblemInstance, R: float, G: np.ndarray, x: int, qa: int):
    """(continue, warm, cold) values after failed attempt x in congestion state qa."""
    qf, af = CONGESTION_STATES[qa]
    p_qa = congestion_probs(inst)
    econ = inst.econ
    cont = -R * inst.profile.tau[x] + float(p_qa @ G[c_index(x + 1, 0):c_index(x + 1, 0) + 4])
    warm = (econ.r - econ.c_w) + float(G[W1 if af else W0])
    cold = (econ.r - econ.c_c) + float(G[I1 if qf else I0])
    return cont, warm, cold


def solve_average_reward(
    inst: ProblemInstance, tol: float = 1e-10, max_iter: int = 500
) -> tuple[StationaryPolicy, PolicyEvaluation]:
    """Policy iteration on the embedded decision chain.

    Starts from the always-cold policy (feasible and irreducible for any
    instance), alternates exact evaluation with greedy improvement at every
    failed-attempt node, and stops at an unimprovable policy.  Actions switch
    only on strict improvement; ties break Continue > Warm > Cold, so the
    iteration cannot cycle.
    """
    bad = validate_instance(inst)
    if bad:
        raise ValueError("invalid instance: " + "; ".join(bad))
    S = inst.S
    if S == 1:
        pol = StationaryPolicy(())
        return pol, evaluate_policy(inst, pol)

    pol = uniform_policy("T5", S)
    for _ in range(max_iter):
        ev = evaluate_policy(inst, pol)
        new_rules: list[DecisionRule] = []
        changed = False
        for x in range(1, S):
            rule = pol.rule_after(x)
            actions = list(rule.actions)
            for qa in range(4):
                vals = _action_values(inst, ev.R, ev.G, x, qa)
                cur = vals[int(actions[qa])]
                best_act = int(np.argmax(vals))  # argmax takes the first max: Continue > Warm > Cold
                if vals[best_act] > cur + tol:
                    actions[qa] = Action(best_act)
                    changed = True
            new_rules.append(DecisionRule(tuple(actions)) if tuple(actions) != rule.actions else rule)
        if not changed:
            return pol, ev
        pol = StationaryPolicy(tuple(new_rules))
    raise RuntimeError("policy iteration did not converge; improvement cycled")


def _relabeled(rule: DecisionRule) -> DecisionRule:
    """Attach the canonical table label when the action vector has one."""
    for lbl, table_rule in rules_table().items():
        if table_rule.actions == rule.actions:
            return table_rule
    return rule


def canonical_policy(pol: StationaryPolicy) -> StationaryPolicy:
    return StationaryPolicy(tuple(_relabeled(r) for r in pol.rules))


def enumerate_policies(
    inst: ProblemInstance, ruleset: str = "table-1", cap: int = 10_000_000
) -> list[tuple[StationaryPolicy, float]]:
    """Exhaustively evaluate every stationary policy over a rule set.

    ruleset "table-1" uses the 11 dominance-admissible rules; "all-81" uses
    every action vector.  Returns (policy, R) pairs ranked by R descending,
    ties broken lexicographically on the per-attempt rule names.
    """
    bad = validate_instance(inst)
    if bad:
        raise ValueError("invalid instance: " + "; ".join(bad))
    if ruleset == "table-1":
        rules = list(rules_table().values())
    elif ruleset == "all-81":
        rules = all_decision_rules()
    else:
        raise ValueError(f"unknown ruleset {ruleset!r}; use 'table-1' or 'all-81'")

    S = inst.S
    n_pol = len(rules) ** (S - 1)
    if n_pol > cap:
        raise EnumerationCapError(
            f"enumeration needs {n_pol} policy evaluations, above the cap {cap}; "
            f"raise the cap to at least {n_pol} to proceed"
        )

    if S == 1:
        pol = StationaryPolicy(())
        return [(pol, float(average_reward_batch(inst, np.zeros((1, 0, 4), dtype=np.int8))[0]))]

    rule_acts = np.array([[int(a) for a in rule.actions] for rule in rules], dtype=np.int8)
    combos = np.array(list(itertools.product(range(len(rules)), repeat=S - 1)), dtype=np.int32)
    acts = rule_acts[combos]  # (n_pol, S-1, 4)
    R = average_reward_batch(inst, acts)

    order = sorted(range(n_pol), key=lambda i: (-R[i], tuple(rules[j].name for j in combos[i])))
    return [
        (StationaryPolicy(tuple(rules[j] for j in combos[i])), float(R[i]))
        for i in order
    ]


@dataclass(frozen=True)
class TerminalConditions:
    """Horizon-closing values, affine in the reference rate r_ref.

    A lookup at any epoch t evaluates to r_ref*(T+1-t) + v_end[state]; beyond
    T+1 this prices actions that would overrun the horizon as a pro-rated
    handoff to the next shift rather than truncating them.
    """

    v_end: np.ndarray
    r_ref: float
    labels: tuple[str, ...]

    def value(self, t: int, T: int) -> np.ndarray:
        return self.r_ref * (T + 1 - t) + self.v_end


def stationary_terminals(
    inst: ProblemInstance, pol: StationaryPolicy, ev: PolicyEvaluation
) -> TerminalConditions:
    """Terminal conditions that make the finite-horizon optimum stationary.

    v_end is the relative-value vector of the optimal stationary policy and
    r_ref its average reward, so the horizon recursion reproduces the
    stationary decisions at every t.
    """
    return TerminalConditions(v_end=ev.G.copy(), r_ref=ev.R, labels=ev.labels)


def zero_terminals(inst: ProblemInstance) -> TerminalConditions:
    """All-zero terminal values (no credit for handed-off work)."""
    return TerminalConditions(
        v_end=np.zeros(n_states(inst.S)), r_ref=0.0, labels=state_labels(inst.S)
    )


@dataclass(frozen=True)
class FiniteHorizonSolution:
    """Backward-induction values V[t][state] for t = 1..T+1 and the chosen
    action at every decision node (t, X, (Q, A)) for t = 1..T."""

    V: np.ndarray        # (T+2, n); row 0 unused, row T+1 = terminal values
    argmax: np.ndarray   # (T+1, S-1, 4) int; row 0 unused
    T: int
    labels: tuple[str, ...]

    def value(self, t: int, label: str) -> float:
        return float(self.V[t, self.labels.index(label)])


def backward_induction(
    inst: ProblemInstance, T: int, terms: TerminalConditions
) -> FiniteHorizonSolution:
    """Finite-horizon optimal values under the given terminal conditions.

    Implements the per-state recursion of the service process: idle and
    holding states advance one period (or tau_1 / tau_w on admission and
    handoff); completed-attempt states resolve with probability rho_X and
    otherwise take the best of continue / warm / cold, where continuing
    prices the next attempt at a fresh congestion draw.  Chosen actions are
    recorded with tie-break order Continue > Warm > Cold (ties resolved
    within a relative tolerance so equal-valued nodes pick consistently).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    bad = validate_instance(inst)
    if bad:
        raise ValueError("invalid instance: " + "; ".join(bad))
    S = inst.S
    q, a = inst.traffic.q, inst.traffic.a
    tau = inst.profile.tau
    rho = inst.profile.rho
    r, c_w, c_c, tau_w = inst.econ.r, inst.econ.c_w, inst.econ.c_c, inst.econ.tau_w
    p_qa = congestion_probs(inst)

    n = n_states(S)
    V = np.zeros((T + 2, n))
    V[T + 1] = terms.v_end
    argmax = np.zeros((T + 1, max(S - 1, 0), 4), dtype=np.int8)

    def look(t: int) -> np.ndarray:
        return V[t] if t <= T + 1 else terms.value(t, T)

    for t in range(T, 0, -1):
        row = V[t]
        nxt = look(t + 1)
        row[I0] = (1 - q) * nxt[I0] + q * nxt[I1]
        row[I1] = float(p_qa @ look(t + tau[0])[c_index(1, 0):c_index(1, 0) + 4])
        row[W0] = (1 - a) * nxt[W0] + a * nxt[W1]
        after_handoff = look(t + tau_w)
        row[W1] = (1 - q) * after_handoff[I0] + q * after_handoff[I1]
        for x in range(1, S + 1):
            if x < S:
                cont_next = look(t + tau[x])[c_index(x + 1, 0):c_index(x + 1, 0) + 4]
                cont = float(p_qa @ cont_next)
            for qa, (qf, af) in enumerate(CONGESTION_STATES):
                resolve = r + row[I1 if qf else I0]
                if x == S:
                    row[c_index(x, qa)] = resolve
                    continue
                warm = (r - c_w) + row[W1 if af else W0]
                cold = (r - c_c) + row[I1 if qf else I0]
                vals = (cont, warm, cold)
                best = max(vals)
                near = 1e-9 * max(1.0, abs(best))
                act = next(i for i, v in enumerate(vals) if v >= best - near)
                argmax[t, x - 1, qa] = act
                row[c_index(x, qa)] = rho[x - 1] * resolve + (1 - rho[x - 1]) * best

    return FiniteHorizonSolution(V=V, argmax=argmax, T=T, labels=state_labels(S))


def verify_stationarity(
    sol: FiniteHorizonSolution,
) -> tuple[bool, Optional[tuple[int, int, int, int]]]:
    """True iff the chosen action at each (X, Q, A) is identical for every t.

    On failure returns the first (t, X, Q, A), scanning t ascending, whose
    action differs from the t = 1 choice.
    """
    if sol.argmax.shape[1] == 0:
        return True, None
    ref = sol.argmax[1]
    for t in range(2, sol.T + 1):
        if not np.array_equal(sol.argmax[t], ref):
            diff = np.argwhere(sol.argmax[t] != ref)[0]
            x, qa = int(diff[0]) + 1, int(diff[1])
            qf, af = CONGESTION_STATES[qa]
            return False, (t, x, qf, af)
    return True, None
