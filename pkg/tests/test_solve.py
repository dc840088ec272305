import dataclasses

import numpy as np
import pytest

from gatekeeper import (
    EconomicParams,
    EnumerationCapError,
    ProblemInstance,
    ResolutionProfile,
    TrafficParams,
    backward_induction,
    dominance_admissible,
    enumerate_policies,
    solve_average_reward,
    stationary_terminals,
    verify_stationarity,
    zero_terminals,
)
from gatekeeper.evaluate import I0, I1, W0, W1

from conftest import random_instance


def test_single_attempt_has_no_decisions(single_attempt):
    pol, ev = solve_average_reward(single_attempt)
    assert pol.n_decisions == 0
    q, tau1, r = single_attempt.traffic.q, single_attempt.profile.tau[0], single_attempt.econ.r
    assert ev.R == pytest.approx(r / (tau1 + (1 - q) / q), rel=1e-12)


def test_policy_iteration_matches_exhaustive_enumeration():
    for seed in range(60):
        inst = random_instance(seed, 2 + seed % 2)
        _, ev = solve_average_reward(inst)
        ranked = enumerate_policies(inst, ruleset="all-81")
        assert ev.R == pytest.approx(ranked[0][1], abs=1e-9 * max(1, ev.R))


def test_optimum_lies_in_admissible_rules():
    for seed in range(40):
        inst = random_instance(seed + 500, 2 + seed % 2)
        best_pol, _ = enumerate_policies(inst, ruleset="all-81")[0]
        assert all(dominance_admissible(rule) for rule in best_pol.rules)


def test_warm_never_chosen_when_it_saves_nothing():
    # equal fees plus a long handoff make warm transfers weakly dominated
    inst = ProblemInstance(
        profile=ResolutionProfile((5, 8, 6), (0.4, 0.5, 1.0)),
        econ=EconomicParams(r=25.0, c_w=6.0, c_c=6.0 + 1e-9, tau_w=50),
        traffic=TrafficParams(q=0.6, a=0.5),
    )
    pol, _ = solve_average_reward(inst)
    letters = "".join(rule.letters for rule in pol.rules)
    assert "w" not in letters


class TestEnumerate:
    def test_counts(self, saturated_two_attempt):
        assert len(enumerate_policies(saturated_two_attempt, "all-81")) == 81
        assert len(enumerate_policies(saturated_two_attempt, "table-1")) == 11

    def test_three_attempts_table_count(self):
        inst = random_instance(3, 3)
        assert len(enumerate_policies(inst, "table-1")) == 121

    def test_ranking_descending(self):
        inst = random_instance(8, 3)
        ranked = enumerate_policies(inst, "table-1")
        values = [r for _, r in ranked]
        assert values == sorted(values, reverse=True)

    def test_cap_refusal_names_requirement(self):
        inst = random_instance(4, 4)
        with pytest.raises(EnumerationCapError, match="1331"):
            enumerate_policies(inst, "table-1", cap=1000)

    def test_unknown_ruleset(self, saturated_two_attempt):
        with pytest.raises(ValueError):
            enumerate_policies(saturated_two_attempt, "everything")


class TestStationaryTerminals:
    def test_terminal_value_identities(self):
        for seed in (0, 5, 9):
            inst = random_instance(seed, 3)
            pol, ev = solve_average_reward(inst)
            terms = stationary_terminals(inst, pol, ev)
            q, a = inst.traffic.q, inst.traffic.a
            assert terms.v_end[I1] - terms.v_end[I0] == pytest.approx(terms.r_ref / q, abs=1e-9)
            assert terms.v_end[W1] - terms.v_end[W0] == pytest.approx(terms.r_ref / a, abs=1e-9)

    def test_affine_extension_beyond_horizon(self):
        inst = random_instance(2, 2)
        pol, ev = solve_average_reward(inst)
        terms = stationary_terminals(inst, pol, ev)
        T = 50
        np.testing.assert_allclose(terms.value(T + 3, T), terms.v_end - 2 * terms.r_ref)
        np.testing.assert_allclose(terms.value(T + 1, T), terms.v_end)


class TestBackwardInduction:
    def test_values_affine_under_stationary_terminals(self):
        # V[t] = R*(T+1-t) + G at every epoch, not only at the boundary
        for seed in range(25):
            inst = random_instance(seed + 40, 2 + seed % 3)
            pol, ev = solve_average_reward(inst)
            T = 40
            sol = backward_induction(inst, T, stationary_terminals(inst, pol, ev))
            for t in (1, 2, T // 2, T):
                expect = ev.R * (T + 1 - t) + ev.G
                np.testing.assert_allclose(sol.V[t], expect, atol=1e-8 * max(1, abs(ev.R) * T))

    def test_single_step_idle_recursion(self):
        inst = random_instance(12, 2)
        pol, ev = solve_average_reward(inst)
        terms = stationary_terminals(inst, pol, ev)
        sol = backward_induction(inst, 1, terms)
        q = inst.traffic.q
        expect = (1 - q) * terms.v_end[I0] + q * terms.v_end[I1]
        assert sol.V[1, I0] == pytest.approx(expect, rel=1e-12)

    def test_horizon_argmax_matches_stationary_policy(self):
        for seed in range(15):
            inst = random_instance(seed + 300, 3)
            pol, ev = solve_average_reward(inst)
            sol = backward_induction(inst, 30, stationary_terminals(inst, pol, ev))
            acts = np.array([[int(a) for a in rule.actions] for rule in pol.rules])
            assert np.array_equal(sol.argmax[1], acts)

    def test_terminal_perturbation_changes_a_choice(self):
        # bumping one terminal value by 10 r flips some action near the horizon
        inst = random_instance(21, 3)
        pol, ev = solve_average_reward(inst)
        terms = stationary_terminals(inst, pol, ev)
        base = backward_induction(inst, 30, terms)
        changed = False
        for j in range(len(terms.v_end)):
            bumped = terms.v_end.copy()
            bumped[j] += 10 * inst.econ.r
            sol = backward_induction(
                inst, 30, dataclasses.replace(terms, v_end=bumped)
            )
            if not np.array_equal(sol.argmax, base.argmax):
                changed = True
                break
        assert changed

    def test_rejects_bad_horizon(self, single_attempt):
        with pytest.raises(ValueError):
            backward_induction(single_attempt, 0, zero_terminals(single_attempt))


class TestVerifyStationarity:
    def test_stationary_under_matched_terminals(self):
        for seed in range(10):
            inst = random_instance(seed + 90, 2 + seed % 3)
            pol, ev = solve_average_reward(inst)
            sol = backward_induction(inst, 100, stationary_terminals(inst, pol, ev))
            ok, first = verify_stationarity(sol)
            assert ok and first is None

    def test_zero_terminals_distort_near_horizon(self):
        # with no credit for handed-off work, horizon-end actions shift for
        # any instance whose optimum is not all-warm
        violations = 0
        for seed in range(12):
            inst = random_instance(seed + 150, 3)
            sol = backward_induction(inst, 100, zero_terminals(inst))
            ok, first = verify_stationarity(sol)
            violations += not ok
        assert violations >= 6

    def test_single_attempt_vacuous(self, single_attempt):
        sol = backward_induction(single_attempt, 20, zero_terminals(single_attempt))
        ok, first = verify_stationarity(sol)
        assert ok and first is None


def test_monotone_value_in_attempt_index_when_profile_improves():
    # with nonincreasing tau and nondecreasing rho, completed-attempt values
    # rise with the attempt index (the request nears assured resolution)
    from gatekeeper.evaluate import c_index
    from gatekeeper.model import GeneratorConfig, generate_instance

    checked = 0
    for seed in range(200):
        inst = generate_instance(GeneratorConfig(seed=seed + 2000, S=4))
        tau = tuple(sorted(inst.profile.tau, reverse=True))
        rho = tuple(sorted(inst.profile.rho[:-1])) + (1.0,)
        inst = dataclasses.replace(inst, profile=ResolutionProfile(tau, rho))
        pol, ev = solve_average_reward(inst)
        sol = backward_induction(inst, 20, stationary_terminals(inst, pol, ev))
        for t in (1, 10):
            for qa in range(4):
                vals = [sol.V[t, c_index(x, qa)] for x in range(1, inst.S + 1)]
                assert all(b >= a - 1e-8 for a, b in zip(vals, vals[1:]))
        checked += 1
        if checked >= 40:
            break
