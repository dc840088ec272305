import numpy as np
import pytest

from gatekeeper import (
    EconomicParams,
    ProblemInstance,
    QueueModel,
    QueuePolicy,
    ResolutionProfile,
    TrafficParams,
    admissible_queue_policies,
    default_queue_model,
    evaluate_policy,
    evaluate_queue_policy,
    simulate_queue,
    sweep_queue_policies,
    uniform_policy,
)
from gatekeeper.waiting_room import queue_policy_from_label, validate_queue_model

GRID = [round(0.05 * i, 2) for i in range(1, 21)]


def test_model_validation():
    bad = QueueModel(N=-1, profile=ResolutionProfile((6, 15, 2), (0.7, 0.5, 1.0)),
                     econ=EconomicParams(r=-3.0, c_w=0.0, c_c=5.0, tau_w=1), q=1.4)
    msgs = validate_queue_model(bad)
    assert len(msgs) >= 4


def test_policy_constructors():
    assert QueuePolicy.never().label == "never"
    assert QueuePolicy.always().transfers(0)
    p = QueuePolicy.when_queue_at_least(3)
    assert not p.transfers(2) and p.transfers(3)
    assert queue_policy_from_label("qge3") == p
    with pytest.raises(ValueError):
        QueuePolicy.when_queue_at_least(0)


def test_admissible_policy_count():
    assert len(admissible_queue_policies(default_queue_model(N=6))) == 8
    labels = [p.label for p in admissible_queue_policies(default_queue_model(N=0))]
    assert labels == ["never", "always"]


def test_no_arrivals_means_no_profit():
    model = default_queue_model(N=4, q=0.0)
    ev = evaluate_queue_policy(model, QueuePolicy.never())
    assert ev.profit == 0.0
    assert ev.throughput == 0.0
    idle_idx = ev.states.index((("idle",), 0))
    assert ev.pi[idle_idx] == 1.0


def test_threshold_out_of_range_rejected():
    model = default_queue_model(N=2)
    with pytest.raises(ValueError):
        evaluate_queue_policy(model, QueuePolicy.when_queue_at_least(3))


class TestSaturation:
    def test_always_transfer_closed_form(self):
        model = default_queue_model(N=6, q=0.999)
        ev = evaluate_queue_policy(model, QueuePolicy.always())
        expect = (20.0 - 0.3 * 5.0) / 6.0
        assert abs(ev.profit - expect) / expect < 0.01

    def test_never_transfer_closed_form(self):
        model = default_queue_model(N=6, q=0.999)
        ev = evaluate_queue_policy(model, QueuePolicy.never())
        expect = 20.0 / (6.0 + 0.3 * 15.0)
        assert abs(ev.profit - expect) / expect < 0.01


def test_zero_capacity_reduces_to_base_channel():
    # N = 0 restricted to never/always must match the no-waiting-room chain
    for q in (0.1, 0.35, 0.6, 0.9):
        inst = ProblemInstance(
            profile=ResolutionProfile((6, 15), (0.7, 1.0)),
            econ=EconomicParams(r=20.0, c_w=0.0, c_c=5.0, tau_w=1),
            traffic=TrafficParams(q=q, a=0.5),
        )
        model = QueueModel(N=0, profile=inst.profile, econ=inst.econ, q=q)
        pairs = [("never", "C"), ("always", "T5")]
        for queue_label, rule_label in pairs:
            qv = evaluate_queue_policy(model, queue_policy_from_label(queue_label))
            cv = evaluate_policy(inst, uniform_policy(rule_label, 2))
            assert qv.profit == pytest.approx(cv.R, abs=1e-10)
            assert qv.throughput == pytest.approx(cv.perf.throughput, abs=1e-10)


class TestSweep:
    def test_crossing_between_never_and_always_exists(self):
        sweep = sweep_queue_policies(default_queue_model(N=6), GRID)
        diff = sweep.profit_for("always") - sweep.profit_for("never")
        assert diff[0] < 0 < diff[-1]

    def test_profit_nondecreasing_in_arrival_rate(self):
        sweep = sweep_queue_policies(default_queue_model(N=6), GRID)
        assert np.all(np.diff(sweep.profit, axis=1) >= -1e-10)

    def test_half_full_heuristic_near_best_average(self):
        sweep = sweep_queue_policies(default_queue_model(N=6), GRID)
        averages = sweep.profit.mean(axis=1)
        half_full = sweep.profit_for("qge3").mean()
        assert half_full >= 0.98 * averages.max()

    def test_waiting_room_weakly_helps(self):
        base = default_queue_model(N=6)
        with_room = sweep_queue_policies(base, GRID).profit.max(axis=0)
        without = sweep_queue_policies(
            QueueModel(N=0, profile=base.profile, econ=base.econ, q=base.q), GRID
        ).profit.max(axis=0)
        assert np.all(with_room >= without - 1e-10)

    def test_state_contingent_policies_share_saturation_asymptote(self):
        sweep = sweep_queue_policies(default_queue_model(N=6), [0.9999])
        always = sweep.profit_for("always")[0]
        for n in range(1, 7):
            assert sweep.profit_for(f"qge{n}")[0] == pytest.approx(always, rel=1e-3)

    def test_rejects_out_of_range_grid(self):
        with pytest.raises(ValueError):
            sweep_queue_policies(default_queue_model(), [0.0, 0.5])

    def test_records_match_matrix(self):
        sweep = sweep_queue_policies(default_queue_model(N=2), [0.2, 0.5])
        rec = {(r["policy"], r["q"]): r["profit"] for r in sweep.records}
        for i, lbl in enumerate(sweep.policies):
            for j, q in enumerate(sweep.q_grid):
                assert rec[(lbl, q)] == sweep.profit[i, j]


class TestQueueSimulator:
    def test_deterministic_in_seed(self):
        model = default_queue_model(N=3, q=0.4)
        a = simulate_queue(model, QueuePolicy.when_queue_at_least(2), 20_000, seed=9)
        b = simulate_queue(model, QueuePolicy.when_queue_at_least(2), 20_000, seed=9)
        assert a == b

    def test_three_sigma_agreement(self):
        for seed, (q, label) in enumerate([(0.3, "never"), (0.55, "qge2"), (0.8, "always"),
                                           (0.95, "qge1"), (0.5, "qge3")]):
            model = default_queue_model(N=3 if label != "qge3" else 4, q=q)
            pol = queue_policy_from_label(label)
            analytic = evaluate_queue_policy(model, pol).profit
            rep = simulate_queue(model, pol, 400_000, seed=seed)
            assert abs(rep.mean - analytic) <= 3.5 * rep.se

    def test_no_blocking_without_a_full_room(self):
        model = default_queue_model(N=6, q=0.2)
        rep = simulate_queue(model, QueuePolicy.always(), 50_000, seed=3)
        if rep.counts["max_queue"] < model.N:
            assert rep.counts["blocked"] == 0

    def test_counts_partition_arrivals(self):
        model = default_queue_model(N=4, q=0.7)
        rep = simulate_queue(model, QueuePolicy.when_queue_at_least(2), 30_000, seed=11)
        assert rep.counts["admitted"] + rep.counts["blocked"] == rep.counts["arrivals"]
