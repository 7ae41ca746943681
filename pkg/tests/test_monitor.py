"""Behavior extraction from logs, tri-state task verdicts, and the
guarantee checks; verdicts must be pure functions of the recorded data
and stable under sample-rate refinement."""

import numpy as np
import pytest

from ltlcoord.graph import EdgeSet, complete_edges
from ltlcoord.monitor import (
    INCONCLUSIVE,
    SATISFIED,
    VIOLATED,
    Behavior,
    check_guarantees,
    check_satisfaction,
    evaluate_run,
    extract_behavior,
)
from ltlcoord.planner import PlanStep, PrefixSuffixPlan
from ltlcoord.simulator import COUNTERS_ADVANCED, SERVICES_PROVIDED, SimEvent, TrajectoryLog

from helpers import five_sim, single_sim


def make_log(
    times,
    x,
    events=(),
    plans=None,
    points=None,
    radii=None,
    d_con=None,
    e0_pairs=None,
    lyap=None,
    seg=None,
    a_hat=None,
    priorities=None,
    h=0.005,
    decimation=0.5,
    aborted=False,
    abort_reason="",
):
    """A hand-built log with only the fields the monitor reads filled in."""
    times = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    S, N, D = x.shape
    if points is None:
        points = {"c1": np.zeros(D)}
    if radii is None:
        radii = np.ones(N)
    if d_con is None:
        d_con = np.full(N, 4.0)
    e0 = EdgeSet(N, tuple(e0_pairs) if e0_pairs else ())
    edges = complete_edges(N, e0)
    if lyap is None:
        lyap = np.linspace(1.0, 0.5, max(S, 2))
    lyap = np.asarray(lyap, dtype=float)
    if seg is None:
        seg = np.zeros(len(lyap), dtype=np.int64)
    if a_hat is None:
        a_hat = np.zeros((S, N))
    a_hat = np.asarray(a_hat, dtype=float)
    m_all, m0 = len(edges), len(e0)
    return TrajectoryLog(
        h=h,
        decimation=decimation,
        t_end=float(times[-1]),
        times=times,
        x=x,
        v=np.zeros_like(x),
        a_hat=a_hat,
        mode=np.zeros((S, N), dtype=np.int8),
        s=np.ones((S, N), dtype=np.int64),
        kappa=np.ones((S, N), dtype=np.int64),
        beta_col=np.ones((S, m_all)),
        beta_con=np.ones((S, m0)),
        gamma=np.zeros((S, N)),
        lyapunov=lyap[:S],
        lyap_steps=lyap,
        lyap_segment=np.asarray(seg, dtype=np.int64),
        min_beta_col=np.ones(m_all),
        min_beta_con=np.ones(m0),
        events=list(events),
        e0=e0,
        edges=edges,
        points=dict(points),
        radii=np.asarray(radii, dtype=float),
        d_con=np.asarray(d_con, dtype=float),
        priorities=tuple(priorities) if priorities else tuple(range(1, N + 1)),
        plans=tuple(plans) if plans is not None else (None,) * N,
        aborted=aborted,
        abort_reason=abort_reason,
    )


def crossing_log(inside, events=(), **kw):
    """Single agent on a 0.5 s grid; ``inside[k]`` puts sample k in the
    ball around c1 = origin (r = 1), otherwise 5 m away."""
    times = np.arange(len(inside)) * 0.5
    x = np.array([[[0.2, 0.0, 0.0]] if flag else [[5.0, 0.0, 0.0]] for flag in inside])
    return make_log(times, x, events=events, **kw)


class TestExtractBehavior:
    def test_passive_crossing_has_empty_services(self):
        log = crossing_log([False, False, True, True, True, False])
        (beh,) = extract_behavior(log)
        assert len(beh.entries) == 1
        e = beh.entries[0]
        assert (e.point, e.services) == ("c1", frozenset())
        assert (e.start, e.end) == (1.0, 2.0)
        assert beh.provided == ()

    def test_provision_attaches_to_covering_residence(self):
        ev = SimEvent(SERVICES_PROVIDED, 1.25, 0, "c1", frozenset({"r1"}))
        log = crossing_log([False, False, True, True, True, False], events=[ev])
        (beh,) = extract_behavior(log)
        assert len(beh.entries) == 1
        assert beh.entries[0].services == frozenset({"r1"})
        assert beh.provided == (("c1", frozenset({"r1"}), 1.25),)

    def test_missed_crossing_becomes_degenerate_entry(self):
        ev = SimEvent(SERVICES_PROVIDED, 0.75, 0, "c1", frozenset({"r1"}))
        log = crossing_log([False, False, False, False], events=[ev])
        (beh,) = extract_behavior(log)
        assert len(beh.entries) == 1
        e = beh.entries[0]
        assert e.start == e.end == 0.75
        assert e.services == frozenset({"r1"})

    def test_separate_visits_make_separate_entries(self):
        log = crossing_log([False, True, True, False, False, True, True, False])
        (beh,) = extract_behavior(log)
        assert [(e.start, e.end) for e in beh.entries] == [(0.5, 1.0), (2.5, 3.0)]
        assert all(e.services == frozenset() for e in beh.entries)

    def test_provisions_in_one_residence_merge(self):
        evs = [
            SimEvent(SERVICES_PROVIDED, 1.0, 0, "c1", frozenset({"a"})),
            SimEvent(SERVICES_PROVIDED, 1.6, 0, "c1", frozenset({"b"})),
        ]
        log = crossing_log([False, True, True, True, True, False], events=evs)
        (beh,) = extract_behavior(log)
        assert len(beh.entries) == 1
        assert beh.entries[0].services == frozenset({"a", "b"})
        assert [p[1] for p in beh.provided] == [frozenset({"a"}), frozenset({"b"})]

    def test_points_override(self):
        log = crossing_log([False, True, False])
        beh = extract_behavior(log, points={"far": np.array([50.0, 0.0, 0.0])})[0]
        assert beh.entries == ()


PLAN = PrefixSuffixPlan(
    (PlanStep("c1", {"a"}),),
    (PlanStep("c2", {"b"}), PlanStep("c3", {"c"})),
)


def beh(*provided):
    return Behavior(1, (), tuple((p, frozenset(s), float(t)) for p, s, t in provided))


class TestSatisfaction:
    def test_full_round_satisfied(self):
        rep = check_satisfaction(
            beh(("c1", {"a"}, 1), ("c2", {"b"}, 2), ("c3", {"c"}, 3)), PLAN
        )
        assert rep.status == SATISFIED
        assert rep.progress == 1.0
        assert rep.matched == 3
        assert rep.suffix_cycles == 1

    def test_stem_only_inconclusive(self):
        rep = check_satisfaction(beh(("c1", {"a"}, 1)), PLAN)
        assert rep.status == INCONCLUSIVE
        assert rep.matched == 1
        assert rep.suffix_cycles == 0
        assert rep.progress == pytest.approx(1 / 3)

    def test_nothing_observed_inconclusive(self):
        rep = check_satisfaction(beh(), PLAN)
        assert rep.status == INCONCLUSIVE
        assert rep.progress == 0.0

    def test_out_of_order_violated(self):
        rep = check_satisfaction(beh(("c2", {"b"}, 1)), PLAN)
        assert rep.status == VIOLATED
        assert "plan step 1" in rep.detail

    def test_wrong_services_violated(self):
        rep = check_satisfaction(beh(("c1", {"z"}, 1)), PLAN)
        assert rep.status == VIOLATED

    def test_suffix_wraps(self):
        rep = check_satisfaction(
            beh(
                ("c1", {"a"}, 1),
                ("c2", {"b"}, 2),
                ("c3", {"c"}, 3),
                ("c2", {"b"}, 4),
                ("c3", {"c"}, 5),
            ),
            PLAN,
        )
        assert rep.status == SATISFIED
        assert rep.matched == 5
        assert rep.suffix_cycles == 2

    def test_wrap_must_restart_at_suffix_head(self):
        rep = check_satisfaction(
            beh(
                ("c1", {"a"}, 1),
                ("c2", {"b"}, 2),
                ("c3", {"c"}, 3),
                ("c3", {"c"}, 4),
            ),
            PLAN,
        )
        assert rep.status == VIOLATED

    def test_formula_cross_check(self):
        full = beh(("c1", {"a"}, 1), ("c2", {"b"}, 2), ("c3", {"c"}, 3))
        assert check_satisfaction(full, PLAN, "F a & G F b").status == SATISFIED
        rep = check_satisfaction(full, PLAN, "G F z")
        assert rep.status == VIOLATED
        assert "formula" in rep.detail

    def test_no_plan_inconclusive(self):
        rep = check_satisfaction(beh(), None)
        assert rep.status == INCONCLUSIVE
        assert "no plan" in rep.detail


def pair_log(distances, radii=(1.0, 1.0), e0_pairs=((1, 2),), **kw):
    """Two agents on the x axis at the given per-sample separations."""
    times = np.arange(len(distances)) * 0.5
    x = np.array([[[0.0, 0.0, 0.0], [d, 0.0, 0.0]] for d in distances])
    return make_log(times, x, radii=np.asarray(radii), e0_pairs=e0_pairs, **kw)


class TestGuarantees:
    def test_overlap_is_a_collision(self):
        rep = check_guarantees(pair_log([3.0, 1.5, 3.0]))
        assert not rep.collision_free
        assert rep.min_pair_clearance == pytest.approx(-0.5)

    def test_touching_spheres_still_free(self):
        rep = check_guarantees(pair_log([3.0, 2.0, 3.0]))
        assert rep.collision_free
        assert rep.min_pair_clearance == pytest.approx(0.0)

    def test_connectivity_edge_break_detected(self):
        rep = check_guarantees(pair_log([3.0, 4.5, 3.0]))
        assert not rep.connectivity_maintained
        assert rep.min_edge_margin == pytest.approx(-0.5)
        ok = check_guarantees(pair_log([3.0, 4.0, 3.0]))
        assert ok.connectivity_maintained

    def test_energy_jump_at_segment_switch_allowed(self):
        rep = check_guarantees(
            pair_log(
                [3.0] * 5,
                lyap=[1.0, 0.9, 0.8, 2.0, 1.9],
                seg=[0, 0, 0, 1, 1],
            )
        )
        assert rep.lyapunov_monotone
        assert rep.lyap_within_fraction == 1.0
        assert rep.lyap_max_increase == 0.0

    def test_energy_increase_within_segment_flagged(self):
        rep = check_guarantees(
            pair_log([3.0] * 4, lyap=[1.0, 0.9, 0.901, 0.8], seg=[0, 0, 0, 0])
        )
        assert not rep.lyapunov_monotone
        assert rep.lyap_max_increase == pytest.approx(1e-3)
        assert rep.lyap_within_fraction == pytest.approx(2 / 3)

    def test_energy_floor_tolerates_flat_noise(self):
        rep = check_guarantees(
            pair_log([3.0] * 4, lyap=[1.0, 0.9, 0.9 + 5e-9, 0.8], seg=[0, 0, 0, 0])
        )
        assert rep.lyapunov_monotone
        assert rep.lyap_within_fraction == 1.0

    def test_gain_estimate_boundedness(self):
        bad = pair_log([3.0] * 3, a_hat=[[0.0, 0.0], [1.0, np.nan], [1.0, 1.0]])
        assert not check_guarantees(bad).a_hat_bounded
        down = pair_log([3.0] * 3, a_hat=[[0.0, 0.0], [1.0, 1.0], [0.5, 1.0]])
        rep = check_guarantees(down)
        assert rep.a_hat_bounded and not rep.a_hat_nondecreasing

    def test_abort_propagates(self):
        rep = check_guarantees(
            pair_log([3.0] * 3, aborted=True, abort_reason="collision between 1 and 2")
        )
        assert rep.aborted
        assert "collision" in rep.abort_reason


class TestTokenReplay:
    def test_out_of_turn_provision_flagged(self):
        evs = [SimEvent(SERVICES_PROVIDED, 1.0, 1, "c1", frozenset({"a"}))]
        log = pair_log([3.0] * 3, events=evs, priorities=(1, 2))
        verdict = evaluate_run(log)
        assert verdict.agents[0].respected_priority
        assert not verdict.agents[1].respected_priority

    def test_in_turn_after_broadcast(self):
        evs = [
            SimEvent(SERVICES_PROVIDED, 1.0, 0, "c1", frozenset({"a"})),
            SimEvent(COUNTERS_ADVANCED, 1.0, 0, counters=(2, 2)),
            SimEvent(SERVICES_PROVIDED, 2.0, 1, "c1", frozenset({"a"})),
        ]
        log = pair_log([3.0] * 3, events=evs, priorities=(1, 2))
        verdict = evaluate_run(log)
        assert all(a.respected_priority for a in verdict.agents)


@pytest.fixture(scope="module")
def team_log():
    return five_sim().run(240.0)


class TestEvaluateRun:
    def test_partial_team_run(self, team_log):
        verdict = evaluate_run(team_log)
        assert all(a.respected_priority for a in verdict.agents)
        assert verdict.agents[0].matched >= 1
        assert all(a.status == INCONCLUSIVE for a in verdict.agents)
        assert 0.0 < verdict.agents[0].progress < 1.0
        g = verdict.guarantees
        assert g.collision_free and g.connectivity_maintained
        assert g.lyapunov_monotone
        assert g.a_hat_bounded and g.a_hat_nondecreasing
        assert g.min_beta_col > 0 and g.min_beta_con > 0
        assert not g.aborted

    def test_verdict_is_pure_function_of_log(self, team_log):
        assert evaluate_run(team_log).as_dict() == evaluate_run(team_log).as_dict()

    def test_refinement_does_not_change_verdicts(self, team_log):
        fine = five_sim(decimation=0.1).run(240.0)
        a, b = evaluate_run(team_log), evaluate_run(fine)
        keyed = lambda v: [
            (ag.status, ag.matched, ag.suffix_cycles, ag.respected_priority)
            for ag in v.agents
        ]
        assert keyed(a) == keyed(b)
        for name in (
            "collision_free",
            "connectivity_maintained",
            "lyapunov_monotone",
            "a_hat_bounded",
            "a_hat_nondecreasing",
            "aborted",
        ):
            assert getattr(a.guarantees, name) == getattr(b.guarantees, name)

    def test_single_agent_reaches_satisfaction(self):
        log = single_sim([0.0, 0.0, 0.0], [6.0, -5.0, 4.0]).run(240.0)
        verdict = evaluate_run(log, formulas=["G F r1"])
        assert verdict.agents[0].status == SATISFIED
        assert verdict.agents[0].suffix_cycles >= 1
        assert verdict.all_satisfied and verdict.safe

    def test_formula_mismatch_blocks_satisfaction(self):
        log = single_sim([0.0, 0.0, 0.0], [6.0, -5.0, 4.0]).run(240.0)
        verdict = evaluate_run(log, formulas=["G F other"])
        assert verdict.agents[0].status == VIOLATED
