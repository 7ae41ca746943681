"""Post-hoc verification of recorded runs.

Everything here is a pure function of the trajectory log: residence
intervals are rebuilt from the decimated samples, provided services come
from the exact event record, and the safety/energy checks recompute
their quantities from the stored series.  Re-running the checks on
exported artifacts therefore reproduces the verdicts bit for bit.

A behavior is, per agent, the time-ordered list of visits to workspace
points.  Each visit carries the services provided during it; a visit
with an empty service set is a passive crossing and never counts toward
(or against) the plan order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ltl import parse_ltl
from .planner import verify_plan
from .simulator import COUNTERS_ADVANCED, SERVICES_PROVIDED

SATISFIED = "satisfied-on-observed-lasso"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

# Per-step energy increase allowed before a step counts against
# monotonicity: a generous multiple of the integrator's local truncation
# budget, scaled by the observed rate of change, with an absolute floor
# for steps where the energy is essentially flat.
LYAP_FLOOR = 1e-8
LYAP_TRUNCATION_FACTOR = 10.0


@dataclass(frozen=True)
class BehaviorEntry:
    """One maximal residence of an agent's sphere around a point."""

    point: str
    services: frozenset
    start: float
    end: float


@dataclass(frozen=True)
class Behavior:
    """Observed visit sequence of one agent.

    ``entries`` are the residence intervals in time order; ``provided``
    is the finer-grained sequence of individual service provisions
    (point, services, time), which preserves order even when several
    plan steps are served during a single residence.
    """

    agent: int
    entries: tuple
    provided: tuple


@dataclass(frozen=True)
class SatisfactionReport:
    status: str
    progress: float
    matched: int
    suffix_cycles: int
    detail: str = ""


@dataclass(frozen=True)
class GuaranteeReport:
    collision_free: bool
    connectivity_maintained: bool
    min_pair_clearance: float
    min_edge_margin: float
    min_beta_col: float
    min_beta_con: float
    lyapunov_monotone: bool
    lyap_within_fraction: float
    lyap_max_increase: float
    lyap_initial: float
    a_hat_bounded: bool
    a_hat_nondecreasing: bool
    a_hat_max: float
    speed_max: float
    aborted: bool
    abort_reason: str


@dataclass(frozen=True)
class AgentVerdict:
    agent: int
    status: str
    progress: float
    matched: int
    suffix_cycles: int
    respected_priority: bool
    detail: str = ""


@dataclass(frozen=True)
class RunVerdict:
    agents: tuple
    guarantees: GuaranteeReport

    @property
    def all_satisfied(self):
        return all(a.status == SATISFIED for a in self.agents)

    @property
    def safe(self):
        g = self.guarantees
        return (
            g.collision_free
            and g.connectivity_maintained
            and not g.aborted
        )

    def as_dict(self):
        g = self.guarantees
        return {
            "agents": [
                {
                    "agent": a.agent,
                    "status": a.status,
                    "progress": round(a.progress, 6),
                    "matched": a.matched,
                    "suffix_cycles": a.suffix_cycles,
                    "respected_priority": a.respected_priority,
                    "detail": a.detail,
                }
                for a in self.agents
            ],
            "collision_free": g.collision_free,
            "connectivity_maintained": g.connectivity_maintained,
            "min_pair_clearance": g.min_pair_clearance,
            "min_edge_margin": g.min_edge_margin,
            "min_beta_col": g.min_beta_col,
            "min_beta_con": g.min_beta_con,
            "lyapunov_monotone": g.lyapunov_monotone,
            "lyap_within_fraction": g.lyap_within_fraction,
            "lyap_max_increase": g.lyap_max_increase,
            "lyap_initial": g.lyap_initial,
            "a_hat_bounded": g.a_hat_bounded,
            "a_hat_nondecreasing": g.a_hat_nondecreasing,
            "a_hat_max": g.a_hat_max,
            "speed_max": g.speed_max,
            "aborted": g.aborted,
            "abort_reason": g.abort_reason,
        }


def extract_behavior(log, points=None, radii=None):
    """Rebuild each agent's visit sequence from samples and events.

    Residence intervals are the maximal sample runs with the point
    inside the agent's sphere.  Service provisions are matched to the
    interval that covers them (up to one decimation gap of slack, since
    events carry exact step times and samples do not); a provision with
    no covering interval, which can only happen when the crossing fell
    entirely between samples, becomes a degenerate interval.
    """
    if points is None:
        points = log.points
    if radii is None:
        radii = log.radii
    slack = max(log.decimation, log.h) + 1e-9
    out = []
    for i in range(log.n_agents):
        xi = log.x[:, i, :]
        intervals = []
        for pid, c in points.items():
            inside = np.linalg.norm(xi - np.asarray(c, dtype=float), axis=1) < radii[i]
            k = 0
            m = inside.shape[0]
            while k < m:
                if not inside[k]:
                    k += 1
                    continue
                j = k
                while j + 1 < m and inside[j + 1]:
                    j += 1
                intervals.append(
                    [float(log.times[k]), float(log.times[j]), pid, set()]
                )
                k = j + 1
        provided = tuple(
            (e.point, frozenset(e.services), float(e.time))
            for e in log.events
            if e.kind == SERVICES_PROVIDED and e.agent == i
        )
        for pid, srv, t in provided:
            for iv in intervals:
                if iv[2] == pid and iv[0] - slack <= t <= iv[1] + slack:
                    iv[3] |= srv
                    break
            else:
                intervals.append([t, t, pid, set(srv)])
        intervals.sort(key=lambda iv: (iv[0], iv[1], iv[2]))
        entries = tuple(
            BehaviorEntry(iv[2], frozenset(iv[3]), iv[0], iv[1]) for iv in intervals
        )
        out.append(Behavior(i + 1, entries, provided))
    return out


def check_satisfaction(behavior, plan, formula=None):
    """Judge one agent's observed provisions against its plan.

    The provisions must follow the plan-step order, with the suffix
    repeating.  Status is ``satisfied-on-observed-lasso`` once the stem
    plus at least one full suffix round has been provided (and the
    plan's service word actually models the formula, when one is
    given); a wrong point or wrong service set is ``violated``;
    anything shorter is ``inconclusive`` with the observed fraction of
    a first full round as progress.
    """
    if plan is None:
        return SatisfactionReport(INCONCLUSIVE, 0.0, 0, 0, "no plan to check against")
    if isinstance(formula, str):
        formula = parse_ltl(formula)
    steps = plan.steps
    total = plan.total_length
    stem = plan.stem_length
    cycle = total - stem
    pos = 0
    for pid, srv, t in behavior.provided:
        idx = pos if pos < total else stem + (pos - stem) % cycle
        st = steps[idx]
        if pid != st.point or srv != st.services:
            return SatisfactionReport(
                VIOLATED,
                min(1.0, pos / total),
                pos,
                max(0, (pos - stem)) // cycle if pos >= stem else 0,
                f"provision at t={t:g} was ({pid}, {sorted(srv)}) but plan step "
                f"{idx + 1} expects ({st.point}, {sorted(st.services)})",
            )
        pos += 1
    cycles = (pos - stem) // cycle if pos >= stem else 0
    if pos >= total:
        if formula is not None and not verify_plan(plan, formula):
            return SatisfactionReport(
                VIOLATED, 1.0, pos, cycles, "plan's service word fails the formula"
            )
        return SatisfactionReport(SATISFIED, 1.0, pos, cycles)
    return SatisfactionReport(
        INCONCLUSIVE, pos / total, pos, cycles, "observed prefix too short"
    )


def _token_respected(log):
    """Per-agent: every provision happened while holding the token.

    Replays the counter broadcasts from the event record; an agent may
    provide services only when its own counter equals its priority.
    """
    n = log.n_agents
    kappa = [1] * n
    ok = [True] * n
    for e in log.events:
        if e.kind == SERVICES_PROVIDED:
            if kappa[e.agent] != log.priorities[e.agent]:
                ok[e.agent] = False
        elif e.kind == COUNTERS_ADVANCED and e.counters is not None:
            kappa = list(e.counters)
    return ok


def lyapunov_report(log):
    """Per-step energy monotonicity within goal segments.

    Returns (fraction of steps within tolerance, largest raw increase,
    initial value).  Steps spanning a segment switch are skipped; the
    energy legitimately jumps when the goal configuration changes.
    """
    v = np.asarray(log.lyap_steps, dtype=float)
    seg = np.asarray(log.lyap_segment)
    if v.shape[0] < 2:
        return 1.0, 0.0, float(v[0]) if v.shape[0] else 0.0
    dv = np.diff(v)
    same = seg[1:] == seg[:-1]
    dvs = dv[same]
    if dvs.size == 0:
        return 1.0, 0.0, float(v[0])
    rate = np.abs(dvs) / log.h
    tol = np.maximum(LYAP_FLOOR, LYAP_TRUNCATION_FACTOR * log.h**5 * rate)
    fraction = float(np.mean(dvs <= tol))
    max_inc = float(max(0.0, dvs.max()))
    return fraction, max_inc, float(v[0])


def check_guarantees(log):
    """Safety, connectivity, energy and boundedness of a recorded run."""
    x = log.x
    pairs = log.edges.edges
    a = np.array([p[0] - 1 for p in pairs], dtype=int)
    b = np.array([p[1] - 1 for p in pairs], dtype=int)
    d = np.linalg.norm(x[:, a, :] - x[:, b, :], axis=2)
    rsum = log.radii[a] + log.radii[b]
    clearance = d - rsum[None, :]
    # open balls: touching at exactly r_i + r_j is still collision free
    collision_free = bool((clearance >= 0.0).all())

    m0 = len(log.e0)
    if m0:
        dmin = np.minimum(log.d_con[a[:m0]], log.d_con[b[:m0]])
        edge_margin = dmin[None, :] - d[:, :m0]
        connectivity = bool((edge_margin >= -1e-12).all())
        min_edge_margin = float(edge_margin.min())
    else:
        connectivity = True
        min_edge_margin = float("inf")

    frac, max_inc, v0 = lyapunov_report(log)
    monotone = frac >= 0.999 and max_inc <= 1e-4 * max(v0, LYAP_FLOOR)

    ah = log.a_hat
    ah_bounded = bool(np.isfinite(ah).all())
    ah_monotone = bool((np.diff(ah, axis=0) >= -1e-12).all()) if ah.shape[0] > 1 else True
    speeds = np.linalg.norm(log.v, axis=2)

    return GuaranteeReport(
        collision_free=collision_free,
        connectivity_maintained=connectivity,
        min_pair_clearance=float(clearance.min()) if clearance.size else float("inf"),
        min_edge_margin=min_edge_margin,
        min_beta_col=float(log.min_beta_col.min()) if log.min_beta_col.size else float("inf"),
        min_beta_con=float(log.min_beta_con.min()) if log.min_beta_con.size else float("inf"),
        lyapunov_monotone=bool(monotone),
        lyap_within_fraction=frac,
        lyap_max_increase=max_inc,
        lyap_initial=v0,
        a_hat_bounded=ah_bounded,
        a_hat_nondecreasing=ah_monotone,
        a_hat_max=float(ah.max()) if ah.size else 0.0,
        speed_max=float(speeds.max()) if speeds.size else 0.0,
        aborted=log.aborted,
        abort_reason=log.abort_reason,
    )


def evaluate_run(log, formulas=None):
    """Full verdict for a run: per-agent satisfaction plus guarantees.

    ``formulas`` is an optional sequence (one entry per agent, 0-based;
    strings are parsed) used to double-check that each plan's service
    word models the agent's task before claiming satisfaction.
    """
    behaviors = extract_behavior(log)
    token_ok = _token_respected(log)
    agents = []
    for i, beh in enumerate(behaviors):
        plan = log.plans[i] if i < len(log.plans) else None
        f = None
        if formulas is not None and i < len(formulas):
            f = formulas[i]
        rep = check_satisfaction(beh, plan, f)
        agents.append(
            AgentVerdict(
                agent=i + 1,
                status=rep.status,
                progress=rep.progress,
                matched=rep.matched,
                suffix_cycles=rep.suffix_cycles,
                respected_priority=token_ok[i],
                detail=rep.detail,
            )
        )
    return RunVerdict(tuple(agents), check_guarantees(log))
