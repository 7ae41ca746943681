"""Prefix-suffix plan synthesis on point-of-interest transition systems.

An agent moves between points of interest (any point is reachable from
any other in one hop) and provides a chosen subset of the services
available at each point it visits.  The word read by the task automaton
is exactly that sequence of service sets, one letter per visited point;
the initial position emits no letter.  A plan is the projection of an
accepting lasso of the product onto (point, services) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .buchi import ltl_to_buchi
from .ltl import LassoWord, eval_lasso, parse_ltl


@dataclass
class TransitionSystem:
    """Complete graph over an agent's points plus its initial state.

    ``points`` keeps the declaration order, which fixes the successor
    order of every search.  The initial state sits outside ``points`` and
    is never revisited; its label is empty unless the agent starts where
    a point of interest already is.
    """

    points: tuple
    labels: dict  # point id -> frozenset of service names
    initial: str
    initial_label: frozenset = frozenset()

    @property
    def states(self):
        return (self.initial,) + self.points

    def label(self, state):
        if state == self.initial:
            return self.initial_label
        return self.labels[state]

    def transitions(self):
        """All ordered state pairs; the relation is total over Π'×Π'."""
        return tuple((a, b) for a in self.states for b in self.states)


def build_transition_system(points, initial="c0", initial_services=()):
    """Transition system from (point id, services) pairs.

    ``initial`` is the id of the start state and must differ from every
    point id; duplicate point ids are rejected.
    """
    ids = []
    labels = {}
    for pid, services in points:
        if pid in labels:
            raise ValueError(f"duplicate point id {pid!r}")
        ids.append(pid)
        labels[pid] = frozenset(services)
    if initial in labels:
        raise ValueError(f"initial state id {initial!r} collides with a point id")
    if not ids:
        raise ValueError("at least one point of interest is required")
    return TransitionSystem(
        points=tuple(ids),
        labels=labels,
        initial=initial,
        initial_label=frozenset(initial_services),
    )


@dataclass(frozen=True)
class PlanStep:
    point: str
    services: frozenset

    def __post_init__(self):
        object.__setattr__(self, "services", frozenset(self.services))


@dataclass(frozen=True)
class PrefixSuffixPlan:
    """Visit the prefix once, then the suffix forever."""

    prefix: tuple
    suffix: tuple

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "suffix", tuple(self.suffix))
        if not self.suffix:
            raise ValueError("plan suffix must be nonempty")

    @property
    def steps(self):
        """Prefix followed by one suffix round; step s is steps[s-1]."""
        return self.prefix + self.suffix

    @property
    def stem_length(self):
        return len(self.prefix)

    @property
    def total_length(self):
        return len(self.prefix) + len(self.suffix)

    def word(self):
        return LassoWord(
            tuple(s.services for s in self.prefix),
            tuple(s.services for s in self.suffix),
        )


def verify_plan(plan, f):
    """Whether the plan's infinite service word satisfies ``f``."""
    return eval_lasso(f, plan.word())


def synthesize_plan(ts, f):
    """An accepting-lasso plan for ``f`` on ``ts``, or None if infeasible.

    Product states pair a transition-system state with an automaton
    state.  Moves go to points of interest only, never back to the start
    state.  For each automaton edge the chosen service set is the
    smallest one enabling it, the edge's required atoms; larger sets
    enable no additional edges, so this loses no plans.  Successors are
    explored in (point order, services size, services, automaton state)
    order, which makes the returned plan deterministic.
    """
    auto = ltl_to_buchi(f)
    adj = {}
    for src, pred, dst in auto.transitions:
        adj.setdefault(src, []).append((pred, dst))

    point_index = {c: k for k, c in enumerate(ts.points)}

    def successors(node):
        _, q = node
        moves = []
        for c in ts.points:
            avail = ts.labels[c]
            seen = set()
            for pred, q2 in adj.get(q, ()):
                sigma = pred.required
                if sigma <= avail and not (pred.forbidden & sigma):
                    key = (sigma, q2)
                    if key not in seen:
                        seen.add(key)
                        moves.append((c, sigma, q2))
        moves.sort(
            key=lambda m: (
                point_index[m[0]],
                len(m[1]),
                tuple(sorted(m[1])),
                m[2],
            )
        )
        return [((c, sigma), (c, q2)) for c, sigma, q2 in moves]

    from .buchi import _ndfs  # same search core as automaton emptiness

    initials = [(ts.initial, q) for q in sorted(auto.initial)]
    found = _ndfs(initials, successors, lambda node: node[1] in auto.accepting)
    if found is None:
        return None
    _, stem_labels, _, cycle_labels = found
    plan = PrefixSuffixPlan(
        prefix=tuple(PlanStep(c, sigma) for c, sigma in stem_labels),
        suffix=tuple(PlanStep(c, sigma) for c, sigma in cycle_labels),
    )
    assert verify_plan(plan, f), "synthesized plan fails its own formula"
    return plan


def synthesize_plans(scenario):
    """Plans for every agent of a scenario, in agent order.

    Returns a list with one plan or None per agent.  An agent whose
    initial position already lets it provide services at some point (the
    point's sphere contains it) gets that point's label on its start
    state.
    """
    plans = []
    for agent in scenario.agents:
        pairs = [(p.id, agent.services.get(p.id, frozenset())) for p in scenario.points]
        initial_id = "start"
        taken = {p.id for p in scenario.points}
        while initial_id in taken:
            initial_id = "_" + initial_id
        initial_services = ()
        best = None
        for p in scenario.points:
            dist = float(np.linalg.norm(np.asarray(agent.position) - p.coords))
            if dist < agent.model.radius and (best is None or dist < best[0]):
                best = (dist, p.id)
        if best is not None:
            initial_services = agent.services.get(best[1], frozenset())
        ts = build_transition_system(pairs, initial=initial_id, initial_services=initial_services)
        f = parse_ltl(agent.formula, props=agent.propositions)
        plans.append(synthesize_plan(ts, f))
    return plans
