"""Shared generators and the five-agent reference fixture."""

import random

import numpy as np

from ltlcoord.ltl import (
    TRUE,
    Always,
    And,
    Atom,
    Eventually,
    Implies,
    LassoWord,
    Next,
    Not,
    Or,
    Until,
)

_UNARY = (Not, Next, Eventually, Always)
_BINARY = (And, Or, Implies, Until)


def random_formula(rng: random.Random, max_depth, atom_names):
    """A random formula tree of depth at most ``max_depth``."""
    if max_depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.1:
            return TRUE
        return Atom(rng.choice(atom_names))
    if rng.random() < 0.45:
        op = rng.choice(_UNARY)
        return op(random_formula(rng, max_depth - 1, atom_names))
    op = rng.choice(_BINARY)
    return op(
        random_formula(rng, max_depth - 1, atom_names),
        random_formula(rng, max_depth - 1, atom_names),
    )


def random_word(rng: random.Random, atom_names, max_stem=4, max_period=4):
    """A random lasso word over ``atom_names``."""
    def letter():
        return frozenset(a for a in atom_names if rng.random() < 0.4)

    stem = tuple(letter() for _ in range(rng.randint(0, max_stem)))
    period = tuple(letter() for _ in range(rng.randint(1, max_period)))
    return LassoWord(stem, period)


# ---------------------------------------------------------------------------
# five-agent reference fixture: positions, workspace points, service
# labelings, recurring service tasks and known-good plans

FIVE_X0 = np.array(
    [
        [0.0, 0.0, 0.0],
        [-2.1, -2.3, 2.0],
        [1.3, 1.3, 1.5],
        [-2.0, 3.25, 2.2],
        [2.0, 2.4, -0.15],
    ]
)

FIVE_POINTS = {
    "c1": np.array([10.0, 10.0, 10.0]),
    "c2": np.array([-5.0, 0.0, 5.0]),
    "c3": np.array([5.0, -2.0, -7.0]),
    "c4": np.array([0.0, -6.0, 2.0]),
}


def five_agent_points(i):
    """Service labeling for agent i: one colored service per point."""
    return [
        ("c1", {f"r{i}"}),
        ("c2", {f"b{i}"}),
        ("c3", {f"g{i}"}),
        ("c4", {f"m{i}"}),
    ]


FIVE_AGENT_FORMULAS = {
    1: "G F (r1 & X (g1 & X (m1 & X b1)))",
    2: "F m2 & G F (r2 & X b2)",
    3: "F m3 & G F (r3 & X b3)",
    4: "G F (g4 & X (b4 & X (m4 & X g4)))",
    5: "r5 & G F (b5 & X (m5 & X g5))",
}

# Known-good reference plans for the same tasks, as (prefix, suffix).
FIVE_AGENT_REFERENCE_PLANS = {
    1: ([], [("c1", "r1"), ("c3", "g1"), ("c4", "m1"), ("c2", "b1")]),
    2: ([("c2", "b2"), ("c4", "m2")], [("c1", "r2"), ("c2", "b2")]),
    3: ([("c4", "m3"), ("c3", "g3")], [("c1", "r3"), ("c2", "b3")]),
    4: ([], [("c3", "g4"), ("c2", "b4"), ("c4", "m4"), ("c3", "g4")]),
    5: ([("c1", "r5")], [("c4", "m5"), ("c3", "g5"), ("c2", "b5")]),
}


def as_plan(spec):
    from ltlcoord.planner import PlanStep, PrefixSuffixPlan

    prefix, suffix = spec
    return PrefixSuffixPlan(
        tuple(PlanStep(c, {s}) for c, s in prefix),
        tuple(PlanStep(c, {s}) for c, s in suffix),
    )


def five_agent_plans():
    """The reference plans as plan objects, in agent order."""
    return [as_plan(FIVE_AGENT_REFERENCE_PLANS[i]) for i in range(1, 6)]


def five_agent_models(seed=2024, mu=25.0, mu_c=3.0, mu_a=0.1, disturbance=True):
    """Agent models with seeded inertia and disturbance parameters."""
    from ltlcoord.simulator import AgentModel

    rng = np.random.default_rng(seed)
    models = []
    for i in range(5):
        inertia = np.eye(3) * rng.uniform(1.0, 2.0)
        alpha = rng.uniform(1.0, 2.0)
        omega1 = rng.uniform(1.0, 2.0)
        omega2 = rng.uniform(1.0, 2.0)
        models.append(
            AgentModel(
                radius=1.0,
                d_con=4.0,
                priority=i + 1,
                mu=mu,
                mu_c=mu_c,
                mu_a=mu_a,
                inertia=inertia,
                gravity=(0.0, 0.0, -9.81),
                alpha=alpha if disturbance else 0.0,
                omega1=omega1,
                omega2=omega2,
            )
        )
    return models


def single_plan(point="c1", service="r1"):
    from ltlcoord.planner import PlanStep, PrefixSuffixPlan

    return [PrefixSuffixPlan((), (PlanStep(point, frozenset({service})),))]


def single_sim(
    x0, goal, v0=(0.0, 0.0, 0.0), a_hat0=0.0, h=0.005, use_jit=None, **model_kw
):
    from ltlcoord.simulator import AgentModel, Simulation

    kw = dict(
        radius=1.0, d_con=4.0, priority=1, mu=25.0, mu_c=3.0, mu_a=0.1,
        gravity=(0.0, 0.0, -9.81), alpha=1.5, omega1=1.3, omega2=0.4,
    )
    kw.update(model_kw)
    return Simulation(
        [AgentModel(**kw)],
        [x0],
        [v0],
        [a_hat0],
        single_plan(),
        {"c1": np.asarray(goal, dtype=float)},
        h=h,
        use_jit=use_jit,
    )


def five_sim(**kw):
    from ltlcoord.simulator import Simulation

    args = dict(
        models=five_agent_models(),
        x0=FIVE_X0,
        v0=np.zeros((5, 3)),
        a_hat0=np.zeros(5),
        plans=five_agent_plans(),
        points=FIVE_POINTS,
        mu_col=0.1,
        mu_con=0.1,
    )
    args.update(kw)
    return Simulation(**args)
