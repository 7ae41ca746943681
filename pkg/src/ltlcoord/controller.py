"""Barrier-based decentralized control and adaptation laws.

Each undirected edge m = (m1, m2) of the complete graph carries a
collision barrier over iota_m = ||x_m1 - x_m2||^2 - (r_m1 + r_m2)^2 and
each initially sensed edge additionally a connectivity barrier over
eta_m = min(d_con,m1, d_con,m2)^2 - ||x_m1 - x_m2||^2.  Both arguments
must stay strictly positive; the control pushes them away from zero
through the gradient of the reciprocal barrier, which vanishes at the
plateau so collision terms switch off beyond sensing range.

``control_input`` assembles one agent's input by looping over its
incident edges.  ``control_vector`` assembles all inputs at once from
incidence matrices and is kept as an independent formulation for
differential testing; both must agree to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import incidence


class BarrierViolation(RuntimeError):
    """A barrier argument reached zero; the control law is singular there."""


@dataclass(frozen=True)
class BarrierSpec:
    """Piecewise barrier: polynomial rise on [0, d_bar), plateau beta_bar after."""

    kind: str  # "collision" or "connectivity"
    d_bar: float
    beta_bar: float = 1.0

    def __post_init__(self):
        if self.d_bar <= 0 or self.beta_bar <= 0:
            raise ValueError("barrier thresholds must be positive")


def collision_spec(r1, r2, d_con_min, beta_bar=1.0):
    return BarrierSpec("collision", d_con_min**2 - (r1 + r2) ** 2, beta_bar)


def connectivity_spec(d_con_min, beta_bar=1.0):
    return BarrierSpec("connectivity", d_con_min**2, beta_bar)


def barrier_value(s, spec):
    """beta(s): 0 at s = 0, strictly increasing, beta_bar from d_bar on.

    The rising part is beta_bar * (1 - (1 - s/d_bar)^2), the lowest-degree
    polynomial with value 0 at 0 and a C1 junction at the plateau.
    """
    if s < 0:
        raise ValueError(f"barrier argument must be nonnegative, got {s}")
    if s >= spec.d_bar:
        return spec.beta_bar
    z = 1.0 - s / spec.d_bar
    return spec.beta_bar * (1.0 - z * z)


def recip_barrier_grad(s, spec):
    """d/ds [1/beta(s)], analytic; zero on the plateau, divergent at 0+."""
    if s <= 0:
        raise BarrierViolation(f"{spec.kind} barrier argument {s} is not positive")
    if s >= spec.d_bar:
        return 0.0
    z = 1.0 - s / spec.d_bar
    beta = spec.beta_bar * (1.0 - z * z)
    dbeta = 2.0 * spec.beta_bar * z / spec.d_bar
    return -dbeta / (beta * beta)


def barrier_args(x1, x2, r1, r2, d_con_min):
    """(iota, eta, d iota/d x1, d eta/d x1) for one edge.

    The gradients with respect to x2 are the exact negatives.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    diff = x1 - x2
    dist2 = float(diff @ diff)
    iota = dist2 - (r1 + r2) ** 2
    eta = d_con_min**2 - dist2
    return iota, eta, 2.0 * diff, -2.0 * diff


def _fbar_function(fbar):
    if callable(fbar):
        return fbar
    if fbar == "norm":
        return lambda xi: float(np.linalg.norm(xi))
    if fbar == "one":
        return lambda xi: 1.0
    raise ValueError(f"unknown uncertainty bound function {fbar!r}")


class ControllerConfig:
    """Edge structure, barrier thresholds and gains shared by all agents.

    ``edges`` is the complete edge set with the initially sensed edges
    occupying indices 0..n_initial-1 of its numbering.  Gains may be
    scalars or per-edge/per-agent arrays.
    """

    def __init__(
        self,
        edges,
        n_initial,
        radii,
        d_con,
        mu_col=0.1,
        mu_con=0.1,
        mu_c=1.0,
        mu=1.0,
        mu_a=1.0,
        gravity=None,
        beta_bar_col=1.0,
        beta_bar_con=1.0,
        fbar="norm",
    ):
        n = edges.n_agents
        self.edges = edges
        self.n_agents = n
        self.n_initial = int(n_initial)
        self.radii = np.broadcast_to(np.asarray(radii, dtype=float), (n,)).copy()
        self.d_con = np.broadcast_to(np.asarray(d_con, dtype=float), (n,)).copy()
        m = len(edges)
        self.mu_col = np.broadcast_to(np.asarray(mu_col, dtype=float), (m,)).copy()
        self.mu_con = np.broadcast_to(
            np.asarray(mu_con, dtype=float), (self.n_initial,)
        ).copy()
        self.mu_c = np.broadcast_to(np.asarray(mu_c, dtype=float), (n,)).copy()
        self.mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,)).copy()
        self.mu_a = np.broadcast_to(np.asarray(mu_a, dtype=float), (n,)).copy()
        self.gravity = None if gravity is None else np.asarray(gravity, dtype=float)
        self.fbar = fbar
        self.fbar_fn = _fbar_function(fbar)

        # 0-based endpoint arrays and per-edge barrier specs
        self.m1 = np.array([a - 1 for a, _ in edges], dtype=np.int64)
        self.m2 = np.array([b - 1 for _, b in edges], dtype=np.int64)
        d_min = np.minimum(self.d_con[self.m1], self.d_con[self.m2])
        r_sum = self.radii[self.m1] + self.radii[self.m2]
        self.col_specs = tuple(
            collision_spec(self.radii[a], self.radii[b], dm, beta_bar_col)
            for a, b, dm in zip(self.m1, self.m2, d_min)
        )
        self.con_specs = tuple(
            connectivity_spec(dm, beta_bar_con) for dm in d_min[: self.n_initial]
        )
        if any(spec.d_bar <= 0 for spec in self.col_specs):
            raise ValueError("sensing radii must exceed safety sphere contact distance")
        self.r_sum = r_sum
        self.d_min = d_min

    def gravity_of(self, i, n_dim):
        if self.gravity is None:
            return np.zeros(n_dim)
        return self.gravity[i]


def control_input(cfg, i, goal, mode, x, v_i, a_hat_i):
    """Control force for agent i; per-agent edge-loop assembly.

    u_i sums, over incident complete-graph edges, the collision term
    alpha_col(i,m) * d/d iota [1/beta_col] * d iota/d x_m1 and over
    incident initial edges the connectivity analogue, with
    alpha(i,m) = -mu_m at the tail, +mu_m at the head; then the goal
    term -mode * mu_c,i (x_i - goal), gravity, and the damping term
    -(a_hat_i fbar(x_i) + mu_i) v_i.
    """
    x = np.asarray(x, dtype=float)
    v_i = np.asarray(v_i, dtype=float)
    n_dim = x.shape[1]
    u = cfg.gravity_of(i, n_dim).copy()
    for m in range(len(cfg.edges)):
        a, b = cfg.m1[m], cfg.m2[m]
        if i == a:
            alpha = -cfg.mu_col[m]
        elif i == b:
            alpha = cfg.mu_col[m]
        else:
            continue
        iota, _, diota, _ = barrier_args(
            x[a], x[b], cfg.radii[a], cfg.radii[b], cfg.d_min[m]
        )
        u += alpha * recip_barrier_grad(iota, cfg.col_specs[m]) * diota
    for m in range(cfg.n_initial):
        a, b = cfg.m1[m], cfg.m2[m]
        if i == a:
            alpha = -cfg.mu_con[m]
        elif i == b:
            alpha = cfg.mu_con[m]
        else:
            continue
        _, eta, _, deta = barrier_args(
            x[a], x[b], cfg.radii[a], cfg.radii[b], cfg.d_min[m]
        )
        u += alpha * recip_barrier_grad(eta, cfg.con_specs[m]) * deta
    if mode:
        u -= cfg.mu_c[i] * (x[i] - np.asarray(goal, dtype=float))
    u -= (a_hat_i * cfg.fbar_fn(x[i]) + cfg.mu[i]) * v_i
    return u


def control_vector(cfg, x, v, a_hat, goals, modes):
    """All control forces at once from the incidence-matrix formulation.

    u = (D(G_0) (x) I_n) mu_con b_con + (D(G_full) (x) I_n) mu_col b_col
        - goal terms + gravity - diag(a_hat fbar + mu) v,
    where b_col stacks, per edge, d/d iota [1/beta] * d iota/d x_m1 and
    mu_col is the block-diagonal gain matrix.  Kept deliberately close to
    that formula as a cross-check of ``control_input``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n, n_dim = x.shape
    m_all = len(cfg.edges)
    m0 = cfg.n_initial
    eye = np.eye(n_dim)

    b_col = np.zeros(m_all * n_dim)
    for m in range(m_all):
        a, b = cfg.m1[m], cfg.m2[m]
        iota, _, diota, _ = barrier_args(
            x[a], x[b], cfg.radii[a], cfg.radii[b], cfg.d_min[m]
        )
        b_col[m * n_dim : (m + 1) * n_dim] = (
            recip_barrier_grad(iota, cfg.col_specs[m]) * diota
        )
    b_con = np.zeros(m0 * n_dim)
    for m in range(m0):
        a, b = cfg.m1[m], cfg.m2[m]
        _, eta, _, deta = barrier_args(
            x[a], x[b], cfg.radii[a], cfg.radii[b], cfg.d_min[m]
        )
        b_con[m * n_dim : (m + 1) * n_dim] = (
            recip_barrier_grad(eta, cfg.con_specs[m]) * deta
        )

    d_full = incidence(cfg.edges)
    d_init = d_full[:, :m0]
    mu_col_kron = np.kron(np.diag(cfg.mu_col), eye)
    mu_con_kron = np.kron(np.diag(cfg.mu_con), eye)
    u = np.kron(d_init, eye) @ (mu_con_kron @ b_con)
    u += np.kron(d_full, eye) @ (mu_col_kron @ b_col)
    u = u.reshape(n, n_dim)

    goals = np.asarray(goals, dtype=float)
    modes = np.asarray(modes, dtype=float)
    u -= (modes * cfg.mu_c)[:, None] * (x - goals)
    if cfg.gravity is not None:
        u += cfg.gravity
    fb = np.array([cfg.fbar_fn(x[i]) for i in range(n)])
    u -= (a_hat * fb + cfg.mu)[:, None] * v
    return u


def adaptation_rate(x_i, v_i, mu_a, fbar="norm"):
    """a_hat rate mu_a * fbar(x_i) * ||v_i||^2; never negative."""
    v_i = np.asarray(v_i, dtype=float)
    return mu_a * _fbar_function(fbar)(np.asarray(x_i, dtype=float)) * float(v_i @ v_i)


def lyapunov_value(cfg, x, v, a_hat, a_true, goals, modes, inertia):
    """Monitor energy for the current goal configuration.

    Goal distance of the active agent, kinetic energy, squared adaptation
    error weighted 1/(2 mu_a), and the reciprocal barrier sums.  The
    adaptation weight makes its time derivative cancel the estimation
    error term exactly, which is what yields decrease along trajectories.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    goals = np.asarray(goals, dtype=float)
    modes = np.asarray(modes, dtype=float)
    a_hat = np.asarray(a_hat, dtype=float)
    a_true = np.asarray(a_true, dtype=float)
    n = x.shape[0]
    val = 0.0
    for i in range(n):
        diff = x[i] - goals[i]
        val += modes[i] * 0.5 * cfg.mu_c[i] * float(diff @ diff)
        val += 0.5 * float(v[i] @ inertia[i] @ v[i])
        val += (a_hat[i] - a_true[i]) ** 2 / (2.0 * cfg.mu_a[i])
    for m in range(len(cfg.edges)):
        a, b = cfg.m1[m], cfg.m2[m]
        iota, eta, _, _ = barrier_args(
            x[a], x[b], cfg.radii[a], cfg.radii[b], cfg.d_min[m]
        )
        beta = barrier_value(max(iota, 0.0), cfg.col_specs[m])
        if beta <= 0.0:
            raise BarrierViolation(f"collision barrier at edge {cfg.edges.edges[m]}")
        val += cfg.mu_col[m] / beta
        if m < cfg.n_initial:
            beta = barrier_value(max(eta, 0.0), cfg.con_specs[m])
            if beta <= 0.0:
                raise BarrierViolation(
                    f"connectivity barrier at edge {cfg.edges.edges[m]}"
                )
            val += cfg.mu_con[m] / beta
    return val
