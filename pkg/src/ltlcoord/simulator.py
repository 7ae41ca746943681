"""Closed-loop simulation of the switched multi-agent system.

Agents with inertia, gravity and an unknown velocity-proportional
disturbance follow the barrier control law while a priority/counter
token scheme decides which agent currently tracks a waypoint of its
prefix-suffix plan.  Integration is classical RK4 with the control
recomputed at every stage; goal detection and counter updates run
between steps, so discrete events land on the integration grid and at
most one event fires per step.

Two evaluation paths produce the dynamics: numba-compiled kernels for
long horizons (default) and a pure-Python reference assembled from the
controller module.  Both are exercised against each other in the test
suite; runs are deterministic either way.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .controller import (
    BarrierViolation,
    ControllerConfig,
    barrier_args,
    barrier_value,
    control_input,
    lyapunov_value,
)
from .graph import check_collision_free, complete_edges, is_connected, sense_edges

DEFAULT_H = 0.005
DEFAULT_DECIMATION = 0.5

GOAL_REACHED = "goal_reached"
SERVICES_PROVIDED = "services_provided"
COUNTERS_ADVANCED = "counters_advanced"
INVARIANT_VIOLATION = "invariant_violation"


class ConfigurationError(ValueError):
    """The initial condition or parameters violate a standing assumption."""


@dataclass
class AgentModel:
    """Physical parameters and gains of one agent.

    ``alpha``, ``omega1``, ``omega2`` parameterize the disturbance
    alpha * fbar(x) * sin(omega1 t + omega2) * v, so ``alpha`` is also
    the true adaptation target.  ``inertia`` defaults to the identity
    and ``gravity`` to zero when left unset.
    """

    radius: float = 1.0
    d_con: float = 4.0
    priority: int = 1
    mu: float = 1.0
    mu_c: float = 1.0
    mu_a: float = 1.0
    inertia: object = None
    gravity: object = None
    alpha: float = 0.0
    omega1: float = 1.0
    omega2: float = 0.0


@dataclass(frozen=True)
class SimEvent:
    kind: str
    time: float
    agent: object = None  # 0-based index, None for broadcast bookkeeping
    point: object = None
    services: object = None
    counters: object = None
    detail: str = ""


@dataclass
class TrajectoryLog:
    """Decimated samples, per-step monitor series and the event record.

    Sample arrays have one row per retained time; ``lyap_steps`` and
    ``lyap_segment`` cover every completed integration step (segment ids
    change whenever the goal configuration switches, so monotonicity of
    the energy is only meaningful within one segment).  Counter columns
    reflect the state right after any event at that sample time.
    """

    h: float
    decimation: float
    t_end: float
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a_hat: np.ndarray
    mode: np.ndarray
    s: np.ndarray
    kappa: np.ndarray
    beta_col: np.ndarray
    beta_con: np.ndarray
    gamma: np.ndarray
    lyapunov: np.ndarray
    lyap_steps: np.ndarray
    lyap_segment: np.ndarray
    min_beta_col: np.ndarray
    min_beta_con: np.ndarray
    events: list
    e0: object
    edges: object
    points: dict
    radii: np.ndarray
    d_con: np.ndarray
    priorities: tuple
    plans: tuple
    aborted: bool = False
    abort_reason: str = ""

    @property
    def n_agents(self):
        return self.x.shape[1]

    @property
    def n_dim(self):
        return self.x.shape[2]


def _spd_check(mat, i):
    if not np.allclose(mat, mat.T, atol=1e-12):
        raise ConfigurationError(f"inertia matrix of agent {i + 1} is not symmetric")
    if np.linalg.eigvalsh(mat).min() <= 0:
        raise ConfigurationError(
            f"inertia matrix of agent {i + 1} is not positive definite"
        )


# ---------------------------------------------------------------------------
# numba kernels (compiled lazily; absent numba falls back to the reference
# path built from the controller module)

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@_njit(cache=True)
def _rhs_kernel(
    t, y, ydot, n_agents, n_dim, em1, em2, rsum2, dbar_col, bbar_col, mu_col,
    dcon2, bbar_con, mu_con, m0, md, goals, mu_c, mu, mu_a, grav, binv,
    alpha, w1, w2, fbar_kind,
):
    """Flat-state derivative; status 0, or +-(edge+1) on a singular barrier."""
    nv = n_agents * n_dim
    u = np.zeros((n_agents, n_dim))
    fb = np.empty(n_agents)
    for i in range(n_agents):
        for d in range(n_dim):
            u[i, d] = grav[i, d]
        if fbar_kind == 0:
            acc = 0.0
            for d in range(n_dim):
                acc += y[i * n_dim + d] * y[i * n_dim + d]
            fb[i] = math.sqrt(acc)
        else:
            fb[i] = 1.0
    for m in range(em1.shape[0]):
        a = em1[m]
        b = em2[m]
        dist2 = 0.0
        for d in range(n_dim):
            diff = y[a * n_dim + d] - y[b * n_dim + d]
            dist2 += diff * diff
        iota = dist2 - rsum2[m]
        if iota <= 0.0:
            return m + 1
        if iota < dbar_col[m]:
            z = 1.0 - iota / dbar_col[m]
            beta = bbar_col * (1.0 - z * z)
            w = 2.0 * mu_col[m] * (-(2.0 * bbar_col * z / dbar_col[m]) / (beta * beta))
            for d in range(n_dim):
                f = w * (y[a * n_dim + d] - y[b * n_dim + d])
                u[a, d] -= f
                u[b, d] += f
        if m < m0:
            eta = dcon2[m] - dist2
            if eta <= 0.0:
                return -(m + 1)
            if eta < dcon2[m]:
                z = 1.0 - eta / dcon2[m]
                beta = bbar_con * (1.0 - z * z)
                w = 2.0 * mu_con[m] * (
                    -(2.0 * bbar_con * z / dcon2[m]) / (beta * beta)
                )
                for d in range(n_dim):
                    f = w * (y[a * n_dim + d] - y[b * n_dim + d])
                    u[a, d] += f
                    u[b, d] -= f
    tmp = np.empty(n_dim)
    for i in range(n_agents):
        drag = y[2 * nv + i] * fb[i] + mu[i]
        for d in range(n_dim):
            u[i, d] -= md[i] * mu_c[i] * (y[i * n_dim + d] - goals[i, d])
            u[i, d] -= drag * y[nv + i * n_dim + d]
        sin_i = math.sin(w1[i] * t + w2[i])
        vsq = 0.0
        for d in range(n_dim):
            vi = y[nv + i * n_dim + d]
            vsq += vi * vi
            ydot[i * n_dim + d] = vi
            tmp[d] = u[i, d] - alpha[i] * fb[i] * sin_i * vi - grav[i, d]
        for d in range(n_dim):
            acc = 0.0
            for e in range(n_dim):
                acc += binv[i, d, e] * tmp[e]
            ydot[nv + i * n_dim + d] = acc
        ydot[2 * nv + i] = mu_a[i] * fb[i] * vsq
    return 0


@_njit(cache=True)
def _rk4_kernel(
    t, y, h, ynew, n_agents, n_dim, em1, em2, rsum2, dbar_col, bbar_col,
    mu_col, dcon2, bbar_con, mu_con, m0, md, goals, mu_c, mu, mu_a, grav,
    binv, alpha, w1, w2, fbar_kind,
):
    n_total = y.shape[0]
    k1 = np.empty(n_total)
    k2 = np.empty(n_total)
    k3 = np.empty(n_total)
    k4 = np.empty(n_total)
    ytmp = np.empty(n_total)
    st = _rhs_kernel(
        t, y, k1, n_agents, n_dim, em1, em2, rsum2, dbar_col, bbar_col, mu_col,
        dcon2, bbar_con, mu_con, m0, md, goals, mu_c, mu, mu_a, grav, binv,
        alpha, w1, w2, fbar_kind,
    )
    if st != 0:
        return st
    for j in range(n_total):
        ytmp[j] = y[j] + 0.5 * h * k1[j]
    st = _rhs_kernel(
        t + 0.5 * h, ytmp, k2, n_agents, n_dim, em1, em2, rsum2, dbar_col,
        bbar_col, mu_col, dcon2, bbar_con, mu_con, m0, md, goals, mu_c, mu,
        mu_a, grav, binv, alpha, w1, w2, fbar_kind,
    )
    if st != 0:
        return st
    for j in range(n_total):
        ytmp[j] = y[j] + 0.5 * h * k2[j]
    st = _rhs_kernel(
        t + 0.5 * h, ytmp, k3, n_agents, n_dim, em1, em2, rsum2, dbar_col,
        bbar_col, mu_col, dcon2, bbar_con, mu_con, m0, md, goals, mu_c, mu,
        mu_a, grav, binv, alpha, w1, w2, fbar_kind,
    )
    if st != 0:
        return st
    for j in range(n_total):
        ytmp[j] = y[j] + h * k3[j]
    st = _rhs_kernel(
        t + h, ytmp, k4, n_agents, n_dim, em1, em2, rsum2, dbar_col, bbar_col,
        mu_col, dcon2, bbar_con, mu_con, m0, md, goals, mu_c, mu, mu_a, grav,
        binv, alpha, w1, w2, fbar_kind,
    )
    if st != 0:
        return st
    for j in range(n_total):
        ynew[j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    return 0


@_njit(cache=True)
def _monitor_kernel(
    y, beta_col_out, beta_con_out, min_col, min_con, n_agents, n_dim, em1,
    em2, rsum2, dbar_col, bbar_col, mu_col, dcon2, bbar_con, mu_con, m0, md,
    goals, mu_c, mu_a, bmat, a_true,
):
    """Energy value plus per-edge barrier values and running minima."""
    nv = n_agents * n_dim
    val = 0.0
    tmp = np.empty(n_dim)
    for i in range(n_agents):
        if md[i] != 0.0:
            d2 = 0.0
            for d in range(n_dim):
                diff = y[i * n_dim + d] - goals[i, d]
                d2 += diff * diff
            val += md[i] * 0.5 * mu_c[i] * d2
        for d in range(n_dim):
            acc = 0.0
            for e in range(n_dim):
                acc += bmat[i, d, e] * y[nv + i * n_dim + e]
            tmp[d] = acc
        vbv = 0.0
        for d in range(n_dim):
            vbv += y[nv + i * n_dim + d] * tmp[d]
        val += 0.5 * vbv
        da = y[2 * nv + i] - a_true[i]
        val += da * da / (2.0 * mu_a[i])
    for m in range(em1.shape[0]):
        a = em1[m]
        b = em2[m]
        dist2 = 0.0
        for d in range(n_dim):
            diff = y[a * n_dim + d] - y[b * n_dim + d]
            dist2 += diff * diff
        iota = dist2 - rsum2[m]
        if iota <= 0.0:
            return val, m + 1
        if iota >= dbar_col[m]:
            beta = bbar_col
        else:
            z = 1.0 - iota / dbar_col[m]
            beta = bbar_col * (1.0 - z * z)
        beta_col_out[m] = beta
        if beta < min_col[m]:
            min_col[m] = beta
        val += mu_col[m] / beta
        if m < m0:
            eta = dcon2[m] - dist2
            if eta <= 0.0:
                return val, -(m + 1)
            if eta >= dcon2[m]:
                beta = bbar_con
            else:
                z = 1.0 - eta / dcon2[m]
                beta = bbar_con * (1.0 - z * z)
            beta_con_out[m] = beta
            if beta < min_con[m]:
                min_con[m] = beta
            val += mu_con[m] / beta
    return val, 0


# ---------------------------------------------------------------------------


class Simulation:
    """Mutable closed-loop run; drive with ``step``/``hybrid_tick`` or ``run``.

    ``plans`` must contain one prefix-suffix plan per agent whose point
    names resolve in ``points``.  The initial condition is gated on the
    standing assumptions: collision-free, the sensed graph connected,
    and no initially sensed pair exactly at its sensing boundary (the
    connectivity barrier is singular there).
    """

    def __init__(
        self,
        models,
        x0,
        v0,
        a_hat0,
        plans,
        points,
        mu_col=0.1,
        mu_con=0.1,
        beta_bar_col=1.0,
        beta_bar_con=1.0,
        fbar="norm",
        h=DEFAULT_H,
        decimation=DEFAULT_DECIMATION,
        broadcast_delay=0.0,
        use_jit=None,
    ):
        x0 = np.array(x0, dtype=float)
        v0 = np.array(v0, dtype=float)
        a_hat0 = np.array(a_hat0, dtype=float)
        n_agents, n_dim = x0.shape
        if len(models) != n_agents or v0.shape != x0.shape or a_hat0.shape != (
            n_agents,
        ):
            raise ConfigurationError("models, x0, v0 and a_hat0 sizes disagree")
        if len(plans) != n_agents:
            raise ConfigurationError("one plan per agent is required")
        if any(p is None for p in plans):
            raise ConfigurationError("every agent needs a realizable plan")
        if h <= 0:
            raise ConfigurationError("step size must be positive")
        self.n_agents = n_agents
        self.n_dim = n_dim
        self.models = list(models)
        self.plans = tuple(plans)
        self.points = {k: np.asarray(c, dtype=float) for k, c in points.items()}
        self.h = float(h)
        self.decimation = float(decimation)
        self.broadcast_delay = float(broadcast_delay)

        self.priorities = tuple(int(m.priority) for m in self.models)
        if sorted(self.priorities) != list(range(1, n_agents + 1)):
            raise ConfigurationError(
                f"priorities {self.priorities} are not a permutation of 1..{n_agents}"
            )
        radii = np.array([m.radius for m in self.models], dtype=float)
        d_con = np.array([m.d_con for m in self.models], dtype=float)
        for i in range(n_agents):
            for j in range(n_agents):
                if i != j and d_con[i] <= radii[i] + radii[j]:
                    raise ConfigurationError(
                        f"sensing radius of agent {i + 1} does not clear the "
                        f"safety spheres of agents {i + 1} and {j + 1}"
                    )
        if not check_collision_free(x0, radii):
            raise ConfigurationError("initial positions are in collision")
        e0 = sense_edges(x0, d_con)
        if not is_connected(e0):
            raise ConfigurationError("initial proximity graph is disconnected")
        for a, b in e0:
            gap = min(d_con[a - 1], d_con[b - 1]) ** 2 - float(
                np.sum((x0[a - 1] - x0[b - 1]) ** 2)
            )
            if gap <= 0.0:
                raise ConfigurationError(
                    f"agents {a} and {b} start exactly at sensing range; the "
                    "connectivity barrier is singular there"
                )
        self.e0 = e0
        self.edges = complete_edges(n_agents, e0)

        inertia = []
        gravity = np.zeros((n_agents, n_dim))
        for i, m in enumerate(self.models):
            b = np.eye(n_dim) if m.inertia is None else np.array(m.inertia, float)
            if b.shape != (n_dim, n_dim):
                raise ConfigurationError(
                    f"inertia matrix of agent {i + 1} has wrong shape"
                )
            _spd_check(b, i)
            inertia.append(b)
            if m.gravity is not None:
                gravity[i] = np.asarray(m.gravity, dtype=float)
        self.inertia = np.array(inertia)
        self.inertia_inv = np.array([np.linalg.inv(b) for b in inertia])
        self.gravity = gravity

        self.cfg = ControllerConfig(
            self.edges,
            len(e0),
            radii,
            d_con,
            mu_col=mu_col,
            mu_con=mu_con,
            mu_c=np.array([m.mu_c for m in self.models]),
            mu=np.array([m.mu for m in self.models]),
            mu_a=np.array([m.mu_a for m in self.models]),
            gravity=gravity,
            beta_bar_col=beta_bar_col,
            beta_bar_con=beta_bar_con,
            fbar=fbar,
        )
        self.radii = radii
        self.d_con = d_con
        self.alpha = np.array([m.alpha for m in self.models], dtype=float)
        self.omega1 = np.array([m.omega1 for m in self.models], dtype=float)
        self.omega2 = np.array([m.omega2 for m in self.models], dtype=float)
        self.bbar_col = float(beta_bar_col)
        self.bbar_con = float(beta_bar_con)

        # per-agent goal coordinate tables in plan-step order
        self.goal_table = []
        for i, plan in enumerate(self.plans):
            rows = []
            for st in plan.steps:
                if st.point not in self.points:
                    raise ConfigurationError(
                        f"plan of agent {i + 1} visits unknown point {st.point!r}"
                    )
                rows.append(self.points[st.point])
            self.goal_table.append(np.array(rows))

        if callable(fbar):
            fbar_kind = -1
        elif fbar == "norm":
            fbar_kind = 0
        elif fbar == "one":
            fbar_kind = 1
        else:
            raise ConfigurationError(f"unknown uncertainty bound function {fbar!r}")
        self.fbar_kind = fbar_kind
        if use_jit is None:
            use_jit = _HAVE_NUMBA and fbar_kind >= 0
        if use_jit and (not _HAVE_NUMBA or fbar_kind < 0):
            raise ConfigurationError(
                "compiled path unavailable (numba missing or custom fbar)"
            )
        self.use_jit = bool(use_jit)

        nv = n_agents * n_dim
        self.y = np.concatenate([x0.ravel(), v0.ravel(), a_hat0])
        self._nv = nv
        self.k = 0
        self.s = np.ones(n_agents, dtype=np.int64)
        self.kappa = np.ones(n_agents, dtype=np.int64)
        self.segment = 0
        self.pending = []
        self.events = []
        self.md = np.zeros(n_agents)
        self.goals = np.zeros((n_agents, n_dim))
        self._refresh_targets()
        self._abort_msg = ""

        # kernel argument tuples; md and goals are mutated in place on
        # switches, so keeping the references here stays current
        c = self.cfg
        dbar_col = np.array([s.d_bar for s in c.col_specs])
        dbar_con = np.array([s.d_bar for s in c.con_specs])
        self._rhs_args = (
            n_agents, n_dim, c.m1, c.m2, c.r_sum**2, dbar_col, self.bbar_col,
            c.mu_col, dbar_con, self.bbar_con, c.mu_con, c.n_initial, self.md,
            self.goals, c.mu_c, c.mu, c.mu_a, self.gravity, self.inertia_inv,
            self.alpha, self.omega1, self.omega2, self.fbar_kind,
        )
        self._mon_args = (
            n_agents, n_dim, c.m1, c.m2, c.r_sum**2, dbar_col, self.bbar_col,
            c.mu_col, dbar_con, self.bbar_con, c.mu_con, c.n_initial, self.md,
            self.goals, c.mu_c, c.mu_a, self.inertia, self.alpha,
        )

    # -- state views --------------------------------------------------------

    @property
    def t(self):
        return self.k * self.h

    @property
    def x(self):
        return self.y[: self._nv].reshape(self.n_agents, self.n_dim)

    @property
    def v(self):
        return self.y[self._nv : 2 * self._nv].reshape(self.n_agents, self.n_dim)

    @property
    def a_hat(self):
        return self.y[2 * self._nv :]

    def active_agent(self):
        """Index of the agent holding the token, or None mid-broadcast."""
        hits = [i for i in range(self.n_agents) if self.kappa[i] == self.priorities[i]]
        assert len(hits) <= 1, "counter invariant violated"
        return hits[0] if hits else None

    def _refresh_targets(self):
        j = self.active_agent()
        self.md[:] = 0.0
        if j is not None:
            self.md[j] = 1.0
        for i in range(self.n_agents):
            self.goals[i] = self.goal_table[i][self.s[i] - 1]

    # -- continuous dynamics ------------------------------------------------

    def dynamics_rhs(self, t, x, v, a_hat):
        """Reference state derivative built from the controller module."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        n = self.n_agents
        vdot = np.zeros_like(v)
        adot = np.zeros(n)
        for i in range(n):
            u = control_input(
                self.cfg, i, self.goals[i], self.md[i], x, v[i], a_hat[i]
            )
            fb = self.cfg.fbar_fn(x[i])
            dist = (
                self.alpha[i]
                * fb
                * math.sin(self.omega1[i] * t + self.omega2[i])
                * v[i]
            )
            vdot[i] = self.inertia_inv[i] @ (u - dist - self.gravity[i])
            adot[i] = self.cfg.mu_a[i] * fb * float(v[i] @ v[i])
        return v.copy(), vdot, adot

    def rhs(self, t, y):
        """Flat derivative on the active path; raises on singular barriers."""
        if self.use_jit:
            ydot = np.empty_like(y)
            st = _rhs_kernel(t, y, ydot, *self._rhs_args)
            if st:
                raise BarrierViolation(self._decode_status(st))
            return ydot
        nv = self._nv
        x = y[:nv].reshape(self.n_agents, self.n_dim)
        v = y[nv : 2 * nv].reshape(self.n_agents, self.n_dim)
        xdot, vdot, adot = self.dynamics_rhs(t, x, v, y[2 * nv :])
        return np.concatenate([xdot.ravel(), vdot.ravel(), adot])

    def _decode_status(self, st):
        m = abs(st) - 1
        pair = self.edges.edges[m]
        kind = "collision" if st > 0 else "connectivity"
        return f"{kind} barrier singular at edge {pair}"

    def _advance(self):
        """One RK4 step; returns a status code, 0 on success."""
        t = self.k * self.h
        if self.use_jit:
            ynew = np.empty_like(self.y)
            st = _rk4_kernel(t, self.y, self.h, ynew, *self._rhs_args)
            if st:
                self._abort_msg = self._decode_status(st)
                return st
        else:
            h = self.h
            try:
                k1 = self.rhs(t, self.y)
                k2 = self.rhs(t + 0.5 * h, self.y + 0.5 * h * k1)
                k3 = self.rhs(t + 0.5 * h, self.y + 0.5 * h * k2)
                k4 = self.rhs(t + h, self.y + h * k3)
            except BarrierViolation as err:
                self._abort_msg = str(err)
                return 1 << 30
            ynew = self.y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        self.y = ynew
        self.k += 1
        return 0

    def step(self):
        """Advance one step of size h; BarrierViolation aborts the motion."""
        if self._advance():
            raise BarrierViolation(self._abort_msg)

    def _monitor(self, beta_col, beta_con, min_col, min_con):
        """Energy and barrier values at the current state; status as above."""
        if self.use_jit:
            return _monitor_kernel(
                self.y, beta_col, beta_con, min_col, min_con, *self._mon_args
            )
        c = self.cfg
        x = self.x
        try:
            val = lyapunov_value(
                c, x, self.v, self.a_hat, self.alpha, self.goals, self.md,
                self.inertia,
            )
        except BarrierViolation:
            return 0.0, 1
        for m in range(len(c.edges)):
            a, b = c.m1[m], c.m2[m]
            iota, eta, _, _ = barrier_args(
                x[a], x[b], c.radii[a], c.radii[b], c.d_min[m]
            )
            beta_col[m] = barrier_value(max(iota, 0.0), c.col_specs[m])
            min_col[m] = min(min_col[m], beta_col[m])
            if m < c.n_initial:
                beta_con[m] = barrier_value(max(eta, 0.0), c.con_specs[m])
                min_con[m] = min(min_con[m], beta_con[m])
        return val, 0

    # -- hybrid layer -------------------------------------------------------

    def hybrid_tick(self):
        """Apply due counter broadcasts, then check the active agent's goal.

        A reached goal provides the step's services instantly, advances
        that agent's plan position (suffix positions wrap to the first
        suffix step) and increments every reachable counter modulo the
        team size.  With a broadcast delay the other agents' increments
        are queued instead, leaving no agent active until delivery.  One
        goal can fire per tick, so consecutive events are at least one
        step apart.
        """
        t = self.k * self.h
        self._apply_pending(t)
        j = self.active_agent()
        if j is None:
            return
        plan = self.plans[j]
        step_idx = int(self.s[j])
        goal = self.goal_table[j][step_idx - 1]
        xj = self.x[j]
        if float(np.linalg.norm(xj - goal)) >= self.models[j].radius:
            return
        st = plan.steps[step_idx - 1]
        self.events.append(
            SimEvent(GOAL_REACHED, t, j, st.point, detail=f"plan step {step_idx}")
        )
        self.events.append(SimEvent(SERVICES_PROVIDED, t, j, st.point, st.services))
        if step_idx < plan.total_length:
            self.s[j] = step_idx + 1
        else:
            self.s[j] = plan.stem_length + 1
        n = self.n_agents
        self.kappa[j] = self.kappa[j] % n + 1
        if self.broadcast_delay > 0:
            due = t + self.broadcast_delay
            for i in range(n):
                if i != j:
                    heapq.heappush(self.pending, (due, i))
        else:
            for i in range(n):
                if i != j:
                    self.kappa[i] = self.kappa[i] % n + 1
        self.events.append(
            SimEvent(COUNTERS_ADVANCED, t, j, counters=tuple(int(v) for v in self.kappa))
        )
        self.segment += 1
        self._refresh_targets()

    def _apply_pending(self, t):
        changed = False
        while self.pending and self.pending[0][0] <= t + 1e-9:
            _, i = heapq.heappop(self.pending)
            self.kappa[i] = self.kappa[i] % self.n_agents + 1
            changed = True
        if changed:
            self.events.append(
                SimEvent(
                    COUNTERS_ADVANCED,
                    t,
                    None,
                    counters=tuple(int(v) for v in self.kappa),
                    detail="broadcast delivered",
                )
            )
            self.segment += 1
            self._refresh_targets()

    # -- episode driver -----------------------------------------------------

    def run(self, t_end, hybrid=True):
        """Integrate to t_end with event handling; returns the log."""
        n_steps = int(round(t_end / self.h))
        dec_every = max(1, int(round(self.decimation / self.h)))
        sample_ks = sorted(
            {k for k in range(0, n_steps + 1, dec_every)} | {n_steps}
        )
        n_samples = len(sample_ks)
        m_all = len(self.edges)
        m0 = self.cfg.n_initial
        n, nd = self.n_agents, self.n_dim

        times = np.empty(n_samples)
        xs = np.empty((n_samples, n, nd))
        vs = np.empty((n_samples, n, nd))
        ahs = np.empty((n_samples, n))
        modes = np.empty((n_samples, n), dtype=np.int8)
        ss = np.empty((n_samples, n), dtype=np.int64)
        ks = np.empty((n_samples, n), dtype=np.int64)
        bcols = np.empty((n_samples, m_all))
        bcons = np.empty((n_samples, m0))
        gammas = np.empty((n_samples, n))
        lyap_dec = np.empty(n_samples)
        lyap = np.empty(n_steps + 1)
        lseg = np.empty(n_steps + 1, dtype=np.int64)
        min_col = np.full(m_all, np.inf)
        min_con = np.full(m0, np.inf)
        beta_col = np.empty(m_all)
        beta_con = np.empty(m0)

        aborted = False
        abort_reason = ""
        sample_pos = 0

        def record(pos, val):
            times[pos] = self.k * self.h
            xs[pos] = self.x
            vs[pos] = self.v
            ahs[pos] = self.a_hat
            modes[pos] = self.md.astype(np.int8)
            ss[pos] = self.s
            ks[pos] = self.kappa
            bcols[pos] = beta_col
            bcons[pos] = beta_con
            gammas[pos] = self.md * self.cfg.mu_c * np.linalg.norm(
                self.x - self.goals, axis=1
            )
            lyap_dec[pos] = val

        if hybrid:
            self.hybrid_tick()
        val, st = self._monitor(beta_col, beta_con, min_col, min_con)
        if st:
            raise ConfigurationError(
                "initial state violates a barrier: " + self._decode_status(st)
            )
        lyap[0] = val
        lseg[0] = self.segment
        record(0, val)
        sample_pos = 1

        last_k = 0
        for k in range(1, n_steps + 1):
            if self._advance():
                aborted = True
                abort_reason = self._abort_msg
                self.events.append(
                    SimEvent(INVARIANT_VIOLATION, k * self.h, detail=abort_reason)
                )
                break
            val, st = self._monitor(beta_col, beta_con, min_col, min_con)
            if st:
                aborted = True
                abort_reason = self._decode_status(st)
                self.events.append(
                    SimEvent(INVARIANT_VIOLATION, k * self.h, detail=abort_reason)
                )
                break
            lyap[k] = val
            lseg[k] = self.segment
            last_k = k
            if hybrid:
                self.hybrid_tick()
            if sample_pos < n_samples and sample_ks[sample_pos] == k:
                record(sample_pos, val)
                sample_pos += 1

        return TrajectoryLog(
            h=self.h,
            decimation=self.decimation,
            t_end=last_k * self.h,
            times=times[:sample_pos].copy(),
            x=xs[:sample_pos].copy(),
            v=vs[:sample_pos].copy(),
            a_hat=ahs[:sample_pos].copy(),
            mode=modes[:sample_pos].copy(),
            s=ss[:sample_pos].copy(),
            kappa=ks[:sample_pos].copy(),
            beta_col=bcols[:sample_pos].copy(),
            beta_con=bcons[:sample_pos].copy(),
            gamma=gammas[:sample_pos].copy(),
            lyapunov=lyap_dec[:sample_pos].copy(),
            lyap_steps=lyap[: last_k + 1].copy(),
            lyap_segment=lseg[: last_k + 1].copy(),
            min_beta_col=min_col,
            min_beta_con=min_con,
            events=list(self.events),
            e0=self.e0,
            edges=self.edges,
            points=dict(self.points),
            radii=self.radii.copy(),
            d_con=self.d_con.copy(),
            priorities=self.priorities,
            plans=self.plans,
            aborted=aborted,
            abort_reason=abort_reason,
        )

    def integrate(self, t_end):
        """Continuous flow only: no goal events, fixed goal configuration."""
        return self.run(t_end, hybrid=False)


def run_episode(scenario, plans=None, t_end=None, h=None, use_jit=None):
    """Simulate a scenario end to end, synthesizing plans when not given."""
    from .planner import synthesize_plans

    if plans is None:
        plans = synthesize_plans(scenario)
    missing = [a.id for a, p in zip(scenario.agents, plans) if p is None]
    if missing:
        raise ConfigurationError(
            "no satisfying plan exists for agent(s) "
            + ", ".join(str(m) for m in missing)
        )
    sim = Simulation(
        models=[a.model for a in scenario.agents],
        x0=np.array([a.position for a in scenario.agents]),
        v0=np.array([a.velocity for a in scenario.agents]),
        a_hat0=np.array([a.a_hat0 for a in scenario.agents]),
        plans=plans,
        points={p.id: p.coords for p in scenario.points},
        mu_col=scenario.mu_col,
        mu_con=scenario.mu_con,
        beta_bar_col=scenario.beta_bar_col,
        beta_bar_con=scenario.beta_bar_con,
        fbar=scenario.fbar,
        h=scenario.h if h is None else h,
        decimation=scenario.decimation,
        broadcast_delay=scenario.broadcast_delay,
        use_jit=use_jit,
    )
    return sim.run(scenario.t_end if t_end is None else t_end)
