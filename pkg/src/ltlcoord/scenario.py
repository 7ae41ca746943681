"""Scenario files: loading, validation, and serialization.

A scenario bundles the workspace (labeled points), the team (initial
states, physical parameters, priorities, one task formula per agent)
and the run settings.  Unspecified physical parameters (inertia scale,
disturbance gain and phase) are drawn uniformly from [1, 2] using the
scenario seed, so a file without them still describes one reproducible
run; serialization always writes the materialized values back out,
which makes load -> serialize -> load the identity.

Validation errors carry the path of the offending field.  The standing
assumptions on the initial deployment (disjoint safety spheres and a
connected proximity graph) are checked here as well, naming the
offending agent pair.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .graph import sense_edges
from .ltl import LtlSyntaxError, atoms, parse_ltl
from .simulator import AgentModel

_RUN_DEFAULTS = {
    "h": 0.005,
    "decimation": 0.5,
    "t_end": 60.0,
    "broadcast_delay": 0.0,
    "mu_col": 0.1,
    "mu_con": 0.1,
    "beta_bar_col": 1.0,
    "beta_bar_con": 1.0,
    "regressor": "norm",
}

_TOP_KEYS = {"dimension", "seed", "points", "agents"} | set(_RUN_DEFAULTS)
_AGENT_KEYS = {
    "id",
    "position",
    "velocity",
    "gain_estimate",
    "priority",
    "formula",
    "services",
    "propositions",
    "radius",
    "sensing_range",
    "inertia",
    "gravity",
    "control",
    "disturbance",
}
_CONTROL_KEYS = {"mu", "mu_c", "mu_a"}
_DISTURBANCE_KEYS = {"alpha", "omega1", "omega2"}


class ScenarioError(ValueError):
    """A scenario file is malformed or violates a standing assumption."""


@dataclass(frozen=True)
class WorkspacePoint:
    id: str
    coords: np.ndarray


@dataclass
class AgentSpec:
    """One agent: physical model, initial state, and its task."""

    id: int
    model: AgentModel
    position: np.ndarray
    velocity: np.ndarray
    a_hat0: float
    formula: str
    services: dict
    propositions: tuple


@dataclass
class Scenario:
    dimension: int
    points: list
    agents: list
    mu_col: float
    mu_con: float
    beta_bar_col: float
    beta_bar_con: float
    fbar: str
    h: float
    decimation: float
    t_end: float
    broadcast_delay: float
    seed: object = None

    @property
    def n_agents(self):
        return len(self.agents)

    def point(self, pid):
        for p in self.points:
            if p.id == pid:
                return p
        raise KeyError(pid)


def _fail(path, msg):
    raise ScenarioError(f"{path}: {msg}")


def _number(val, path):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _fail(path, f"expected a number, got {type(val).__name__}")
    return float(val)


def _integer(val, path):
    if isinstance(val, bool) or not isinstance(val, int):
        _fail(path, f"expected an integer, got {type(val).__name__}")
    return int(val)


def _vector(val, dim, path):
    if not isinstance(val, (list, tuple)) or len(val) != dim:
        _fail(path, f"expected a sequence of {dim} numbers")
    return np.array([_number(v, f"{path}[{k}]") for k, v in enumerate(val)])


def _mapping(val, allowed, path):
    if not isinstance(val, dict):
        _fail(path, f"expected a mapping, got {type(val).__name__}")
    unknown = set(val) - allowed
    if unknown:
        _fail(path, f"unknown key(s) {sorted(unknown)}")
    return val


def _draw(rng, explicit, path):
    """Explicit value, or a fresh U(1, 2) draw when left unspecified."""
    if explicit is None:
        if rng is None:
            _fail(path, "left unspecified but the scenario has no seed to draw from")
        return float(rng.uniform(1.0, 2.0))
    return _number(explicit, path)


def _parse_inertia(raw, dim, rng, path):
    if raw is None or isinstance(raw, (int, float)):
        return np.eye(dim) * _draw(rng, raw, path)
    if isinstance(raw, list):
        mat = np.array(
            [_vector(row, dim, f"{path}[{k}]") for k, row in enumerate(raw)]
        )
        if mat.shape != (dim, dim):
            _fail(path, f"expected a {dim}x{dim} matrix")
        return mat
    _fail(path, "expected a number or a square matrix")


def _parse_agent(raw, idx, dim, point_ids, rng):
    path = f"agents[{idx}]"
    raw = _mapping(raw, _AGENT_KEYS, path)
    for key in ("id", "position", "formula"):
        if key not in raw:
            _fail(path, f"missing required key '{key}'")
    agent_id = _integer(raw["id"], f"{path}.id")
    position = _vector(raw["position"], dim, f"{path}.position")
    velocity = _vector(raw.get("velocity", [0.0] * dim), dim, f"{path}.velocity")
    a_hat0 = _number(raw.get("gain_estimate", 0.0), f"{path}.gain_estimate")
    priority = _integer(raw.get("priority", idx + 1), f"{path}.priority")
    radius = _number(raw.get("radius", 1.0), f"{path}.radius")
    sensing = _number(raw.get("sensing_range", 4.0), f"{path}.sensing_range")
    if radius <= 0:
        _fail(f"{path}.radius", "must be positive")
    if sensing <= 2 * radius:
        _fail(f"{path}.sensing_range", "must exceed the sphere diameter")

    control = _mapping(raw.get("control", {}), _CONTROL_KEYS, f"{path}.control")
    mu = _number(control.get("mu", 1.0), f"{path}.control.mu")
    mu_c = _number(control.get("mu_c", 1.0), f"{path}.control.mu_c")
    mu_a = _number(control.get("mu_a", 1.0), f"{path}.control.mu_a")

    inertia = _parse_inertia(raw.get("inertia"), dim, rng, f"{path}.inertia")
    gravity = _vector(raw.get("gravity", [0.0] * dim), dim, f"{path}.gravity")

    dist = raw.get("disturbance")
    dpath = f"{path}.disturbance"
    if dist == "none":
        alpha, omega1, omega2 = 0.0, 1.0, 0.0
    elif dist is None:
        alpha = _draw(rng, None, f"{dpath}.alpha")
        omega1 = _draw(rng, None, f"{dpath}.omega1")
        omega2 = _draw(rng, None, f"{dpath}.omega2")
    else:
        dist = _mapping(dist, _DISTURBANCE_KEYS, dpath)
        alpha = _number(dist.get("alpha", 0.0), f"{dpath}.alpha")
        omega1 = _number(dist.get("omega1", 1.0), f"{dpath}.omega1")
        omega2 = _number(dist.get("omega2", 0.0), f"{dpath}.omega2")

    services = {}
    raw_services = raw.get("services", {})
    if not isinstance(raw_services, dict):
        _fail(f"{path}.services", "expected a mapping of point id to service names")
    for pid, names in raw_services.items():
        spath = f"{path}.services.{pid}"
        if pid not in point_ids:
            _fail(spath, f"unknown point id {pid!r}")
        if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
            _fail(spath, "expected a list of service names")
        services[pid] = frozenset(names)

    declared = raw.get("propositions")
    if declared is not None:
        ppath = f"{path}.propositions"
        if not isinstance(declared, list) or not all(
            isinstance(s, str) for s in declared
        ):
            _fail(ppath, "expected a list of proposition names")
        declared = set(declared)
    else:
        declared = set().union(*services.values()) if services else set()

    formula = raw["formula"]
    if not isinstance(formula, str):
        _fail(f"{path}.formula", "expected a formula string")
    try:
        f = parse_ltl(formula)
    except LtlSyntaxError as exc:
        _fail(f"{path}.formula", str(exc))
    missing = {a for a in atoms(f)} - declared
    if missing:
        warnings.warn(
            f"agent {agent_id}: formula references atom(s) not provided at any "
            f"point: {', '.join(sorted(missing))}",
            stacklevel=2,
        )
        declared |= missing

    model = AgentModel(
        radius=radius,
        d_con=sensing,
        priority=priority,
        mu=mu,
        mu_c=mu_c,
        mu_a=mu_a,
        inertia=inertia,
        gravity=gravity,
        alpha=alpha,
        omega1=omega1,
        omega2=omega2,
    )
    return AgentSpec(
        id=agent_id,
        model=model,
        position=position,
        velocity=velocity,
        a_hat0=a_hat0,
        formula=formula,
        services=services,
        propositions=tuple(sorted(declared)),
    )


def _check_deployment(sc):
    """Disjoint safety spheres and a connected initial proximity graph."""
    n = sc.n_agents
    x = np.array([a.position for a in sc.agents])
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.linalg.norm(x[i] - x[j]))
            ri, rj = sc.agents[i].model.radius, sc.agents[j].model.radius
            if d < ri + rj:
                raise ScenarioError(
                    f"agents {sc.agents[i].id} and {sc.agents[j].id} start with "
                    f"overlapping safety spheres (distance {d:.3f} < {ri + rj:.3f})"
                )
    if n > 1:
        e0 = sense_edges(x, [a.model.d_con for a in sc.agents])
        reach = {0}
        frontier = [0]
        adj = {i: set() for i in range(n)}
        for a, b in e0:
            adj[a - 1].add(b - 1)
            adj[b - 1].add(a - 1)
        while frontier:
            cur = frontier.pop()
            for nxt in adj[cur] - reach:
                reach.add(nxt)
                frontier.append(nxt)
        if len(reach) < n:
            stranded = min(i for i in range(n) if i not in reach)
            raise ScenarioError(
                f"initial proximity graph is disconnected (agent "
                f"{sc.agents[stranded].id} has no path to agent {sc.agents[0].id})"
            )

    prios = sorted(a.model.priority for a in sc.agents)
    if prios != list(range(1, n + 1)):
        raise ScenarioError(
            f"agents: priorities must form a permutation of 1..{n}, got {prios}"
        )
    ids = [a.id for a in sc.agents]
    if len(set(ids)) != len(ids):
        raise ScenarioError("agents: ids must be unique")


def load_scenario(source, seed=None):
    """Read and validate a scenario from a path or an open text stream.

    ``seed`` overrides the file's seed before any unspecified physical
    parameters are drawn.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    else:
        raw = yaml.safe_load(source)
    if not isinstance(raw, dict):
        _fail("scenario", "expected a top-level mapping")
    raw = _mapping(raw, _TOP_KEYS, "scenario")

    dim = _integer(raw.get("dimension", 3), "dimension")
    if dim < 2:
        _fail("dimension", "must be at least 2")
    run = {k: _number(raw.get(k, d), k) for k, d in _RUN_DEFAULTS.items() if k != "regressor"}
    regressor = raw.get("regressor", "norm")
    if regressor not in ("norm", "one"):
        _fail("regressor", f"expected 'norm' or 'one', got {regressor!r}")
    if run["h"] <= 0:
        _fail("h", "must be positive")

    file_seed = raw.get("seed")
    if file_seed is not None:
        file_seed = _integer(file_seed, "seed")
    effective = seed if seed is not None else file_seed
    rng = np.random.default_rng(effective) if effective is not None else None

    raw_points = raw.get("points")
    if not isinstance(raw_points, list) or not raw_points:
        _fail("points", "expected a nonempty list")
    points, seen = [], set()
    for k, rp in enumerate(raw_points):
        ppath = f"points[{k}]"
        rp = _mapping(rp, {"id", "coords"}, ppath)
        if "id" not in rp or "coords" not in rp:
            _fail(ppath, "missing required key 'id' or 'coords'")
        pid = rp["id"]
        if not isinstance(pid, str):
            _fail(f"{ppath}.id", "expected a string")
        if pid in seen:
            _fail(f"{ppath}.id", f"duplicate point id {pid!r}")
        seen.add(pid)
        points.append(WorkspacePoint(pid, _vector(rp["coords"], dim, f"{ppath}.coords")))

    raw_agents = raw.get("agents")
    if not isinstance(raw_agents, list) or not raw_agents:
        _fail("agents", "expected a nonempty list")
    agents = [
        _parse_agent(ra, k, dim, seen, rng) for k, ra in enumerate(raw_agents)
    ]

    sc = Scenario(
        dimension=dim,
        points=points,
        agents=agents,
        mu_col=run["mu_col"],
        mu_con=run["mu_con"],
        beta_bar_col=run["beta_bar_col"],
        beta_bar_con=run["beta_bar_con"],
        fbar=regressor,
        h=run["h"],
        decimation=run["decimation"],
        t_end=run["t_end"],
        broadcast_delay=run["broadcast_delay"],
        seed=effective,
    )
    _check_deployment(sc)
    return sc


def _inertia_out(mat):
    dim = mat.shape[0]
    scale = mat[0, 0]
    if np.array_equal(mat, np.eye(dim) * scale):
        return float(scale)
    return [[float(v) for v in row] for row in mat]


def serialize_scenario(sc):
    """Scenario back to YAML text with all drawn parameters explicit."""
    doc = {
        "dimension": sc.dimension,
        "seed": sc.seed,
        "h": sc.h,
        "decimation": sc.decimation,
        "t_end": sc.t_end,
        "broadcast_delay": sc.broadcast_delay,
        "mu_col": sc.mu_col,
        "mu_con": sc.mu_con,
        "beta_bar_col": sc.beta_bar_col,
        "beta_bar_con": sc.beta_bar_con,
        "regressor": sc.fbar,
        "points": [
            {"id": p.id, "coords": [float(v) for v in p.coords]} for p in sc.points
        ],
        "agents": [],
    }
    if sc.seed is None:
        del doc["seed"]
    for a in sc.agents:
        m = a.model
        doc["agents"].append(
            {
                "id": a.id,
                "position": [float(v) for v in a.position],
                "velocity": [float(v) for v in a.velocity],
                "gain_estimate": a.a_hat0,
                "priority": m.priority,
                "formula": a.formula,
                "services": {
                    pid: sorted(srv) for pid, srv in sorted(a.services.items())
                },
                "propositions": list(a.propositions),
                "radius": m.radius,
                "sensing_range": m.d_con,
                "control": {"mu": m.mu, "mu_c": m.mu_c, "mu_a": m.mu_a},
                "inertia": _inertia_out(np.asarray(m.inertia)),
                "gravity": [float(v) for v in np.asarray(m.gravity)],
                "disturbance": {
                    "alpha": m.alpha,
                    "omega1": m.omega1,
                    "omega2": m.omega2,
                },
            }
        )
    return yaml.safe_dump(doc, sort_keys=False)


def save_scenario(sc, path):
    Path(path).write_text(serialize_scenario(sc), encoding="utf-8")


def bundled_scenario_path(name="five_agents"):
    """Filesystem path of a scenario shipped with the package."""
    from importlib.resources import files

    return Path(str(files("ltlcoord") / "scenarios" / f"{name}.yaml"))
