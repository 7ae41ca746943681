"""Command line front end.

Verbs: ``plan`` synthesizes and prints each agent's plan; ``run``
simulates a scenario and exports the artifacts; ``check`` rebuilds the
verdict from exported artifacts alone and compares it against the
stored one; ``batch`` runs several scenario files, optionally in
parallel processes.

Artifacts are tab-separated tables with a header row, one file per
class, written next to a fully materialized copy of the scenario:

- ``scenario.yaml``   the effective scenario (overrides applied, drawn parameters explicit)
- ``trajectory.tsv``  decimated samples: time, then per agent position, velocity, gain estimate, mode, plan step, counter
- ``events.tsv``      goal / service / counter / violation events with exact times
- ``monitor.tsv``     decimated series: collision and connectivity barriers per edge, weighted goal distances, energy
- ``energy.tsv``      per integration step: time, goal segment id, energy
- ``margins.tsv``     per edge: minimum barrier value over all steps
- ``plans.tsv``       the executed prefix-suffix plans
- ``verdict.tsv``     the monitor's summary

Floats are written with full ``repr`` precision, so re-parsing the
files reproduces the verdict bit for bit.  The environment variable
``LTLCOORD_VERBOSE`` (0, 1, 2) controls log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .graph import complete_edges, sense_edges
from .monitor import evaluate_run
from .planner import PlanStep, PrefixSuffixPlan, synthesize_plans
from .scenario import ScenarioError, load_scenario, save_scenario
from .simulator import (
    ConfigurationError,
    SimEvent,
    TrajectoryLog,
    run_episode,
)

log = logging.getLogger("ltlcoord")

_ABSENT = "-"


# ---------------------------------------------------------------------------
# formatting helpers


def _f(v):
    return repr(float(v))


def _cell(value):
    if value is None:
        return _ABSENT
    if isinstance(value, frozenset) or isinstance(value, set):
        return ",".join(sorted(value))
    if isinstance(value, tuple):
        return ",".join(str(int(c)) for c in value)
    return str(value)


def _opt(cell):
    return None if cell == _ABSENT else cell


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        r = csv.reader(fh, delimiter="\t")
        header = next(r)
        return header, list(r)


# ---------------------------------------------------------------------------
# artifact writers


def write_trajectory(tl, path):
    n, d = tl.n_agents, tl.n_dim
    header = ["time"]
    for i in range(1, n + 1):
        header += [f"pos{i}_{k}" for k in range(1, d + 1)]
        header += [f"vel{i}_{k}" for k in range(1, d + 1)]
        header += [f"ahat{i}", f"mode{i}", f"step{i}", f"counter{i}"]
    rows = []
    for r in range(tl.times.shape[0]):
        row = [_f(tl.times[r])]
        for i in range(n):
            row += [_f(v) for v in tl.x[r, i]]
            row += [_f(v) for v in tl.v[r, i]]
            row += [_f(tl.a_hat[r, i]), str(int(tl.mode[r, i])), str(int(tl.s[r, i])), str(int(tl.kappa[r, i]))]
        rows.append(row)
    _write_rows(path, header, rows)


def write_events(tl, path):
    header = ["time", "kind", "agent", "point", "services", "counters", "detail"]
    rows = []
    for e in tl.events:
        rows.append(
            [
                _f(e.time),
                e.kind,
                _ABSENT if e.agent is None else str(e.agent + 1),
                _cell(e.point),
                _cell(e.services),
                _cell(e.counters),
                e.detail or "",
            ]
        )
    _write_rows(path, header, rows)


def _edge_names(tl):
    col = [f"beta_col_{a}_{b}" for a, b in tl.edges]
    con = [f"beta_con_{a}_{b}" for a, b in tl.e0]
    return col, con


def write_monitor(tl, path):
    col, con = _edge_names(tl)
    header = (
        ["time"]
        + col
        + con
        + [f"goal_term_{i}" for i in range(1, tl.n_agents + 1)]
        + ["energy"]
    )
    rows = []
    for r in range(tl.times.shape[0]):
        rows.append(
            [_f(tl.times[r])]
            + [_f(v) for v in tl.beta_col[r]]
            + [_f(v) for v in tl.beta_con[r]]
            + [_f(v) for v in tl.gamma[r]]
            + [_f(tl.lyapunov[r])]
        )
    _write_rows(path, header, rows)


def write_energy(tl, path):
    header = ["time", "segment", "energy"]
    rows = [
        [_f(k * tl.h), str(int(tl.lyap_segment[k])), _f(tl.lyap_steps[k])]
        for k in range(tl.lyap_steps.shape[0])
    ]
    _write_rows(path, header, rows)


def write_margins(tl, path):
    header = ["kind", "agent_a", "agent_b", "min_beta"]
    rows = []
    for (a, b), v in zip(tl.edges, tl.min_beta_col):
        rows.append(["collision", str(a), str(b), _f(v)])
    for (a, b), v in zip(tl.e0, tl.min_beta_con):
        rows.append(["connectivity", str(a), str(b), _f(v)])
    _write_rows(path, header, rows)


def write_plans(plans, path):
    header = ["agent", "phase", "index", "point", "services"]
    rows = []
    for i, plan in enumerate(plans, start=1):
        if plan is None:
            continue
        for k, st in enumerate(plan.prefix, start=1):
            rows.append([str(i), "prefix", str(k), st.point, _cell(st.services)])
        for k, st in enumerate(plan.suffix, start=1):
            rows.append([str(i), "suffix", str(k), st.point, _cell(st.services)])
    _write_rows(path, header, rows)


def verdict_rows(verdict):
    d = verdict.as_dict()
    rows = []
    for a in d["agents"]:
        for key in (
            "status",
            "progress",
            "matched",
            "suffix_cycles",
            "respected_priority",
            "detail",
        ):
            rows.append(["agent", str(a["agent"]), key, _vstr(a[key])])
    for key, val in d.items():
        if key == "agents":
            continue
        rows.append(["guarantee", _ABSENT, key, _vstr(val)])
    return rows


def _vstr(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def write_verdict(verdict, path):
    _write_rows(path, ["section", "agent", "key", "value"], verdict_rows(verdict))


def export_artifacts(outdir, sc, tl, plans, verdict):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_scenario(sc, outdir / "scenario.yaml")
    write_trajectory(tl, outdir / "trajectory.tsv")
    write_events(tl, outdir / "events.tsv")
    write_monitor(tl, outdir / "monitor.tsv")
    write_energy(tl, outdir / "energy.tsv")
    write_margins(tl, outdir / "margins.tsv")
    write_plans(plans, outdir / "plans.tsv")
    write_verdict(verdict, outdir / "verdict.tsv")


# ---------------------------------------------------------------------------
# artifact readers (check rebuilds the run record from the files alone)


def read_plans(path, n_agents):
    _, rows = _read_rows(path)
    prefixes = {i: [] for i in range(1, n_agents + 1)}
    suffixes = {i: [] for i in range(1, n_agents + 1)}
    for agent, phase, _idx, point, services in rows:
        srv = frozenset(s for s in services.split(",") if s)
        (prefixes if phase == "prefix" else suffixes)[int(agent)].append(
            PlanStep(point, srv)
        )
    plans = []
    for i in range(1, n_agents + 1):
        if suffixes[i]:
            plans.append(PrefixSuffixPlan(tuple(prefixes[i]), tuple(suffixes[i])))
        else:
            plans.append(None)
    return tuple(plans)


def read_events(path):
    _, rows = _read_rows(path)
    events = []
    for time, kind, agent, point, services, counters, detail in rows:
        srv = None
        if _opt(services) is not None or kind == "services_provided":
            srv = frozenset(s for s in services.split(",") if s)
        cnt = None
        if _opt(counters) is not None:
            cnt = tuple(int(c) for c in counters.split(","))
        events.append(
            SimEvent(
                kind,
                float(time),
                None if agent == _ABSENT else int(agent) - 1,
                _opt(point),
                srv,
                cnt,
                detail,
            )
        )
    return events


def read_artifacts(outdir):
    """Rebuild the run record of ``cmd_run`` from its exported files."""
    outdir = Path(outdir)
    sc = load_scenario(outdir / "scenario.yaml")
    n, dim = sc.n_agents, sc.dimension

    header, rows = _read_rows(outdir / "trajectory.tsv")
    data = np.array([[float(c) for c in r] for r in rows]) if rows else np.empty((0, len(header)))
    stride = 2 * dim + 4
    times = data[:, 0]
    S = data.shape[0]
    x = np.empty((S, n, dim))
    v = np.empty((S, n, dim))
    a_hat = np.empty((S, n))
    mode = np.empty((S, n), dtype=np.int8)
    s = np.empty((S, n), dtype=np.int64)
    kappa = np.empty((S, n), dtype=np.int64)
    for i in range(n):
        base = 1 + i * stride
        x[:, i] = data[:, base : base + dim]
        v[:, i] = data[:, base + dim : base + 2 * dim]
        a_hat[:, i] = data[:, base + 2 * dim]
        mode[:, i] = data[:, base + 2 * dim + 1].astype(np.int8)
        s[:, i] = data[:, base + 2 * dim + 2].astype(np.int64)
        kappa[:, i] = data[:, base + 2 * dim + 3].astype(np.int64)

    x0 = np.array([a.position for a in sc.agents])
    e0 = sense_edges(x0, [a.model.d_con for a in sc.agents])
    edges = complete_edges(n, e0)
    m_all, m0 = len(edges), len(e0)

    _, mrows = _read_rows(outdir / "monitor.tsv")
    mdata = np.array([[float(c) for c in r] for r in mrows]) if mrows else np.empty((0, 1 + m_all + m0 + n + 1))
    beta_col = mdata[:, 1 : 1 + m_all]
    beta_con = mdata[:, 1 + m_all : 1 + m_all + m0]
    gamma = mdata[:, 1 + m_all + m0 : 1 + m_all + m0 + n]
    lyap_dec = mdata[:, -1]

    _, erows = _read_rows(outdir / "energy.tsv")
    lyap_steps = np.array([float(r[2]) for r in erows])
    lyap_segment = np.array([int(r[1]) for r in erows], dtype=np.int64)

    _, grows = _read_rows(outdir / "margins.tsv")
    mins = {(r[0], int(r[1]), int(r[2])): float(r[3]) for r in grows}
    min_beta_col = np.array([mins[("collision", a, b)] for a, b in edges])
    min_beta_con = np.array([mins[("connectivity", a, b)] for a, b in e0])

    events = read_events(outdir / "events.tsv")
    aborted = any(e.kind == "invariant_violation" for e in events)
    reason = next(
        (e.detail for e in events if e.kind == "invariant_violation"), ""
    )

    return TrajectoryLog(
        h=sc.h,
        decimation=sc.decimation,
        t_end=sc.t_end,
        times=times,
        x=x,
        v=v,
        a_hat=a_hat,
        mode=mode,
        s=s,
        kappa=kappa,
        beta_col=beta_col,
        beta_con=beta_con,
        gamma=gamma,
        lyapunov=lyap_dec,
        lyap_steps=lyap_steps,
        lyap_segment=lyap_segment,
        min_beta_col=min_beta_col,
        min_beta_con=min_beta_con,
        events=events,
        e0=e0,
        edges=edges,
        points={p.id: p.coords for p in sc.points},
        radii=np.array([a.model.radius for a in sc.agents]),
        d_con=np.array([a.model.d_con for a in sc.agents]),
        priorities=tuple(a.model.priority for a in sc.agents),
        plans=read_plans(outdir / "plans.tsv", n),
        aborted=aborted,
        abort_reason=reason,
    )


# ---------------------------------------------------------------------------
# commands


def _load(args):
    sc = load_scenario(args.scenario, seed=args.seed)
    if args.h is not None:
        sc.h = args.h
    if args.t_end is not None:
        sc.t_end = args.t_end
    if args.broadcast_delay is not None:
        sc.broadcast_delay = args.broadcast_delay
    return sc


def _plan_text(i, plan):
    if plan is None:
        return f"agent {i}: no satisfying plan"
    pre = " ".join(f"{s.point}:{{{','.join(sorted(s.services))}}}" for s in plan.prefix)
    suf = " ".join(f"{s.point}:{{{','.join(sorted(s.services))}}}" for s in plan.suffix)
    return f"agent {i}: prefix [{pre}] suffix [{suf}]"


def cmd_plan(args):
    sc = _load(args)
    plans = synthesize_plans(sc)
    for agent, plan in zip(sc.agents, plans):
        print(_plan_text(agent.id, plan))
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_plans(plans, outdir / "plans.tsv")
        log.info("plans written to %s", outdir / "plans.tsv")
    return 1 if any(p is None for p in plans) else 0


def _summary_lines(verdict):
    lines = []
    for a in verdict.agents:
        lines.append(
            f"agent {a.agent}: {a.status} (progress {a.progress:.2f}, "
            f"{a.matched} provisions, {a.suffix_cycles} suffix rounds, "
            f"priority {'respected' if a.respected_priority else 'VIOLATED'})"
        )
    g = verdict.guarantees
    lines.append(
        "guarantees: collision_free={} connectivity={} energy_monotone={} "
        "gain_bounded={}".format(
            *(
                "yes" if b else "NO"
                for b in (
                    g.collision_free,
                    g.connectivity_maintained,
                    g.lyapunov_monotone,
                    g.a_hat_bounded and g.a_hat_nondecreasing,
                )
            )
        )
    )
    lines.append(
        f"margins: min_beta_col={g.min_beta_col:.4g} min_beta_con={g.min_beta_con:.4g}"
    )
    if g.aborted:
        lines.append(f"run aborted: {g.abort_reason}")
    return lines


def cmd_run(args):
    sc = _load(args)
    plans = synthesize_plans(sc)
    missing = [a.id for a, p in zip(sc.agents, plans) if p is None]
    if missing:
        print(
            "no satisfying plan for agent(s) " + ", ".join(map(str, missing)),
            file=sys.stderr,
        )
        return 2
    log.info("running %s for %g s at h=%g", args.scenario, sc.t_end, sc.h)
    tl = run_episode(sc, plans=plans)
    verdict = evaluate_run(tl, formulas=[a.formula for a in sc.agents])
    export_artifacts(args.out, sc, tl, plans, verdict)
    log.info("artifacts written to %s", args.out)
    for line in _summary_lines(verdict):
        print(line)
    if tl.aborted:
        print(f"partial artifacts in {args.out}", file=sys.stderr)
        return 1
    return 0


def cmd_check(args):
    tl = read_artifacts(args.out)
    sc = load_scenario(Path(args.out) / "scenario.yaml")
    verdict = evaluate_run(tl, formulas=[a.formula for a in sc.agents])
    recomputed = verdict_rows(verdict)
    _, stored = _read_rows(Path(args.out) / "verdict.tsv")
    stored = [list(r) for r in stored]
    for line in _summary_lines(verdict):
        print(line)
    if recomputed == stored:
        print("verdict reproduced from artifacts")
        return 0
    print("verdict MISMATCH against stored summary", file=sys.stderr)
    for got, want in zip(recomputed, stored):
        if got != want:
            print(f"  recomputed {got} != stored {want}", file=sys.stderr)
    return 1


def _batch_one(path, ns_dict):
    ns = argparse.Namespace(**ns_dict)
    ns.scenario = path
    ns.out = str(Path(ns.out) / Path(path).stem)
    try:
        code = cmd_run(ns)
    except (ScenarioError, ConfigurationError) as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        code = 2
    return path, code


def cmd_batch(args):
    ns_dict = dict(
        h=args.h,
        t_end=args.t_end,
        seed=args.seed,
        broadcast_delay=args.broadcast_delay,
        out=args.out,
    )
    results = []
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_batch_one, p, ns_dict) for p in args.scenarios
            ]
            results = [f.result() for f in futures]
    else:
        results = [_batch_one(p, ns_dict) for p in args.scenarios]
    worst = 0
    for path, code in results:
        print(f"{path}: {'ok' if code == 0 else f'exit {code}'}")
        worst = max(worst, code)
    return worst


# ---------------------------------------------------------------------------
# argument parsing


def _common(sub):
    sub.add_argument("--h", type=float, default=None, help="integration step override")
    sub.add_argument("--t-end", type=float, default=None, help="horizon override")
    sub.add_argument("--seed", type=int, default=None, help="seed override for drawn parameters")
    sub.add_argument(
        "--broadcast-delay", type=float, default=None, help="counter broadcast delay override"
    )


def build_parser():
    p = argparse.ArgumentParser(
        prog="ltlcoord",
        description="Plan, simulate and verify multi-agent temporal-logic service tasks.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="synthesize and print the agents' plans")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", default=None, help="directory for plans.tsv")
    _common(sp)
    sp.set_defaults(func=cmd_plan)

    sr = sub.add_parser("run", help="simulate a scenario and export artifacts")
    sr.add_argument("--scenario", required=True)
    sr.add_argument("--out", default="out", help="artifact directory")
    _common(sr)
    sr.set_defaults(func=cmd_run)

    sc = sub.add_parser("check", help="re-verify exported artifacts")
    sc.add_argument("--out", default="out", help="artifact directory to verify")
    sc.set_defaults(func=cmd_check)

    sb = sub.add_parser("batch", help="run several scenarios")
    sb.add_argument("scenarios", nargs="+")
    sb.add_argument("--out", default="out", help="parent artifact directory")
    sb.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    _common(sb)
    sb.set_defaults(func=cmd_batch)
    return p


def _verbosity_level(raw):
    """LTLCOORD_VERBOSE: unset/0 warnings, 1 info, anything higher debug."""
    return {"": logging.WARNING, "0": logging.WARNING, "1": logging.INFO}.get(
        raw, logging.DEBUG
    )


def main(argv=None):
    logging.basicConfig(
        level=_verbosity_level(os.environ.get("LTLCOORD_VERBOSE", "")),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
