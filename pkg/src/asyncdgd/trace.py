"""Per-tick run records and their CSV encoding.

Trace CSV layout (one row per global tick, state after that tick's updates):

    tick, topology, active, nu_1..nu_D, <estimates>, F, dist, grad_norm,
    tau_max, tau_mean[, q_1..q_D]

``topology`` and agent ids are 1-based. ``active`` is a 0/1 string, agent 1
first. ``<estimates>`` is ``x<i>_<k>`` per agent coordinate (optimize mode)
or ``x_<k>`` for the arbiter estimate (consensus mode); with estimates elided
it is ``norm_<i>`` or ``norm``. ``dist`` is empty when no reference solution
is known. ``q_i`` (optimize mode) is agent i's relative step against the
largest active step; empty when no agent was active.

Every file starts with a ``#`` metadata line carrying the config hash and seed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algo import DivergenceError, lambda_diagnostics, step_size
from .netsim import Simulation


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if np.isnan(v) else repr(v)
    return str(int(v))


@dataclass
class Trace:
    mode: str
    n_agents: int
    dims: tuple
    initial_estimate: np.ndarray
    initial_objective: float
    topology: list = field(default_factory=list)
    active: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    distance: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    delays: list = field(default_factory=list)
    q: list = field(default_factory=list)
    diverged_at: int | None = None

    def __len__(self) -> int:
        return len(self.topology)

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def nu_array(self) -> np.ndarray:
        return np.array(self.nu, dtype=np.int64).reshape(len(self), self.n_agents)

    def active_array(self) -> np.ndarray:
        return np.array(self.active, dtype=bool).reshape(len(self), self.n_agents)

    def delay_array(self) -> np.ndarray:
        return np.array(self.delays, dtype=np.int64).reshape(len(self), self.n_agents, self.n_agents)

    def objective_array(self) -> np.ndarray:
        return np.array(self.objective, dtype=float)

    def estimate_array(self) -> np.ndarray:
        return np.array(self.estimates, dtype=float)

    def delay_histogram(self) -> dict:
        """{(j, i): counts} where counts[t] = #ticks with tau_ji = t; j ≠ i."""
        tau = self.delay_array()
        out = {}
        for j in range(self.n_agents):
            for i in range(self.n_agents):
                if i != j:
                    out[(j, i)] = np.bincount(tau[:, j, i])
        return out


def record_run(sim: Simulation, horizon: int, x_star=None, gradient=None) -> Trace:
    """Advance ``sim`` for ``horizon`` ticks, recording a row per tick.

    ``gradient`` maps an iterate to the gradient whose norm is recorded.
    Stops early (setting ``diverged_at``) when the algorithm raises
    :class:`DivergenceError`.
    """
    algo = sim.algorithm
    x0 = algo.estimate(sim.lists)
    trace = Trace(algo.mode, sim.n_agents, tuple(v.shape[0] for v in sim.lists[0].values),
                  x0, algo.objective_value(x0))
    optimize = algo.mode == "optimize"
    xs = None if x_star is None else np.asarray(x_star, dtype=float)
    for _ in range(horizon):
        try:
            report = sim.advance_tick()
        except DivergenceError:
            trace.diverged_at = sim.n
            break
        x = algo.estimate(sim.lists)
        trace.topology.append(report.topology)
        trace.active.append(report.active.copy())
        trace.nu.append(sim.nu.copy())
        trace.estimates.append(x)
        trace.objective.append(algo.objective_value(x))
        trace.distance.append(float(np.linalg.norm(x - xs)) if xs is not None else float("nan"))
        trace.grad_norm.append(float(np.linalg.norm(gradient(x))) if gradient else float("nan"))
        trace.delays.append(sim.delay_matrix())
        if optimize:
            steps = np.array([step_size(algo.schedule, int(v)) for v in sim.nu])
            q = lambda_diagnostics(steps, report.active)
            trace.q.append(np.full(sim.n_agents, np.nan) if q is None else q)
    return trace


def _meta_line(kind: str, config_hash: str, seed: int) -> str:
    return f"# asyncdgd {kind} v1 config_sha256={config_hash} seed={seed}\n"


def trace_columns(trace: Trace, full_estimates: bool) -> list[str]:
    D = trace.n_agents
    cols = ["tick", "topology", "active"] + [f"nu_{i + 1}" for i in range(D)]
    if trace.mode == "optimize":
        if full_estimates:
            cols += [f"x{i + 1}_{k + 1}" for i in range(D) for k in range(trace.dims[i])]
        else:
            cols += [f"norm_{i + 1}" for i in range(D)]
    else:
        cols += [f"x_{k + 1}" for k in range(trace.dims[0])] if full_estimates else ["norm"]
    cols += ["F", "dist", "grad_norm", "tau_max", "tau_mean"]
    if trace.mode == "optimize":
        cols += [f"q_{i + 1}" for i in range(D)]
    return cols


def write_trace_csv(trace: Trace, path: Path, config_hash: str, seed: int,
                    full_estimates: bool = True) -> None:
    buf = io.StringIO()
    buf.write(_meta_line("trace", config_hash, seed))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_columns(trace, full_estimates))
    offsets = np.concatenate([[0], np.cumsum(trace.dims)])
    D = trace.n_agents
    off_diag = ~np.eye(D, dtype=bool)
    for n in range(len(trace)):
        x = trace.estimates[n]
        row = [n, trace.topology[n] + 1, "".join("1" if a else "0" for a in trace.active[n])]
        row += [int(v) for v in trace.nu[n]]
        if full_estimates:
            row += [_fmt(v) for v in x]
        elif trace.mode == "optimize":
            row += [_fmt(np.linalg.norm(x[offsets[i]:offsets[i + 1]])) for i in range(D)]
        else:
            row += [_fmt(np.linalg.norm(x))]
        tau = trace.delays[n][off_diag] if D > 1 else np.zeros(1)
        row += [_fmt(trace.objective[n]), _fmt(trace.distance[n]), _fmt(trace.grad_norm[n]),
                int(tau.max()), _fmt(float(tau.mean()))]
        if trace.mode == "optimize":
            row += [_fmt(v) for v in trace.q[n]]
        w.writerow(row)
    Path(path).write_text(buf.getvalue())


def write_delay_csv(trace: Trace, path: Path, config_hash: str, seed: int) -> None:
    """Delay histogram in long form: sender, receiver, tau, count (1-based ids)."""
    buf = io.StringIO()
    buf.write(_meta_line("delays", config_hash, seed))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sender", "receiver", "tau", "count"])
    for (j, i), counts in sorted(trace.delay_histogram().items()):
        for t in np.flatnonzero(counts):
            w.writerow([j + 1, i + 1, int(t), int(counts[t])])
    Path(path).write_text(buf.getvalue())


def read_meta(path: Path) -> dict:
    first = Path(path).open().readline()
    if not first.startswith("# asyncdgd"):
        raise ValueError(f"{path}: missing metadata header")
    return dict(tok.split("=", 1) for tok in first.split()[2:] if "=" in tok)


def read_csv_rows(path: Path) -> list[dict]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_trace_columns(path: Path) -> dict:
    """Numeric columns of a trace CSV as arrays (``active`` as a bool matrix)."""
    rows = read_csv_rows(path)
    if not rows:
        raise ValueError(f"{path}: empty trace")
    out = {}
    for key in rows[0]:
        if key == "active":
            out[key] = np.array([[c == "1" for c in r[key]] for r in rows], dtype=bool)
        else:
            out[key] = np.array([float(r[key]) if r[key] != "" else np.nan for r in rows])
    return out


def read_delay_histogram(path: Path, n_agents: int) -> dict:
    hist: dict = {}
    for r in read_csv_rows(path):
        key = (int(r["sender"]) - 1, int(r["receiver"]) - 1)
        hist.setdefault(key, {})[int(r["tau"])] = int(r["count"])
    out = {}
    for j in range(n_agents):
        for i in range(n_agents):
            if i == j:
                continue
            d = hist.get((j, i), {})
            counts = np.zeros(max(d, default=0) + 1, dtype=np.int64)
            for t, c in d.items():
                counts[t] = c
            out[(j, i)] = counts
    return out


def write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
