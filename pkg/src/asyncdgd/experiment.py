"""Build simulation instances from a config, run replications, and re-check
stored runs.

Output layout of ``run_experiment(cfg, out, replications)``::

    out/config.json          the config as given (seed = base seed)
    out/summary.csv          one row per replication
    out/rep_000/config.json  fully resolved config (explicit edges, tick ratios,
                             consensus instance, initial estimates)
    out/rep_000/trace.csv
    out/rep_000/delays.csv
    out/rep_000/run.json     initial objective, reference solution, divergence
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .algo import (ArbiterConsensus, DistributedGradientDescent, sample_annulus, sample_ball,
                   schedule_from_dict)
from .channel import FadingChannel
from .config import SimConfig
from .graph import Digraph, random_topologies
from .netsim import ClockSchedule, Network, Simulation, SwitchingProcess
from .objective import ConsensusQuadratics, laplacian_objective
from .rng import Streams
from .trace import (Trace, read_delay_histogram, read_meta, read_trace_columns, record_run,
                    write_delay_csv, write_json, write_trace_csv)
from . import verify as V


@dataclass
class Instance:
    config: SimConfig
    topologies: list
    channel_params: dict        # edge -> (transition, crossover)
    clocks: list
    schedule: object
    objective: object           # QuadraticFormObjective or ConsensusQuadratics
    initial: list               # per-agent blocks, or [x0] in consensus mode
    streams: Streams

    @property
    def n_agents(self) -> int:
        return self.config.agents.count

    @property
    def probs(self):
        return self.config.switching.probabilities

    def channels(self) -> dict:
        """Fresh channel objects (they carry mutable Markov state)."""
        return {e: FadingChannel(t, c) for e, (t, c) in self.channel_params.items()}

    def reference_solution(self):
        """(x*, F*) of the expected objective."""
        if self.config.mode == "optimize":
            x = self.objective.minimizer()
            return x, self.objective.expected_value(x)
        x = self.objective.solution()
        return x, self.objective.total_value(x)

    def build_simulation(self) -> Simulation:
        cfg = self.config
        net = Network(SwitchingProcess(self.topologies, self.probs), self.channels())
        if cfg.mode == "optimize":
            algo = DistributedGradientDescent(self.objective, self.schedule, self.initial,
                                              noise_mode=cfg.noise_mode,
                                              error_amplitude=cfg.error_amplitude,
                                              streams=self.streams, guard=cfg.guard)
        else:
            algo = ArbiterConsensus(self.objective, self.schedule, self.initial[0],
                                    arbiter=cfg.arbiter - 1, guard=cfg.guard)
        return Simulation(net, self.clocks, algo, self.streams)

    def gradient_fn(self):
        if self.config.mode == "optimize":
            return self.objective.expected_gradient
        return self.objective.total_gradient

    def resolved_config(self) -> dict:
        """Config with every random choice made explicit; rebuilding from it
        with the same seed reproduces the run."""
        data = self.config.model_dump(mode="json")
        data["seed"] = self.streams.seed
        data["topologies"] = {"edges": [[[u + 1, v + 1] for u, v in g.sorted_edges()]
                                        for g in self.topologies]}
        data["tick_ratios"] = {"values": [[c.ticks, c.period] for c in self.clocks]}
        data["init"] = {"kind": "explicit", "values": [np.asarray(v).tolist() for v in self.initial]}
        if self.config.mode == "consensus":
            data["objective"] = {"kind": "consensus_quadratic", "instance": self.objective.to_dict()}
        return data


def _tick_ratios(cfg: SimConfig, streams: Streams) -> list[ClockSchedule]:
    D = cfg.agents.count
    spec = cfg.tick_ratios
    if spec.values is not None:
        return [ClockSchedule(a, b) for a, b in spec.values]
    if spec.sample is None:
        return [ClockSchedule(1, 1)] * D
    rng = streams.get("tick_ratios")
    s = spec.sample
    out = []
    for _ in range(D):
        r = Fraction(float(rng.uniform(s.low, s.high))).limit_denominator(s.max_denominator)
        out.append(ClockSchedule.from_ratio(min(max(r, Fraction(1, s.max_denominator)), Fraction(1))))
    return out


def _initial(cfg: SimConfig, streams: Streams) -> list:
    init = cfg.init
    if init.kind == "explicit":
        return [np.array(v, dtype=float) for v in init.values]
    dims = cfg.agent_dims()
    count = 1 if cfg.mode == "consensus" else cfg.agents.count
    if init.kind == "annulus":
        return [sample_annulus(streams.get("init", i), dims[i], init.inner, init.outer)
                for i in range(count)]
    return [sample_ball(streams.get("init", i), dims[i], init.radius) for i in range(count)]


def build_instance(cfg: SimConfig, seed: int | None = None) -> Instance:
    """Resolve ``cfg`` for one replication seed (defaults to ``cfg.seed``)."""
    seed = cfg.seed if seed is None else seed
    streams = Streams(seed)
    D = cfg.agents.count
    top = cfg.topologies
    if top.edges is not None:
        topologies = [Digraph.from_edges(D, [(u - 1, v - 1) for u, v in g]) for g in top.edges]
    else:
        gen = top.generate
        rng = (np.random.default_rng(gen.seed) if gen.seed is not None
               else streams.get("topologies"))
        topologies = random_topologies(D, gen.count, gen.edges_per_graph, rng)
    union = set().union(*(g.edges for g in topologies))
    dflt = cfg.channels.default
    params = {e: (dflt.transition, dflt.crossover) for e in union}
    for pe in cfg.channels.per_edge:
        e = (pe.edge[0] - 1, pe.edge[1] - 1)
        if e not in union:
            raise ValueError(f"channels.per_edge: edge {list(pe.edge)} is not in any topology")
        params[e] = (pe.transition, pe.crossover)
    for e, (t, c) in params.items():
        FadingChannel(t, c)  # validate once, early
    clocks = _tick_ratios(cfg, streams)
    schedule = schedule_from_dict(cfg.schedule)
    obj = cfg.objective
    if cfg.mode == "optimize":
        objective = laplacian_objective(topologies, cfg.agent_dims()[0], obj.perturbation,
                                        cfg.switching.probabilities)
    elif obj.instance is not None:
        objective = ConsensusQuadratics.from_dict(obj.instance)
        if objective.n_agents != D or objective.dim != cfg.agents.dims:
            raise ValueError("objective.instance does not match agents.count/dims")
    else:
        rng = np.random.default_rng(obj.seed) if obj.seed is not None else streams.get("consensus")
        objective = ConsensusQuadratics.generate(D, cfg.agents.dims, rng, obj.shift, obj.scale)
    return Instance(cfg, topologies, params, clocks, schedule, objective,
                    _initial(cfg, streams), streams)


def precheck(inst: Instance) -> V.CheckResult:
    return V.check_a6(inst.topologies, inst.channels(), inst.probs)


# ---------------------------------------------------------------------------
# runs


def run_replication(inst: Instance, out_dir: Path, seed: int, config_hash: str) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = inst.config
    write_json(out_dir / "config.json", inst.resolved_config())
    x_star, f_star = inst.reference_solution()
    sim = inst.build_simulation()
    trace = record_run(sim, cfg.horizon, x_star=x_star, gradient=inst.gradient_fn())
    write_trace_csv(trace, out_dir / "trace.csv", config_hash, seed,
                    full_estimates=cfg.trace.estimates == "full")
    write_delay_csv(trace, out_dir / "delays.csv", config_hash, seed)
    write_json(out_dir / "run.json", {
        "config_sha256": config_hash, "seed": seed, "mode": cfg.mode,
        "initial_objective": trace.initial_objective, "optimal_objective": f_star,
        "x_star": x_star.tolist(), "ticks": len(trace), "diverged_at": trace.diverged_at,
    })
    return _summary_row(trace, seed, f_star)


def _summary_row(trace: Trace, seed: int, f_star: float) -> dict:
    f0 = trace.initial_objective
    f_end = trace.objective[-1] if len(trace) else f0
    gap0 = abs(f0 - f_star)
    tau = trace.delay_array() if len(trace) else np.zeros((1, 1, 1), dtype=int)
    off = ~np.eye(trace.n_agents, dtype=bool)
    taus = tau[:, off] if trace.n_agents > 1 else np.zeros(1)
    return {
        "seed": seed,
        "ticks": len(trace),
        "diverged": int(trace.diverged),
        "F_initial": f0,
        "F_final": f_end,
        "F_optimal": f_star,
        "relative_gap": abs(f_end - f_star) / gap0 if gap0 > 0 else 0.0,
        "dist_final": trace.distance[-1] if len(trace) else float("nan"),
        "tau_max": int(taus.max()),
        "tau_mean": float(taus.mean()),
    }


SUMMARY_COLUMNS = ["replication", "seed", "ticks", "diverged", "F_initial", "F_final", "F_optimal",
                   "relative_gap", "dist_final", "tau_max", "tau_mean"]


def run_experiment(cfg: SimConfig, out: Path, replications: int = 1) -> list[dict]:
    """Run seeds cfg.seed .. cfg.seed + replications - 1 into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    write_json(out / "config.json", cfg.model_dump(mode="json"))
    rows = []
    for r in range(replications):
        seed = cfg.seed + r
        inst = build_instance(cfg, seed)
        row = run_replication(inst, out / f"rep_{r:03d}", seed, h)
        rows.append({"replication": r, **row})
    buf = io.StringIO()
    buf.write(f"# asyncdgd summary v1 config_sha256={h} seed={cfg.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([repr(float(row[c])) if isinstance(row[c], float) else row[c]
                    for c in SUMMARY_COLUMNS])
    (out / "summary.csv").write_text(buf.getvalue())
    return rows


def solve_reference(cfg: SimConfig, seed: int | None = None) -> dict:
    inst = build_instance(cfg, seed)
    x, f = inst.reference_solution()
    return {"mode": cfg.mode, "seed": inst.streams.seed, "x_star": x.tolist(), "F_star": f}


# ---------------------------------------------------------------------------
# verification


def static_checks(inst: Instance, eta: float = 0.75) -> list[V.CheckResult]:
    """Checks that need only the configuration: schedule and network."""
    horizon = max(inst.config.horizon, 1000)
    return V.check_schedule(inst.schedule, horizon, eta) + [precheck(inst)]


def replication_checks(inst: Instance, rep_dir: Path) -> list[V.CheckResult]:
    """Checks computed from a stored replication (trace, delays, run record)."""
    rep_dir = Path(rep_dir)
    for name in ("trace.csv", "delays.csv", "run.json"):
        if not (rep_dir / name).is_file():
            raise FileNotFoundError(f"{rep_dir / name} is missing")
    read_meta(rep_dir / "trace.csv")
    run = json.loads((rep_dir / "run.json").read_text())
    cols = read_trace_columns(rep_dir / "trace.csv")
    D = inst.n_agents
    nu = np.stack([cols[f"nu_{i + 1}"] for i in range(D)], axis=1).astype(np.int64)
    ratios = [float(c.ratio) for c in inst.clocks]
    out = [V.check_a4(nu, tick_ratios=ratios)]
    hist = read_delay_histogram(rep_dir / "delays.csv", D)
    l, p = V.delay_bound_parameters(inst.topologies, inst.channels(), inst.probs)
    gaps = [c.max_gap() for c in inst.clocks]
    tail, _ = V.delay_tail_analysis(hist, l, p, gaps=gaps)
    out.append(tail)
    out.append(V.check_boundedness(run["diverged_at"], inst.config.guard))
    if nu.shape[0]:
        out.append(V.check_convergence(cols["F"], run["initial_objective"], run["optimal_objective"]))
    if inst.config.mode == "optimize" and nu.shape[0]:
        out.append(V.check_balanced(inst.schedule(np.maximum(nu, 1)) * (np.diff(
            np.vstack([np.zeros((1, D), dtype=np.int64), nu]), axis=0) > 0)))
    return out


def verify_directory(path: Path) -> V.VerificationReport:
    """Re-run every check on a ``run_experiment`` output directory."""
    path = Path(path)
    reps = sorted(p for p in path.glob("rep_*") if p.is_dir())
    if not reps:
        raise FileNotFoundError(f"no rep_* directories under {path}")
    report = V.VerificationReport()
    for k, rep in enumerate(reps):
        cfg_file = rep / "config.json"
        if not cfg_file.is_file():
            raise FileNotFoundError(f"{cfg_file} is missing")
        cfg = SimConfig.model_validate(json.loads(cfg_file.read_text()))
        inst = build_instance(cfg)
        if k == 0:
            report.add(*static_checks(inst))
        for c in replication_checks(inst, rep):
            c.name = f"{rep.name}: {c.name}"
            report.add(c)
    return report


def verify_config(cfg: SimConfig) -> V.VerificationReport:
    report = V.VerificationReport()
    report.add(*static_checks(build_instance(cfg)))
    return report
