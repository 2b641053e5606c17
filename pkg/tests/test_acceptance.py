"""Acceptance criteria 1-9. Every tolerance below is pinned; a one-line
pass/fail summary per criterion is printed at the end of the session."""

import time

import numpy as np
import pytest

from asyncdgd.algo import ConstantStep, DistributedGradientDescent, PowerStep
from asyncdgd.channel import frozen_channel
from asyncdgd.cli import main
from asyncdgd.config import SimConfig, preset
from asyncdgd.experiment import build_instance, run_experiment
from asyncdgd.graph import Digraph, diameter, union_graph
from asyncdgd.netsim import ClockSchedule, Network, Simulation, SwitchingProcess
from asyncdgd.objective import spsa_gradient
from asyncdgd.protocol import EstimateList, merge
from asyncdgd.rng import Streams
from asyncdgd.trace import record_run
from asyncdgd import verify as V

from helpers import dgd_sim, ring
from oracles import all_sign_patterns, brute_force_merge, central_difference, centralized_gd

SEEDS = range(10)


def report(n, ok, detail):
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")


# -- 1 -----------------------------------------------------------------------

ORACLE_TICKS = 200
ORACLE_RUNTIME_S = 1.0


@pytest.mark.criterion(1)
def test_c1_lossless_synchronous_run_equals_centralized_descent():
    inst = build_instance(preset("paper-sec5"), seed=0)
    D = 16
    complete = Digraph.complete(D)
    # four copies of the complete graph: the switching draw still supplies a
    # four-valued noise stream, but every link is always up
    net = Network(SwitchingProcess([complete] * 4), {e: frozen_channel(0.0) for e in complete.edges})
    algo = DistributedGradientDescent(inst.objective, inst.schedule, inst.initial)
    sim = Simulation(net, [ClockSchedule(1, 1)] * D, algo, Streams(0))
    t0 = time.perf_counter()
    trace = record_run(sim, ORACLE_TICKS)
    elapsed = time.perf_counter() - t0
    oracle = centralized_gd(inst.objective.matrices, trace.topology, np.concatenate(inst.initial),
                            lambda nu: float(inst.schedule(nu)))
    mismatch = [n for n, (a, b) in enumerate(zip(trace.estimates, oracle)) if not np.array_equal(a, b)]
    ok = not mismatch and elapsed < ORACLE_RUNTIME_S
    report(1, ok, f"{ORACLE_TICKS} ticks bit-identical={not mismatch}, runtime {elapsed:.3f}s")
    assert len(set(trace.topology)) == 4
    assert not mismatch, f"first mismatch at tick {mismatch[0]}"
    assert elapsed < ORACLE_RUNTIME_S


@pytest.mark.criterion(1)
def test_c1_sync_preset_matches_oracle():
    inst = build_instance(preset("sync-lossless"))
    trace = record_run(inst.build_simulation(), ORACLE_TICKS)
    oracle = centralized_gd(inst.objective.matrices, trace.topology, np.concatenate(inst.initial),
                            lambda nu: float(inst.schedule(nu)))
    assert all(np.array_equal(a, b) for a, b in zip(trace.estimates, oracle))


# -- 2 -----------------------------------------------------------------------

SEC5_MEDIAN_RATIO = 0.01
SEC5_BELOW_INITIAL_AFTER = 500
SEC5_RUNTIME_S = 30.0


@pytest.fixture(scope="module")
def sec5_runs():
    cfg = preset("paper-sec5")
    runs = []
    for seed in SEEDS:
        inst = build_instance(cfg, seed)
        t0 = time.perf_counter()
        tr = record_run(inst.build_simulation(), cfg.horizon)
        runs.append((inst, tr, time.perf_counter() - t0))
    return runs


@pytest.mark.criterion(2)
def test_c2_optimization_preset_converges(sec5_runs):
    ratios, late_ok, times = [], [], []
    for inst, tr, dt in sec5_runs:
        F = tr.objective_array()
        assert len(F) == 5000 and not tr.diverged
        ratios.append(F[-1] / tr.initial_objective)
        late_ok.append(bool(np.all(F[SEC5_BELOW_INITIAL_AFTER + 1:] < tr.initial_objective)))
        times.append(dt)
    med = float(np.median(ratios))
    ok = med <= SEC5_MEDIAN_RATIO and all(late_ok) and max(times) < SEC5_RUNTIME_S
    report(2, ok, f"median F(x^5000)/F(x^0) = {med:.3g}, below F(x^0) after tick 500 in "
                  f"{sum(late_ok)}/10 seeds, slowest run {max(times):.1f}s")
    assert med <= SEC5_MEDIAN_RATIO
    assert all(late_ok)
    assert max(times) < SEC5_RUNTIME_S


@pytest.mark.criterion(2)
def test_c2_preset_instance_shape(sec5_runs):
    inst = sec5_runs[0][0]
    assert inst.n_agents == 16 and len(inst.topologies) == 4
    assert all(len(g.edges) == 8 for g in inst.topologies)
    assert V.check_a6(inst.topologies, inst.channels()).status == V.PASS
    assert all(0.2 - 1e-12 <= float(c.ratio) <= 1.0 for c in inst.clocks)
    assert all(500 <= np.linalg.norm(x) <= 1000 for x in inst.initial)


@pytest.mark.criterion(2)
def test_c2_threshold_reachable_by_synchronous_oracle(sec5_runs):
    # the same instance and noise stream, run centrally and synchronously
    for inst, tr, _ in sec5_runs[:3]:
        x = centralized_gd(inst.objective.matrices, tr.topology, np.concatenate(inst.initial),
                           lambda nu: float(inst.schedule(nu)))[-1]
        assert inst.objective.expected_value(x) / tr.initial_objective <= SEC5_MEDIAN_RATIO


# -- 3 -----------------------------------------------------------------------

SEC6_MEDIAN_GAP = 0.05
SEC6_RUNTIME_S = 60.0


@pytest.mark.criterion(3)
def test_c3_consensus_preset_reaches_analytic_minimum():
    cfg = preset("paper-sec6")
    gaps, times = [], []
    for seed in SEEDS:
        inst = build_instance(cfg, seed)
        prob = inst.objective
        x_star = -0.5 * np.linalg.solve(sum(prob.a), sum(prob.b))
        f_star = prob.total_value(x_star)
        t0 = time.perf_counter()
        tr = record_run(inst.build_simulation(), cfg.horizon)
        times.append(time.perf_counter() - t0)
        assert len(tr) == 2500 and not tr.diverged
        gaps.append(abs(tr.objective[-1] - f_star) / abs(tr.initial_objective - f_star))
    med = float(np.median(gaps))
    ok = med <= SEC6_MEDIAN_GAP and max(times) < SEC6_RUNTIME_S
    report(3, ok, f"median relative gap {med:.3g}, slowest run {max(times):.1f}s")
    assert med <= SEC6_MEDIAN_GAP
    assert max(times) < SEC6_RUNTIME_S


# -- 4 -----------------------------------------------------------------------

TAIL_TICKS = 100_000
TAIL_DROP = 0.5
TAIL_SIGMAS = 3.0
TAIL_MIN_SAMPLES = 100


@pytest.mark.criterion(4)
def test_c4_single_edge_geometric_tail():
    g = Digraph.from_edges(2, [(0, 1)])
    sim = dgd_sim([g], {(0, 1): frozen_channel(TAIL_DROP)}, seed=0, block=1)
    # tick 0 carries the initialization broadcast (age 0); the 10^5 delay
    # samples are ticks 1..10^5
    tr = record_run(sim, TAIL_TICKS + 1)
    counts = np.bincount(tr.delay_array()[1:, 0, 1])
    N = counts.sum()
    assert N == TAIL_TICKS and counts[0] == 0
    exceed = N - np.cumsum(counts)  # #{tau > m}
    worst = 0.0
    checked = 0
    for m in range(counts.size):
        if exceed[m] < TAIL_MIN_SAMPLES:
            break
        p = TAIL_DROP ** m
        se = np.sqrt(p * (1 - p) / N)
        emp = exceed[m] / N
        z = abs(emp - p) / se if se > 0 else 0.0
        worst = max(worst, z)
        checked += 1
        assert abs(emp - p) <= TAIL_SIGMAS * se, f"m={m}: {emp} vs {p} ({z:.2f} SE)"
    report(4, True, f"single edge: {checked} tail points within {TAIL_SIGMAS:g} SE (worst {worst:.2f} SE)")


@pytest.mark.criterion(4)
@pytest.mark.parametrize("name", ["ring", "preset-union"])
def test_c4_lossless_delay_bounded_by_diameter(name):
    if name == "ring":
        g = ring(7)
    else:
        g = union_graph(build_instance(preset("paper-sec5")).topologies)
    sim = dgd_sim([g], seed=1)
    tr = record_run(sim, 1000)
    tau = tr.delay_array()
    assert tau.max() <= diameter(g)
    assert tau.max() == diameter(g)


# -- 5 -----------------------------------------------------------------------

FD_CASES = 100
FD_REL_TOL = 1e-6


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.mark.criterion(5)
def test_c5_gradients_match_finite_differences():
    rng = np.random.default_rng(55)
    lap = build_instance(preset("paper-sec5")).objective
    worst = 0.0
    for _ in range(FD_CASES):
        x = rng.uniform(-1000, 1000, lap.size)
        xi = int(rng.integers(len(lap.matrices)))
        i = int(rng.integers(lap.n_agents))
        fd = central_difference(lambda z: lap.value(z, xi), x, 1e-3)
        worst = max(worst, _rel(lap.gradient(x, xi), fd),
                    _rel(lap.partial_gradient(x, xi, i), lap.block(fd, i)))
    cons = build_instance(preset("paper-sec6")).objective
    for _ in range(FD_CASES):
        x = rng.uniform(-10, 10, cons.dim)
        i = int(rng.integers(cons.n_agents))
        fd = central_difference(lambda z: cons.local_value(i, z), x, 1e-4)
        worst = max(worst, _rel(cons.local_gradient(i, x), fd))
    report(5, worst <= FD_REL_TOL, f"worst relative error {worst:.2e} over {2 * FD_CASES} cases")
    assert worst <= FD_REL_TOL


# -- 6 -----------------------------------------------------------------------

SPSA_LINEAR_TOL = 1e-12
SPSA_BIAS_RATIO = 50.0


def _pattern_mean(f, x, c):
    return np.mean([spsa_gradient(f, x, c, s) for s in all_sign_patterns(x.size)], axis=0)


@pytest.mark.criterion(6)
def test_c6_linear_objective_exact_on_average():
    rng = np.random.default_rng(6)
    b, x = rng.standard_normal(3), rng.standard_normal(3)
    err = np.abs(_pattern_mean(lambda z: float(b @ z) + 1.5, x, 0.1) - b).max()
    report(6, err <= SPSA_LINEAR_TOL, f"linear d=3: max error {err:.2e} over all 8 sign patterns")
    assert err <= SPSA_LINEAR_TOL


@pytest.mark.criterion(6)
def test_c6_quadratic_bias_shrinks_between_c_values():
    rng = np.random.default_rng(6)
    m = rng.standard_normal((3, 3))
    A, b, x = m @ m.T + 0.1 * np.eye(3), rng.standard_normal(3), rng.standard_normal(3)

    def f(z):
        return float(z @ A @ z + b @ z)

    grad = 2 * A @ x + b
    bias = {c: float(np.linalg.norm(_pattern_mean(f, x, c) - grad)) for c in (1e-1, 1e-2)}
    ratio = bias[1e-1] / bias[1e-2] if bias[1e-2] > 0 else (np.inf if bias[1e-1] > 0 else np.nan)
    ok = bool(ratio >= SPSA_BIAS_RATIO)
    report(6, ok, f"quadratic: bias(c=0.1)={bias[1e-1]:.2e}, bias(c=0.01)={bias[1e-2]:.2e}, "
                  f"ratio {ratio:.3g} (needs >= {SPSA_BIAS_RATIO:g})")
    assert ratio >= SPSA_BIAS_RATIO


# -- 7 -----------------------------------------------------------------------

MERGE_CASES = 1000


def _tuples(lst):
    return [(tuple(np.asarray(v).tolist()), s, o) for v, s, o in zip(lst.values, lst.stamps, lst.origins)]


def _random_list(rng, n, keyed):
    stamps = rng.integers(0, 6, n)
    if keyed:  # one value per (agent, stamp), as produced by the protocol
        vals = [np.array([k * 10.0 + s, -s]) for k, s in enumerate(stamps)]
    else:
        vals = [rng.standard_normal(2) for _ in range(n)]
    return EstimateList(tuple(vals), tuple(int(s) for s in stamps), tuple(int(s) * 7 for s in stamps))


@pytest.mark.criterion(7)
def test_c7_merge_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(MERGE_CASES):
        n = int(rng.integers(1, 9))
        local = _random_list(rng, n, keyed=False)
        rec = [_random_list(rng, n, keyed=False) for _ in range(int(rng.integers(0, 6)))]
        assert _tuples(merge(local, rec)) == brute_force_merge(local, rec)
    report(7, True, f"{MERGE_CASES} randomized merges equal the brute-force scan")


@pytest.mark.criterion(7)
def test_c7_merge_laws():
    rng = np.random.default_rng(77)
    for _ in range(MERGE_CASES):
        n = int(rng.integers(1, 9))
        a, b, c = (_random_list(rng, n, keyed=True) for _ in range(3))
        assert _tuples(merge(a, [a])) == _tuples(a)
        assert _tuples(merge(a, [b])) == _tuples(merge(b, [a]))
        assert _tuples(merge(merge(a, [b]), [c])) == _tuples(merge(a, [merge(b, [c])]))


# -- 8 -----------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_c8_schedule_discrimination():
    cfg = preset("paper-sec5")
    good = V.check_schedule(build_instance(cfg).schedule, cfg.horizon)
    hard_good = [r for r in good if r.hard]
    const = V.check_schedule(ConstantStep(1.0), cfg.horizon)
    root = V.check_schedule(PowerStep(0.5, 1.0, 1.0), cfg.horizon)
    ok = (all(r.status == V.PASS for r in hard_good) and any(r.hard_failure for r in const)
          and any(r.hard_failure for r in root))
    report(8, ok, "reference schedule passes all hard checks; constant and 1/sqrt(n+1) fail")
    assert all(r.status == V.PASS for r in hard_good)
    assert any(r.hard_failure for r in const)
    assert any(r.hard_failure for r in root)


@pytest.mark.criterion(8)
def test_c8_disconnected_union_exits_two(tmp_path):
    data = preset("paper-sec5").model_dump()
    # a directed path: agent 1 is unreachable from everyone else
    data["topologies"] = {"edges": [[[k, k + 1] for k in range(1, 16)]]}
    cfg = tmp_path / "disconnected.json"
    cfg.write_text(SimConfig.model_validate(data).model_dump_json())
    inst = build_instance(SimConfig.model_validate(data))
    res = V.check_a6(inst.topologies, inst.channels())
    assert res.status == V.FAIL
    assert main(["verify", "--config", str(cfg)]) == 2
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


# -- 9 -----------------------------------------------------------------------


@pytest.mark.criterion(9)
@pytest.mark.parametrize("name", ["paper-sec5", "paper-sec6", "sync-lossless"])
def test_c9_reruns_are_byte_identical(tmp_path, name):
    cfg = preset(name)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert any(f.name == "trace.csv" for f in files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
