"""Runtime checks of the convergence assumptions and post-run statistics.

Exactly checkable conditions (sup a ≤ 1, monotonicity, connectivity,
positive-probability paths) are *hard* checks. Asymptotic conditions cannot be
decided at a finite horizon; they are reported as trend diagnostics and may be
``indeterminate`` but never pass on evidence that contradicts them.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .channel import FadingChannel
from .graph import Digraph, is_strongly_connected, shortest_path_lengths, union_graph

PASS, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"


@dataclass
class CheckResult:
    name: str
    status: str
    statistic: float | None = None
    threshold: float | None = None
    evidence: str = ""
    hard: bool = True

    @property
    def hard_failure(self) -> bool:
        return self.hard and self.status == FAIL


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    def add(self, *results: CheckResult) -> None:
        for r in results:
            if any(c.name == r.name for c in self.checks):
                raise ValueError(f"check {r.name!r} reported twice")
            self.checks.append(r)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def hard_failure(self) -> bool:
        return any(c.hard_failure for c in self.checks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "status", "hard", "statistic", "threshold", "evidence"])
        for c in self.checks:
            w.writerow([c.name, c.status, int(c.hard),
                        "" if c.statistic is None else repr(float(c.statistic)),
                        "" if c.threshold is None else repr(float(c.threshold)), c.evidence])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            kind = "hard" if c.hard else "soft"
            stat = "" if c.statistic is None else f" stat={c.statistic:.6g}"
            thr = "" if c.threshold is None else f" threshold={c.threshold:.6g}"
            lines.append(f"[{c.status.upper():13s}] ({kind}) {c.name}:{stat}{thr}  {c.evidence}")
        verdict = "HARD FAILURE" if self.hard_failure else "no hard failures"
        lines.append(f"== {verdict} ==")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# step-size schedule


_PROBES = np.array([1e3, 1e4, 1e5, 1e6, 1e8, 1e10, 1e12, 1e15])


def _block_sums(schedule, power: float, kmax: int = 60, exact_upto: int = 16) -> np.ndarray:
    """Σ a(ν)^power over dyadic blocks ν ∈ [2^k, 2^(k+1)), k < kmax.

    Small blocks are summed exactly; large ones by trapezoid on a geometric
    grid (the schedules of interest are smooth there).
    """
    out = np.empty(kmax)
    for k in range(kmax):
        lo, hi = 2 ** k, 2 ** (k + 1)
        if k <= exact_upto:
            out[k] = float(np.sum(np.asarray(schedule(np.arange(lo, hi)), dtype=float) ** power))
        else:
            grid = np.geomspace(lo, hi, 513)
            vals = np.asarray(schedule(grid), dtype=float) ** power
            out[k] = float(np.trapezoid(vals, grid))
    return out


def check_schedule(schedule, horizon: int, eta: float = 0.75, kappa: float = 1.0) -> list[CheckResult]:
    """Checks for the step-size sequence over [0, horizon) plus far-out probes."""
    if horizon < 1000:
        raise ValueError("schedule checks need a horizon of at least 1000")
    nu = np.arange(horizon)
    a = np.asarray(schedule(nu), dtype=float)
    results = []

    partial = float(a.sum())
    s = _block_sums(schedule, 1.0)
    growth = s[-1] / s[-2] if s[-2] > 0 else 0.0
    results.append(CheckResult(
        "A2(i) divergence of sum a(n)", PASS if growth >= 0.999 else INDETERMINATE,
        growth, 0.999,
        f"partial sum over horizon {partial:.6g}; dyadic block ratio near 2^59 is {growth:.4g} "
        "(>=1 means at least logarithmic growth)", hard=False))

    sq = _block_sums(schedule, 2.0)
    ratio = sq[-1] / sq[-2] if sq[-2] > 0 else 0.0
    if ratio < 1.0:
        tail = float(sq[-1] * ratio / (1.0 - ratio))
    else:
        tail = float("inf")
    cauchy_tail = tail + float(sq[-1])
    ok = ratio <= 0.95 and cauchy_tail < 1e-6
    results.append(CheckResult(
        "A2(i) square-summability", PASS if ok else FAIL, cauchy_tail, 1e-6,
        f"partial sum of a^2 over horizon {float(np.sum(a ** 2)):.6g}; dyadic block ratio {ratio:.4g}; "
        f"extrapolated tail beyond 2^59 {cauchy_tail:.3g}"))

    worst = 0.0
    for x in (0.5, 0.1, 0.01):
        ys = np.linspace(x, 1.0, 33)
        ratios = []
        for n in _PROBES:
            base = float(schedule(n))
            ratios.append(max(float(schedule(np.floor(y * n))) for y in ys) / base)
        growing = ratios[-1] > 1.01 * ratios[-2]
        worst = max(worst, ratios[-1] if not growing else float("inf"))
    results.append(CheckResult(
        "A2(ii) bounded ratio a(floor(yn))/a(n)", PASS if np.isfinite(worst) else INDETERMINATE,
        worst, None, "sup over y in [x,1] for x in {0.5, 0.1, 0.01}, probed up to n=1e15", hard=False))

    sup = float(a.max())
    positive = bool((a > 0).all())
    results.append(CheckResult(
        "A2(iii) sup a(n) <= 1", PASS if sup <= 1.0 and positive else FAIL, sup, 1.0,
        f"over n < {horizon}" + ("" if positive else "; non-positive step sizes present")))

    running_min = np.minimum.accumulate(a)
    k_hat = float(np.max(a / running_min)) if positive else float("inf")
    results.append(CheckResult(
        "A2(iv) a(n) <= kappa a(m) for m <= n", PASS if k_hat <= kappa else FAIL, k_hat, kappa,
        f"largest a(n)/min_(m<=n) a(m) over n < {horizon}"))

    trend = np.asarray(schedule(_PROBES), dtype=float) * _PROBES ** eta
    # judged on the far probes only; offsets in a(n) delay the decay
    far = trend[-4:]
    if np.all(np.diff(far) < 0) and far[-1] < 0.5 * far[0]:
        status = PASS
    elif np.all(np.diff(far) >= 0):
        status = FAIL
    else:
        status = INDETERMINATE
    results.append(CheckResult(
        f"A2(v)(a) a(n) n^eta -> 0 (eta={eta})", status, float(trend[-1]), None,
        "a(n) n^eta at n=1e3..1e15: " + ", ".join(f"{t:.3g}" for t in trend), hard=False))
    return results


# ---------------------------------------------------------------------------
# update frequency


def check_a4(nu: np.ndarray, floor: float | None = None, tick_ratios: Sequence | None = None) -> CheckResult:
    """Every agent's update fraction ν(n,i)/(n+1) stays above a floor for n ≥ 100.

    The default floor is half the smallest configured tick ratio (or half the
    smallest observed final fraction when ratios are not given).
    """
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 2 or nu.shape[0] < 100:
        return CheckResult("A4 update frequency", INDETERMINATE, None, floor,
                           "need at least 100 ticks")
    ticks = np.arange(1, nu.shape[0] + 1)[:, None]
    frac = nu / ticks
    final = frac[-1]
    if floor is None:
        rho_min = float(min(tick_ratios)) if tick_ratios is not None else float(final.min())
        floor = rho_min / 2
    worst = float(frac[99:].min())
    ok = worst > 0 and worst >= floor
    slowest = int(np.argmin(final)) + 1
    return CheckResult("A4 update frequency", PASS if ok else FAIL, worst, floor,
                       f"final fractions min {final.min():.4g} (agent {slowest}), max {final.max():.4g}")


# ---------------------------------------------------------------------------
# network condition


def _edge_success(topologies: Sequence[Digraph], channels: Mapping, probs) -> dict:
    """Per-tick worst-case success probability of every union edge."""
    probs = np.full(len(topologies), 1.0 / len(topologies)) if probs is None else np.asarray(probs)
    out = {}
    for e in union_graph(topologies).edges:
        act = float(sum(p for p, g in zip(probs, topologies) if e in g.edges))
        ch: FadingChannel = channels[e]
        out[e] = act * ch.worst_success()
    return out


def check_a6(topologies: Sequence[Digraph], channels: Mapping, probs=None) -> CheckResult:
    """Positive-probability path between every ordered pair.

    An edge counts only if some topology containing it has positive switching
    probability and its channel succeeds with positive probability in every
    recurrent state.
    """
    union = union_graph(topologies)
    succ = _edge_success(topologies, channels, probs)
    usable = Digraph(union.vertex_count, frozenset(e for e, s in succ.items() if s > 0))
    dead = sorted((i + 1, j + 1) for (i, j), s in succ.items() if s <= 0)
    if not is_strongly_connected(union):
        return CheckResult("A6 positive-probability paths", FAIL, 0.0, None,
                           "union graph is not strongly connected")
    if not is_strongly_connected(usable):
        dist = shortest_path_lengths(usable)
        bad = [(j + 1, i + 1) for j, i in zip(*np.nonzero(dist < 0))][:5]
        return CheckResult("A6 positive-probability paths", FAIL, 0.0, None,
                           f"zero-probability edges {dead} cut pairs such as {bad}")
    return CheckResult("A6 positive-probability paths", PASS, float(min(succ.values())), None,
                       f"union strongly connected with {len(union.edges)} edges; "
                       f"{len(dead)} zero-probability edges")


def delay_bound_parameters(topologies: Sequence[Digraph], channels: Mapping, probs=None):
    """Per ordered pair (j, i): hop count l and all-fail bound p of the best shortest path.

    Returns ``(l, p)`` arrays indexed [j, i]; unreachable pairs get l = -1 and
    p = 1. The diagonal is l = 0, p = 0.
    """
    succ = _edge_success(topologies, channels, probs)
    n = topologies[0].vertex_count
    usable = Digraph(n, frozenset(e for e, s in succ.items() if s > 0))
    l = shortest_path_lengths(usable)
    p = np.ones((n, n))
    out_edges = {u: [(v, succ[(u, v)]) for v in usable.out_neighbors(u)] for u in range(n)}
    for src in range(n):
        # best success product along shortest paths, layer by layer
        best = np.zeros(n)
        best[src] = 1.0
        order = np.argsort(l[src])
        for u in order:
            if l[src, u] < 0:
                continue
            for v, s in out_edges[u]:
                if l[src, v] == l[src, u] + 1:
                    best[v] = max(best[v], best[u] * s)
        p[src] = np.where(l[src] >= 0, 1.0 - best, 1.0)
        p[src, src] = 0.0
    return l, p


def delay_tail_analysis(histograms: Mapping, l: np.ndarray, p: np.ndarray,
                        gaps: Sequence[int] | None = None, min_ticks: int = 10_000,
                        sigmas: float = 3.0):
    """Compare empirical delay survival with the geometric bound p^(m - l_eff + 1).

    ``histograms[(j, i)][t]`` counts ticks with τ_ji = t. ``gaps[j]`` is the
    longest spacing between producer j's local ticks; it widens l to
    l + gap - 1 because the measured age includes producer idle time.
    Returns ``(CheckResult, curves)`` with curves[(j, i)] = (m, empirical, bound).
    """
    curves = {}
    worst_excess = -np.inf
    worst_pair = None
    total = None
    for (j, i), counts in sorted(histograms.items()):
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total < min_ticks:
            return CheckResult("geometric delay tail", INDETERMINATE, None, None,
                               f"only {int(total)} delay samples (< {min_ticks})"), {}
        if l[j, i] < 0:
            return CheckResult("geometric delay tail", FAIL, None, None,
                               f"no usable path from agent {j + 1} to agent {i + 1}"), {}
        survival = 1.0 - np.cumsum(counts) / total  # P(τ > m), m = 0..
        cdf = np.cumsum(counts) / total
        m_max = int(np.searchsorted(cdf, 0.999))
        m = np.arange(m_max + 1)
        l_eff = l[j, i] + (gaps[j] - 1 if gaps is not None else 0)
        bound = np.minimum(1.0, p[j, i] ** np.maximum(m - l_eff + 1, 0))
        se = np.sqrt(bound * (1.0 - bound) / total)
        excess = survival[: m_max + 1] - (bound + sigmas * se)
        curves[(j, i)] = (m, survival[: m_max + 1], bound)
        if excess.max() > worst_excess:
            worst_excess, worst_pair = float(excess.max()), (j + 1, i + 1)
    ok = worst_excess <= 0
    return CheckResult("geometric delay tail", PASS if ok else FAIL, worst_excess, 0.0,
                       f"largest excess over bound+{sigmas:g}SE at pair {worst_pair} "
                       f"({len(curves)} pairs, {int(total)} ticks)"), curves


# ---------------------------------------------------------------------------
# convergence


def convergence_metrics(estimates: np.ndarray, value, x_star=None, gradient=None) -> dict:
    """Objective, distance to x* and gradient norm for each recorded iterate."""
    xs = np.asarray(estimates, dtype=float)
    out = {"F": np.array([value(x) for x in xs])}
    if x_star is not None:
        out["dist"] = np.linalg.norm(xs - np.asarray(x_star, dtype=float), axis=1)
    if gradient is not None:
        out["grad_norm"] = np.array([np.linalg.norm(gradient(x)) for x in xs])
    return out


def check_convergence(values: np.ndarray, initial: float, optimum: float = 0.0,
                      target: float = 0.01) -> CheckResult:
    """Soft check: relative optimality gap at the last tick."""
    values = np.asarray(values, dtype=float)
    if values.size == 0 or not np.isfinite(values[-1]):
        return CheckResult("convergence", INDETERMINATE, None, target, "no finite objective values",
                           hard=False)
    gap0 = abs(initial - optimum)
    rel = abs(values[-1] - optimum) / gap0 if gap0 > 0 else 0.0
    return CheckResult("convergence", PASS if rel <= target else INDETERMINATE, rel, target,
                       f"|F_end - F*| / |F_0 - F*| after {values.size} ticks", hard=False)


def check_balanced(step_history: np.ndarray, tolerance: float = 0.05) -> CheckResult:
    """Soft check: running ratios Σa(ν(m,i))/Σa(ν(m,1)) settle over the second half."""
    hist = np.asarray(step_history, dtype=float)
    if hist.shape[0] < 200:
        return CheckResult("balanced step sizes", INDETERMINATE, None, tolerance, "too few ticks",
                           hard=False)
    cum = np.cumsum(hist, axis=0)
    if (cum[-1] <= 0).any():
        return CheckResult("balanced step sizes", INDETERMINATE, None, tolerance,
                           "an agent never stepped", hard=False)
    half = cum[hist.shape[0] // 2] / cum[hist.shape[0] // 2, 0]
    end = cum[-1] / cum[-1, 0]
    drift = float(np.max(np.abs(end - half) / end))
    return CheckResult("balanced step sizes", PASS if drift <= tolerance else INDETERMINATE,
                       drift, tolerance,
                       f"final ratios range {end.min():.4g}..{end.max():.4g}", hard=False)


def check_boundedness(diverged_at: int | None, guard: float) -> CheckResult:
    if diverged_at is None:
        return CheckResult("A3 bounded iterates", PASS, None, guard, "no iterate left the guard")
    return CheckResult("A3 bounded iterates", FAIL, float(diverged_at), guard,
                       f"guard exceeded at tick {diverged_at}")
