"""Travel-time statistics and the interaction-overhead metric."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .world import Scenario, ScenarioError

# vertices of the polygon circumscribing each inflated obstacle endpoint
CORNER_VERTICES = 32
_EPS = 1e-7

CSV_FIELDS = ("scenario", "policy", "seed", "overhead", "mean", "stdev", "completed")


def ttime(times: Iterable[float]) -> float:
    """Mean plus three unbiased standard deviations; a single time has zero spread."""
    x = np.asarray(list(times), dtype=float)
    if x.size == 0:
        raise ValueError("ttime of an empty list")
    if not np.all(np.isfinite(x)):
        raise ValueError("ttime needs finite times")
    return float(x.mean() + 3.0 * _stdev(x))


def _stdev(x: np.ndarray) -> float:
    return float(x.std(ddof=1)) if x.size > 1 else 0.0


def _segment_distances(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Distance between segments a-b (shape (P, 2)) and c-d (shape (S, 2)); result (P, S)."""
    a = a[:, None, :]
    b = b[:, None, :]
    c = c[None, :, :]
    d = d[None, :, :]

    def point_seg(p, s0, s1):
        e = s1 - s0
        ee = np.einsum("...k,...k->...", e, e)
        t = np.einsum("...k,...k->...", p - s0, e) / np.where(ee > 0, ee, 1.0)
        t = np.clip(t, 0.0, 1.0)
        q = s0 + t[..., None] * e
        return np.hypot(*np.moveaxis(p - q, -1, 0))

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    d1 = orient(a, b, c)
    d2 = orient(a, b, d)
    d3 = orient(c, d, a)
    d4 = orient(c, d, b)
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
    dist = np.minimum.reduce([
        point_seg(a, c, d), point_seg(b, c, d), point_seg(c, a, b), point_seg(d, a, b),
    ])
    return np.where(crossing, 0.0, dist)


def _corner_nodes(segs: np.ndarray, clearance: float) -> np.ndarray:
    ends = np.unique(np.round(segs.reshape(-1, 2), 12), axis=0)
    k = CORNER_VERTICES
    ring = clearance / math.cos(math.pi / k) * (1.0 + 1e-9)
    ang = 2 * math.pi * np.arange(k) / k
    offs = ring * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return (ends[:, None, :] + offs[None, :, :]).reshape(-1, 2)


def shortest_path_lengths(
    starts: Sequence[Sequence[float]], goals: Sequence[Sequence[float]], segs: np.ndarray, clearance: float
) -> np.ndarray:
    """Shortest start-goal path lengths keeping ``clearance`` from every obstacle segment.

    Corners are rounded with circumscribed polygons, so lengths slightly over-estimate
    the true capsule-avoiding paths. Unreachable goals come back as ``inf``.
    """
    starts = np.asarray(starts, dtype=float).reshape(-1, 2)
    goals = np.asarray(goals, dtype=float).reshape(-1, 2)
    n = len(starts)
    direct = np.hypot(*(goals - starts).T)
    if segs.size == 0:
        return direct
    s0, s1 = segs[:, :2], segs[:, 2:]
    lim = clearance - 1e-6
    # a visible straight line is exact; only blocked agents need the graph search
    seen = _segment_distances(starts, goals, s0, s1).min(axis=1) >= lim
    out = direct.copy()
    blocked = np.flatnonzero(~seen)
    if blocked.size == 0:
        return out
    starts, goals = starts[blocked], goals[blocked]
    n = len(starts)
    corners = _corner_nodes(segs, clearance)
    free = _segment_distances(corners, corners, s0, s1).min(axis=1) >= lim
    nodes = np.concatenate([starts, goals, corners[free]])
    m = len(nodes)

    iu, ju = np.triu_indices(m, k=1)
    # starts only need to reach goals and corners
    keep = ~((iu < n) & (ju < n))
    iu, ju = iu[keep], ju[keep]
    rows, cols, w = [], [], []
    chunk = 200_000
    for k0 in range(0, len(iu), chunk):
        i = iu[k0:k0 + chunk]
        j = ju[k0:k0 + chunk]
        clear = _segment_distances(nodes[i], nodes[j], s0, s1).min(axis=1) >= lim
        i, j = i[clear], j[clear]
        rows.append(i)
        cols.append(j)
        w.append(np.hypot(*(nodes[i] - nodes[j]).T))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    w = np.maximum(np.concatenate(w), _EPS)  # zero weights would vanish from the sparse graph
    graph = coo_matrix((w, (rows, cols)), shape=(m, m)).tocsr()
    dist = dijkstra(graph, directed=False, indices=np.arange(n))
    out[blocked] = dist[np.arange(n), n + np.arange(n)]
    return out


def min_travel_times(scenario: Scenario) -> np.ndarray:
    """Per-agent unconstrained minimum travel time: clearance-respecting shortest path / max speed."""
    segs = scenario.segment_array()
    times = np.empty(len(scenario.agents))
    by_radius: dict[float, list[int]] = {}
    for k, a in enumerate(scenario.agents):
        by_radius.setdefault(a.radius, []).append(k)
    for r, idx in by_radius.items():
        ag = [scenario.agents[k] for k in idx]
        lengths = shortest_path_lengths([a.start for a in ag], [a.goal for a in ag], segs, r)
        for k, a, length in zip(idx, ag, lengths):
            if not math.isfinite(length):
                raise ScenarioError(f"agent {a.id}: goal unreachable with radius {a.radius}")
            times[k] = length / a.max_speed
    return times


def min_ttime(scenario: Scenario) -> float:
    return ttime(min_travel_times(scenario))


@dataclass(frozen=True)
class MetricsReport:
    """TTime statistics for one run.

    For an incomplete run ``mean``/``stdev``/``ttime`` describe the censored times
    (non-arrived agents scored at the time cap) and ``interaction_overhead`` is None.
    """

    ttime: float
    min_ttime: float
    interaction_overhead: float | None
    mean: float
    stdev: float
    n_agents: int
    completed: bool

    @property
    def censored_overhead(self) -> float:
        """Overhead with non-arrivals scored at the time cap; used to rank policies that sometimes fail."""
        return self.ttime - self.min_ttime

    def to_dict(self) -> dict:
        return asdict(self)


def interaction_overhead(result, scenario: Scenario, min_tt: float | None = None) -> MetricsReport:
    times = np.asarray(result.times_or_cap(), dtype=float)
    mean = float(times.mean())
    sd = _stdev(times)
    tt = mean + 3.0 * sd
    mt = min_ttime(scenario) if min_tt is None else float(min_tt)
    return MetricsReport(
        ttime=tt,
        min_ttime=mt,
        interaction_overhead=(tt - mt) if result.completed else None,
        mean=mean,
        stdev=sd,
        n_agents=len(times),
        completed=bool(result.completed),
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def report_rows_csv(rows: Iterable[dict]) -> str:
    """Flat per-run CSV with the columns in ``CSV_FIELDS``; absent overhead is an empty cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in rows:
        w.writerow([_fmt(row.get(k)) for k in CSV_FIELDS])
    return buf.getvalue()
