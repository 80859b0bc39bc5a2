"""
Checkers for the two good events on a configuration.

E(Λ(n), k): for every centre x and every m >= 1 with x + Λ(m) ⊆ Λ(n), the
centre reaches each of the 24 quarter squares of x + Λ(m) with at most k
closed sites, travel measured inside Λ(n).

F(Λ(n), k): for every centre x and every admissible r² with x + B_r ⊆ Λ(n),
the centre reaches each of the 48 thickened triangles x + T_r with at most k
closed sites, travel measured inside x + B_r.

Three modes: ``exhaustive`` scans every centre (one search per centre serves
all cubes of event E), ``sampled`` draws centres uniformly and bounds the
violation rate, ``on_demand`` checks an explicit list of queries and caches
their travel times on the configuration.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .geometry import TriangleIndex, quarter_offsets, quarter_square, shell_table, thick_offsets
from .lattice import BallSpec, BoxSpec, Configuration, Site, as_site, box, indices_to_sites
from .lattice import is_sum_of_three_squares
from .traveltime import UNREACHABLE, _bfs01, travel_to_set

EXHAUSTIVE_SITE_LIMIT = 50_000
EVENTS = ("E", "F")
MODES = ("exhaustive", "sampled", "on_demand")


@dataclass(frozen=True)
class Violation:
    """A failing check: ``shape`` is m (event E) or r² (event F); ``target`` is
    the quarter number 4(i-1) + (j-1) for E or the triangle index for F."""

    center: Site
    shape: int
    target: int
    travel: int

    def to_dict(self) -> dict:
        return {"center": list(self.center), "shape": self.shape, "target": self.target,
                "travel": self.travel}

    @classmethod
    def from_dict(cls, d: dict) -> "Violation":
        return cls(as_site(d["center"]), int(d["shape"]), int(d["target"]), int(d["travel"]))


@dataclass
class EventReport:
    event: str
    k: int
    mode: str
    holds: bool
    violation: Violation | None
    checks_performed: int
    n: int
    p: float
    seed: int
    n_subboxes: int = 0
    max_travel: int = 0
    samples: int | None = None
    sample_seed: int | None = None
    violating_centers: int | None = None
    violation_rate_upper: float | None = None
    confidence: str | None = None
    thickness: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["violation"] = None if self.violation is None else self.violation.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EventReport":
        d = dict(d)
        if d.get("violation") is not None:
            d["violation"] = Violation.from_dict(d["violation"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "EventReport":
        return cls.from_dict(json.loads(text))


def quarter_of(target: int) -> tuple[int, int]:
    """(face, quadrant) of quarter number ``target``."""
    return target // 4 + 1, target % 4 + 1


def _exceeds(travel: int, k: int) -> bool:
    return travel == UNREACHABLE or travel > k


# ---------------------------------------------------------------------------
# scan kernels
# ---------------------------------------------------------------------------

_UNIT_QUARTERS = quarter_offsets(1)


@njit(cache=True, nogil=True)
def _scan_e(open_, n, centers, k, unit_q, out):
    """Per centre: [first bad m, first bad quarter, its travel, max travel, checks].

    Quarters are visited in (m, face, quadrant) order; unreachable counts as
    travel -1 and as a violation.
    """
    L = 2 * n + 1
    size = L * L * L
    dist = np.empty(size, dtype=np.int32)
    parent = np.empty(size, dtype=np.int32)
    lo = np.zeros(3, dtype=np.int64)
    shape = np.full(3, L, dtype=np.int64)
    params = np.zeros(4, dtype=np.int64)
    empty = np.zeros(0, dtype=np.uint8)
    for c in range(centers.shape[0]):
        cx, cy, cz = centers[c, 0], centers[c, 1], centers[c, 2]
        dist[:] = -1
        src = (cx + n) + L * ((cy + n) + L * (cz + n))
        _bfs01(open_, L, lo, shape, 0, params, empty, src, empty, False, dist, parent)
        out[c, 0] = -1
        out[c, 1] = -1
        out[c, 2] = 0
        out[c, 3] = 0
        out[c, 4] = 0
        mmax = n - max(abs(cx), max(abs(cy), abs(cz)))
        for m in range(1, mmax + 1):
            for q in range(24):
                best = 2147483647
                x0 = cx + m * unit_q[q, 0, 0] + n
                x1 = cx + m * unit_q[q, 1, 0] + n
                y0 = cy + m * unit_q[q, 0, 1] + n
                y1 = cy + m * unit_q[q, 1, 1] + n
                z0 = cz + m * unit_q[q, 0, 2] + n
                z1 = cz + m * unit_q[q, 1, 2] + n
                for z in range(z0, z1 + 1):
                    for y in range(y0, y1 + 1):
                        for x in range(x0, x1 + 1):
                            d = dist[x + L * (y + L * z)]
                            if d >= 0 and d < best:
                                best = d
                if best == 2147483647:
                    best = -1
                out[c, 4] += 1
                if best > out[c, 3]:
                    out[c, 3] = best
                if out[c, 0] < 0 and (best < 0 or best > k):
                    out[c, 0] = m
                    out[c, 1] = q
                    out[c, 2] = best
    return out


@njit(cache=True, nogil=True)
def _scan_f(open_, n, centers, k, radii, starts, offsets, masks, out):
    """Per centre: [first bad r², first bad triangle, its travel, max travel, checks].

    ``radii`` lists admissible r² ascending; rows starts[a]:starts[a+1] of
    ``offsets``/``masks`` form the shell table of radii[a].
    """
    L = 2 * n + 1
    params = np.zeros(4, dtype=np.int64)
    empty = np.zeros(0, dtype=np.uint8)
    lo = np.zeros(3, dtype=np.int64)
    shape = np.zeros(3, dtype=np.int64)
    mins = np.empty(48, dtype=np.int64)
    for c in range(centers.shape[0]):
        cx, cy, cz = centers[c, 0], centers[c, 1], centers[c, 2]
        out[c, 0] = -1
        out[c, 1] = -1
        out[c, 2] = 0
        out[c, 3] = 0
        out[c, 4] = 0
        D = n - max(abs(cx), max(abs(cy), abs(cz)))
        for a in range(radii.shape[0]):
            r2 = radii[a]
            if r2 > D * D:
                break
            R = 0
            while (R + 1) * (R + 1) <= r2:
                R += 1
            side = 2 * R + 1
            lo[0] = cx + n - R
            lo[1] = cy + n - R
            lo[2] = cz + n - R
            shape[:] = side
            params[0] = cx + n
            params[1] = cy + n
            params[2] = cz + n
            params[3] = r2
            dist = np.full(side * side * side, -1, dtype=np.int32)
            parent = np.empty(side * side * side, dtype=np.int32)
            src = R + side * (R + side * R)
            _bfs01(open_, L, lo, shape, 1, params, empty, src, empty, False, dist, parent)
            mins[:] = 2147483647
            for e in range(starts[a], starts[a + 1]):
                ox = offsets[e, 0] + R
                oy = offsets[e, 1] + R
                oz = offsets[e, 2] + R
                d = dist[ox + side * (oy + side * oz)]
                if d < 0:
                    continue
                mk = masks[e]
                for b in range(48):
                    if (mk >> np.uint64(b)) & np.uint64(1):
                        if d < mins[b]:
                            mins[b] = d
            for b in range(48):
                best = mins[b]
                if best == 2147483647:
                    best = -1
                out[c, 4] += 1
                if best > out[c, 3]:
                    out[c, 3] = best
                if out[c, 0] < 0 and (best < 0 or best > k):
                    out[c, 0] = r2
                    out[c, 1] = b
                    out[c, 2] = best
    return out


def _shell_tables(max_r2: int, t: float):
    radii = [r2 for r2 in range(1, max_r2 + 1) if is_sum_of_three_squares(r2)]
    tabs = [shell_table(r2, t) for r2 in radii]
    starts = np.zeros(len(radii) + 1, dtype=np.int64)
    starts[1:] = np.cumsum([len(tb.offsets) for tb in tabs])
    if tabs:
        offsets = np.concatenate([tb.offsets for tb in tabs]).astype(np.int64)
        masks = np.concatenate([tb.masks for tb in tabs])
    else:
        offsets = np.zeros((0, 3), dtype=np.int64)
        masks = np.zeros(0, dtype=np.uint64)
    return np.asarray(radii, dtype=np.int64), starts, offsets, masks


def _run_scan(event: str, config: Configuration, k: int, centers: np.ndarray, t: float,
              threads: int) -> np.ndarray:
    out = np.zeros((len(centers), 5), dtype=np.int64)
    open_ = config.open_flat
    n = config.n
    if event == "E":
        def work(sl):
            _scan_e(open_, n, centers[sl], k, _UNIT_QUARTERS, out[sl])
    else:
        radii, starts, offsets, masks = _shell_tables(n * n, t)

        def work(sl):
            _scan_f(open_, n, centers[sl], k, radii, starts, offsets, masks, out[sl])
    chunks = max(1, min(len(centers), 4 * threads))
    bounds = np.linspace(0, len(centers), chunks + 1).astype(int)
    slices = [slice(bounds[a], bounds[a + 1]) for a in range(chunks) if bounds[a + 1] > bounds[a]]
    if threads <= 1:
        for sl in slices:
            work(sl)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, slices))
    return out


def _report_from_scan(event, config, k, mode, centers, out, t):
    bad = np.flatnonzero(out[:, 0] >= 0)
    violation = None
    if len(bad):
        c = int(bad[0])
        violation = Violation(as_site(centers[c]), int(out[c, 0]), int(out[c, 1]),
                              int(out[c, 2]))
    if event == "E":
        subs = int(sum(config.n - max(abs(int(v)) for v in c) for c in centers))
    else:
        subs = int(out[:, 4].sum() // 48)
    return EventReport(
        event=event, k=int(k), mode=mode, holds=violation is None, violation=violation,
        checks_performed=int(out[:, 4].sum()), n=config.n, p=config.p, seed=config.seed,
        n_subboxes=subs, max_travel=int(out[:, 3].max()) if len(out) else 0,
        violating_centers=int(len(bad)), thickness=t if event == "F" else None)


def _all_centers(n: int) -> np.ndarray:
    L = 2 * n + 1
    return indices_to_sites(np.arange(L ** 3), n)


def _sampled_centers(n: int, samples: int, sample_seed: int) -> np.ndarray:
    rng = np.random.default_rng(sample_seed)
    L = 2 * n + 1
    idx = np.sort(rng.integers(0, L ** 3, size=samples))
    return indices_to_sites(idx, n)


def wilson_upper(successes: int, trials: int, level: float = 0.95) -> float:
    """One-sided Wilson upper confidence bound on a binomial proportion."""
    from statsmodels.stats.proportion import proportion_confint

    _, hi = proportion_confint(successes, trials, alpha=2 * (1 - level), method="wilson")
    return float(min(1.0, hi))


def _check(event, config, k, mode, samples, sample_seed, queries, thickness, threads):
    if k < 0:
        raise ValueError("k must be non-negative")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    t = float(thickness)
    if mode == "on_demand":
        return _on_demand(event, config, k, queries or [], t)
    if mode == "exhaustive":
        if config.site_count > EXHAUSTIVE_SITE_LIMIT:
            raise ValueError(f"exhaustive mode is limited to {EXHAUSTIVE_SITE_LIMIT} sites; "
                             f"Λ({config.n}) has {config.site_count}")
        centers = _all_centers(config.n)
        out = _run_scan(event, config, k, centers, t, threads)
        return _report_from_scan(event, config, k, mode, centers, out, t)
    if not samples or samples < 1:
        raise ValueError("sampled mode needs samples >= 1")
    centers = _sampled_centers(config.n, samples, sample_seed)
    out = _run_scan(event, config, k, centers, t, threads)
    rep = _report_from_scan(event, config, k, mode, centers, out, t)
    rep.samples = int(samples)
    rep.sample_seed = int(sample_seed)
    rep.violation_rate_upper = wilson_upper(rep.violating_centers, samples)
    rep.confidence = "wilson-one-sided-0.95"
    return rep


def check_event_E(config: Configuration, k: int, mode: str = "exhaustive", *,
                  samples: int | None = None, sample_seed: int = 0, queries=None,
                  threads: int = 1) -> EventReport:
    """Check E(Λ(n), k). On-demand ``queries`` are (center, m, face, quadrant)."""
    return _check("E", config, k, mode, samples, sample_seed, queries, 3.0, threads)


def check_event_F(config: Configuration, k: int, mode: str = "exhaustive", *,
                  samples: int | None = None, sample_seed: int = 0, queries=None,
                  thickness: float = 3.0, threads: int = 1) -> EventReport:
    """Check F(Λ(n), k). On-demand ``queries`` are (center, r², triangle index)."""
    return _check("F", config, k, mode, samples, sample_seed, queries, thickness, threads)


# ---------------------------------------------------------------------------
# single checks and the on-demand cache
# ---------------------------------------------------------------------------

def travel_E(config: Configuration, center, m: int, face: int, quadrant: int) -> int:
    """T_Λ(n)(center, F_face^quadrant(center + Λ(m)))."""
    sq = quarter_square(BoxSpec(as_site(center), m), face, quadrant)
    return travel_to_set(config, box(config.n), center, sq.sites, want_path=False).cost


def travel_F(config: Configuration, center, r_squared: int, tri: int,
             thickness: float = 3.0) -> int:
    """T over (center + B_r) ∩ Λ(n) from center to (center + T_r) ∩ Λ(n)."""
    center = as_site(center)
    targets = thick_offsets(r_squared, TriangleIndex.from_index(tri), thickness) + center
    ball = BallSpec(center, int(r_squared))
    return travel_to_set(config, ball, center, targets, want_path=False).cost


_cache_lock = threading.Lock()


def _query_cache(config: Configuration) -> dict:
    cache = config.__dict__.get("_event_queries")
    if cache is None:
        with _cache_lock:
            cache = config.__dict__.setdefault("_event_queries", {})
    return cache


def cached_travel(config: Configuration, event: str, query, thickness: float = 3.0) -> int:
    """Travel time of one event query, memoised on the configuration."""
    center, shape, *target = query
    center = as_site(center)
    if event == "E":
        key = ("E", center, int(shape), int(target[0]), int(target[1]))
    else:
        key = ("F", center, int(shape), int(target[0]), float(thickness))
    cache = _query_cache(config)
    if key not in cache:
        if event == "E":
            cache[key] = travel_E(config, center, key[2], key[3], key[4])
        else:
            cache[key] = travel_F(config, center, key[2], key[3], thickness)
    return cache[key]


def _on_demand(event, config, k, queries, t) -> EventReport:
    violation = None
    worst = 0
    seen = set()
    for q in queries:
        key = (as_site(q[0]),) + tuple(int(v) for v in q[1:])
        if key in seen:
            continue
        seen.add(key)
        travel = cached_travel(config, event, q, t)
        worst = max(worst, travel)
        if violation is None and _exceeds(travel, k):
            target = (4 * (key[2] - 1) + key[3] - 1) if event == "E" else key[2]
            violation = Violation(key[0], key[1], target, travel)
    return EventReport(event=event, k=int(k), mode="on_demand", holds=violation is None,
                       violation=violation, checks_performed=len(seen), n=config.n, p=config.p,
                       seed=config.seed, max_travel=worst, n_subboxes=len(seen),
                       thickness=t if event == "F" else None)


def recheck(config: Configuration, report: EventReport) -> int:
    """Recompute the travel time of a report's violation witness."""
    v = report.violation
    if v is None:
        raise ValueError("report has no violation")
    if report.event == "E":
        face, quadrant = quarter_of(v.target)
        return travel_E(config, v.center, v.shape, face, quadrant)
    return travel_F(config, v.center, v.shape, v.target, report.thickness or 3.0)

