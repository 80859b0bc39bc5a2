"""
Seeded Monte Carlo experiments and their tabular reports.

Trial i of an experiment with base seed b uses the configuration seed
mix_seed(b, i), so rows never depend on the worker count or on the order in
which trials finish. Parallel work is split into contiguous index chunks and
reassembled in index order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .clusters import reaches_boundary_sampled
from .geometry import quarter_offsets, shell_table
from .lattice import BallSpec, _sample_open, _site_open, inner_boundary, mix_seed
from .lattice import box, sample_configuration
from .traveltime import _bfs01, cluster_index, farthest_site, travel_field

CONFIDENCE_LEVEL = 0.95


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Rows of named values plus the parameters that produced them.

    ``summary`` holds derived verdicts (e.g. whether a bound held);
    ``confidence`` names the interval method and level.
    """

    experiment: str
    parameters: dict
    rows: list[dict]
    confidence: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        return list(self.rows[0].keys()) if self.rows else []

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "parameters": self.parameters,
                "rows": self.rows, "confidence": self.confidence, "summary": self.summary}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        d = json.loads(text)
        return cls(d["experiment"], d["parameters"], d["rows"], d.get("confidence", {}),
                   d.get("summary", {}))

    def to_csv(self) -> str:
        """A ``# {...}`` metadata line, a header row, then one row per record."""
        meta = {"experiment": self.experiment, "parameters": self.parameters,
                "confidence": self.confidence, "summary": self.summary}
        buf = io.StringIO()
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns
        w.writerow(cols)
        for row in self.rows:
            w.writerow([_cell(row[c]) for c in cols])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentReport":
        first, rest = text.split("\n", 1)
        if not first.startswith("# "):
            raise ValueError("missing metadata line")
        meta = json.loads(first[2:])
        reader = csv.reader(io.StringIO(rest))
        cols = next(reader, [])
        rows = [{c: _parse(v) for c, v in zip(cols, rec)} for rec in reader if rec]
        return cls(meta["experiment"], meta["parameters"], rows, meta.get("confidence", {}),
                   meta.get("summary", {}))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def wilson_interval(successes: int, trials: int, level: float = CONFIDENCE_LEVEL):
    from statsmodels.stats.proportion import proportion_confint

    lo, hi = proportion_confint(successes, trials, alpha=1 - level, method="wilson")
    # the Wilson interval contains the point estimate; clip float noise at the ends
    est = successes / trials
    return float(min(max(lo, 0.0), est)), float(max(min(hi, 1.0), est))


def _wilson_tag(level=CONFIDENCE_LEVEL) -> dict:
    return {"method": "wilson", "level": level}


def trial_seeds(base_seed: int, count: int, start: int = 0) -> np.ndarray:
    return np.array([mix_seed(base_seed, start + i) for i in range(count)], dtype=np.uint64)


def parallel_chunks(fn, count: int, threads: int, chunk: int = 256) -> list:
    """Apply ``fn(start, stop)`` to consecutive index chunks, results in index order."""
    bounds = list(range(0, count, chunk)) + [count]
    spans = [(bounds[a], bounds[a + 1]) for a in range(len(bounds) - 1)]
    if threads <= 1 or len(spans) <= 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: fn(*s), spans))


def parallel_map(fn, items, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# θ(p)
# ---------------------------------------------------------------------------

def theta_hits(p: float, R: int, trials: int, base_seed: int, threads: int = 1) -> int:
    seeds = trial_seeds(base_seed, trials)
    parts = parallel_chunks(
        lambda a, b: int(reaches_boundary_sampled(R, p, seeds[a:b]).sum()), trials, threads,
        chunk=1024)
    return int(sum(parts))


def estimate_theta(p: float, radii, trials: int, base_seed: int, threads: int = 1
                   ) -> ExperimentReport:
    """Fraction of configurations on Λ(R) whose origin cluster reaches ∂ⁱⁿΛ(R)."""
    _check_probability(p)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for R in radii:
        hits = theta_hits(p, int(R), trials, base_seed, threads)
        lo, hi = wilson_interval(hits, trials)
        rows.append({"R": int(R), "trials": trials, "hits": hits, "theta_hat": hits / trials,
                     "ci_low": lo, "ci_high": hi})
    params = {"p": p, "radii": [int(R) for R in radii], "trials": trials,
              "base_seed": base_seed}
    est = [r["theta_hat"] for r in rows]
    summary = {"non_increasing_within_ci": all(
        rows[a + 1]["ci_low"] <= rows[a]["ci_high"] for a in range(len(rows) - 1)),
        "point_estimates_non_increasing": all(est[a + 1] <= est[a] for a in range(len(est) - 1))}
    return ExperimentReport("theta", params, rows, _wilson_tag(), summary)


def _check_probability(p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p = {p} is not a probability")


# ---------------------------------------------------------------------------
# exit times
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _exit_time_lazy(m, p, seed, dist, stamp, tag, buf):
    """T_Λ(m)(0, ∂ⁱⁿΛ(m)) on sample_configuration(m, p, seed), sampling on demand.

    ``stamp[i] == tag`` marks sites discovered in this trial.
    """
    L = 2 * m + 1
    LL = L * L
    cap = buf.shape[0]
    o = m + L * (m + L * m)
    d0 = 0 if _site_open(seed, o, p) else 1
    if m == 0:
        return d0
    stamp[o] = tag
    dist[o] = d0
    buf[0] = o
    head = 0
    size = 1
    best = 2147483647
    while size > 0:
        u = buf[head]
        head += 1
        if head == cap:
            head = 0
        size -= 1
        du = dist[u]
        if du >= best:
            break
        z = u // LL
        y = (u - z * LL) // L
        x = u - z * LL - y * L
        for k in range(6):
            vx, vy, vz = x, y, z
            if k == 0:
                vx -= 1
            elif k == 1:
                vx += 1
            elif k == 2:
                vy -= 1
            elif k == 3:
                vy += 1
            elif k == 4:
                vz -= 1
            else:
                vz += 1
            v = vx + L * (vy + L * vz)
            if stamp[v] == tag:
                continue
            stamp[v] = tag
            w = 0 if _site_open(seed, v, p) else 1
            dv = du + w
            dist[v] = dv
            if vx == 0 or vy == 0 or vz == 0 or vx == L - 1 or vy == L - 1 or vz == L - 1:
                if dv < best:
                    best = dv
                continue
            if w == 0:
                head -= 1
                if head < 0:
                    head = cap - 1
                buf[head] = v
            else:
                tail = head + size
                if tail >= cap:
                    tail -= cap
                buf[tail] = v
            size += 1
    return best


@njit(cache=True, nogil=True)
def _exit_times(m, p, seeds):
    L = 2 * m + 1
    size = L * L * L
    dist = np.zeros(size, dtype=np.int32)
    stamp = np.zeros(size, dtype=np.int32)
    buf = np.empty(size, dtype=np.int32)
    out = np.empty(seeds.shape[0], dtype=np.int64)
    for t in range(seeds.shape[0]):
        out[t] = _exit_time_lazy(m, p, seeds[t], dist, stamp, t + 1, buf)
    return out


def exit_times(p: float, m: int, trials: int, base_seed: int, threads: int = 1) -> np.ndarray:
    """T_Λ(m)(0, ∂ⁱⁿΛ(m)) for trials 0..trials-1."""
    seeds = trial_seeds(base_seed, trials)
    parts = parallel_chunks(lambda a, b: _exit_times(int(m), float(p), seeds[a:b]), trials,
                            threads, chunk=1024)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def tail_counts(values: np.ndarray, kmax: int) -> np.ndarray:
    """counts[k] = #{values >= k} for k = 0..kmax."""
    hist = np.bincount(np.asarray(values, dtype=np.int64), minlength=kmax + 1)[:kmax + 1]
    return hist[::-1].cumsum()[::-1] + (np.asarray(values) > kmax).sum()


def theta_seed(base_seed: int) -> int:
    """Base seed of the θ̂ run embedded in the tail experiments."""
    return mix_seed(base_seed, 1 << 40)


def tail_exit(p: float, m: int, trials: int, base_seed: int, *, theta_radius: int = 40,
              theta_trials: int = 10_000, delta: float = 0.1, min_survivors: int = 100,
              threads: int = 1) -> ExperimentReport:
    """Empirical P(T_Λ(m)(0, ∂ⁱⁿΛ(m)) >= k) against (1 - (1-δ)·θ̂)^k."""
    _check_probability(p)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits = theta_hits(p, theta_radius, theta_trials, theta_seed(base_seed), threads)
    theta_hat = hits / theta_trials
    adjusted = (1 - delta) * theta_hat
    times = exit_times(p, m, trials, base_seed, threads)
    kmax = int(times.max())
    counts = tail_counts(times, kmax)
    rows = []
    for k in range(kmax + 1):
        c = int(counts[k])
        lo, hi = wilson_interval(c, trials)
        bound = (1 - adjusted) ** k
        rows.append({"k": k, "survivors": c, "tail": c / trials, "ci_low": lo, "ci_high": hi,
                     "bound": bound, "within_bound": c / trials <= bound})
    checked = [r for r in rows if r["survivors"] >= min_survivors]
    params = {"p": p, "m": m, "trials": trials, "base_seed": base_seed,
              "theta_radius": theta_radius, "theta_trials": theta_trials, "delta": delta,
              "min_survivors": min_survivors}
    summary = {"theta_hat": theta_hat, "theta_adjusted": adjusted,
               "rows_checked": len(checked),
               "bound_holds": all(r["within_bound"] for r in checked)}
    return ExperimentReport("tail-exit", params, rows, _wilson_tag(), summary)


# ---------------------------------------------------------------------------
# per-square and per-triangle tails
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _square_trial(m, p, seed, quarters, offsets, masks, rim, sq_out, tri_out):
    """Quarter minima over Λ(m) and triangle minima over B_m for one configuration.

    Returns (exit time of Λ(m), exit time of B_m).
    """
    L = 2 * m + 1
    open_ = _sample_open(L * L * L, seed, p)
    size = L * L * L
    dist = np.full(size, -1, dtype=np.int32)
    parent = np.empty(size, dtype=np.int32)
    lo = np.zeros(3, dtype=np.int64)
    shape = np.full(3, L, dtype=np.int64)
    params = np.zeros(4, dtype=np.int64)
    empty = np.zeros(0, dtype=np.uint8)
    src = m + L * (m + L * m)
    _bfs01(open_, L, lo, shape, 0, params, empty, src, empty, False, dist, parent)
    exit_box = 2147483647
    for q in range(24):
        best = 2147483647
        for z in range(quarters[q, 0, 2] + m, quarters[q, 1, 2] + m + 1):
            for y in range(quarters[q, 0, 1] + m, quarters[q, 1, 1] + m + 1):
                for x in range(quarters[q, 0, 0] + m, quarters[q, 1, 0] + m + 1):
                    d = dist[x + L * (y + L * z)]
                    if d < best:
                        best = d
        sq_out[q] = best
        exit_box = min(exit_box, best)
    # ball of radius m about the origin, inside the same configuration
    dist[:] = -1
    params[0] = m
    params[1] = m
    params[2] = m
    params[3] = m * m
    _bfs01(open_, L, lo, shape, 1, params, empty, src, empty, False, dist, parent)
    for b in range(48):
        tri_out[b] = 2147483647
    for e in range(offsets.shape[0]):
        d = dist[(offsets[e, 0] + m) + L * ((offsets[e, 1] + m) + L * (offsets[e, 2] + m))]
        mk = masks[e]
        for b in range(48):
            if (mk >> np.uint64(b)) & np.uint64(1):
                if d < tri_out[b]:
                    tri_out[b] = d
    exit_ball = 2147483647
    for e in range(rim.shape[0]):
        d = dist[(rim[e, 0] + m) + L * ((rim[e, 1] + m) + L * (rim[e, 2] + m))]
        if d < exit_ball:
            exit_ball = d
    return exit_box, exit_ball


@njit(cache=True, nogil=True)
def _square_trials(m, p, seeds, quarters, offsets, masks, rim, sq, tri, ex):
    for t in range(seeds.shape[0]):
        a, b = _square_trial(m, p, seeds[t], quarters, offsets, masks, rim, sq[t], tri[t])
        ex[t, 0] = a
        ex[t, 1] = b


def square_travel_times(p: float, m: int, trials: int, base_seed: int, t: float = 3.0,
                        threads: int = 1):
    """Per trial: T(0, F_i^j) for the 24 quarters of Λ(m), T_{B_m}(0, T_m) for the
    48 triangles, and the two exit times (box, ball)."""
    seeds = trial_seeds(base_seed, trials)
    quarters = quarter_offsets(m)
    tab = shell_table(m * m, t)
    rim = inner_boundary(BallSpec((0, 0, 0), m * m)).astype(np.int64)
    sq = np.zeros((trials, 24), dtype=np.int64)
    tri = np.zeros((trials, 48), dtype=np.int64)
    ex = np.zeros((trials, 2), dtype=np.int64)

    def work(a, b):
        _square_trials(int(m), float(p), seeds[a:b], quarters, tab.offsets.astype(np.int64),
                       tab.masks, rim, sq[a:b], tri[a:b], ex[a:b])

    parallel_chunks(work, trials, threads, chunk=128)
    return sq, tri, ex


def tail_square(p: float, m: int, trials: int, base_seed: int, *, t: float = 3.0,
                threads: int = 1) -> ExperimentReport:
    """Exit tail of Λ(m) against the 24th power of the per-square tail, and the
    ball analogue against the 48th power of the per-triangle tail."""
    _check_probability(p)
    if trials < 1 or m < 1:
        raise ValueError("need trials >= 1 and m >= 1")
    sq, tri, ex = square_travel_times(p, m, trials, base_seed, t, threads)
    kmax = int(max(ex.max(), sq.max(), tri.max()))
    exit_c = tail_counts(ex[:, 0], kmax)
    ball_c = tail_counts(ex[:, 1], kmax)
    sq_c = np.stack([tail_counts(sq[:, q], kmax) for q in range(24)], axis=1)
    tri_c = np.stack([tail_counts(tri[:, b], kmax) for b in range(48)], axis=1)
    rows = []
    for k in range(kmax + 1):
        e_lo, e_hi = wilson_interval(int(exit_c[k]), trials)
        b_lo, b_hi = wilson_interval(int(ball_c[k]), trials)
        sq_tail = sq_c[k, 0] / trials
        tri_tail = tri_c[k, 0] / trials
        sq_ci = [wilson_interval(int(c), trials) for c in sq_c[k]]
        tri_ci = [wilson_interval(int(c), trials) for c in tri_c[k]]
        rows.append({
            "k": k,
            "exit_tail": exit_c[k] / trials, "exit_ci_low": e_lo, "exit_ci_high": e_hi,
            "square_tail": sq_tail,
            "square_tail_pow24": sq_tail ** 24,
            "square_tail_min": sq_c[k].min() / trials, "square_tail_max": sq_c[k].max() / trials,
            "squares_consistent": max(c[0] for c in sq_ci) <= min(c[1] for c in sq_ci),
            "fkg_box_holds": e_hi >= sq_tail ** 24,
            "ball_exit_tail": ball_c[k] / trials, "ball_ci_low": b_lo, "ball_ci_high": b_hi,
            "triangle_tail": tri_tail,
            "triangle_tail_pow48": tri_tail ** 48,
            "triangle_tail_min": tri_c[k].min() / trials,
            "triangle_tail_max": tri_c[k].max() / trials,
            "triangles_consistent": max(c[0] for c in tri_ci) <= min(c[1] for c in tri_ci),
            "fkg_ball_holds": b_hi >= tri_tail ** 48,
        })
    rows = [{key: (v.item() if isinstance(v, np.generic) else v) for key, v in r.items()}
            for r in rows]
    params = {"p": p, "m": m, "trials": trials, "base_seed": base_seed, "t": t,
              "ball_r_squared": m * m}
    summary = {"fkg_box_holds": all(r["fkg_box_holds"] for r in rows),
               "fkg_ball_holds": all(r["fkg_ball_holds"] for r in rows),
               "squares_consistent": all(r["squares_consistent"] for r in rows),
               "triangles_consistent": all(r["triangles_consistent"] for r in rows)}
    return ExperimentReport("tail-square", params, rows, _wilson_tag(), summary)


# ---------------------------------------------------------------------------
# (ln n)² scaling
# ---------------------------------------------------------------------------

def config_seed(base_seed: int, n: int, index: int) -> int:
    return mix_seed(mix_seed(base_seed, n), index)


def _random_site(rng: np.random.Generator, n: int):
    return tuple(int(v) for v in rng.integers(-n, n + 1, size=3))


def scaling_config(p: float, n: int, index: int, pairs: int, base_seed: int,
                   leg_factor: float = 3.0) -> dict:
    """Two-sweep maximum, exact pair travel times and theorem-path costs on one configuration."""
    from .walks import WalkBudget, theorem_path

    seed = config_seed(base_seed, n, index)
    config = sample_configuration(n, p, seed)
    rng = np.random.default_rng(seed)
    start = _random_site(rng, n)
    far, _ = farthest_site(travel_field(config, box(n), start), n)
    _, sweep = farthest_site(travel_field(config, box(n), far), n)
    ci = cluster_index(config)
    budget = WalkBudget.desk(n, math.ceil(leg_factor * math.log(n)))
    exact, built, reached = [], [], 0
    for _ in range(pairs):
        x, y = _random_site(rng, n), _random_site(rng, n)
        exact.append(ci.travel_time(x, y))
        trace = theorem_path(config, x, y, budget)
        built.append(trace.total_cost)
        reached += trace.outcome == "reached"
    exact = np.asarray(exact)
    built = np.asarray(built)
    config.__dict__.pop("_cluster_index", None)
    return {"n": n, "config": index, "seed": seed, "sweep_max": int(sweep),
            "pair_values": exact.tolist(), "theorem_values": built.tolist(),
            "theorem_reached": int(reached)}


BYTES_PER_SITE = 64


def memory_parallelism(n: int) -> int:
    """How many configurations on Λ(n) fit in half the available memory at once."""
    import psutil

    need = BYTES_PER_SITE * (2 * n + 1) ** 3
    return max(1, int(psutil.virtual_memory().available // 2 // need))


def scaling_scan(p: float, sizes, configs_per_n: int, pairs_per_config: int, base_seed: int,
                 *, leg_factor: float = 3.0, threads: int = 1) -> ExperimentReport:
    """Per n: sampled maximum of T, its 0.99-quantile and mean over pairs,
    κ̂ = max / (ln n)², and theorem-path costs on the same pairs."""
    _check_probability(p)
    sizes = [int(n) for n in sizes]
    if sizes != sorted(sizes) or any(n < 2 for n in sizes):
        raise ValueError("sizes must be ascending and >= 2")
    results = []
    for n in sizes:
        results += parallel_map(
            lambda c: scaling_config(p, n, c, pairs_per_config, base_seed, leg_factor),
            range(configs_per_n), min(threads, memory_parallelism(n)))
    rows = []
    for n in sizes:
        res = [r for r in results if r["n"] == n]
        pairs = np.concatenate([r["pair_values"] for r in res]).astype(np.int64)
        built = np.concatenate([r["theorem_values"] for r in res]).astype(np.int64)
        config_max = [max(r["sweep_max"], max(r["pair_values"], default=0)) for r in res]
        smax = int(max(config_max))
        gaps = built - pairs
        rows.append({
            "n": n, "configs": len(res), "pairs": int(len(pairs)),
            "sampled_max": smax,
            "pair_max": int(pairs.max()),
            "q99": float(np.quantile(pairs, 0.99)),
            "mean": float(pairs.mean()),
            "kappa_hat": smax / math.log(n) ** 2,
            "config_max_mean": float(np.mean(config_max)),
            "theorem_max": int(built.max()),
            "theorem_mean": float(built.mean()),
            "theorem_gap_min": int(gaps.min()),
            "theorem_below_optimum": int((gaps < 0).sum()),
            "theorem_reached": int(sum(r["theorem_reached"] for r in res)),
        })
    rho, pval = scaling_trend(rows)
    params = {"p": p, "sizes": sizes, "configs_per_n": configs_per_n,
              "pairs_per_config": pairs_per_config, "base_seed": base_seed,
              "leg_factor": leg_factor}
    summary = {"spearman_rho": rho, "spearman_p_increasing": pval,
               "increasing_trend": bool(pval < 0.05),
               "theorem_never_below_optimum": all(r["theorem_below_optimum"] == 0 for r in rows)}
    return ExperimentReport("scaling", params, rows, {"method": "spearman-exact",
                                                      "level": CONFIDENCE_LEVEL}, summary)


def scaling_trend(rows) -> tuple[float, float]:
    """Spearman ρ of κ̂ against n and the exact one-sided p-value for ρ > 0."""
    from scipy import stats

    if len(rows) < 2:
        return 0.0, 1.0
    n = np.array([r["n"] for r in rows], dtype=float)
    kappa = np.array([r["kappa_hat"] for r in rows], dtype=float)
    if np.all(kappa == kappa[0]):
        return 0.0, 1.0

    def rho(a):
        return stats.spearmanr(n, a).statistic

    res = stats.permutation_test((kappa,), rho, permutation_type="pairings",
                                 alternative="greater")
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

def coverage_scan(rmax_squared: int, t: float = 3.0, threads: int = 1) -> ExperimentReport:
    """coverage_check for every admissible r² <= rmax_squared."""
    from .geometry import coverage_witness
    from .lattice import is_sum_of_three_squares

    radii = [r2 for r2 in range(1, rmax_squared + 1) if is_sum_of_three_squares(r2)]
    wits = parallel_map(lambda r2: coverage_witness(r2, t), radii, threads)
    rows = []
    for r2, w in zip(radii, wits):
        rows.append({"r_squared": r2, "covered": w is None,
                     "witness_x": None if w is None else w.x,
                     "witness_y": None if w is None else w.y,
                     "witness_z": None if w is None else w.z})
    params = {"rmax_squared": rmax_squared, "t": t}
    summary = {"holds": all(r["covered"] for r in rows), "radii_checked": len(rows)}
    return ExperimentReport("coverage", params, rows, {}, summary)
