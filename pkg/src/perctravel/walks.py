"""
Constructive waypoint walks.

``cube_walk`` carries a site of Λ(n) into Λ(n/4). Outside Λ(3n/4) it
repeatedly jumps from the centre y of the largest cube Γ ⊆ Λ(n) to the face
of Γ opposite the nearest face of Λ(n), which doubles the distance to that
face. Inside Λ(3n/4) it hops through cubes of half-side ⌊n/4⌋ toward the
origin.

``sphere_walk`` moves from x toward y through balls centred on the current
waypoint, each time landing in the thickened triangle that contains y. Above
r_min = 2t/(λ - 0.96) every step contracts the distance to y by λ.

Every leg is a real travel time. Legs labelled ``doubling``, ``chain`` and
``triangle`` are the ones the budget k applies to; ``adjust`` and
``fallback`` legs are costed but exempt. A walk does not stop at the first
over-budget leg: it finishes and reports the first one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    FACE_AXIS,
    FACE_SIGN,
    canonicalize_direction,
    contraction_radius,
    face_distance,
    face_of,
    opposite_face,
    quadrant_index,
    quarter_square,
    thick_offsets,
)
from .lattice import BallSpec, BoxSpec, Configuration, Site, as_site, box
from .traveltime import UNREACHABLE, cluster_index, travel_to_set

BUDGETED = ("doubling", "chain", "triangle")
OUTCOMES = ("reached", "budget_exceeded", "step_limit", "contraction_violated")
MAX_CHAIN_HOPS = 9


@dataclass(frozen=True)
class WalkBudget:
    leg_budget: int
    thickness: float = 3.0
    contraction: float = 0.97
    stop_radius: float = 600.0
    max_steps: int | None = None

    def __post_init__(self):
        if not 0.96 < self.contraction < 1:
            raise ValueError("contraction must lie in (0.96, 1)")
        if self.thickness < 0:
            raise ValueError("thickness must be non-negative")

    @property
    def r_min(self) -> float:
        return contraction_radius(self.thickness, self.contraction)

    def step_limit(self, n: int) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return 64 * math.ceil(math.log(2 * n + 1))

    @classmethod
    def desk(cls, n: int, leg_budget: int, thickness: float = 3.0,
             contraction: float = 0.97) -> "WalkBudget":
        """Defaults for desk-scale boxes: stop_radius = min(600, n/8)."""
        return cls(leg_budget, thickness, contraction, min(600.0, n / 8))


@dataclass(frozen=True)
class Leg:
    """One leg start -> end. ``query`` names the event check the leg realises:
    ("E", center, m, face, quadrant) or ("F", center, r², triangle)."""

    label: str
    start: Site
    end: Site
    cost: int
    query: tuple | None = None
    radius: float | None = None

    def to_dict(self) -> dict:
        q = None
        if self.query is not None:
            q = [self.query[0], list(self.query[1])] + [v for v in self.query[2:]]
        return {"label": self.label, "start": list(self.start), "end": list(self.end),
                "cost": self.cost, "query": q, "radius": self.radius}

    @classmethod
    def from_dict(cls, d: dict) -> "Leg":
        q = d.get("query")
        if q is not None:
            q = (q[0], as_site(q[1])) + tuple(int(v) for v in q[2:])
        return cls(d["label"], as_site(d["start"]), as_site(d["end"]), int(d["cost"]), q,
                   d.get("radius"))


@dataclass
class WalkTrace:
    waypoints: list[Site]
    legs: list[Leg] = field(default_factory=list)
    outcome: str = "reached"
    failing_leg: int | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def leg_costs(self) -> list[int]:
        return [leg.cost for leg in self.legs]

    @property
    def total_cost(self) -> int:
        return sum(self.leg_costs)

    @property
    def steps(self) -> int:
        return len(self.waypoints) - 1

    @property
    def final(self) -> Site:
        return self.waypoints[-1]

    def add(self, leg: Leg, budget: WalkBudget) -> None:
        self.legs.append(leg)
        self.waypoints.append(leg.end)
        over = leg.cost == UNREACHABLE or leg.cost > budget.leg_budget
        if leg.label in BUDGETED and over and self.failing_leg is None:
            self.failing_leg = len(self.legs) - 1

    def flag(self, note: str) -> None:
        if note not in self.flags:
            self.flags.append(note)

    def queries(self, event: str) -> list[tuple]:
        return [leg.query[1:] for leg in self.legs
                if leg.query is not None and leg.query[0] == event]

    def to_dict(self) -> dict:
        return {"waypoints": [list(w) for w in self.waypoints],
                "legs": [leg.to_dict() for leg in self.legs],
                "leg_costs": self.leg_costs, "total_cost": self.total_cost,
                "steps": self.steps, "outcome": self.outcome,
                "failing_leg": self.failing_leg, "flags": list(self.flags)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "WalkTrace":
        return cls([as_site(w) for w in d["waypoints"]],
                   [Leg.from_dict(leg) for leg in d["legs"]], d["outcome"],
                   d.get("failing_leg"), list(d.get("flags", [])))

    @classmethod
    def from_json(cls, text: str) -> "WalkTrace":
        return cls.from_dict(json.loads(text))


class NoFeasibleQuadrant(RuntimeError):
    """No quarter of the opposite face keeps every face distance; carries the state."""

    def __init__(self, state: dict):
        super().__init__(f"no feasible quadrant: {state}")
        self.state = state


def _finish(trace: WalkTrace, reached: bool) -> WalkTrace:
    if trace.outcome == "reached":
        if trace.failing_leg is not None:
            trace.outcome = "budget_exceeded"
        elif not reached:
            trace.outcome = "step_limit"
    return trace


def _quarter_leg(config: Configuration, label: str, y: Site, m: int, face: int,
                 quadrant: int) -> Leg:
    sq = quarter_square(BoxSpec(y, m), face, quadrant)
    cost, hit = cluster_index(config).travel_to_set(y, sq.sites)
    return Leg(label, y, hit, int(cost), ("E", y, m, face, quadrant))


def _direct_leg(config: Configuration, label: str, y: Site, target: Site) -> Leg:
    cost = cluster_index(config).travel_time(y, target)
    return Leg(label, y, target, int(cost))


def _set_leg(config: Configuration, label: str, y: Site, targets: np.ndarray) -> Leg:
    cost, hit = cluster_index(config).travel_to_set(y, targets)
    return Leg(label, y, hit, int(cost))


# ---------------------------------------------------------------------------
# cube walk
# ---------------------------------------------------------------------------

def in_box(s, half: float) -> bool:
    """s ∈ Λ(half) for a possibly fractional half-side."""
    return max(abs(int(c)) for c in s) <= half


def capped_face_distances(s, n: int) -> list[float]:
    """min(d(s, F_l(Λ(n))), 3n/4) for the six faces."""
    cap = 3 * n / 4
    return [min(face_distance(s, n, i), cap) for i in range(1, 7)]


def _quarter_face_distance(lo, hi, n: int, face: int) -> int:
    a = FACE_AXIS[face - 1]
    far = hi[a] if FACE_SIGN[face - 1] > 0 else lo[a]
    return n - FACE_SIGN[face - 1] * int(far)


def doubling_step(y: Site, n: int) -> tuple[int, int, int, int]:
    """(M, h, i, j): half-side of the largest cube at y, nearest face h of Λ(n),
    opposite face i of the cube, smallest quadrant j keeping capped depths."""
    M = n - max(abs(c) for c in y)
    h = next(f for f in range(1, 7) if face_distance(y, n, f) == M)
    i = opposite_face(h)
    cap = 3 * n / 4
    before = capped_face_distances(y, n)
    for j in range(1, 5):
        lo, hi = quarter_square(BoxSpec(y, M), i, j).bounds()
        if all(min(_quarter_face_distance(lo, hi, n, f), cap) >= before[f - 1]
               for f in range(1, 7)):
            return M, h, i, j
    raise NoFeasibleQuadrant({"site": tuple(y), "n": n, "half_side": M, "near_face": h,
                              "face": i})


def chain_step(y: Site, q: int) -> tuple[int, int]:
    """Face and quadrant of y + Λ(q) pointing toward the origin."""
    a = max(range(3), key=lambda ax: (abs(y[ax]), -ax))
    face = face_of(a, -1 if y[a] > 0 else 1)
    b, c = (ax for ax in range(3) if ax != a)
    return face, quadrant_index(-1 if y[b] > 0 else 1, -1 if y[c] > 0 else 1)


def cube_walk(config: Configuration, x, budget: WalkBudget) -> WalkTrace:
    """Walk from x ∈ Λ(n) into Λ(n/4): adjust, doubling legs, then chain hops."""
    n = config.n
    x = as_site(x)
    if not in_box(x, n):
        raise ValueError(f"{tuple(x)} is not in Λ({n})")
    trace = WalkTrace([x])
    if in_box(x, n / 4):
        return _finish(trace, True)
    limit = budget.step_limit(n)
    y = x
    if max(abs(c) for c in x) == n:
        y1 = as_site(np.clip(np.asarray(x), -(n - 1), n - 1))
        trace.add(_direct_leg(config, "adjust", x, y1), budget)
        y = y1
    while not in_box(y, 3 * n / 4):
        if len(trace.legs) >= limit:
            return _finish(trace, False)
        M, _, i, j = doubling_step(y, n)
        leg = _quarter_leg(config, "doubling", y, M, i, j)
        trace.add(leg, budget)
        y = leg.end
    q = n // 4
    hops = 0
    while not in_box(y, n / 4) and q > 0 and hops < MAX_CHAIN_HOPS:
        if len(trace.legs) >= limit:
            return _finish(trace, False)
        face, quadrant = chain_step(y, q)
        leg = _quarter_leg(config, "chain", y, q, face, quadrant)
        trace.add(leg, budget)
        y = leg.end
        hops += 1
    if not in_box(y, n / 4):
        trace.flag("chain_fallback")
        trace.add(_set_leg(config, "fallback", y, box(n // 4).sites()), budget)
    return _finish(trace, True)


# ---------------------------------------------------------------------------
# sphere walk
# ---------------------------------------------------------------------------

def sphere_walk(config: Configuration, x, y, budget: WalkBudget) -> WalkTrace:
    """Walk from x to y (both in Λ(n/4)) by thickened-triangle legs, then a direct leg."""
    n = config.n
    x, y = as_site(x), as_site(y)
    for s in (x, y):
        if not in_box(s, n / 4):
            raise ValueError(f"{tuple(s)} is not in Λ({n}/4)")
    trace = WalkTrace([x])
    limit = budget.step_limit(n)
    r_min = budget.r_min
    t = budget.thickness
    cur = x
    target = np.asarray(y, dtype=np.int64)
    while cur != y:
        if len(trace.legs) >= limit:
            return _finish(trace, False)
        diff = target - np.asarray(cur, dtype=np.int64)
        r2 = int(diff @ diff)
        r = math.sqrt(r2)
        if r < budget.stop_radius:
            trace.add(_direct_leg(config, "fallback", cur, y), budget)
            break
        tri, _ = canonicalize_direction(diff)
        sites = thick_offsets(r2, tri, t) + np.asarray(cur, dtype=np.int64)
        res = travel_to_set(config, BallSpec(cur, r2), cur, sites, want_path=False)
        nxt = res.hit
        new_r = math.dist(nxt, y)
        if r >= r_min:
            if new_r > budget.contraction * r:
                trace.add(Leg("triangle", cur, nxt, int(res.cost), ("F", cur, r2, tri.index), r),
                          budget)
                trace.outcome = "contraction_violated"
                return trace
        elif new_r >= r:
            # below r_min contraction is not guaranteed; finish directly instead
            trace.flag("no_progress_fallback")
            trace.add(_direct_leg(config, "fallback", cur, y), budget)
            break
        trace.add(Leg("triangle", cur, nxt, int(res.cost), ("F", cur, r2, tri.index), r),
                  budget)
        if not in_box(nxt, n / 4):
            trace.flag("left_inner_box")
        cur = nxt
    return _finish(trace, True)


def sphere_step_bound(distance: float, budget: WalkBudget) -> int:
    """⌈log(distance / stop_radius) / log(1/λ)⌉: triangle legs needed above r_min."""
    if distance < budget.stop_radius:
        return 0
    return math.ceil(math.log(distance / budget.stop_radius) / math.log(1 / budget.contraction))


# ---------------------------------------------------------------------------
# three-leg composition
# ---------------------------------------------------------------------------

def _reversed(trace: WalkTrace) -> WalkTrace:
    legs = [Leg(leg.label, leg.end, leg.start, leg.cost, leg.query, leg.radius)
            for leg in reversed(trace.legs)]
    return WalkTrace(list(reversed(trace.waypoints)), legs, trace.outcome,
                     None if trace.failing_leg is None else len(legs) - 1 - trace.failing_leg,
                     list(trace.flags))


def theorem_path(config: Configuration, x, y, budget: WalkBudget) -> WalkTrace:
    """x -> x* (cube walk), x* -> y* (sphere walk), y* -> y (reversed cube walk from y)."""
    x, y = as_site(x), as_site(y)
    n = config.n
    for s in (x, y):
        if not in_box(s, n):
            raise ValueError(f"{tuple(s)} is not in Λ({n})")
    parts = [cube_walk(config, x, budget)]
    from_y = cube_walk(config, y, budget)
    if parts[0].outcome != "step_limit" and from_y.outcome != "step_limit":
        parts.append(sphere_walk(config, parts[0].final, from_y.final, budget))
    parts.append(_reversed(from_y))

    out = WalkTrace([x])
    for part in parts:
        offset = len(out.legs)
        out.legs.extend(part.legs)
        out.waypoints.extend(part.waypoints[1:])
        if out.failing_leg is None and part.failing_leg is not None:
            out.failing_leg = offset + part.failing_leg
        for note in part.flags:
            out.flag(note)
    for part in parts:
        if part.outcome != "reached":
            out.outcome = part.outcome
            break
    if len(parts) == 2:
        # a cube walk hit its step limit: the path does not join x to y
        out.outcome = "step_limit"
    return out
