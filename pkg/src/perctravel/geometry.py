"""
Target geometry: quarter squares on the faces of cubic boxes and the
48-triangle octahedral tiling of the sphere with its thickened lattice sets.

Faces of a box are numbered 1..6 as +x, -x, +y, -y, +z, -z. A quarter
square of face i is picked by the signs (σ_b, σ_c) of its two in-face axes
b < c, with quadrant j = 1 + 2·[σ_b < 0] + [σ_c < 0]. Quarters are closed:
the quarter spans the face centre lines, so sites on a median belong to two
(or four) quarters.

A triangle of the tiling is a signed permutation g. The fundamental triangle
is T0 = {u : u_x >= u_y >= u_z >= 0}; g maps a canonical vector c to v with
v[perm[k]] = signs[perm[k]] * c[k].
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .lattice import BoxSpec, Site, as_site, sites_to_indices, sort_sites

# face i -> (axis, sign)
FACE_AXIS = (0, 0, 1, 1, 2, 2)
FACE_SIGN = (1, -1, 1, -1, 1, -1)

T0_VERTICES = np.array([
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 1.0],
    [1.0, 1.0, 0.0],
])
T0_VERTICES /= np.linalg.norm(T0_VERTICES, axis=1)[:, None]

MEMBERSHIP_RTOL = 1e-9


def face_of(axis: int, sign: int) -> int:
    """Face number (1..6) of the face on ``axis`` with outward ``sign``."""
    return 1 + 2 * axis + (0 if sign > 0 else 1)


def opposite_face(i: int) -> int:
    return i + 1 if i % 2 == 1 else i - 1


def face_distance(s, n: int, i: int) -> int:
    """Coordinate distance from site ``s`` to face i of Λ(n)."""
    a = FACE_AXIS[i - 1]
    return n - FACE_SIGN[i - 1] * int(s[a])


def boundary_distance(s, n: int) -> int:
    """Coordinate distance from ``s`` to ∂ⁱⁿΛ(n): n - max |s_a|."""
    return n - max(abs(int(c)) for c in s)


# ---------------------------------------------------------------------------
# quarter squares
# ---------------------------------------------------------------------------

def _in_face_axes(a: int) -> tuple[int, int]:
    b, c = (ax for ax in range(3) if ax != a)
    return b, c


def quadrant_signs(j: int) -> tuple[int, int]:
    """(σ_b, σ_c) of quadrant j."""
    q = j - 1
    return (-1 if q & 2 else 1), (-1 if q & 1 else 1)


def quadrant_index(sigma_b: int, sigma_c: int) -> int:
    return 1 + 2 * int(sigma_b < 0) + int(sigma_c < 0)


@dataclass(frozen=True)
class QuarterSquare:
    """Quarter j of face i of ``box``: a closed (m+1) x (m+1) square of sites."""

    box: BoxSpec
    face: int
    quadrant: int

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.box.center, dtype=np.int64)
        m = self.box.half_side
        a = FACE_AXIS[self.face - 1]
        b, cc = _in_face_axes(a)
        sb, sc = quadrant_signs(self.quadrant)
        lo = c.copy()
        hi = c.copy()
        lo[a] = hi[a] = c[a] + FACE_SIGN[self.face - 1] * m
        for ax, sg in ((b, sb), (cc, sc)):
            end = c[ax] + sg * m
            lo[ax], hi[ax] = min(c[ax], end), max(c[ax], end)
        return lo, hi

    def contains(self, s) -> bool:
        lo, hi = self.bounds()
        return bool(np.all((np.asarray(s) >= lo) & (np.asarray(s) <= hi)))

    def contains_array(self, pts: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds()
        pts = np.asarray(pts)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    @property
    def sites(self) -> np.ndarray:
        lo, hi = self.bounds()
        axes = [np.arange(lo[k], hi[k] + 1) for k in range(3)]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        return sort_sites(g)

    def corner(self) -> Site:
        """The box corner shared by this quarter."""
        a = FACE_AXIS[self.face - 1]
        b, c = _in_face_axes(a)
        step = np.zeros(3, dtype=np.int64)
        step[a] = FACE_SIGN[self.face - 1]
        step[b], step[c] = quadrant_signs(self.quadrant)
        return as_site(np.asarray(self.box.center) + self.box.half_side * step)


def quarter_square(box: BoxSpec, face: int, quadrant: int) -> QuarterSquare:
    if not (1 <= face <= 6 and 1 <= quadrant <= 4):
        raise ValueError(f"no quarter ({face}, {quadrant})")
    if box.half_side < 1:
        raise ValueError("quarter squares need a half-side of at least 1")
    return QuarterSquare(box, face, quadrant)


def quarter_squares(box: BoxSpec) -> list[QuarterSquare]:
    """The 24 quarters of the faces of ``box``, ordered by (face, quadrant)."""
    return [quarter_square(box, i, j) for i in range(1, 7) for j in range(1, 5)]


def quarter_offsets(m: int) -> np.ndarray:
    """Offset boxes of the 24 quarters of Λ(m): array (24, 2, 3) of [lo, hi]."""
    out = np.empty((24, 2, 3), dtype=np.int64)
    for q, sq in enumerate(quarter_squares(BoxSpec((0, 0, 0), m))):
        out[q] = sq.bounds()
    return out


# ---------------------------------------------------------------------------
# the octahedral group
# ---------------------------------------------------------------------------

_PERMS = list(itertools.permutations(range(3)))


@dataclass(frozen=True)
class TriangleIndex:
    """A signed coordinate permutation, naming the triangle g(T0).

    ``perm[k]`` is the original axis holding canonical component k and
    ``signs[a]`` is the sign of original axis a.
    """

    perm: tuple[int, int, int] = (0, 1, 2)
    signs: tuple[int, int, int] = (1, 1, 1)

    def __post_init__(self):
        if sorted(self.perm) != [0, 1, 2] or any(s not in (1, -1) for s in self.signs):
            raise ValueError(f"not a signed permutation: {self.perm}, {self.signs}")

    @property
    def index(self) -> int:
        """Position 0..47 in the group order; the identity is 0."""
        bits = sum(1 << a for a in range(3) if self.signs[a] < 0)
        return _PERMS.index(tuple(self.perm)) * 8 + bits

    @classmethod
    def from_index(cls, index: int) -> "TriangleIndex":
        if not 0 <= index < 48:
            raise ValueError(f"triangle index {index} out of range")
        perm = _PERMS[index // 8]
        bits = index % 8
        return cls(perm, tuple(-1 if bits >> a & 1 else 1 for a in range(3)))

    def matrix(self) -> np.ndarray:
        """Orthogonal matrix G with v = G @ c."""
        g = np.zeros((3, 3), dtype=np.int64)
        for k in range(3):
            a = self.perm[k]
            g[a, k] = self.signs[a]
        return g

    def apply(self, c) -> np.ndarray:
        """g(c): canonical coordinates to actual coordinates (works row-wise)."""
        c = np.asarray(c)
        v = np.empty_like(c)
        for k in range(3):
            a = self.perm[k]
            v[..., a] = self.signs[a] * c[..., k]
        return v

    def inverse_apply(self, v) -> np.ndarray:
        """g⁻¹(v) (works row-wise)."""
        v = np.asarray(v)
        c = np.empty_like(v)
        for k in range(3):
            a = self.perm[k]
            c[..., k] = self.signs[a] * v[..., a]
        return c

    def vertices(self) -> np.ndarray:
        return self.apply(T0_VERTICES)


IDENTITY = TriangleIndex()


def all_triangles() -> list[TriangleIndex]:
    return [TriangleIndex.from_index(i) for i in range(48)]


def canonicalize_direction(v) -> tuple[TriangleIndex, np.ndarray]:
    """Group element whose triangle contains ``v`` and the canonical vector g⁻¹(v).

    The canonical vector is |v| sorted descending. On triangle boundaries
    the smallest group element wins: equal magnitudes keep axis order and
    zero components get a + sign.
    """
    v = np.asarray(v)
    if v.shape != (3,) or not np.any(v != 0):
        raise ValueError("canonicalize_direction needs a nonzero 3-vector")
    mag = np.abs(v)
    perm = tuple(int(a) for a in np.argsort(-mag, kind="stable"))
    signs = tuple(-1 if v[a] < 0 else 1 for a in range(3))
    return TriangleIndex(perm, signs), mag[list(perm)]


def canonicalize_many(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise canonicalize: (triangle indices, canonical vectors)."""
    v = np.asarray(v)
    mag = np.abs(v)
    order = np.argsort(-mag, axis=1, kind="stable")
    canon = np.take_along_axis(mag, order, axis=1)
    code = order[:, 0] * 9 + order[:, 1] * 3 + order[:, 2]
    rank_of_code = np.full(27, -1, dtype=np.int64)
    for rank, p in enumerate(_PERMS):
        rank_of_code[p[0] * 9 + p[1] * 3 + p[2]] = rank
    bits = (v[:, 0] < 0) * 1 + (v[:, 1] < 0) * 2 + (v[:, 2] < 0) * 4
    return rank_of_code[code] * 8 + bits, canon


# ---------------------------------------------------------------------------
# distance to a scaled triangle
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _arc_max(q0, q1, q2, p0, p1, p2, e0, e1, e2):
    """max over the great-circle arc P->E of q·u (unit endpoints, arc < π)."""
    n0 = p1 * e2 - p2 * e1
    n1 = p2 * e0 - p0 * e2
    n2 = p0 * e1 - p1 * e0
    nn = math.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
    n0 /= nn
    n1 /= nn
    n2 /= nn
    qn = q0 * n0 + q1 * n1 + q2 * n2
    w0 = q0 - qn * n0
    w1 = q1 - qn * n1
    w2 = q2 - qn * n2
    wn = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    ends = max(q0 * p0 + q1 * p1 + q2 * p2, q0 * e0 + q1 * e1 + q2 * e2)
    qq = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
    if wn <= 1e-15 * max(qq, 1e-300):
        return ends
    # w lies on the arc iff P x w and w x E both point along the normal
    s1 = (p1 * w2 - p2 * w1) * n0 + (p2 * w0 - p0 * w2) * n1 + (p0 * w1 - p1 * w0) * n2
    s2 = (w1 * e2 - w2 * e1) * n0 + (w2 * e0 - w0 * e2) * n1 + (w0 * e1 - w1 * e0) * n2
    if s1 >= 0.0 and s2 >= 0.0:
        return wn
    return ends


_S2 = 1.0 / math.sqrt(2.0)
_S3 = 1.0 / math.sqrt(3.0)


@njit(cache=True, nogil=True)
def maxdot_t0(q0, q1, q2):
    """max over unit u in T0 of q·u."""
    if q0 >= q1 and q1 >= q2 and q2 >= 0.0:
        return math.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
    a = _arc_max(q0, q1, q2, 1.0, 0.0, 0.0, _S2, _S2, 0.0)   # A-C, plane z = 0
    b = _arc_max(q0, q1, q2, _S2, _S2, 0.0, _S3, _S3, _S3)   # C-B, plane x = y
    c = _arc_max(q0, q1, q2, 1.0, 0.0, 0.0, _S3, _S3, _S3)   # A-B, plane y = z
    return max(a, max(b, c))


@njit(cache=True, nogil=True)
def dist2_t0(q0, q1, q2, r):
    """Squared Euclidean distance from q to r·T0."""
    qq = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2)
    d2 = (qq - r) * (qq - r) + 2.0 * r * (qq - maxdot_t0(q0, q1, q2))
    return max(d2, 0.0)


@njit(cache=True, nogil=True)
def _within(d2, t, r2):
    t2 = t * t
    return d2 <= t2 + MEMBERSHIP_RTOL * (t2 + r2 + 1.0)


def max_dot_over_triangle(tri: TriangleIndex, q) -> float:
    """max over unit u in tri of q·u, in closed form."""
    c = tri.inverse_apply(np.asarray(q, dtype=np.float64))
    return float(maxdot_t0(c[0], c[1], c[2]))


def triangle_distance(tri: TriangleIndex, q, r: float) -> float:
    """Euclidean distance from q to r·tri."""
    c = tri.inverse_apply(np.asarray(q, dtype=np.float64))
    return math.sqrt(dist2_t0(c[0], c[1], c[2], float(r)))


def longest_arc() -> float:
    """Largest pairwise great-circle distance between the vertices of T0."""
    v = T0_VERTICES
    return max(math.acos(min(1.0, float(v[i] @ v[j])))
               for i in range(3) for j in range(i + 1, 3))


def contraction_radius(t: float, lam: float) -> float:
    """r_min = 2t / (λ - 0.96): above it, thick sets have diameter <= λ·r."""
    if not 0.96 < lam < 1:
        raise ValueError("λ must lie in (0.96, 1)")
    return 2.0 * t / (lam - 0.96)


# ---------------------------------------------------------------------------
# thickened triangles
# ---------------------------------------------------------------------------

@njit(cache=True)
def _t0_offsets(r2, t):
    r = math.sqrt(r2)
    ylo = int(math.floor(-t))
    yhi = int(math.ceil(r * _S2 + t))
    zlo = ylo
    zhi = int(math.ceil(r * _S3 + t))
    inner = max(r - t, 0.0)
    inner2 = inner * inner
    cap = 1024
    out = np.empty((cap, 3), dtype=np.int64)
    k = 0
    for y in range(ylo, yhi + 1):
        for z in range(zlo, min(zhi, y + int(math.ceil(2 * t))) + 1):
            rest = r2 - y * y - z * z
            if rest < 0:
                continue
            xmax = int(math.sqrt(rest))
            while (xmax + 1) * (xmax + 1) <= rest:
                xmax += 1
            while xmax * xmax > rest:
                xmax -= 1
            low = inner2 - y * y - z * z
            xmin = 0
            if low > 0:
                xmin = int(math.sqrt(low))
                while xmin > 0 and (xmin - 1) * (xmin - 1) >= low:
                    xmin -= 1
                while xmin * xmin < low - 1e-9:
                    xmin += 1
            for sgn in (1, -1):
                for ax in range(xmin, xmax + 1):
                    x = sgn * ax
                    if sgn == -1 and ax == 0:
                        continue
                    if _within(dist2_t0(float(x), float(y), float(z), r), t, r2):
                        if k == cap:
                            cap *= 2
                            grown = np.empty((cap, 3), dtype=np.int64)
                            grown[:k] = out[:k]
                            out = grown
                        out[k, 0] = x
                        out[k, 1] = y
                        out[k, 2] = z
                        k += 1
    return out[:k]


@lru_cache(maxsize=256)
def _t0_offsets_cached(r_squared: int, t: float) -> np.ndarray:
    arr = _t0_offsets(int(r_squared), float(t))
    arr.setflags(write=False)
    return arr


def thick_offsets(r_squared: int, tri: TriangleIndex, t: float) -> np.ndarray:
    """Offsets o with |o|² <= r² and d(o, r·tri) <= t, sorted by site order."""
    base = _t0_offsets_cached(int(r_squared), float(t))
    return sort_sites(tri.apply(base))


@dataclass(frozen=True)
class ThickSet:
    """Sites of center + B_r within distance ``thickness`` of r·triangle."""

    center: Site
    r_squared: int
    triangle: TriangleIndex
    thickness: float
    sites: np.ndarray

    def __len__(self):
        return len(self.sites)


def thickened_triangle(center, r_squared: int, tri: TriangleIndex, t: float = 3.0) -> ThickSet:
    if r_squared < 1:
        raise ValueError("r_squared must be positive")
    if t < 0:
        raise ValueError("thickness must be non-negative")
    center = as_site(center)
    sites = thick_offsets(r_squared, tri, t) + np.asarray(center, dtype=np.int64)
    sites.setflags(write=False)
    return ThickSet(center, int(r_squared), tri, float(t), sites)


def thick_set_diameter(r_squared: int, t: float = 3.0) -> float:
    """Largest pairwise Euclidean distance inside one thickened triangle."""
    from scipy.spatial import ConvexHull
    from scipy.spatial.distance import pdist

    pts = _t0_offsets_cached(int(r_squared), float(t)).astype(np.float64)
    if len(pts) < 2:
        return 0.0
    try:
        pts = pts[ConvexHull(pts).vertices]
    except Exception:  # flat or tiny point sets: use every point
        pass
    return float(pdist(pts).max())


@njit(cache=True)
def _shell_masks(offsets, r2, t):
    """48-bit triangle membership mask of each offset (bit = group index)."""
    r = math.sqrt(r2)
    out = np.zeros(offsets.shape[0], dtype=np.uint64)
    perms = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]])
    for i in range(offsets.shape[0]):
        m = np.uint64(0)
        for pr in range(6):
            for bits in range(8):
                c = np.empty(3)
                for k in range(3):
                    a = perms[pr, k]
                    s = -1.0 if (bits >> a) & 1 else 1.0
                    c[k] = s * offsets[i, a]
                if _within(dist2_t0(c[0], c[1], c[2], r), t, r2):
                    m |= np.uint64(1) << np.uint64(pr * 8 + bits)
        out[i] = m
    return out


@dataclass(frozen=True)
class ShellTable:
    """Offsets of B_r lying in some thickened triangle, with their membership masks."""

    r_squared: int
    thickness: float
    offsets: np.ndarray
    masks: np.ndarray

    def members(self, tri: TriangleIndex) -> np.ndarray:
        bit = np.uint64(1) << np.uint64(tri.index)
        return self.offsets[(self.masks & bit) != 0]


@lru_cache(maxsize=512)
def shell_table(r_squared: int, t: float = 3.0) -> ShellTable:
    r2 = int(r_squared)
    r = math.sqrt(r2)
    R = math.isqrt(r2)
    ax = np.arange(-R, R + 1)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    nrm2 = (g * g).sum(axis=1)
    inner = max(r - t, 0.0)
    keep = (nrm2 <= r2) & (np.sqrt(nrm2) >= inner - 1e-9)
    offs = sort_sites(g[keep])
    masks = _shell_masks(offs, float(r2), float(t))
    sel = masks != 0
    offs, masks = offs[sel], masks[sel]
    offs.setflags(write=False)
    masks.setflags(write=False)
    return ShellTable(r2, float(t), offs, masks)


# ---------------------------------------------------------------------------
# coverage of the ball boundary
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _coverage_witness(r2, t):
    """First site of ∂ⁱⁿB_r (column order) outside every thick set, else a flag."""
    r = math.sqrt(r2)
    R = int(math.sqrt(r2))
    while (R + 1) * (R + 1) <= r2:
        R += 1
    while R * R > r2:
        R -= 1
    res = np.zeros(4, dtype=np.int64)
    for x in range(-R, R + 1):
        for y in range(-R, R + 1):
            rest = r2 - x * x - y * y
            if rest < 0:
                continue
            zmax = int(math.sqrt(rest))
            while (zmax + 1) * (zmax + 1) <= rest:
                zmax += 1
            while zmax * zmax > rest:
                zmax -= 1
            ax = abs(x)
            ay = abs(y)
            lim = min(r2 - (ax + 1) * (ax + 1) - y * y, r2 - x * x - (ay + 1) * (ay + 1))
            for z in range(-zmax, zmax + 1):
                if abs(z) != zmax and z * z <= lim:
                    continue
                # canonical representative of the containing triangle
                a = float(ax)
                b = float(ay)
                c = float(abs(z))
                if a < b:
                    a, b = b, a
                if b < c:
                    b, c = c, b
                if a < b:
                    a, b = b, a
                if not _within(dist2_t0(a, b, c, r), t, r2):
                    res[0] = 1
                    res[1] = x
                    res[2] = y
                    res[3] = z
                    return res
    return res


def coverage_witness(r_squared: int, t: float = 3.0) -> Site | None:
    """A site of ∂ⁱⁿB_r in none of the 48 thick sets, or None.

    The triangle containing a direction is the nearest scaled triangle, so
    checking that one triangle decides membership in the union.
    """
    res = _coverage_witness(int(r_squared), float(t))
    return as_site(res[1:]) if res[0] else None


def coverage_check(r_squared: int, t: float = 3.0) -> bool:
    """True iff ∂ⁱⁿB_r is covered by the 48 thickened triangles."""
    return coverage_witness(r_squared, t) is None
