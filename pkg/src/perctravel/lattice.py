"""
Sites, boxes, balls, boundaries and seeded site configurations.

Site indexing on the box Λ(n) = [-n, n]^3 is

    index = (x+n) + (2n+1) * ((y+n) + (2n+1) * (z+n))

so x varies fastest. Flat arrays in this package follow that order, and
3D views are Fortran-ordered so that ``grid[x+n, y+n, z+n]`` addresses
the same site.

Site states come from a SplitMix64 stream seeded with the configuration
seed: site ``i`` is open iff ``u_i < p`` where ``u_i`` is the top 53 bits of
the ``(i+1)``-th SplitMix64 output scaled to [0, 1). Because each site is
addressed by position, sampling does not depend on iteration order and the
same seed couples configurations monotonically in ``p``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Union

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

MAGIC = b"PERC3"
FORMAT_VERSION = 1


class Site(NamedTuple):
    x: int
    y: int
    z: int

    def __add__(self, other):  # type: ignore[override]
        return Site(self.x + other[0], self.y + other[1], self.z + other[2])

    def __sub__(self, other):
        return Site(self.x - other[0], self.y - other[1], self.z - other[2])


ORIGIN = Site(0, 0, 0)

# -x, +x, -y, +y, -z, +z
NEIGHBOR_STEPS = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))


def as_site(s) -> Site:
    return Site(int(s[0]), int(s[1]), int(s[2]))


def adjacent(a, b) -> bool:
    d = [abs(int(a[i]) - int(b[i])) for i in range(3)]
    return sorted(d) == [0, 0, 1]


def neighbors(s) -> list[Site]:
    return [Site(s[0] + dx, s[1] + dy, s[2] + dz) for dx, dy, dz in NEIGHBOR_STEPS]


def side(n: int) -> int:
    return 2 * n + 1


def site_index(s, n: int) -> int:
    L = 2 * n + 1
    return (s[0] + n) + L * ((s[1] + n) + L * (s[2] + n))


def index_to_site(i: int, n: int) -> Site:
    L = 2 * n + 1
    z, rem = divmod(int(i), L * L)
    y, x = divmod(rem, L)
    return Site(x - n, y - n, z - n)


def sites_to_indices(sites: np.ndarray, n: int) -> np.ndarray:
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, 3)
    L = 2 * n + 1
    return (sites[:, 0] + n) + L * ((sites[:, 1] + n) + L * (sites[:, 2] + n))


def indices_to_sites(idx: np.ndarray, n: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    L = 2 * n + 1
    z, rem = np.divmod(idx, L * L)
    y, x = np.divmod(rem, L)
    return np.stack([x - n, y - n, z - n], axis=-1)


def sort_sites(sites: np.ndarray) -> np.ndarray:
    """Sort an (k, 3) site array in site-index order (z, then y, then x)."""
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, 3)
    if len(sites) == 0:
        return sites
    order = np.lexsort((sites[:, 0], sites[:, 1], sites[:, 2]))
    return sites[order]


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSpec:
    center: Site
    half_side: int

    def __post_init__(self):
        object.__setattr__(self, "center", as_site(self.center))
        if self.half_side < 0:
            raise ValueError("half_side must be non-negative")

    @property
    def site_count(self) -> int:
        return (2 * self.half_side + 1) ** 3

    def contains(self, s) -> bool:
        m = self.half_side
        return all(abs(s[i] - self.center[i]) <= m for i in range(3))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.array(self.center, dtype=np.int64)
        return c - self.half_side, c + self.half_side

    def sites(self) -> np.ndarray:
        lo, hi = self.bounds()
        return _grid_sites(lo, hi)

    def member_mask(self, lo, hi) -> np.ndarray:
        return _coords_mask(lo, hi, self.contains_array)

    def contains_array(self, pts: np.ndarray) -> np.ndarray:
        d = np.abs(pts - np.array(self.center))
        return np.all(d <= self.half_side, axis=-1)


def box(n: int) -> BoxSpec:
    """The box Λ(n) centred at the origin."""
    return BoxSpec(ORIGIN, n)


@dataclass(frozen=True)
class BallSpec:
    center: Site
    r_squared: int

    def __post_init__(self):
        object.__setattr__(self, "center", as_site(self.center))
        if self.r_squared <= 0:
            raise ValueError("r_squared must be positive")

    @property
    def radius(self) -> float:
        return math.sqrt(self.r_squared)

    @property
    def admissible(self) -> bool:
        return is_sum_of_three_squares(self.r_squared)

    def contains(self, s) -> bool:
        return sum((s[i] - self.center[i]) ** 2 for i in range(3)) <= self.r_squared

    def contains_array(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.array(self.center)
        return np.einsum("...i,...i->...", d, d) <= self.r_squared

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        R = math.isqrt(self.r_squared)
        c = np.array(self.center, dtype=np.int64)
        return c - R, c + R

    def sites(self) -> np.ndarray:
        lo, hi = self.bounds()
        pts = _grid_sites(lo, hi)
        return pts[self.contains_array(pts)]

    def member_mask(self, lo, hi) -> np.ndarray:
        return _coords_mask(lo, hi, self.contains_array)


@dataclass(frozen=True)
class SiteSet:
    """An explicit finite set of sites."""

    members: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(as_site(s) for s in self.members))

    @classmethod
    def of(cls, sites: Iterable) -> "SiteSet":
        return cls(frozenset(as_site(s) for s in np.asarray(list(sites)).reshape(-1, 3)))

    def __len__(self):
        return len(self.members)

    def contains(self, s) -> bool:
        return as_site(s) in self.members

    def contains_array(self, pts: np.ndarray) -> np.ndarray:
        return np.array([as_site(p) in self.members for p in pts.reshape(-1, 3)],
                        dtype=bool).reshape(pts.shape[:-1])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.members:
            raise ValueError("empty site set has no bounds")
        arr = self.sites()
        return arr.min(axis=0), arr.max(axis=0)

    def sites(self) -> np.ndarray:
        return sort_sites(np.array(sorted(self.members), dtype=np.int64).reshape(-1, 3))

    def member_mask(self, lo, hi) -> np.ndarray:
        lo = np.asarray(lo)
        shape = tuple(np.asarray(hi) - lo + 1)
        mask = np.zeros(shape, dtype=bool, order="F")
        arr = self.sites()
        if len(arr):
            loc = arr - lo
            ok = np.all((loc >= 0) & (loc < np.array(shape)), axis=1)
            loc = loc[ok]
            mask[loc[:, 0], loc[:, 1], loc[:, 2]] = True
        return mask


Region = Union[BoxSpec, BallSpec, SiteSet]


def _grid_sites(lo, hi) -> np.ndarray:
    """All sites of the coordinate box [lo, hi], in site-index order."""
    xs, ys, zs = (np.arange(lo[i], hi[i] + 1, dtype=np.int64) for i in range(3))
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def _coords_mask(lo, hi, pred) -> np.ndarray:
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    xs, ys, zs = (np.arange(lo[i], hi[i] + 1) for i in range(3))
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    return np.asfortranarray(pred(pts))


def region_sites(region: Region) -> np.ndarray:
    return region.sites()


def _shift_pad(mask: np.ndarray):
    """Yield the six neighbour-shifted copies of ``mask`` (False outside)."""
    for axis in range(3):
        for step in (-1, 1):
            out = np.zeros_like(mask)
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if step == 1:
                src[axis] = slice(1, None)
                dst[axis] = slice(None, -1)
            else:
                src[axis] = slice(None, -1)
                dst[axis] = slice(1, None)
            out[tuple(dst)] = mask[tuple(src)]
            yield out


def dilate6(mask: np.ndarray) -> np.ndarray:
    """``mask`` together with every 6-neighbour of it (within the array)."""
    out = mask.copy()
    for sh in _shift_pad(mask):
        out |= sh
    return out


def inner_boundary(region: Region) -> np.ndarray:
    """Sites of ``region`` having a 6-neighbour outside it, in index order."""
    lo, hi = region.bounds()
    lo, hi = lo - 1, hi + 1
    mask = region.member_mask(lo, hi)
    outside = ~mask
    touch = dilate6(outside) & mask
    return _mask_to_sites(touch, lo)


def outer_boundary(region: Region) -> np.ndarray:
    """Sites outside ``region`` having a 6-neighbour inside it."""
    lo, hi = region.bounds()
    lo, hi = lo - 1, hi + 1
    mask = region.member_mask(lo, hi)
    touch = dilate6(mask) & ~mask
    return _mask_to_sites(touch, lo)


def _mask_to_sites(mask: np.ndarray, lo) -> np.ndarray:
    loc = np.argwhere(mask)
    return sort_sites(loc + np.asarray(lo))


# ---------------------------------------------------------------------------
# Radii
# ---------------------------------------------------------------------------

def is_sum_of_three_squares(k: int) -> bool:
    """Legendre: k >= 0 is a sum of three squares iff k != 4^a (8b + 7)."""
    if k < 0:
        return False
    if k == 0:
        return True
    while k % 4 == 0:
        k //= 4
    return k % 8 != 7


def admissible_radii(x, bounding: BoxSpec) -> list[int]:
    """Squared radii r^2 realised by a lattice vector with x + B_r inside ``bounding``.

    Containment is taken for the Euclidean ball of radius r, i.e.
    r <= distance from x to the faces of ``bounding``; ``r^2 = 7`` and every
    other integer of the form 4^a(8b+7) never appears.
    """
    if not bounding.contains(x):
        raise ValueError(f"{tuple(x)} is not inside {bounding}")
    d = bounding.half_side - max(abs(x[i] - bounding.center[i]) for i in range(3))
    return [r2 for r2 in range(1, d * d + 1) if is_sum_of_three_squares(r2)]


def lattice_witness(r_squared: int) -> Site | None:
    """A lattice vector of squared norm ``r_squared``, or None."""
    R = math.isqrt(r_squared)
    for a in range(R, -1, -1):
        rem = r_squared - a * a
        for b in range(min(a, math.isqrt(rem)), -1, -1):
            c2 = rem - b * b
            c = math.isqrt(c2)
            if c * c == c2 and c <= b:
                return Site(a, b, c)
    return None


# ---------------------------------------------------------------------------
# RNG
# ---------------------------------------------------------------------------

def splitmix64(state: int) -> int:
    """SplitMix64 output finalizer applied to ``state`` (pure Python reference)."""
    z = state & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_value(seed: int, i: int) -> int:
    """The ``(i+1)``-th output of a SplitMix64 stream started at ``seed``."""
    return splitmix64((seed + (i + 1) * GOLDEN_GAMMA) & MASK64)


def stream_uniform(seed: int, i: int) -> float:
    return (stream_value(seed, i) >> 11) * 2.0 ** -53


def mix_seed(base_seed: int, index: int) -> int:
    """Derive a 64-bit child seed; used for per-trial configuration seeds."""
    return splitmix64((splitmix64(base_seed & MASK64) ^ (index * GOLDEN_GAMMA)) & MASK64)


@njit(cache=True, nogil=True)
def _site_open(seed, i, p):
    z = np.uint64(seed) + np.uint64(i + 1) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    u = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    return u < p


@njit(cache=True, nogil=True)
def _sample_open(count, seed, p):
    out = np.empty(count, dtype=np.uint8)
    for i in range(count):
        out[i] = 1 if _site_open(seed, i, p) else 0
    return out


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Configuration:
    """Open/closed states on Λ(n); ``bits`` is packed LSB-first in index order."""

    n: int
    p: float
    seed: int
    bits: np.ndarray

    def __post_init__(self):
        expected = (self.site_count + 7) // 8
        if self.bits.shape != (expected,):
            raise ValueError(f"expected {expected} packed bytes, got {self.bits.shape}")
        self.bits.flags.writeable = False

    @classmethod
    def from_open(cls, n: int, open_flat, p: float = float("nan"), seed: int = 0):
        open_flat = np.asarray(open_flat, dtype=np.uint8).ravel()
        if open_flat.size != (2 * n + 1) ** 3:
            raise ValueError("state array does not match Λ(n)")
        bits = np.packbits(open_flat, bitorder="little")
        return cls(n, p, seed, bits)

    @property
    def side(self) -> int:
        return 2 * self.n + 1

    @property
    def site_count(self) -> int:
        return (2 * self.n + 1) ** 3

    @property
    def region(self) -> BoxSpec:
        return box(self.n)

    @cached_property
    def open_flat(self) -> np.ndarray:
        """uint8 array, 1 = open, in site-index order (read-only)."""
        arr = np.unpackbits(self.bits, count=self.site_count, bitorder="little")
        arr.flags.writeable = False
        return arr

    @property
    def grid(self) -> np.ndarray:
        """Fortran-ordered view indexed ``[x+n, y+n, z+n]``."""
        L = self.side
        return self.open_flat.reshape((L, L, L), order="F")

    def is_open(self, s) -> bool:
        return bool(self.open_flat[site_index(s, self.n)])

    def open_fraction(self) -> float:
        return float(self.open_flat.mean())

    def with_states(self, open_sites=(), closed_sites=()) -> "Configuration":
        """A copy with some sites forced open or closed (seed/p kept as labels)."""
        arr = self.open_flat.copy()
        for s in open_sites:
            arr[site_index(s, self.n)] = 1
        for s in closed_sites:
            arr[site_index(s, self.n)] = 0
        return Configuration.from_open(self.n, arr, self.p, self.seed)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return (self.n == other.n and self.seed == other.seed
                and (self.p == other.p or (math.isnan(self.p) and math.isnan(other.p)))
                and np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.n, self.seed, self.bits.tobytes()))

    def __repr__(self):
        return f"Configuration(n={self.n}, p={self.p}, seed={self.seed})"

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        head = MAGIC + bytes([FORMAT_VERSION]) + struct.pack("<IQd", self.n, self.seed & MASK64,
                                                              self.p)
        return head + self.bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Configuration":
        if data[:5] != MAGIC:
            raise ValueError("not a PERC3 configuration file")
        if data[5] != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {data[5]}")
        n, seed, p = struct.unpack_from("<IQd", data, 6)
        body = data[6 + 20:]
        count = ((2 * n + 1) ** 3 + 7) // 8
        if len(body) != count:
            raise ValueError(f"expected {count} state bytes, found {len(body)}")
        return cls(n, p, seed, np.frombuffer(body, dtype=np.uint8).copy())


def sample_configuration(n: int, p: float, seed: int) -> Configuration:
    """Sample Bernoulli(p) site states on Λ(n) from the position-addressed stream."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    seed &= MASK64
    arr = _sample_open((2 * n + 1) ** 3, np.uint64(seed), float(p))
    return Configuration(n, float(p), seed, np.packbits(arr, bitorder="little"))


def save_configuration(path, config: Configuration) -> None:
    with open(path, "wb") as fh:
        fh.write(config.to_bytes())


def load_configuration(path) -> Configuration:
    with open(path, "rb") as fh:
        return Configuration.from_bytes(fh.read())
