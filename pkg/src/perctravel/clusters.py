"""
Open clusters, onion layers and the boundary-connection test.

The onion layers of an open site x grow by alternating two moves: add the
closed shell ∂ᵒᵘᵗC_k, then absorb every open cluster touching that shell.
Inside a finite region the layers agree with the travel-time balls
{y : T_region(x, y) <= k}; they agree with the balls of the infinite lattice
only until a layer reaches the inner boundary of the region, which sets
``truncated``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from .lattice import (
    Configuration,
    Region,
    Site,
    _site_open,
    as_site,
    dilate6,
    sort_sites,
)

_SIX = ndimage.generate_binary_structure(3, 1)


def _region_grid(config: Configuration, region: Region):
    """(lo, in_region mask, open mask) over region's bounding box clipped to Λ(n)."""
    n = config.n
    rlo, rhi = region.bounds()
    lo = np.maximum(np.asarray(rlo, dtype=np.int64), -n)
    hi = np.minimum(np.asarray(rhi, dtype=np.int64), n)
    inside = region.member_mask(lo, hi)
    g = config.grid[lo[0] + n:hi[0] + n + 1, lo[1] + n:hi[1] + n + 1, lo[2] + n:hi[2] + n + 1]
    return lo, inside, (g != 0) & inside


def _to_sites(mask: np.ndarray, lo) -> np.ndarray:
    return sort_sites(np.argwhere(mask) + np.asarray(lo))


def _check_member(x: Site, region: Region, n: int):
    if not region.contains(x) or max(abs(c) for c in x) > n:
        raise ValueError(f"{tuple(x)} is not in the region")


def open_cluster(config: Configuration, region: Region, x) -> np.ndarray:
    """Sites of the open cluster of ``x`` inside ``region`` (empty if x is closed)."""
    x = as_site(x)
    _check_member(x, region, config.n)
    lo, _, opn = _region_grid(config, region)
    loc = tuple(np.asarray(x) - lo)
    if not opn[loc]:
        return np.zeros((0, 3), dtype=np.int64)
    labels, _ = ndimage.label(opn, structure=_SIX)
    return _to_sites(labels == labels[loc], lo)


@dataclass
class ClusterLayers:
    """Nested onion layers C_0 ⊆ ... ⊆ C_kmax and the closed shells between them.

    ``shells[k]`` is ∂ᵒᵘᵗC_k inside the region. ``truncated_at`` is the first
    k whose layer meets ∂ⁱⁿ(region), or None.
    """

    origin: Site
    layers: list[np.ndarray]
    shells: list[np.ndarray] = field(default_factory=list)
    truncated_at: int | None = None

    @property
    def truncated(self) -> bool:
        return self.truncated_at is not None

    @property
    def kmax(self) -> int:
        return len(self.layers) - 1

    def exact_layers(self) -> list[np.ndarray]:
        """Layers computed before any layer reached the region boundary."""
        stop = len(self.layers) if self.truncated_at is None else self.truncated_at
        return self.layers[:stop]


def onion_layers(config: Configuration, region: Region, x, kmax: int) -> ClusterLayers:
    """C_0 = C(x); C_{k+1} = C_k ∪ ∂ᵒᵘᵗC_k ∪ (open clusters touching ∂ᵒᵘᵗ(∂ᵒᵘᵗC_k)).

    Requires an open origin: from a closed one the recursion never leaves
    the empty set.
    """
    if kmax < 0:
        raise ValueError("kmax must be non-negative")
    x = as_site(x)
    _check_member(x, region, config.n)
    if not config.is_open(x):
        raise ValueError(f"onion layers need an open origin; {tuple(x)} is closed")
    lo, inside, opn = _region_grid(config, region)
    # the region's inner boundary: region sites with a neighbour outside it
    padded = np.pad(inside, 1, constant_values=False)
    rim = (dilate6(~padded) & padded)[1:-1, 1:-1, 1:-1]

    labels, _ = ndimage.label(opn, structure=_SIX)
    loc = tuple(np.asarray(x) - lo)
    cur = labels == labels[loc]
    out = ClusterLayers(x, [_to_sites(cur, lo)])
    if np.any(cur & rim):
        out.truncated_at = 0
    for k in range(kmax):
        shell = dilate6(cur) & ~cur & inside
        out.shells.append(_to_sites(shell, lo))
        grown = cur | shell
        touch = dilate6(shell) & ~grown & opn
        absorbed = np.unique(labels[touch])
        grown |= np.isin(labels, absorbed[absorbed > 0])
        cur = grown
        out.layers.append(_to_sites(cur, lo))
        if out.truncated_at is None and np.any(cur & rim):
            out.truncated_at = k + 1
    return out


# ---------------------------------------------------------------------------
# connection to the boundary of Λ(R)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _reaches_rim(open_, L, n, R):
    """Origin's open cluster within Λ(R) meets ∂ⁱⁿΛ(R), on a stored grid."""
    o = n + L * (n + L * n)
    if open_[o] == 0:
        return False
    if R == 0:
        return True
    seen = np.zeros(open_.shape[0], dtype=np.uint8)
    stack = np.empty(open_.shape[0], dtype=np.int64)
    seen[o] = 1
    stack[0] = o
    top = 1
    LL = L * L
    while top > 0:
        top -= 1
        u = stack[top]
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
            if abs(vx - n) > R or abs(vy - n) > R or abs(vz - n) > R:
                continue
            v = vx + L * (vy + L * vz)
            if seen[v] or open_[v] == 0:
                continue
            if abs(vx - n) == R or abs(vy - n) == R or abs(vz - n) == R:
                return True
            seen[v] = 1
            stack[top] = v
            top += 1
    return False


def reaches_boundary(config: Configuration, R: int) -> bool:
    """True iff the origin's open cluster inside Λ(R) meets ∂ⁱⁿΛ(R)."""
    if R < 0 or R > config.n:
        raise ValueError(f"Λ({R}) is not covered by a configuration on Λ({config.n})")
    return bool(_reaches_rim(config.open_flat, config.side, config.n, R))


@njit(cache=True, nogil=True)
def _reaches_rim_lazy(R, p, seed, state, stack):
    """As ``_reaches_rim`` on sample_configuration(R, p, seed), sampling sites on demand.

    ``state`` (size (2R+1)^3) must be zero on entry and is zeroed again on
    exit over the touched sites, so one buffer serves many trials.
    """
    L = 2 * R + 1
    LL = L * L
    o = R + L * (R + L * R)
    if not _site_open(seed, o, p):
        return False
    if R == 0:
        return True
    state[o] = 1
    stack[0] = o
    top = 1
    # stack[L**3:] records touched sites for the reset
    base = state.shape[0]
    stack[base] = o
    touched = 1
    hit = False
    while top > 0 and not hit:
        top -= 1
        u = stack[top]
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
            if vx < 0 or vy < 0 or vz < 0 or vx >= L or vy >= L or vz >= L:
                continue
            v = vx + L * (vy + L * vz)
            if state[v] != 0:
                continue
            state[v] = 1
            stack[base + touched] = v
            touched += 1
            if not _site_open(seed, v, p):
                continue
            if vx == 0 or vy == 0 or vz == 0 or vx == L - 1 or vy == L - 1 or vz == L - 1:
                hit = True
                break
            stack[top] = v
            top += 1
    for a in range(touched):
        state[stack[base + a]] = 0
    return hit


@njit(cache=True, nogil=True)
def _count_reaching(R, p, seeds):
    L = 2 * R + 1
    size = L * L * L
    state = np.zeros(size, dtype=np.uint8)
    stack = np.empty(2 * size, dtype=np.int64)
    out = np.zeros(seeds.shape[0], dtype=np.uint8)
    for t in range(seeds.shape[0]):
        out[t] = 1 if _reaches_rim_lazy(R, p, seeds[t], state, stack) else 0
    return out


def reaches_boundary_sampled(R: int, p: float, seeds) -> np.ndarray:
    """reaches_boundary(sample_configuration(R, p, s), R) for each seed s.

    Sites are drawn from the same per-site stream as sample_configuration but
    only when the search touches them.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    return _count_reaching(int(R), float(p), seeds).astype(bool)

