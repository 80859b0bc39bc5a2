"""
Node-weighted shortest paths on site configurations.

The travel time T_A(x, y) is the least number of closed sites on a
nearest-neighbour path from x to y inside A, both endpoints included, so
T(x, x) = 1 for a closed x. Entering a site costs its closed indicator and
the source pays its own, which turns the problem into 0-1 BFS: open
neighbours go to the front of the deque, closed ones to the back. With node
weights every site is settled on first discovery, so each site is pushed
once and a ring buffer of the region's size suffices.

Queries on the full box Λ(n) that do not need a witness path go through
:class:`ClusterIndex`, which treats every open cluster as one node and stops
as soon as a target cluster is reached, without flooding it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .lattice import (
    BallSpec,
    BoxSpec,
    Configuration,
    Region,
    Site,
    SiteSet,
    as_site,
    sites_to_indices,
)

UNREACHABLE = -1


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _in_region(kind, params, mask, l, gx, gy, gz):
    if kind == 0:
        return True
    if kind == 1:
        dx = gx - params[0]
        dy = gy - params[1]
        dz = gz - params[2]
        return dx * dx + dy * dy + dz * dz <= params[3]
    return mask[l] != 0


@njit(cache=True, nogil=True)
def _bfs01(open_, L, lo, shape, kind, params, mask, src, target, stop_early, dist, parent):
    """0-1 BFS over the box [lo, lo+shape) of an (L, L, L) grid.

    ``dist``/``parent`` are local flat arrays pre-filled with -1. ``target``
    is a local uint8 mask; with ``stop_early`` the search ends once every
    site up to the cheapest target's level is settled. Returns that cost,
    or a large sentinel.
    """
    sx, sy, sz = shape[0], shape[1], shape[2]
    sxy = sx * sy
    LL = L * L
    cap = sx * sy * sz
    buf = np.empty(cap, dtype=np.int32)
    has_target = target.shape[0] > 0
    best = 2147483647

    lz = src // sxy
    rem = src - lz * sxy
    ly = rem // sx
    lx = rem - ly * sx
    dist[src] = 1 - np.int32(open_[(lo[0] + lx) + L * ((lo[1] + ly) + L * (lo[2] + lz))])
    buf[0] = src
    head = 0
    size = 1
    if has_target and target[src] != 0:
        best = dist[src]
    level = dist[src]

    while size > 0:
        u = buf[head]
        head += 1
        if head == cap:
            head = 0
        size -= 1
        du = dist[u]
        if du > level:
            if stop_early and best <= level:
                break
            level = du
        lz = u // sxy
        rem = u - lz * sxy
        ly = rem // sx
        lx = rem - ly * sx
        gx = lo[0] + lx
        gy = lo[1] + ly
        gz = lo[2] + lz
        g = gx + L * (gy + L * gz)
        for k in range(6):
            if k == 0:
                if lx == 0:
                    continue
                v = u - 1
                gv = g - 1
                vx, vy, vz = gx - 1, gy, gz
            elif k == 1:
                if lx == sx - 1:
                    continue
                v = u + 1
                gv = g + 1
                vx, vy, vz = gx + 1, gy, gz
            elif k == 2:
                if ly == 0:
                    continue
                v = u - sx
                gv = g - L
                vx, vy, vz = gx, gy - 1, gz
            elif k == 3:
                if ly == sy - 1:
                    continue
                v = u + sx
                gv = g + L
                vx, vy, vz = gx, gy + 1, gz
            elif k == 4:
                if lz == 0:
                    continue
                v = u - sxy
                gv = g - LL
                vx, vy, vz = gx, gy, gz - 1
            else:
                if lz == sz - 1:
                    continue
                v = u + sxy
                gv = g + LL
                vx, vy, vz = gx, gy, gz + 1
            if dist[v] != -1:
                continue
            if not _in_region(kind, params, mask, v, vx, vy, vz):
                continue
            w = 1 - np.int32(open_[gv])
            dv = du + w
            dist[v] = dv
            parent[v] = u
            if has_target and target[v] != 0 and dv < best:
                best = dv
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
def _neighbor(u, k, L, LL):
    z = u // LL
    rem = u - z * LL
    y = rem // L
    x = rem - y * L
    if k == 0:
        x -= 1
    elif k == 1:
        x += 1
    elif k == 2:
        y -= 1
    elif k == 3:
        y += 1
    elif k == 4:
        z -= 1
    else:
        z += 1
    if x < 0 or y < 0 or z < 0 or x >= L or y >= L or z >= L:
        return -1
    return x + L * (y + L * z)


@njit(cache=True, nogil=True)
def _cluster_search(open_, labels, L, src, tlabel_mark, tsite_mark,
                    dist, stamp, qid, cdist, cstamp, closed_cur, closed_nxt, stack):
    """Travel time from ``src`` to a target set on the full box, clusters contracted.

    Open sites of one cluster share a travel time, so a cluster is only
    flooded when the search has to go past it. ``tlabel_mark[K] == qid``
    flags target clusters, ``tsite_mark[i] == qid`` flags closed targets.
    Returns the minimal cost, or -1 when no target is reachable.
    """
    LL = L * L
    best = 2147483647
    ent_cap = 64
    entries = np.empty(ent_cap, dtype=np.int64)
    n_entries = 0
    ncur = 0
    if open_[src] != 0:
        level = 0
        K = labels[src]
        cstamp[K] = qid
        cdist[K] = 0
        entries[0] = src
        n_entries = 1
        if tlabel_mark[K] == qid:
            best = 0
    else:
        level = 1
        stamp[src] = qid
        dist[src] = 1
        closed_cur[0] = src
        ncur = 1
        if tsite_mark[src] == qid:
            best = 1

    while True:
        nnxt = 0
        # closed sites at this level: enter adjacent clusters, queue closed neighbours
        for a in range(ncur):
            u = closed_cur[a]
            for k in range(6):
                v = _neighbor(u, k, L, LL)
                if v < 0:
                    continue
                if open_[v] != 0:
                    K = labels[v]
                    if cstamp[K] != qid:
                        cstamp[K] = qid
                        cdist[K] = level
                        if n_entries == ent_cap:
                            ent_cap *= 2
                            grown = np.empty(ent_cap, dtype=np.int64)
                            grown[:n_entries] = entries[:n_entries]
                            entries = grown
                        entries[n_entries] = v
                        n_entries += 1
                        if tlabel_mark[K] == qid and level < best:
                            best = level
                elif stamp[v] != qid:
                    stamp[v] = qid
                    dist[v] = level + 1
                    closed_nxt[nnxt] = v
                    nnxt += 1
                    if tsite_mark[v] == qid and level + 1 < best:
                        best = level + 1
        if best <= level:
            return best
        # flood the clusters entered at this level
        for e in range(n_entries):
            s0 = entries[e]
            stamp[s0] = qid
            dist[s0] = level
            stack[0] = s0
            top = 1
            while top > 0:
                top -= 1
                u = stack[top]
                for k in range(6):
                    v = _neighbor(u, k, L, LL)
                    if v < 0 or stamp[v] == qid:
                        continue
                    stamp[v] = qid
                    if open_[v] != 0:
                        dist[v] = level
                        stack[top] = v
                        top += 1
                    else:
                        dist[v] = level + 1
                        closed_nxt[nnxt] = v
                        nnxt += 1
                        if tsite_mark[v] == qid and level + 1 < best:
                            best = level + 1
        if nnxt == 0:
            return -1 if best == 2147483647 else best
        tmp = closed_cur
        closed_cur = closed_nxt
        closed_nxt = tmp
        ncur = nnxt
        n_entries = 0
        level += 1


@njit(cache=True, nogil=True)
def _side_advance(open_, labels, L, qid, st, ds, cst, cds, cur, nxt, nnxt, entries, n_ent,
                  stack, lev, flooded, ost, ods, ocst, ocds, mu):
    """Flood this side's clusters at ``lev`` (if pending), then settle level lev+1.

    Candidates for the meeting cost are taken whenever a site or cluster
    already known to the other side is reached.
    """
    LL = L * L
    if not flooded:
        for e in range(n_ent):
            s0 = entries[e]
            st[s0] = qid
            ds[s0] = lev
            stack[0] = s0
            top = 1
            while top > 0:
                top -= 1
                u = stack[top]
                for k in range(6):
                    v = _neighbor(u, k, L, LL)
                    if v < 0 or st[v] == qid:
                        continue
                    st[v] = qid
                    if open_[v] != 0:
                        ds[v] = lev
                        stack[top] = v
                        top += 1
                    else:
                        ds[v] = lev + 1
                        nxt[nnxt] = v
                        nnxt += 1
                        if ost[v] == qid and lev + ods[v] < mu:
                            mu = lev + ods[v]
    n_ent = 0
    lev += 1
    ncur = nnxt
    cur, nxt = nxt, cur
    nnxt = 0
    for a in range(ncur):
        u = cur[a]
        for k in range(6):
            v = _neighbor(u, k, L, LL)
            if v < 0:
                continue
            if open_[v] != 0:
                K = labels[v]
                if cst[K] != qid:
                    cst[K] = qid
                    cds[K] = lev
                    entries[n_ent] = v
                    n_ent += 1
                    if ocst[K] == qid and lev + ocds[K] < mu:
                        mu = lev + ocds[K]
            elif st[v] != qid:
                st[v] = qid
                ds[v] = lev + 1
                nxt[nnxt] = v
                nnxt += 1
                if ost[v] == qid and lev + ods[v] < mu:
                    mu = lev + ods[v]
    return cur, nxt, nnxt, n_ent, lev, mu


@njit(cache=True, nogil=True)
def _side_init(open_, labels, src, qid, st, ds, cst, cds, nxt, entries, ost, ods, ocst, ocds,
               mu):
    if open_[src] != 0:
        K = labels[src]
        cst[K] = qid
        cds[K] = 0
        entries[0] = src
        if ocst[K] == qid and ocds[K] < mu:
            mu = ocds[K]
        return 0, 1, False, mu
    st[src] = qid
    ds[src] = 1
    nxt[0] = src
    if ost[src] == qid and ods[src] < mu:
        mu = ods[src]
    return 1, 0, True, mu


@njit(cache=True, nogil=True)
def _pair_search(open_, labels, sizes, L, x, y, qid,
                 st_a, ds_a, cst_a, cds_a, cur_a, nxt_a, ent_a, stack_a,
                 st_b, ds_b, cst_b, cds_b, cur_b, nxt_b, ent_b, stack_b):
    """Bidirectional cluster-contracted search for T(x, y) on the full box.

    With both sides settled to levels a and b, any x-y path of cost at most
    a + b has a node known to both sides, so a meeting cost mu <= a + b + 1
    is optimal.
    """
    inf = 2147483647
    mu = inf
    nnxt_a, n_ent_a, fl_a, mu = _side_init(open_, labels, x, qid, st_a, ds_a, cst_a, cds_a,
                                           nxt_a, ent_a, st_b, ds_b, cst_b, cds_b, mu)
    nnxt_b, n_ent_b, fl_b, mu = _side_init(open_, labels, y, qid, st_b, ds_b, cst_b, cds_b,
                                           nxt_b, ent_b, st_a, ds_a, cst_a, cds_a, mu)
    lev_a = 0
    lev_b = 0
    while True:
        if mu <= lev_a + lev_b + 1:
            return mu
        dead_a = fl_a and nnxt_a == 0
        dead_b = fl_b and nnxt_b == 0
        if dead_a or dead_b:
            return -1 if mu == inf else mu
        cost_a = nnxt_a
        if not fl_a:
            for e in range(n_ent_a):
                cost_a += sizes[labels[ent_a[e]]]
        cost_b = nnxt_b
        if not fl_b:
            for e in range(n_ent_b):
                cost_b += sizes[labels[ent_b[e]]]
        if cost_a <= cost_b:
            cur_a, nxt_a, nnxt_a, n_ent_a, lev_a, mu = _side_advance(
                open_, labels, L, qid, st_a, ds_a, cst_a, cds_a, cur_a, nxt_a, nnxt_a, ent_a,
                n_ent_a, stack_a, lev_a, fl_a, st_b, ds_b, cst_b, cds_b, mu)
            fl_a = n_ent_a == 0
        else:
            cur_b, nxt_b, nnxt_b, n_ent_b, lev_b, mu = _side_advance(
                open_, labels, L, qid, st_b, ds_b, cst_b, cds_b, cur_b, nxt_b, nnxt_b, ent_b,
                n_ent_b, stack_b, lev_b, fl_b, st_a, ds_a, cst_a, cds_a, mu)
            fl_b = n_ent_b == 0


@njit(cache=True, nogil=True)
def _target_costs(open_, labels, tsites, dist, stamp, qid, cdist, cstamp):
    out = np.full(tsites.shape[0], -1, dtype=np.int64)
    for a in range(tsites.shape[0]):
        t = tsites[a]
        if open_[t] != 0:
            K = labels[t]
            if cstamp[K] == qid:
                out[a] = cdist[K]
        elif stamp[t] == qid and dist[t] >= 0:
            out[a] = dist[t]
    return out


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------

def _region_params(region: Region, n: int):
    """(lo, shape, kind, params, mask) for a region clipped to Λ(n), in array offsets."""
    rlo, rhi = region.bounds()
    lo = np.maximum(np.asarray(rlo, dtype=np.int64), -n)
    hi = np.minimum(np.asarray(rhi, dtype=np.int64), n)
    if np.any(hi < lo):
        raise ValueError("region does not meet the configuration box")
    shape = hi - lo + 1
    empty = np.zeros(0, dtype=np.uint8)
    if isinstance(region, BoxSpec):
        return lo + n, shape, 0, np.zeros(4, dtype=np.int64), empty
    if isinstance(region, BallSpec):
        c = np.asarray(region.center, dtype=np.int64) + n
        params = np.array([c[0], c[1], c[2], region.r_squared], dtype=np.int64)
        return lo + n, shape, 1, params, empty
    mask = region.member_mask(lo, hi).ravel(order="F").astype(np.uint8)
    return lo + n, shape, 2, np.zeros(4, dtype=np.int64), mask


@dataclass
class DistanceField:
    """Travel times from ``source`` over the bounding box of ``region``.

    ``dist`` is a Fortran-ordered array indexed by ``site - origin``; sites
    outside the region or its source component hold ``UNREACHABLE``.
    """

    source: Site
    region: Region
    origin: np.ndarray
    dist: np.ndarray
    predecessor: np.ndarray

    def __getitem__(self, s) -> int:
        loc = np.asarray(s) - self.origin
        if np.any(loc < 0) or np.any(loc >= self.dist.shape):
            return UNREACHABLE
        return int(self.dist[tuple(loc)])

    def values_at(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, 3)
        loc = sites - self.origin
        ok = np.all((loc >= 0) & (loc < np.array(self.dist.shape)), axis=1)
        out = np.full(len(sites), UNREACHABLE, dtype=np.int64)
        out[ok] = self.dist[loc[ok, 0], loc[ok, 1], loc[ok, 2]]
        return out

    def reached_sites(self) -> np.ndarray:
        return np.argwhere(self.dist >= 0) + self.origin

    def ball(self, k: int) -> set[Site]:
        """{y : T(source, y) <= k}."""
        loc = np.argwhere((self.dist >= 0) & (self.dist <= k))
        return {as_site(s) for s in loc + self.origin}

    def path_to(self, s) -> list[Site]:
        """Witness path source -> s reconstructed through predecessors."""
        if self[s] == UNREACHABLE:
            return []
        shape = self.dist.shape
        sx, sy = shape[0], shape[1]
        flat_pred = self.predecessor.ravel(order="F")
        loc = np.asarray(s) - self.origin
        cur = int(loc[0] + sx * (loc[1] + sy * loc[2]))
        out = []
        while cur != -1:
            z, rem = divmod(cur, sx * sy)
            y, x = divmod(rem, sx)
            out.append(Site(int(x + self.origin[0]), int(y + self.origin[1]),
                            int(z + self.origin[2])))
            cur = int(flat_pred[cur])
        return out[::-1]


@dataclass
class TravelResult:
    cost: int
    hit: Site | None
    path: list[Site]


def _run_bfs(config: Configuration, region: Region, source, targets=None, stop_early=False):
    n = config.n
    source = as_site(source)
    if not region.contains(source) or max(abs(c) for c in source) > n:
        raise ValueError(f"source {tuple(source)} is not in the region")
    lo, shape, kind, params, mask = _region_params(region, n)
    count = int(np.prod(shape))
    dist = np.full(count, -1, dtype=np.int32)
    parent = np.full(count, -1, dtype=np.int32)
    src_loc = np.asarray(source, dtype=np.int64) + n - lo
    src = int(src_loc[0] + shape[0] * (src_loc[1] + shape[1] * src_loc[2]))
    if targets is None:
        target = np.zeros(0, dtype=np.uint8)
    else:
        target = np.zeros(count, dtype=np.uint8)
        tl = targets + n - lo
        ok = np.all((tl >= 0) & (tl < shape), axis=1)
        tl = tl[ok]
        target[tl[:, 0] + shape[0] * (tl[:, 1] + shape[1] * tl[:, 2])] = 1
    _bfs01(config.open_flat, config.side, lo, shape.astype(np.int64), kind, params, mask,
           src, target, stop_early, dist, parent)
    shp = tuple(int(s) for s in shape)
    return DistanceField(source, region, lo - n, dist.reshape(shp, order="F"),
                         parent.reshape(shp, order="F"))


def travel_field(config: Configuration, region: Region, source) -> DistanceField:
    """Travel times T_region(source, y) for every y of region ∩ Λ(n)."""
    return _run_bfs(config, region, source)


def _as_site_array(targets) -> np.ndarray:
    if isinstance(targets, (BoxSpec, BallSpec, SiteSet)):
        return targets.sites()
    return np.asarray(targets, dtype=np.int64).reshape(-1, 3)


def _pick(sites: np.ndarray, costs: np.ndarray, n: int):
    reach = costs >= 0
    if not np.any(reach):
        return UNREACHABLE, None
    best = int(costs[reach].min())
    cand = sites[costs == best]
    idx = sites_to_indices(cand, n)
    return best, as_site(cand[int(np.argmin(idx))])


def travel_to_set(config: Configuration, region: Region, source, targets, want_path: bool = True
                  ) -> TravelResult:
    """T_region(source, targets), the target attaining it and a witness path.

    Ties between targets go to the smallest site index. When ``want_path``
    is false and the region is the whole box, the cluster-contracted search
    is used.
    """
    tsites = _as_site_array(targets)
    n = config.n
    inside = np.all(np.abs(tsites) <= n, axis=1) & region.contains_array(tsites)
    tsites = tsites[inside]
    if len(tsites) == 0:
        return TravelResult(UNREACHABLE, None, [])
    if (not want_path and isinstance(region, BoxSpec) and region.center == (0, 0, 0)
            and region.half_side >= n):
        cost, hit = cluster_index(config).travel_to_set(source, tsites)
        return TravelResult(cost, hit, [])
    field = _run_bfs(config, region, source, tsites, stop_early=True)
    costs = field.values_at(tsites)
    cost, hit = _pick(tsites, costs, n)
    path = field.path_to(hit) if (want_path and hit is not None) else []
    return TravelResult(cost, hit, path)


def path_cost(config: Configuration, path) -> int:
    return sum(1 - int(config.is_open(s)) for s in path)


# ---------------------------------------------------------------------------
# cluster-contracted search on the full box
# ---------------------------------------------------------------------------

class _Workspace:
    """Stamp-marked search buffers, reused across queries by one thread."""

    def __init__(self, size: int, nlabels: int):
        self.size = size
        self.nlabels = nlabels
        self.dist = np.zeros(size, dtype=np.int32)
        self.stamp = np.zeros(size, dtype=np.int32)
        self.cdist = np.zeros(nlabels + 1, dtype=np.int32)
        self.cstamp = np.zeros(nlabels + 1, dtype=np.int32)
        self.entries = np.empty(nlabels + 1, dtype=np.int32)
        self.cur = np.empty(size, dtype=np.int32)
        self.nxt = np.empty(size, dtype=np.int32)
        self.stack = np.empty(size, dtype=np.int32)
        self._targets = None

    def targets(self) -> tuple[np.ndarray, np.ndarray]:
        """Target marks (per site, per cluster), allocated on first set query."""
        if self._targets is None:
            self._targets = (np.zeros(self.size, dtype=np.int32),
                             np.zeros(self.nlabels + 1, dtype=np.int32))
        return self._targets


class ClusterIndex:
    """Open-cluster labels of a configuration plus per-thread search buffers."""

    def __init__(self, config: Configuration):
        self.config = config
        L = config.side
        # the flat index runs x fastest, which is C order for a (z, y, x) array
        grid = config.open_flat.reshape(L, L, L)
        labels, count = ndimage.label(grid, structure=ndimage.generate_binary_structure(3, 1))
        self.labels = np.asarray(labels, dtype=np.int32).ravel()
        self.nlabels = int(count)
        self.sizes = np.bincount(self.labels, minlength=self.nlabels + 1).astype(np.int64)
        self.sizes[0] = 0
        self._local = threading.local()

    def _buffers(self, second: bool = False) -> tuple[_Workspace, int]:
        loc = self._local
        if getattr(loc, "ws", None) is None:
            loc.ws = [None, None]
            loc.qid = 0
        k = 1 if second else 0
        if loc.ws[k] is None:
            loc.ws[k] = _Workspace(self.config.site_count, self.nlabels)
        loc.qid += 1
        return loc.ws[k], loc.qid

    def cluster_size(self, site) -> int:
        """Number of sites in the open cluster of ``site`` (0 if closed)."""
        i = site_index_of(as_site(site), self.config.n)
        return int(self.sizes[self.labels[i]])

    def travel_to_set(self, source, tsites: np.ndarray):
        """``(cost, hit)`` of T_Λ(n)(source, tsites); cost -1 if unreachable."""
        n = self.config.n
        source = as_site(source)
        ws, qid = self._buffers()
        open_ = self.config.open_flat
        idx = sites_to_indices(tsites, n)
        is_open = open_[idx] != 0
        tsite, tlabel = ws.targets()
        tlabel[self.labels[idx[is_open]]] = qid
        tsite[idx[~is_open]] = qid
        _cluster_search(open_, self.labels, self.config.side, site_index_of(source, n),
                        tlabel, tsite, ws.dist, ws.stamp, qid, ws.cdist, ws.cstamp,
                        ws.cur, ws.nxt, ws.stack)
        costs = _target_costs(open_, self.labels, idx, ws.dist, ws.stamp, qid, ws.cdist,
                              ws.cstamp)
        return _pick(tsites, costs, n)

    def travel_time(self, x, y) -> int:
        """T_Λ(n)(x, y) by a bidirectional search; -1 if y is unreachable."""
        n = self.config.n
        a, _ = self._buffers()
        # both sides use the later stamp, fresh for each workspace
        b, qid = self._buffers(second=True)
        return int(_pair_search(
            self.config.open_flat, self.labels, self.sizes, self.config.side,
            site_index_of(as_site(x), n), site_index_of(as_site(y), n), qid,
            a.stamp, a.dist, a.cstamp, a.cdist, a.cur, a.nxt, a.entries, a.stack,
            b.stamp, b.dist, b.cstamp, b.cdist, b.cur, b.nxt, b.entries, b.stack))


def site_index_of(s, n: int) -> int:
    L = 2 * n + 1
    return (s[0] + n) + L * ((s[1] + n) + L * (s[2] + n))


_index_lock = threading.Lock()


def cluster_index(config: Configuration) -> ClusterIndex:
    """The configuration's cached :class:`ClusterIndex`."""
    idx = config.__dict__.get("_cluster_index")
    if idx is None:
        with _index_lock:
            idx = config.__dict__.get("_cluster_index")
            if idx is None:
                idx = ClusterIndex(config)
                config.__dict__["_cluster_index"] = idx
    return idx


def farthest_site(field: DistanceField, n: int) -> tuple[Site, int]:
    """Site of maximal travel time in ``field`` (smallest index on ties)."""
    d = field.dist
    best = int(d.max())
    cand = np.argwhere(d == best) + field.origin
    i = int(np.argmin(sites_to_indices(cand, n)))
    return as_site(cand[i]), best
