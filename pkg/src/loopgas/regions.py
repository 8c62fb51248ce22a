"""Interval and region algebra on the domain's site columns.

A region is a union of full-width cell rectangles: cell x (the unit strip
centred on site x) times a closed time interval.  Each cell keeps a sorted
list of disjoint closed intervals.  On the torus the time axis is a circle;
an interval with lo > hi wraps through the seam, and a fully covered cell is
canonicalized to (t_lo, t_hi).

Everything downstream (cluster filling, outside volumes, link labels,
boundary perimeters) reduces to a handful of exact interval operations.
Interval endpoints are link times copied around verbatim, so equality tests
are exact and no tolerances are needed.
"""

from __future__ import annotations

from .geometry import Domain, edge_parity


def ival_pieces(domain: Domain, iv):
    """Split a possibly wrapping interval into linear pieces."""
    lo, hi = iv
    if lo <= hi:
        return [(lo, hi)]
    if not domain.is_torus:
        raise ValueError(f"wrapping interval {iv} in a non-periodic domain")
    return [(lo, domain.t_hi), (domain.t_lo, hi)]


def ival_length(domain: Domain, iv) -> float:
    lo, hi = iv
    if lo <= hi:
        return hi - lo
    return (domain.t_hi - lo) + (hi - domain.t_lo)


def merge_intervals(domain: Domain, ivals) -> list:
    """Union of closed intervals in canonical form (touching pieces merge)."""
    if not ivals:
        return []
    pieces = []
    for iv in ivals:
        pieces.extend(ival_pieces(domain, iv))
    pieces.sort()
    out = [list(pieces[0])]
    for lo, hi in pieces[1:]:
        if lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    if (
        domain.is_torus
        and len(out) > 1
        and out[0][0] == domain.t_lo
        and out[-1][1] == domain.t_hi
    ):
        first = out.pop(0)
        out[-1][1] = first[1]
    return [tuple(p) for p in out]


def complement_intervals(domain: Domain, ivals) -> list:
    """Closures of the complement pieces of a merged union, canonical form."""
    merged = merge_intervals(domain, ivals)
    t0, t1 = domain.t_lo, domain.t_hi
    if not merged:
        return [(t0, t1)]
    if not domain.is_torus:
        out = []
        prev = t0
        for lo, hi in merged:
            if lo > prev:
                out.append((prev, lo))
            prev = hi
        if prev < t1:
            out.append((prev, t1))
        return out
    if merged == [(t0, t1)]:
        return []
    out = []
    for cur, nxt in zip(merged, merged[1:] + merged[:1]):
        lo, hi = cur[1], nxt[0]
        if lo == t1:
            lo = t0
        if hi == t0:
            hi = t1
        if lo != hi:
            out.append((lo, hi))
    return merge_intervals(domain, out)


def overlap_length(domain: Domain, iv1, iv2) -> float:
    total = 0.0
    for l1, h1 in ival_pieces(domain, iv1):
        for l2, h2 in ival_pieces(domain, iv2):
            total += max(0.0, min(h1, h2) - max(l1, l2))
    return total


def intervals_overlap_length(domain: Domain, a, b) -> float:
    return sum(overlap_length(domain, i, j) for i in a for j in b)


def closed_touch(domain: Domain, iv1, iv2) -> bool:
    """True when the closed intervals intersect, including at single points."""
    p1, p2 = ival_pieces(domain, iv1), ival_pieces(domain, iv2)
    for l1, h1 in p1:
        for l2, h2 in p2:
            if min(h1, h2) >= max(l1, l2):
                return True
    if domain.is_torus:
        t0, t1 = domain.t_lo, domain.t_hi
        for l1, h1 in p1:
            for l2, h2 in p2:
                if (h1 == t1 and l2 == t0) or (h2 == t1 and l1 == t0):
                    return True
    return False


def contains_time(domain: Domain, merged, t, interior=False) -> bool:
    """Membership of t in a merged union (closed or interior)."""
    if domain.is_torus:
        if t == domain.t_hi:
            t = domain.t_lo
        if merged and merged[0] == (domain.t_lo, domain.t_hi):
            return True
    for lo, hi in merged:
        if lo <= hi:
            if (lo < t < hi) if interior else (lo <= t <= hi):
                return True
        else:
            if (t > lo or t < hi) if interior else (t >= lo or t <= hi):
                return True
    return False


def subtract_pieces(domain: Domain, a, b) -> list:
    """Linear pieces of (union a) minus (union b); positive length only."""
    out = []
    comp = complement_intervals(domain, b)
    comp_pieces = [p for iv in comp for p in ival_pieces(domain, iv)]
    for iv in a:
        for l1, h1 in ival_pieces(domain, iv):
            for l2, h2 in comp_pieces:
                lo, hi = max(l1, l2), min(h1, h2)
                if lo < hi:
                    out.append((lo, hi))
    out.sort()
    return out


class Region:
    """Per-cell interval lists over the domain's sites."""

    __slots__ = ("domain", "cells")

    def __init__(self, domain: Domain, cells=None):
        self.domain = domain
        self.cells = {}
        if cells:
            for c, ivals in cells.items():
                merged = merge_intervals(domain, ivals)
                if merged:
                    self.cells[c] = merged

    def intervals(self, cell) -> list:
        return self.cells.get(cell, [])

    @property
    def is_empty(self) -> bool:
        return not self.cells

    def site_volume(self) -> float:
        dom = self.domain
        return sum(
            ival_length(dom, iv) for ivals in self.cells.values() for iv in ivals
        )

    def wall_union(self, edge) -> list:
        """Merged intervals covering the column line of `edge` (its wall)."""
        return merge_intervals(
            self.domain, self.intervals(edge) + self.intervals(edge + 1)
        )

    def wall_length(self, edge) -> float:
        dom = self.domain
        return sum(ival_length(dom, iv) for iv in self.wall_union(edge))

    def closed_contains_wall(self, edge, t) -> bool:
        dom = self.domain
        return contains_time(dom, self.intervals(edge), t) or contains_time(
            dom, self.intervals(edge + 1), t
        )

    def interior_contains_wall(self, edge, t) -> bool:
        dom = self.domain
        return contains_time(
            dom, self.intervals(edge), t, interior=True
        ) and contains_time(dom, self.intervals(edge + 1), t, interior=True)

    def contains_region(self, other: "Region") -> bool:
        """Whether every cell interval of `other` is covered by this region."""
        dom = self.domain
        for c, ivals in other.cells.items():
            mine = self.intervals(c)
            for iv in ivals:
                for lo, hi in ival_pieces(dom, iv):
                    if not any(
                        ml <= lo and hi <= mh
                        for miv in mine
                        for ml, mh in ival_pieces(dom, miv)
                    ):
                        return False
        return True

    def shifted_cells(self, dx: int) -> "Region":
        return Region(self.domain, {c + dx: list(v) for c, v in self.cells.items()})

    @classmethod
    def union(cls, domain: Domain, regions) -> "Region":
        cells = {}
        for r in regions:
            for c, ivals in r.cells.items():
                cells.setdefault(c, []).extend(ivals)
        return cls(domain, cells)

    def complement_cells(self) -> dict:
        """Complement interval lists for every site of the domain."""
        dom = self.domain
        return {
            c: complement_intervals(dom, self.intervals(c)) for c in dom.sites
        }


def _piece_nodes(pieces_by_cell):
    return [(c, i) for c, ivals in pieces_by_cell.items() for i in range(len(ivals))]


def _flood(domain: Domain, pieces_by_cell, seeds) -> set:
    """Pieces reachable from the seed set; positive-overlap adjacency."""
    reached = set(seeds)
    stack = list(seeds)
    while stack:
        c, i = stack.pop()
        iv = pieces_by_cell[c][i]
        for c2 in (c - 1, c + 1):
            for j, jv in enumerate(pieces_by_cell.get(c2, [])):
                node = (c2, j)
                if node not in reached and overlap_length(domain, iv, jv) > 0.0:
                    reached.add(node)
                    stack.append(node)
    return reached


def _boundary_seeds(domain: Domain, pieces_by_cell) -> list:
    """Complement pieces touching the unbounded part of the plane."""
    lo_cell, hi_cell = min(domain.sites), max(domain.sites)
    seeds = []
    for c, ivals in pieces_by_cell.items():
        for i, iv in enumerate(ivals):
            if c in (lo_cell, hi_cell):
                seeds.append((c, i))
            elif not domain.is_torus and (
                iv[0] == domain.t_lo or iv[1] == domain.t_hi
            ):
                seeds.append((c, i))
    return seeds


def fill_holes(domain: Domain, region: Region) -> Region:
    """Region plus the bounded components of its complement.

    Valid for the footprint of a single connected support component: such a
    footprint cannot enclose a seam-wrapping complement strip, so everything
    the boundary flood misses is genuinely bounded.  Do not call this on
    unions of several components.
    """
    comp = region.complement_cells()
    reached = _flood(domain, comp, _boundary_seeds(domain, comp))
    cells = {c: list(v) for c, v in region.cells.items()}
    for c, ivals in comp.items():
        for i, iv in enumerate(ivals):
            if (c, i) not in reached:
                cells.setdefault(c, []).append(iv)
    return Region(domain, cells)


def component_at(domain: Domain, pieces_by_cell, cell, t) -> Region | None:
    """Connected component of a piece family through the point (cell, t)."""
    start = None
    for i, iv in enumerate(pieces_by_cell.get(cell, [])):
        if contains_time(domain, [iv], t):
            start = (cell, i)
            break
    if start is None:
        return None
    reached = _flood(domain, pieces_by_cell, [start])
    cells = {}
    for c, i in reached:
        cells.setdefault(c, []).append(pieces_by_cell[c][i])
    return Region(domain, cells)


# ---------------------------------------------------------------------------
# boundary geometry

class Curve:
    """One connected piece of a region boundary."""

    __slots__ = ("length", "segments")

    def __init__(self, length, segments):
        self.length = length
        self.segments = segments

    def __repr__(self):
        return f"<Curve length={self.length:.6g} n_segments={len(self.segments)}>"


def _time_key(domain: Domain, t: float) -> float:
    if domain.is_torus and t == domain.t_hi:
        return domain.t_lo
    return t


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        p = self.parent.setdefault(x, x)
        while p != self.parent[p]:
            self.parent[p] = self.parent[self.parent[p]]
            p = self.parent[p]
        self.parent[x] = p
        return p

    def unite(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def boundary_stats(domain: Domain, region: Region):
    """Vertical length, horizontal length, per-parity wall crossings, curves.

    Vertical boundary pieces live on cell walls where coverage differs
    between the two sides (the outside of the domain counts as uncovered);
    horizontal pieces appear at interval endpoints.  Segments sharing an
    endpoint are stitched into connected curves (a four-valent touching
    corner joins its curves, which only occurs at exact time coincidences).
    """
    lo_cell, hi_cell = min(domain.sites), max(domain.sites)
    segments = []  # (length, key1, key2, geom)
    vert_len = 0.0
    for c in range(lo_cell - 1, hi_cell + 1):
        a = region.intervals(c)
        b = region.intervals(c + 1)
        xor = subtract_pieces(domain, a, b) + subtract_pieces(domain, b, a)
        w = 2 * c + 1
        for lo, hi in xor:
            vert_len += hi - lo
            k1 = (w, _time_key(domain, lo))
            k2 = (w, _time_key(domain, hi))
            segments.append((hi - lo, k1, k2, ((w / 2.0, lo), (w / 2.0, hi))))

    events = {}
    for c, ivals in region.cells.items():
        for lo, hi in ivals:
            if domain.is_torus and (lo, hi) == (domain.t_lo, domain.t_hi):
                continue
            events.setdefault((_time_key(domain, lo), "lo"), []).append(c)
            events.setdefault((_time_key(domain, hi), "hi"), []).append(c)

    horiz_len = 0.0
    crossings = {"primal": 0, "dual": 0}
    for (t, _side), cell_list in events.items():
        cell_list.sort()
        run_start = prev = cell_list[0]
        runs = []
        for c in cell_list[1:]:
            if c == prev + 1:
                prev = c
            else:
                runs.append((run_start, prev))
                run_start = prev = c
        runs.append((run_start, prev))
        for c1, c2 in runs:
            horiz_len += c2 - c1 + 1
            for c in range(c1, c2):
                crossings[edge_parity(c)] += 1
            k1 = (2 * c1 - 1, t)
            k2 = (2 * c2 + 1, t)
            segments.append(
                (c2 - c1 + 1.0, k1, k2, ((c1 - 0.5, t), (c2 + 0.5, t)))
            )

    uf = _UnionFind()
    for _, k1, k2, _ in segments:
        uf.unite(k1, k2)
    grouped = {}
    for length, k1, _k2, geom in segments:
        grouped.setdefault(uf.find(k1), []).append((length, geom))
    curves = [
        Curve(sum(l for l, _ in segs), [g for _, g in segs])
        for segs in grouped.values()
    ]
    curves.sort(key=lambda cv: -cv.length)
    return vert_len, horiz_len, crossings, curves
