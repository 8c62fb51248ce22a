"""Loop tracing for link configurations.

Links partition the site columns into vertical intervals.  A cross connects
the two columns of its edge while preserving the vertical direction of
travel; a double bar reflects it.  On rectangles the top and bottom
identifications act as frozen joins on the boundary-parity edges, and on the
torus the columns wrap around in time.  The loops of a configuration are the
cycles of this incidence structure.

One walker drives every consumer: full tracing (`trace_loops`), the local
loop-count change under a single-link update (`delta_loops`), and the
pairing of marked points used by estimator dictionaries (`pairing_at`).
Walks are event-to-event with binary search, so local updates cost the
length of the affected loops rather than the whole configuration.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .geometry import Domain, edge_parity
from .linkconfig import BAR, Delete, Flip, Insert, LinkConfig

UP = 1
DOWN = -1

# Rank breaks ties between events at equal times on the two edges of a site:
# events sort by (t, rank), links carry their edge index.  Sentinels keep
# wrap/boundary departures below and above every link, and cuts (which may
# never coincide with an adjacent link) in between.
_LO_RANK = -(10**9)
_HI_RANK = 10**9
_CUT_RANK = 10**8


class LinkCollisionError(ValueError):
    """A marked point landed exactly on a link time; jitter and retry."""


class _View:
    """A configuration plus a small overlay of local edits.

    The overlay supports added/removed/flipped links and vertical cuts, so
    proposed Monte Carlo moves and estimator insertions can be walked without
    mutating the underlying configuration.
    """

    def __init__(self, cfg: LinkConfig):
        self.cfg = cfg
        self.domain = cfg.domain
        self._e0 = self.domain.edges.start
        self._e1 = self.domain.edges.stop
        self.added_times: dict[int, list[float]] = {}
        self.added_kinds: dict[int, list[str]] = {}
        self.removed: dict[int, set[int]] = {}
        self.flipped: dict[int, set[int]] = {}
        self._cut_times: dict[int, list[float]] = {}
        self._cut_idx: dict[tuple[int, float], int] = {}
        self._n_added = 0
        self._n_cuts = 0
        self._site_keys: dict[int, list[tuple[float, int]]] = {}

    # -- overlay edits ------------------------------------------------

    def add_link(self, e: int, t: float, kind: str) -> int:
        if not self._e0 <= e < self._e1:
            raise ValueError(f"edge {e} outside domain")
        if not self.domain.time_in_range(t):
            raise ValueError(f"time {t} outside domain range")
        ts = self.cfg.edge_times(e)
        i = bisect.bisect_left(ts, t)
        if i < len(ts) and ts[i] == t:
            raise ValueError(f"duplicate (edge,t) = ({e},{t})")
        at = self.added_times.setdefault(e, [])
        ak = self.added_kinds.setdefault(e, [])
        j = bisect.bisect_left(at, t)
        if j < len(at) and at[j] == t:
            raise ValueError(f"duplicate (edge,t) = ({e},{t})")
        at.insert(j, t)
        ak.insert(j, kind)
        self._n_added += 1
        return j

    def remove_link(self, e: int, pos: int) -> None:
        if not 0 <= pos < len(self.cfg.edge_times(e)):
            raise IndexError(f"link index {pos} out of range on edge {e}")
        self.removed.setdefault(e, set()).add(pos)

    def flip_link(self, e: int, pos: int) -> str:
        kinds = self.cfg.edge_kinds(e)
        if not 0 <= pos < len(kinds):
            raise IndexError(f"link index {pos} out of range on edge {e}")
        self.flipped.setdefault(e, set()).add(pos)
        return self.link_kind(e, pos, False)

    def add_cut(self, site: int, t: float, idx: int) -> None:
        if site not in self.domain.sites:
            raise ValueError(f"site {site} outside domain")
        if not self.domain.time_in_range(t):
            raise ValueError(f"time {t} outside domain range")
        for e in (site - 1, site):
            if self._e0 <= e < self._e1:
                ts = self.cfg.edge_times(e)
                i = bisect.bisect_left(ts, t)
                if i < len(ts) and ts[i] == t:
                    raise LinkCollisionError(f"cut at ({site},{t}) hits a link")
                at = self.added_times.get(e)
                if at:
                    i = bisect.bisect_left(at, t)
                    if i < len(at) and at[i] == t:
                        raise LinkCollisionError(f"cut at ({site},{t}) hits a link")
        ct = self._cut_times.setdefault(site, [])
        i = bisect.bisect_left(ct, t)
        if i < len(ct) and ct[i] == t:
            raise LinkCollisionError(f"two cuts at ({site},{t})")
        ct.insert(i, t)
        self._cut_idx[(site, t)] = idx
        self._n_cuts += 1

    # -- event lookup ---------------------------------------------------

    def link_kind(self, e: int, pos: int, is_added: bool) -> str:
        if is_added:
            return self.added_kinds[e][pos]
        k = self.cfg.edge_kinds(e)[pos]
        if pos in self.flipped.get(e, ()):
            from .linkconfig import CROSS

            return CROSS if k == BAR else BAR
        return k

    def _edge_next(self, e, d, key):
        t0, r0 = key
        out = None
        ts = self.cfg.edge_times(e)
        removed = self.removed.get(e, ())
        if d == UP:
            pos = bisect.bisect_left(ts, t0)
            if pos < len(ts) and ts[pos] == t0 and e <= r0:
                pos += 1
            while pos < len(ts) and pos in removed:
                pos += 1
            if pos < len(ts):
                out = ((ts[pos], e), "link", e, pos, False)
        else:
            pos = bisect.bisect_right(ts, t0) - 1
            if pos >= 0 and ts[pos] == t0 and e >= r0:
                pos -= 1
            while pos >= 0 and pos in removed:
                pos -= 1
            if pos >= 0:
                out = ((ts[pos], e), "link", e, pos, False)
        at = self.added_times.get(e)
        if at:
            if d == UP:
                i = bisect.bisect_left(at, t0)
                if i < len(at) and at[i] == t0 and e <= r0:
                    i += 1
                if i < len(at) and (out is None or (at[i], e) < out[0]):
                    out = ((at[i], e), "link", e, i, True)
            else:
                i = bisect.bisect_right(at, t0) - 1
                if i >= 0 and at[i] == t0 and e >= r0:
                    i -= 1
                if i >= 0 and (out is None or (at[i], e) > out[0]):
                    out = ((at[i], e), "link", e, i, True)
        return out

    def _next(self, site, d, key):
        best = None
        for e in (site - 1, site):
            if not self._e0 <= e < self._e1:
                continue
            c = self._edge_next(e, d, key)
            if c is not None and (
                best is None or (c[0] < best[0] if d == UP else c[0] > best[0])
            ):
                best = c
        ct = self._cut_times.get(site)
        if ct:
            t0, r0 = key
            if d == UP:
                i = bisect.bisect_left(ct, t0)
                if i < len(ct) and ct[i] == t0 and _CUT_RANK <= r0:
                    i += 1
                if i < len(ct):
                    ck = (ct[i], _CUT_RANK)
                    if best is None or ck < best[0]:
                        best = (ck, "cut", self._cut_idx[(site, ct[i])])
            else:
                i = bisect.bisect_right(ct, t0) - 1
                if i >= 0 and ct[i] == t0 and _CUT_RANK >= r0:
                    i -= 1
                if i >= 0:
                    ck = (ct[i], _CUT_RANK)
                    if best is None or ck > best[0]:
                        best = (ck, "cut", self._cut_idx[(site, ct[i])])
        return best

    def site_keys(self, site):
        sk = self._site_keys.get(site)
        if sk is None:
            sk = []
            for e in (site - 1, site):
                if self._e0 <= e < self._e1:
                    sk.extend((t, e) for t in self.cfg.edge_times(e))
            sk.sort()
            self._site_keys[site] = sk
        return sk

    def interval_id(self, site, d, key):
        """Index of the interval a cursor is about to traverse.

        Intervals at a site are numbered by the events below them, with the
        torus wrap interval (through the time cut) as index 0.
        """
        sk = self.site_keys(site)
        k = bisect.bisect_right(sk, key) if d == UP else bisect.bisect_left(sk, key)
        if self.domain.is_torus:
            m = len(sk)
            k = k % m if m else 0
        return k

    # -- the walker -----------------------------------------------------

    @property
    def max_steps(self):
        dom = self.domain
        n_bnd = 0 if dom.is_torus else dom.L
        return (
            4 * (self.cfg.n_links + self._n_added)
            + 2 * dom.n_sites
            + 2 * n_bnd
            + 4 * self._n_cuts
            + 16
        )

    def step(self, cur, want_interval=False):
        """Advance one event.  Returns (next_cursor, segment, mark).

        A cursor is (site, direction, departure key).  The mark is a link
        passage ('L', ...), a boundary identification ('B', ...), a cut
        arrival ('C', ...) with next_cursor None, or None for a torus wrap.
        """
        site, d, key = cur
        dom = self.domain
        iv = self.interval_id(site, d, key) if want_interval else None
        cand = self._next(site, d, key)
        if cand is None:
            if dom.is_torus:
                if d == UP:
                    seg = (site, key[0], dom.t_hi, iv)
                    return (site, UP, (dom.t_lo, _LO_RANK)), seg, None
                seg = (site, key[0], dom.t_lo, iv)
                return (site, DOWN, (dom.t_hi, _HI_RANK)), seg, None
            e_b = site if edge_parity(site) == dom.boundary_parity else site - 1
            partner = 2 * e_b + 1 - site
            if d == UP:
                seg = (site, key[0], dom.t_hi, iv)
                return (partner, DOWN, (dom.t_hi, _HI_RANK)), seg, ("B", e_b, "top")
            seg = (site, key[0], dom.t_lo, iv)
            return (partner, UP, (dom.t_lo, _LO_RANK)), seg, ("B", e_b, "bot")
        ck, tag = cand[0], cand[1]
        t = ck[0]
        seg = (site, key[0], t, iv)
        if tag == "cut":
            lip = "below" if d == UP else "above"
            return None, seg, ("C", cand[2], lip)
        e, pos, is_added = cand[2], cand[3], cand[4]
        kind = self.link_kind(e, pos, is_added)
        other = e + 1 if site == e else e
        if kind == BAR:
            passage = "below" if d == UP else "above"
            nxt = (other, -d, (t, e))
        else:
            if site == e:
                passage = "main" if d == UP else "anti"
            else:
                passage = "anti" if d == UP else "main"
            nxt = (other, d, (t, e))
        return nxt, seg, ("L", e, pos, is_added, passage, kind)


def _walk(view, start, want_intervals=False):
    """Follow a trajectory from `start` until it closes or reaches a cut."""
    segs = []
    lmarks = []
    bmarks = []
    cur = start
    for _ in range(view.max_steps):
        cur, seg, mark = view.step(cur, want_intervals)
        segs.append(seg)
        if mark is not None:
            if mark[0] == "L":
                lmarks.append(mark)
            elif mark[0] == "B":
                bmarks.append(mark)
            else:
                return ("cut", mark[1], mark[2]), segs, lmarks, bmarks
        if cur == start:
            return ("closed",), segs, lmarks, bmarks
    raise RuntimeError("loop walk failed to close; configuration is corrupt")


# ---------------------------------------------------------------------------
# full trace

@dataclass(frozen=True)
class LoopRecord:
    """One traced loop with its classification.

    kind is 'genuine' (two distinct bars on one edge), 'seal' (one bar plus
    one boundary identification on the same edge), 'pair' (a full double
    column closed by both identifications), 'circle' (a free torus column),
    or 'other'.  The first three are the column loops; `arc` holds their
    common time span as (lo, hi, wraps).
    """

    index: int
    kind: str
    segments: tuple
    link_passages: tuple
    boundary_passages: tuple
    sites: frozenset
    length: float
    edge: int | None = None
    height: float | None = None
    arc: tuple | None = None

    @property
    def n_links(self) -> int:
        return len({(e, p) for e, p, _, _ in self.link_passages})

    def pieces(self, site):
        """Time segments this loop occupies at `site`, as (lo, hi) pairs."""
        return [(min(a, b), max(a, b)) for s, a, b in self.segments if s == site]


def _column_arc(dom, segments, site):
    pieces = sorted((min(a, b), max(a, b)) for s, a, b in segments if s == site)
    if len(pieces) == 1:
        return (pieces[0][0], pieces[0][1], False)
    (lo1, hi1), (lo2, hi2) = pieces
    if not (lo1 == dom.t_lo and hi2 == dom.t_hi):
        raise RuntimeError("column loop with disconnected arc")
    return (lo2, hi1, True)


def _make_record(dom, idx, segs, lmarks, bmarks):
    segments = tuple((s, a, b) for s, a, b, _ in segs)
    sites = frozenset(s for s, _, _ in segments)
    length = float(sum(abs(b - a) for _, a, b in segments))
    links = {(e, p) for e, p, _, _ in lmarks}
    kinds = {k for _, _, _, k in lmarks}
    kind = "other"
    edge = None
    height = None
    arc = None
    if not lmarks and not bmarks:
        kind = "circle"
        height = dom.beta
    elif not bmarks and len(lmarks) == 2 and len(links) == 2 and kinds == {BAR}:
        if lmarks[0][0] == lmarks[1][0]:
            kind = "genuine"
            edge = lmarks[0][0]
    elif len(lmarks) == 1 and len(bmarks) == 1 and kinds == {BAR}:
        if lmarks[0][0] == bmarks[0][0]:
            kind = "seal"
            edge = lmarks[0][0]
    elif not lmarks and len(bmarks) == 2:
        if bmarks[0][0] != bmarks[1][0] or {s for _, s in bmarks} != {"top", "bot"}:
            raise RuntimeError("pair loop with mismatched identifications")
        kind = "pair"
        edge = bmarks[0][0]
    if kind in ("genuine", "seal", "pair"):
        height = length / 2.0
        arc = _column_arc(dom, segments, edge)
    return LoopRecord(
        idx,
        kind,
        segments,
        tuple(lmarks),
        tuple(bmarks),
        sites,
        length,
        edge,
        height,
        arc,
    )


class Loops:
    """Traced loops of a configuration with point and link lookups."""

    __slots__ = ("cfg", "domain", "records", "_interval_loop", "_view", "_link_loops", "_bnd_loops")

    def __init__(self, cfg, records, interval_loop, view, link_loops, bnd_loops):
        self.cfg = cfg
        self.domain = cfg.domain
        self.records = records
        self._interval_loop = interval_loop
        self._view = view
        self._link_loops = link_loops
        self._bnd_loops = bnd_loops

    @property
    def n_loops(self) -> int:
        return len(self.records)

    def loop_at(self, site: int, t: float) -> int:
        """Index of the loop through the point (site, t).

        A point exactly at a link time counts as lying just above it.
        """
        if site not in self.domain.sites:
            raise ValueError(f"site {site} outside domain")
        k = self._view.interval_id(site, UP, (t, _HI_RANK))
        return self._interval_loop[(site, k)]

    def link_loops(self, edge: int, pos: int) -> dict[str, int]:
        """Loop index per passage of a link ('below'/'above' or 'main'/'anti')."""
        return self._link_loops[(edge, pos)]

    def loops_of_link(self, edge: int, pos: int) -> set[int]:
        return set(self._link_loops[(edge, pos)].values())

    def boundary_loop(self, edge: int, side: str) -> int:
        return self._bnd_loops[(edge, side)]


def trace_loops(cfg: LinkConfig) -> Loops:
    view = _View(cfg)
    dom = cfg.domain
    records = []
    interval_loop = {}
    link_loops = {}
    bnd_loops = {}
    visited = set()

    def run(start):
        idx = len(records)
        terminal, segs, lmarks, bmarks = _walk(view, start, want_intervals=True)
        if terminal[0] != "closed":
            raise RuntimeError("trace walk hit a cut")
        for s, _, _, k in segs:
            interval_loop[(s, k)] = idx
        lms = []
        bms = []
        for _, e, pos, _, passage, kind in lmarks:
            visited.add(("L", e, pos, passage))
            link_loops.setdefault((e, pos), {})[passage] = idx
            lms.append((e, pos, passage, kind))
        for _, e_b, side in bmarks:
            visited.add(("B", e_b, side))
            bnd_loops[(e_b, side)] = idx
            bms.append((e_b, side))
        records.append(_make_record(dom, idx, segs, lms, bms))

    for e in dom.edges:
        ts = cfg.edge_times(e)
        ks = cfg.edge_kinds(e)
        for pos, (t, k) in enumerate(zip(ts, ks)):
            if k == BAR:
                starts = (("below", (e + 1, DOWN, (t, e))), ("above", (e + 1, UP, (t, e))))
            else:
                starts = (("main", (e + 1, UP, (t, e))), ("anti", (e, UP, (t, e))))
            for passage, cur in starts:
                if ("L", e, pos, passage) not in visited:
                    run(cur)
    for e_b in dom.boundary_pairs():
        if ("B", e_b, "top") not in visited:
            run((e_b + 1, DOWN, (dom.t_hi, _HI_RANK)))
        if ("B", e_b, "bot") not in visited:
            run((e_b + 1, UP, (dom.t_lo, _LO_RANK)))
    if dom.is_torus:
        seen_sites = {s for rec in records for s in rec.sites}
        for s in dom.sites:
            if s not in seen_sites:
                run((s, UP, (dom.t_lo, _LO_RANK)))
    return Loops(cfg, records, interval_loop, view, link_loops, bnd_loops)


def ell(cfg: LinkConfig) -> int:
    """Number of loops of the configuration."""
    return trace_loops(cfg).n_loops


def ell_empty(domain: Domain) -> int:
    """Loop count of the empty configuration."""
    return 2 * domain.L if domain.is_torus else domain.L


# ---------------------------------------------------------------------------
# local updates

def _cursor_on_loop(view, site, t):
    """A real cursor on the loop through the point (site, t)."""
    nxt, _, mark = view.step((site, UP, (t, _CUT_RANK)))
    if nxt is None:
        raise RuntimeError("point walk hit a cut")
    return nxt


def _covers_point(segs, site, t):
    return any(s == site and min(a, b) <= t <= max(a, b) for s, a, b, _ in segs)


def _n_loops_through_points(view, p1, p2):
    start = _cursor_on_loop(view, p1[0], p1[1])
    _, segs, _, _ = _walk(view, start)
    return 1 if _covers_point(segs, p2[0], p2[1]) else 2


def _n_loops_through_link(view, e, pos, is_added, kind, t):
    if kind == BAR:
        second = "above"
        start = (e + 1, DOWN, (t, e))
    else:
        second = "anti"
        start = (e + 1, UP, (t, e))
    _, _, lmarks, _ = _walk(view, start)
    seen = {p for _, ee, pp, ia, p, _ in lmarks if (ee, pp, ia) == (e, pos, is_added)}
    return 1 if second in seen else 2


def delta_loops(cfg: LinkConfig, move) -> int:
    """Loop-count change if `move` were applied, without applying it."""
    if isinstance(move, Insert):
        ln = move.link
        e, t = ln.x_left, ln.t
        k_old = _n_loops_through_points(_View(cfg), (e, t), (e + 1, t))
        view = _View(cfg)
        aidx = view.add_link(e, t, ln.kind)
        k_new = _n_loops_through_link(view, e, aidx, True, ln.kind, t)
    elif isinstance(move, Delete):
        e, pos = move.x_left, move.pos
        t = cfg.edge_times(e)[pos]
        kind = cfg.edge_kinds(e)[pos]
        k_old = _n_loops_through_link(_View(cfg), e, pos, False, kind, t)
        view = _View(cfg)
        view.remove_link(e, pos)
        k_new = _n_loops_through_points(view, (e, t), (e + 1, t))
    elif isinstance(move, Flip):
        e, pos = move.x_left, move.pos
        t = cfg.edge_times(e)[pos]
        kind = cfg.edge_kinds(e)[pos]
        k_old = _n_loops_through_link(_View(cfg), e, pos, False, kind, t)
        view = _View(cfg)
        new_kind = view.flip_link(e, pos)
        k_new = _n_loops_through_link(view, e, pos, False, new_kind, t)
    else:
        raise TypeError(f"unknown move {move!r}")
    return k_new - k_old


# ---------------------------------------------------------------------------
# marked-point pairings

def pairing_at(cfg: LinkConfig, points) -> dict:
    """Pair the cut ends that severing the columns at `points` creates.

    Each point (site, t) has a 'below' lip (top of the lower piece) and an
    'above' lip.  The returned dict maps (i, lip) -> (j, lip) both ways.
    Raises LinkCollisionError when a point coincides with a link time, in
    which case the caller should jitter the time and retry.
    """
    points = list(points)
    if len(points) > 4:
        raise ValueError("at most 4 marked points are supported")
    view = _View(cfg)
    for i, (s, t) in enumerate(points):
        view.add_cut(s, t, i)
    pairing = {}
    for i, (s, t) in enumerate(points):
        for lip, d in (("below", DOWN), ("above", UP)):
            if (i, lip) in pairing:
                continue
            terminal, _, _, _ = _walk(view, (s, d, (t, _CUT_RANK)))
            if terminal[0] != "cut":
                raise RuntimeError("walk from a cut did not reach a cut")
            j, jlip = terminal[1], terminal[2]
            pairing[(i, lip)] = (j, jlip)
            pairing[(j, jlip)] = (i, lip)
    return pairing
