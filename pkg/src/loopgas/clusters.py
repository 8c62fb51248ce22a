"""Cluster geometry, boundary components, and the repair map.

Trivial loops (column loops with at least one real bar) are graded by
height: below the cutoff 1/(kappa*n) they are small, the rest are tall;
kappa = 0 makes every trivial loop small.  Small loops whose closed supports
intersect, necessarily along the same edge or two edges over, pool into
connected components.  A component's footprint with its enclosed holes
filled is a garden; the gardens maximal under containment are the clusters,
and the outside is the open remainder of the domain.

Real links are labelled by where they sit relative to the clusters
(interior, boundary, strictly outside), and outside bars wedged between
tall loops are covered while the rest of the outside links are exposed.
These labels drive the repair map, which straightens a configuration on a
primal rectangle by translating dual clusters one cell to the left and
turning outside crosses into bars, and the block census used by the
configuration-counting audits.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from itertools import product

from .geometry import (
    DUAL,
    PRIMAL,
    Domain,
    block_col_of_edge,
    block_row_of_time,
    edge_parity,
    enumerate_blocks,
)
from .linkconfig import BAR, CROSS, LinkConfig, SimParams, config_from_links
from .loops import Loops, trace_loops
from .regions import (
    Region,
    boundary_stats,
    closed_touch,
    component_at,
    fill_holes,
    intervals_overlap_length,
)

_TRIVIAL_KINDS = ("genuine", "seal")
_COLUMN_KINDS = ("genuine", "seal", "pair")


class ShiftCollisionError(RuntimeError):
    """Raised when the repair shift stacks two links on one point."""


@dataclass(frozen=True)
class TrivialLoopRecord:
    """One trivial loop with its column, span, and height grade."""

    loop_id: int
    kind: str
    edge: int
    parity: str
    arc: tuple  # (lo, hi); lo > hi wraps through the torus seam
    height: float
    small: bool

    @property
    def cells(self):
        return (self.edge, self.edge + 1)


def small_height_cutoff(params: SimParams) -> float:
    return math.inf if params.kappa == 0 else 1.0 / (params.kappa * params.n)


def classify_trivial(loops: Loops, params: SimParams) -> list[TrivialLoopRecord]:
    """Grade the trivial loops of a trace as small or tall."""
    cutoff = small_height_cutoff(params)
    out = []
    for rec in loops.records:
        if rec.kind not in _TRIVIAL_KINDS:
            continue
        out.append(
            TrivialLoopRecord(
                loop_id=rec.index,
                kind=rec.kind,
                edge=rec.edge,
                parity=edge_parity(rec.edge),
                arc=rec.arc[:2],
                height=rec.height,
                small=rec.height < cutoff,
            )
        )
    return out


def _support_region(domain: Domain, recs) -> Region:
    cells = {}
    for r in recs:
        for c in r.cells:
            cells.setdefault(c, []).append(r.arc)
    return Region(domain, cells)


def _components(domain: Domain, recs) -> list[list[TrivialLoopRecord]]:
    """Connected components under closed support intersection."""
    by_edge = {}
    for i, r in enumerate(recs):
        by_edge.setdefault(r.edge, []).append(i)
    parent = list(range(len(recs)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def unite(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for e, idxs in by_edge.items():
        for i in idxs:
            for j in idxs:
                if i < j and closed_touch(domain, recs[i].arc, recs[j].arc):
                    unite(i, j)
            for j in by_edge.get(e + 2, []):
                if closed_touch(domain, recs[i].arc, recs[j].arc):
                    unite(i, j)
    groups = {}
    for i in range(len(recs)):
        groups.setdefault(find(i), []).append(recs[i])
    return list(groups.values())


@dataclass(frozen=True)
class Cluster:
    index: int
    parity: str
    loop_ids: tuple
    region: Region


@dataclass
class ClusterReport:
    """Clusters, outside geometry, and per-link labels of one configuration.

    `labels` maps (edge, pos) to "cluster" (interior), "eta" (on a cluster
    boundary), or "out"; the out set is eta + out_strict.  `outside` is the
    closure of the open outside, whose area is `vol_outside`.

    `eta_fixed` lists the frozen boundary bars (edge, t) lying on a cluster
    boundary: on rectangles the top/bottom identifications act as bars, and
    a cluster sealed against the domain boundary is bounded by them rather
    than by links of the configuration.  They carry no shift/flip freedom
    but must travel with eta so that the repaired pair stays invertible.
    """

    cfg: LinkConfig
    domain: Domain
    params: SimParams
    loops: Loops
    trivials: list
    clusters: list
    outside: Region
    vol_outside: float
    labels: dict
    cluster_of: dict
    eta: tuple
    out_strict: tuple
    eta_fixed: tuple
    covered: frozenset
    exposed: frozenset

    @property
    def out_links(self) -> tuple:
        return self.eta + self.out_strict

    @property
    def ell(self) -> int:
        return self.loops.n_loops


def build_clusters(cfg: LinkConfig, domain: Domain, params: SimParams, loops=None) -> ClusterReport:
    if domain != cfg.domain:
        raise ValueError("domain does not match the configuration")
    if loops is None:
        loops = trace_loops(cfg)
    trivials = classify_trivial(loops, params)
    smalls = [r for r in trivials if r.small]

    gardens = []
    for comp in _components(domain, smalls):
        gardens.append((comp, fill_holes(domain, _support_region(domain, comp))))
    keep = [True] * len(gardens)
    for i, (_, ri) in enumerate(gardens):
        for j, (_, rj) in enumerate(gardens):
            if i == j or not keep[i] or not keep[j]:
                continue
            if rj.contains_region(ri) and not (ri.contains_region(rj) and j > i):
                keep[i] = False
    survivors = [g for g, k in zip(gardens, keep) if k]
    survivors.sort(
        key=lambda g: (0 if g[0][0].parity == PRIMAL else 1, min(g[1].cells, default=0))
    )
    clusters = [
        Cluster(idx, comp[0].parity, tuple(r.loop_id for r in comp), region)
        for idx, (comp, region) in enumerate(survivors)
    ]

    union = Region.union(domain, [c.region for c in clusters])
    outside = Region(domain, union.complement_cells())
    vol_outside = outside.site_volume()

    labels, cluster_of = {}, {}
    eta, out_strict = [], []
    for e in domain.edges:
        for pos, t in enumerate(cfg.edge_times(e)):
            lab = "out"
            for c in clusters:
                if c.region.closed_contains_wall(e, t):
                    lab = "cluster" if c.region.interior_contains_wall(e, t) else "eta"
                    cluster_of[(e, pos)] = c.index
                    break
            labels[(e, pos)] = lab
            if lab == "eta":
                eta.append((e, pos))
            elif lab == "out":
                out_strict.append((e, pos))

    eta_fixed = []
    if not domain.is_torus:
        par = domain.boundary_parity
        for c in clusters:
            for e in domain.edges:
                if edge_parity(e) != par:
                    continue
                for t in (domain.t_lo, domain.t_hi):
                    if c.region.closed_contains_wall(e, t):
                        eta_fixed.append((e, t))
        eta_fixed = sorted(set(eta_fixed))

    small_ids = {r.loop_id for r in trivials if r.small}
    tall_ids = {r.loop_id for r in trivials if not r.small}
    covered, exposed = set(), set()
    for e, pos in eta + out_strict:
        if cfg.edge_kinds(e)[pos] == BAR:
            sides = loops.link_loops(e, pos)
            below, above = sides["below"], sides["above"]
            tb, ta = below in tall_ids, above in tall_ids
            sb, sa = below in small_ids, above in small_ids
            if (tb and ta) or (tb and sa) or (sb and ta):
                covered.add((e, pos))
                continue
        exposed.add((e, pos))

    # every small loop must sit inside the closed cluster union, so that
    # every loop meeting the open outside is long
    for r in smalls:
        if not union.contains_region(_support_region(domain, [r])):
            raise RuntimeError("small loop leaks outside the clusters")
    talls_outside = 0
    for r in trivials:
        if r.small:
            continue
        near = any(
            closed_touch(domain, r.arc, iv)
            for c in r.cells
            for iv in outside.intervals(c)
        )
        if near:
            talls_outside += 1
    if len(covered) > 2 * talls_outside:
        raise RuntimeError("covered links exceed twice the tall loops outside")

    return ClusterReport(
        cfg=cfg,
        domain=domain,
        params=params,
        loops=loops,
        trivials=trivials,
        clusters=clusters,
        outside=outside,
        vol_outside=vol_outside,
        labels=labels,
        cluster_of=cluster_of,
        eta=tuple(eta),
        out_strict=tuple(out_strict),
        eta_fixed=tuple(eta_fixed),
        covered=frozenset(covered),
        exposed=frozenset(exposed),
    )


# ---------------------------------------------------------------------------
# boundary component and perimeter

@dataclass
class BoundaryComponent:
    """Free component at x0 after removing the boundary-linked small loops.

    `perimeter` = vertical boundary length + 2 * (wall crossings of the
    boundary parity); the horizontal boundary length equals the second term
    exactly, which is asserted on every call.
    """

    region: Region
    curves: list
    perimeter: float
    vertical_length: float
    crossings: int
    p_region: Region
    p_loop_ids: tuple


def boundary_component(cfg: LinkConfig, domain: Domain, params: SimParams, x0, loops=None) -> BoundaryComponent:
    if loops is None:
        loops = trace_loops(cfg)
    trivials = classify_trivial(loops, params)
    par = domain.boundary_parity
    smalls = [r for r in trivials if r.small and r.parity == par]
    lo_e, hi_e = min(domain.edges), max(domain.edges)

    def hits_boundary(r):
        if r.edge in (lo_e, hi_e):
            return True
        if domain.is_torus:
            return False
        a, b = r.arc
        return a == domain.t_lo or b == domain.t_hi

    chosen = [
        r
        for comp in _components(domain, smalls)
        if any(hits_boundary(m) for m in comp)
        for r in comp
    ]
    p_region = _support_region(domain, chosen)
    p_ids = tuple(sorted(r.loop_id for r in chosen))

    x, t = x0
    cell = math.floor(x + 0.5)
    if cell not in domain.sites:
        raise ValueError(f"x0 site {cell} outside the chain")
    if domain.is_torus:
        t = domain.wrap_time(t)
    elif not domain.t_lo <= t <= domain.t_hi:
        raise ValueError(f"x0 time {t} outside the domain")

    region = component_at(domain, p_region.complement_cells(), cell, t)
    if region is None:
        return BoundaryComponent(Region(domain), [], 0.0, 0.0, 0, p_region, p_ids)
    vert, horiz, crossings, curves = boundary_stats(domain, region)
    n_cross = crossings[par]
    if horiz != 2.0 * n_cross:
        raise RuntimeError("perimeter decomposition mismatch")
    return BoundaryComponent(
        region, curves, vert + 2.0 * n_cross, vert, n_cross, p_region, p_ids
    )


# ---------------------------------------------------------------------------
# block census

@dataclass(frozen=True)
class BlockOutside:
    """Blocks meeting the open outside and the links they hold."""

    blocks: tuple
    n_links: int

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)


def block_outside(report: ClusterReport, domain: Domain, params: SimParams) -> BlockOutside:
    chosen, coords = [], set()
    for b in enumerate_blocks(domain, params.h, params.n):
        row = [(b.t_lo, b.t_hi)]
        if any(
            intervals_overlap_length(domain, report.outside.intervals(c), row) > 0.0
            for c in b.sites
        ):
            chosen.append(b)
            coords.add((b.i, b.j))
    count = 0
    for lk in report.cfg.links():
        key = (block_col_of_edge(lk.x_left), block_row_of_time(domain, params.h, params.n, lk.t))
        if key in coords:
            count += 1
    return BlockOutside(tuple(chosen), count)


# ---------------------------------------------------------------------------
# repair map

@dataclass
class RepairOutput:
    """Repaired configuration, its boundary data, and the undo bits.

    `bits` maps every repaired link (edge, t) to (shifted, flipped); undoing
    them reproduces the input exactly, which is checked on every call along
    with the loop-count gain and outside-volume growth guarantees.  The
    volumes are edge-centre measures: for each edge column, the length of
    time not covered by the (image) clusters, summed over the primal columns
    for vol1 and over all columns otherwise.

    `eta_bar` holds the images of the cluster-boundary links plus the frozen
    boundary bars that seal clusters against the domain boundary; without
    the frozen ones a fully sealed column would be indistinguishable from an
    open one in the pair (omega_bar, eta_bar).
    """

    omega_bar: LinkConfig
    eta_bar: frozenset
    bits: dict
    link_region: dict
    out_links: tuple
    covered: frozenset
    exposed: frozenset
    cluster_regions: tuple
    outside: Region
    ell: int
    ell_bar: int
    delta_ell: int
    vol1_outside: float
    vol_outside: float
    vol_outside_before: float
    report: ClusterReport


def repair(cfg: LinkConfig, domain: Domain, params: SimParams) -> RepairOutput:
    if domain.kind != PRIMAL:
        raise ValueError("repair is defined on primal rectangles only")
    report = build_clusters(cfg, domain, params)

    mapped, bits, link_region = [], {}, {}
    # frozen boundary bars never move: they sit on primal edges and only
    # bound primal clusters, which the map keeps fixed
    eta_keys, out_keys = set(report.eta_fixed), []
    for e in domain.edges:
        times, kinds = cfg.edge_times(e), cfg.edge_kinds(e)
        for pos, (t, k) in enumerate(zip(times, kinds)):
            lab = report.labels[(e, pos)]
            if lab == "out":
                shifted = edge_parity(e) == DUAL
                ne = e - 1 if shifted else e
                nk = BAR
                flipped = k == CROSS
            else:
                ci = report.cluster_of[(e, pos)]
                shifted = report.clusters[ci].parity == DUAL
                ne = e - 1 if shifted else e
                nk = k
                flipped = False
            if ne not in domain.edges:
                raise ShiftCollisionError(f"repair shift leaves the domain at edge {e}")
            mapped.append((ne, t, nk))
            bits[(ne, t)] = (shifted, flipped)
            if lab != "out":
                link_region[(ne, t)] = ci
            if lab == "eta":
                eta_keys.add((ne, t))
            if lab != "cluster":
                out_keys.append((ne, t, nk))
    if len(bits) != len(mapped):
        raise ShiftCollisionError("repair shift stacked two links on one point")
    try:
        omega_bar = config_from_links(domain, mapped)
    except ValueError as err:
        raise ShiftCollisionError(str(err)) from None

    rebuilt = config_from_links(
        domain,
        [
            (ne + 1 if bits[(ne, t)][0] else ne, t, CROSS if bits[(ne, t)][1] else nk)
            for ne, t, nk in mapped
        ],
    )
    if rebuilt != cfg or omega_bar.n_links != cfg.n_links:
        raise RuntimeError("repair reconstruction failed")

    regions = tuple(
        (c.parity, c.region if c.parity == PRIMAL else c.region.shifted_cells(-1))
        for c in report.clusters
    )
    for _, reg in regions:
        if any(c not in domain.sites for c in reg.cells):
            raise ShiftCollisionError("shifted cluster leaves the domain")
    union_bar = Region.union(domain, [r for _, r in regions])
    outside_bar = Region(domain, union_bar.complement_cells())

    loops_bar = trace_loops(omega_bar)
    ell, ell_bar = report.loops.n_loops, loops_bar.n_loops
    delta_ell = ell_bar - ell
    trivials_bar = classify_trivial(loops_bar, params)
    small_ids = {r.loop_id for r in trivials_bar if r.small}
    tall_ids = {r.loop_id for r in trivials_bar if not r.small}

    covered, exposed = set(), set()
    for ne, t, nk in out_keys:
        if nk == BAR:
            pos = bisect.bisect_left(omega_bar.edge_times(ne), t)
            sides = loops_bar.link_loops(ne, pos)
            tb, ta = sides["below"] in tall_ids, sides["above"] in tall_ids
            sb, sa = sides["below"] in small_ids, sides["above"] in small_ids
            if (tb and ta) or (tb and sa) or (sb and ta):
                covered.add((ne, t))
                continue
        exposed.add((ne, t))

    n_ex, n_ex_bar = len(report.exposed), len(exposed)
    if 4 * delta_ell < n_ex or n_ex < n_ex_bar:
        raise RuntimeError("repair loop-count gain below the exposed-link bound")

    beta = domain.beta
    orig_union = Region.union(domain, [c.region for c in report.clusters])
    vol1_bar = sum(
        beta - union_bar.wall_length(e)
        for e in domain.edges
        if edge_parity(e) == PRIMAL
    )
    vol_bar = sum(beta - union_bar.wall_length(e) for e in domain.edges)
    vol_before = sum(beta - orig_union.wall_length(e) for e in domain.edges)
    if vol1_bar < 0.5 * vol_bar - 1e-9 or vol_bar < vol_before - 1e-9:
        raise RuntimeError("repair outside volume shrank")

    for rec in loops_bar.records:
        meets = any(
            intervals_overlap_length(domain, outside_bar.intervals(s), [piece]) > 0.0
            for s in rec.sites
            for piece in rec.pieces(s)
        )
        if meets and not (
            rec.kind in _COLUMN_KINDS and edge_parity(rec.edge) == PRIMAL
        ):
            raise RuntimeError("non-trivial loop meets the repaired outside")

    return RepairOutput(
        omega_bar=omega_bar,
        eta_bar=frozenset(eta_keys),
        bits=bits,
        link_region=link_region,
        out_links=tuple(sorted(out_keys)),
        covered=frozenset(covered),
        exposed=frozenset(exposed),
        cluster_regions=regions,
        outside=outside_bar,
        ell=ell,
        ell_bar=ell_bar,
        delta_ell=delta_ell,
        vol1_outside=vol1_bar,
        vol_outside=vol_bar,
        vol_outside_before=vol_before,
        report=report,
    )


def preimages(rep: RepairOutput, domain: Domain, params: SimParams) -> list[LinkConfig]:
    """All configurations the repair map sends to (omega_bar, eta_bar).

    Enumerates shift/flip choices: strictly-outside links carry independent
    bits, boundary links follow their image cluster, and interior links move
    with their cluster.  Each candidate is verified by running the repair
    map again, so the result is exact.
    """
    if len(rep.out_links) > 12:
        raise ValueError("preimage enumeration capped at 12 out-links")
    clustered, strict = [], []
    for lk in rep.omega_bar.links():
        e, t, k = lk.x_left, lk.t, lk.kind
        key = (e, t)
        if key in rep.link_region:
            clustered.append((e, t, k, rep.link_region[key]))
        else:
            strict.append((e, t, k))
    region_ids = sorted({r for _, _, _, r in clustered})

    strict_opts = []
    for e, t, k in strict:
        opts = []
        for s in (0, 1):
            e2 = e + s
            if e2 not in domain.edges:
                continue
            opts.append((e2, t, k))
            if k == BAR:
                opts.append((e2, t, CROSS))
        strict_opts.append(opts)

    found, seen = [], set()
    for region_bits in product((False, True), repeat=len(region_ids)):
        rbit = dict(zip(region_ids, region_bits))
        base, valid = [], True
        for e, t, k, r in clustered:
            e2 = e + 1 if rbit[r] else e
            if e2 not in domain.edges:
                valid = False
                break
            base.append((e2, t, k))
        if not valid:
            continue
        for combo in product(*strict_opts):
            try:
                cand = config_from_links(domain, base + list(combo))
            except ValueError:
                continue
            if cand in seen:
                continue
            try:
                crep = repair(cand, domain, params)
            except ShiftCollisionError:
                continue
            if crep.omega_bar == rep.omega_bar and crep.eta_bar == rep.eta_bar:
                seen.add(cand)
                found.append(cand)
    return found


def count_preimages(rep: RepairOutput, domain: Domain, params: SimParams) -> int:
    return len(preimages(rep, domain, params))


def sample_record(report: ClusterReport, block=None, boundary=None, rep=None) -> dict:
    """Flat JSON-ready summary of one analyzed sample."""
    return {
        "ell": report.loops.n_loops,
        "vol_outside": report.vol_outside,
        "n_exposed": len(report.exposed),
        "n_covered": len(report.covered),
        "n_blocks": None if block is None else block.n_blocks,
        "perim_C_x0": None if boundary is None else boundary.perimeter,
        "repair_delta_ell": None if rep is None else rep.delta_ell,
    }
