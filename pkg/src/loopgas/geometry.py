"""Lattice and domain bookkeeping.

The chain is Lambda_L = {-L+1, ..., L} (2L sites, 2L-1 nearest-neighbour
edges).  An edge is named by its left site x_left; it is *primal* when x_left
is even, *dual* when odd.  Configurations live on edge columns
{x_left + 1/2} x time, with three boundary conditions:

* ``torus``     -- time is periodic with circumference beta, times in [0, beta);
* ``primal``    -- open rectangle (-L+1/2, L+1/2) x (-beta/2, beta/2), L odd,
                   boundary points (x, +-beta/2) identified with (x+1, +-beta/2)
                   across every primal edge (acting as frozen double-bars);
* ``dual``      -- same rectangle with L even and the identification across
                   dual edges.

Blocks discretize the domain into 2-column x (h/n) tiles for the
configuration-counting audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PRIMAL = "primal"
DUAL = "dual"

_KIND_ALIASES = {
    "torus": "torus",
    "primal": "primal",
    "primal-rect": "primal",
    "dual": "dual",
    "dual-rect": "dual",
}


def edge_parity(x_left: int) -> str:
    """Parity of the edge (x_left, x_left + 1): primal iff x_left is even."""
    return PRIMAL if x_left % 2 == 0 else DUAL


@dataclass(frozen=True)
class Domain:
    kind: str  # 'torus' | 'primal' | 'dual'
    L: int
    beta: float

    @property
    def sites(self) -> range:
        return range(-self.L + 1, self.L + 1)

    @property
    def n_sites(self) -> int:
        return 2 * self.L

    @property
    def edges(self) -> range:
        """x_left values of the chain's edges."""
        return range(-self.L + 1, self.L)

    @property
    def n_edges(self) -> int:
        return 2 * self.L - 1

    @property
    def t_lo(self) -> float:
        return 0.0 if self.kind == "torus" else -self.beta / 2.0

    @property
    def t_hi(self) -> float:
        return self.beta if self.kind == "torus" else self.beta / 2.0

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def boundary_parity(self) -> str:
        """Parity of the edges carrying boundary identifications.

        For the torus (no space-time boundary links) this is the parity of
        the extreme edges, which is what the boundary-component construction
        uses.
        """
        if self.kind == "torus":
            return edge_parity(-self.L + 1)
        return self.kind

    def boundary_pairs(self) -> list[int]:
        """x_left of every edge carrying top/bottom identifications."""
        if self.kind == "torus":
            return []
        return [x for x in self.edges if edge_parity(x) == self.kind]

    def wrap_time(self, t: float) -> float:
        if self.kind == "torus":
            return t % self.beta
        return t

    def time_in_range(self, t: float) -> bool:
        if self.kind == "torus":
            return 0.0 <= t < self.beta
        return self.t_lo < t < self.t_hi

    def circle_dist(self, a: float, b: float) -> float:
        """|a - b|, shortest way around on the torus."""
        d = abs(a - b)
        if self.kind == "torus":
            d = min(d, self.beta - d)
        return d


def make_domain(kind: str, L: int, beta: float) -> Domain:
    try:
        canon = _KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unknown domain kind {kind!r}") from None
    if not isinstance(L, int) or L < 1:
        raise ValueError(f"L must be a positive integer, got {L!r}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if canon == "primal" and L % 2 == 0:
        raise ValueError(f"primal rectangle needs odd L, got L={L}")
    if canon == "dual" and L % 2 == 1:
        raise ValueError(f"dual rectangle needs even L, got L={L}")
    return Domain(canon, L, float(beta))


@dataclass(frozen=True)
class Block:
    """Clipped block b'_{i,j}: site-cells {2i+1, 2i+2} x one time row.

    Column i owns primal edge 2i and dual edge 2i+1 (when inside the chain).
    """

    i: int
    j: int
    sites: tuple[int, ...]  # cells of the domain in this block column
    t_lo: float
    t_hi: float
    primal_edge: int | None
    dual_edge: int | None
    neighbors: tuple[tuple[int, int], ...] = field(default=(), compare=False)


def block_col_of_edge(x_left: int) -> int:
    """Block column that owns the edge (floor division pairs 2i with 2i+1)."""
    return x_left // 2


def block_col_of_site(x: int) -> int:
    """Block column whose cells {2i+1, 2i+2} contain site x."""
    return (x - 1) // 2


def block_row_of_time(domain: Domain, h: float, n: float, t: float) -> int:
    row_h = h / n
    j = int((t - domain.t_lo) / row_h)
    n_rows = _n_rows(domain, row_h)
    # guard against float edge effects at the very top of the domain
    return min(max(j, 0), n_rows - 1)


def _n_rows(domain: Domain, row_h: float) -> int:
    return max(1, math.ceil(domain.beta / row_h - 1e-12))


def enumerate_blocks(domain: Domain, h: float, n: float) -> list[Block]:
    """All nonempty blocks clipped to the domain, with grid adjacency."""
    if not h > 0 or not n > 0:
        raise ValueError("h and n must be positive")
    row_h = h / n
    n_rows = _n_rows(domain, row_h)
    cols: dict[int, tuple[int, ...]] = {}
    for x in domain.sites:
        i = block_col_of_site(x)
        cols[i] = cols.get(i, ()) + (x,)

    col_ids = sorted(cols)
    coords = [(i, j) for i in col_ids for j in range(n_rows)]
    coord_set = set(coords)

    def row_neighbors(j: int) -> list[int]:
        out = []
        if domain.is_torus and n_rows > 1:
            out = [(j - 1) % n_rows, (j + 1) % n_rows]
        else:
            if j > 0:
                out.append(j - 1)
            if j < n_rows - 1:
                out.append(j + 1)
        return sorted(set(out))

    blocks = []
    for i, j in coords:
        t_lo = domain.t_lo + j * row_h
        t_hi = min(domain.t_lo + (j + 1) * row_h, domain.t_hi)
        nbrs = []
        for i2 in (i - 1, i + 1):
            if (i2, j) in coord_set:
                nbrs.append((i2, j))
        for j2 in row_neighbors(j):
            if (i, j2) in coord_set and j2 != j:
                nbrs.append((i, j2))
        pe = 2 * i if 2 * i in domain.edges else None
        de = 2 * i + 1 if 2 * i + 1 in domain.edges else None
        blocks.append(
            Block(
                i=i,
                j=j,
                sites=cols[i],
                t_lo=t_lo,
                t_hi=t_hi,
                primal_edge=pe,
                dual_edge=de,
                neighbors=tuple(sorted(nbrs)),
            )
        )
    return blocks
