"""The link configuration omega: storage, base sampling, moves, serialization.

A configuration is a finite set of links (edge, time, kind) with kind cross
or double-bar.  The base measure P_1 puts independent Poisson processes on
every edge column: rate u for crosses, rate 1-u for bars (total rate 1 per
unit column length).  Storage is per-edge time-sorted parallel arrays so that
loop tracing can binary-search "next link above t on this edge".
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .geometry import Domain

CROSS = "X"
BAR = "B"


@dataclass(frozen=True)
class Link:
    x_left: int
    t: float
    kind: str  # 'X' | 'B'


@dataclass(frozen=True)
class SimParams:
    """Model parameters: weight n per loop, cross fraction u, cutoff kappa.

    The small-loop height cutoff is 1/(kappa*n); kappa = 0 disables it (all
    trivial loops small).  h sets the block height h/n.
    """

    n: float
    u: float
    kappa: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 0.0 <= self.u <= 1.0:
            raise ValueError(f"u must lie in [0,1], got {self.u}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")

    @property
    def small_cutoff(self) -> float:
        """Height below which a trivial loop is small; inf when kappa = 0."""
        if self.kappa == 0.0:
            return float("inf")
        return 1.0 / (self.kappa * self.n)


class LinkConfig:
    """Immutable-by-convention per-edge sorted link storage."""

    __slots__ = ("domain", "_times", "_kinds", "n_links")

    def __init__(self, domain: Domain, times=None, kinds=None):
        self.domain = domain
        if times is None:
            times = {x: [] for x in domain.edges}
            kinds = {x: [] for x in domain.edges}
        self._times = times  # dict edge -> sorted list of floats
        self._kinds = kinds  # dict edge -> list of 'X'/'B'
        self.n_links = sum(len(v) for v in times.values())

    def edge_times(self, x_left: int) -> list[float]:
        return self._times[x_left]

    def edge_kinds(self, x_left: int) -> list[str]:
        return self._kinds[x_left]

    def links(self):
        for x in self.domain.edges:
            for t, k in zip(self._times[x], self._kinds[x]):
                yield Link(x, t, k)

    def link_at(self, x_left: int, pos: int) -> Link:
        return Link(x_left, self._times[x_left][pos], self._kinds[x_left][pos])

    def __eq__(self, other):
        if not isinstance(other, LinkConfig):
            return NotImplemented
        return (
            self.domain == other.domain
            and self._times == other._times
            and self._kinds == other._kinds
        )

    def __hash__(self):
        items = tuple(
            (x, tuple(self._times[x]), tuple(self._kinds[x]))
            for x in self.domain.edges
        )
        return hash((self.domain, items))

    def __repr__(self):
        return f"<LinkConfig {self.domain.kind} L={self.domain.L} N={self.n_links}>"


def empty_config(domain: Domain) -> LinkConfig:
    return LinkConfig(domain)


def config_from_links(domain: Domain, links) -> LinkConfig:
    """Build a config from (x_left, t, kind) triples, validating as we go."""
    times = {x: [] for x in domain.edges}
    kinds = {x: [] for x in domain.edges}
    for x, t, k in links:
        if x not in times:
            raise ValueError(f"edge {x} outside domain")
        if k not in (CROSS, BAR):
            raise ValueError(f"bad link kind {k!r}")
        if not domain.time_in_range(t):
            raise ValueError(f"time {t} outside domain range")
        times[x].append(float(t))
        kinds[x].append(k)
    for x in times:
        order = sorted(range(len(times[x])), key=times[x].__getitem__)
        ts = [times[x][i] for i in order]
        ks = [kinds[x][i] for i in order]
        for a, b in zip(ts, ts[1:]):
            if a == b:
                raise ValueError(f"duplicate link time {a} on edge {x}")
        times[x], kinds[x] = ts, ks
    return LinkConfig(domain, times, kinds)


# ---------------------------------------------------------------------------
# moves

@dataclass(frozen=True)
class Insert:
    link: Link


@dataclass(frozen=True)
class Delete:
    x_left: int
    pos: int


@dataclass(frozen=True)
class Flip:
    x_left: int
    pos: int


def apply_move(cfg: LinkConfig, move) -> LinkConfig:
    """Return the mutated configuration; cfg itself is untouched."""
    times = dict(cfg._times)
    kinds = dict(cfg._kinds)
    if isinstance(move, Insert):
        ln = move.link
        if ln.x_left not in times:
            raise ValueError(f"edge {ln.x_left} outside domain")
        if not cfg.domain.time_in_range(ln.t):
            raise ValueError(f"time {ln.t} outside domain range")
        if ln.kind not in (CROSS, BAR):
            raise ValueError(f"bad link kind {ln.kind!r}")
        ts = times[ln.x_left]
        i = bisect.bisect_left(ts, ln.t)
        if i < len(ts) and ts[i] == ln.t:
            raise ValueError(f"duplicate (edge,t) = ({ln.x_left},{ln.t})")
        times[ln.x_left] = ts[:i] + [ln.t] + ts[i:]
        ks = kinds[ln.x_left]
        kinds[ln.x_left] = ks[:i] + [ln.kind] + ks[i:]
    elif isinstance(move, Delete):
        ts = times[move.x_left]
        if not 0 <= move.pos < len(ts):
            raise IndexError(f"link index {move.pos} out of range on edge {move.x_left}")
        times[move.x_left] = ts[: move.pos] + ts[move.pos + 1 :]
        ks = kinds[move.x_left]
        kinds[move.x_left] = ks[: move.pos] + ks[move.pos + 1 :]
    elif isinstance(move, Flip):
        ks = kinds[move.x_left]
        if not 0 <= move.pos < len(ks):
            raise IndexError(f"link index {move.pos} out of range on edge {move.x_left}")
        flipped = BAR if ks[move.pos] == CROSS else CROSS
        kinds[move.x_left] = ks[: move.pos] + [flipped] + ks[move.pos + 1 :]
    else:
        raise TypeError(f"unknown move {move!r}")
    return LinkConfig(cfg.domain, times, kinds)


# ---------------------------------------------------------------------------
# sampling

def make_rng(seed, chain_index: int = 0) -> np.random.Generator:
    """The reproducibility contract: one generator per (seed, chain index)."""
    ss = np.random.SeedSequence(seed, spawn_key=(chain_index,))
    return np.random.Generator(np.random.PCG64(ss))


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(rng)


def sample_base(domain: Domain, u: float, rng) -> LinkConfig:
    """One draw from P_1 (unit-rate links, cross with probability u)."""
    return sample_poisson(domain, u, 1.0, rng)


def sample_poisson(domain: Domain, u: float, rate: float, rng) -> LinkConfig:
    """Poisson links at the given total rate per unit column length."""
    rng = _as_rng(rng)
    times = {}
    kinds = {}
    for x in domain.edges:
        k = rng.poisson(rate * domain.beta)
        ts = np.sort(rng.uniform(domain.t_lo, domain.t_hi, size=k))
        marks = rng.uniform(size=k) < u
        times[x] = [float(t) for t in ts]
        kinds[x] = [CROSS if m else BAR for m in marks]
    return LinkConfig(domain, times, kinds)


# ---------------------------------------------------------------------------
# serialization

def _fmt_time(t: float) -> str:
    return format(t, ".17g")


def serialize(cfg: LinkConfig) -> str:
    d = cfg.domain
    lines = [f"# loopcfg v1 kind={d.kind} L={d.L} beta={_fmt_time(d.beta)}"]
    for x in d.edges:
        for t, k in zip(cfg._times[x], cfg._kinds[x]):
            lines.append(f"{x}\t{_fmt_time(t)}\t{k}")
    return "\n".join(lines) + "\n"


def deserialize(text: str) -> LinkConfig:
    from .geometry import make_domain

    lines = text.splitlines()
    if not lines or not lines[0].startswith("# loopcfg v1 "):
        raise ValueError("missing loopcfg v1 header")
    fields = {}
    for tok in lines[0].split()[3:]:
        key, _, val = tok.partition("=")
        fields[key] = val
    try:
        domain = make_domain(fields["kind"], int(fields["L"]), float(fields["beta"]))
    except KeyError as e:
        raise ValueError(f"header missing field {e}") from None

    triples = []
    for ln_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {ln_no}: expected 'x_left<TAB>t<TAB>kind'")
        try:
            x = int(parts[0])
            t = float(parts[1])
        except ValueError:
            raise ValueError(f"line {ln_no}: bad number") from None
        triples.append((x, t, parts[2]))
    try:
        return config_from_links(domain, triples)
    except ValueError as e:
        raise ValueError(f"invalid configuration: {e}") from None
