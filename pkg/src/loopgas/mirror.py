"""Discrete mirror model: ray-traced loops with site weights and n^ell.

Sites live on the even sublattice (sigma + tau even) of a width x height
grid; rays travel along the diagonals (+-1, +-1).  A vertical mirror
reflects the spatial component of the direction, a horizontal mirror the
time component, and an empty site lets the ray pass straight.  A ray
zigzagging through vertical mirrors stays inside one corridor (the column
pair {j, j+1}), which is what lets the tracer jump between the sparse
non-vertical sites instead of stepping site by site.

In the continuum dictionary a corridor is a chain site, a horizontal
mirror at column sigma is a double bar on edge sigma-1, and an empty site
is a cross there; vertical mirrors are plain propagation.

`ell` counts every loop and every boundary-to-boundary path that touches
at least one site, paths counting exactly like loops.  Face coloring is by
the parity of the face center's column: even columns are black.  The
frozen boundary ring that favors loops around black faces places vertical
mirrors on odd columns and horizontal mirrors on even ones.
"""

import bisect
import itertools
from dataclasses import dataclass, field

import numpy as np

from .linkconfig import make_rng
from .observables import estimate

MIRROR_V = 0
MIRROR_H = 1
MIRROR_NONE = 2

_CHARS = "VH."
_DIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))

_ENUM_LIMIT = 3 ** 10


def _transform(state, d):
    ds, dt = d
    if state == MIRROR_V:
        return (-ds, dt)
    if state == MIRROR_H:
        return (ds, -dt)
    return d


@dataclass(frozen=True)
class MirrorParams:
    """Site weights (summing to one) and the loop fugacity n."""

    p_v: float
    p_h: float
    p_empty: float
    n: float

    def __post_init__(self):
        ps = (self.p_v, self.p_h, self.p_empty)
        if any(p < 0 or p > 1 for p in ps):
            raise ValueError("state weights must lie in [0, 1]")
        if abs(sum(ps) - 1.0) > 1e-9:
            raise ValueError("state weights must sum to 1")
        if self.n <= 0:
            raise ValueError("n must be > 0")

    @property
    def weights(self):
        return (self.p_v, self.p_h, self.p_empty)


def rescaled_params(u, epsilon, n) -> MirrorParams:
    """Parameter triple whose epsilon -> 0 limit is the continuous model."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0 <= u <= 1:
        raise ValueError("u must lie in [0, 1]")
    return MirrorParams(1.0 - epsilon, (1.0 - u) * epsilon, u * epsilon, n)


@dataclass
class MirrorConfig:
    """Mirror states on the even sublattice of a finite grid.

    `grid[sigma, tau]` holds the state on valid cells and -1 elsewhere;
    `frozen` marks boundary-condition sites the dynamics must not touch.
    """

    width: int
    height: int
    grid: np.ndarray
    frozen: np.ndarray
    tau_periodic: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1 x 1")
        if self.tau_periodic and self.height % 2:
            raise ValueError("periodic time needs an even height")

    def is_site(self, sigma, tau):
        return (
            0 <= sigma < self.width
            and 0 <= tau < self.height
            and (sigma + tau) % 2 == 0
        )

    def sites(self):
        return [
            (s, t)
            for s in range(self.width)
            for t in range(s % 2, self.height, 2)
        ]

    def free_sites(self):
        return [(s, t) for s, t in self.sites() if not self.frozen[s, t]]

    def copy(self):
        return MirrorConfig(
            self.width, self.height, self.grid.copy(), self.frozen.copy(),
            self.tau_periodic,
        )

    def to_text(self):
        lines = []
        for tau in range(self.height):
            row = [
                _CHARS[self.grid[s, tau]] if self.is_site(s, tau) else " "
                for s in range(self.width)
            ]
            lines.append("".join(row))
        return "\n".join(lines)


def config_from_text(text, tau_periodic=False):
    lines = text.splitlines()
    height = len(lines)
    width = max(len(line) for line in lines)
    cfg = free_config(width, height, tau_periodic=tau_periodic)
    for tau, line in enumerate(lines):
        for sigma in range(width):
            ch = line[sigma] if sigma < len(line) else " "
            if cfg.is_site(sigma, tau):
                if ch not in _CHARS:
                    raise ValueError(f"unexpected state {ch!r} at a site")
                cfg.grid[sigma, tau] = _CHARS.index(ch)
            elif ch.strip():
                raise ValueError(f"state {ch!r} on an off-parity cell")
    return cfg


def free_config(width, height, fill=MIRROR_V, tau_periodic=False) -> MirrorConfig:
    grid = np.full((width, height), -1, dtype=np.int8)
    frozen = np.zeros((width, height), dtype=bool)
    cfg = MirrorConfig(width, height, grid, frozen, tau_periodic)
    for s, t in cfg.sites():
        grid[s, t] = fill
    return cfg


def ring_config(width, height, color="black", fill=MIRROR_V) -> MirrorConfig:
    """Box with a one-site frozen ring circling faces of the given color."""
    if color not in ("black", "white"):
        raise ValueError("color must be 'black' or 'white'")
    cfg = free_config(width, height, fill=fill)
    want_v = 1 if color == "black" else 0
    for s, t in cfg.sites():
        if s in (0, width - 1) or t in (0, height - 1):
            cfg.grid[s, t] = MIRROR_V if s % 2 == want_v else MIRROR_H
            cfg.frozen[s, t] = True
    return cfg


def bridge_config(L, beta, epsilon) -> MirrorConfig:
    """Time-periodic box matching a continuum chain of 2L sites.

    Rows are spaced epsilon/2 in continuum time so that each column offers
    beta/epsilon event slots; the outer columns are frozen to vertical
    mirrors, closing the edge corridors the way a chain end does.
    """
    rows = 2.0 * beta / epsilon
    height = int(round(rows))
    if abs(rows - height) > 1e-9 or height % 2:
        raise ValueError("2*beta/epsilon must be an even integer row count")
    cfg = free_config(2 * L + 1, height, tau_periodic=True)
    for s, t in cfg.sites():
        if s in (0, cfg.width - 1):
            cfg.frozen[s, t] = True
    return cfg


# ---------------------------------------------------------------------------
# ray tracing

def _event_lists(cfg):
    return [
        sorted(np.flatnonzero(cfg.grid[s] > MIRROR_V).tolist())
        for s in range(cfg.width)
    ]


def _next_stop(cfg, events, j, tau, dt, probe):
    """First stopping site strictly after tau in the corridor j direction dt."""
    best = None
    for col in (j, j + 1):
        if col >= cfg.width:
            continue
        cand = list(events[col])
        if probe is not None and probe[0] == col:
            bisect.insort(cand, probe[1])
        if not cand:
            continue
        if dt > 0:
            i = bisect.bisect_right(cand, tau)
            if i < len(cand):
                step = cand[i] - tau
            elif cfg.tau_periodic:
                step = cand[0] + cfg.height - tau
            else:
                continue
        else:
            i = bisect.bisect_left(cand, tau)
            if i > 0:
                step = tau - cand[i - 1]
            elif cfg.tau_periodic:
                step = tau + cfg.height - cand[-1]
            else:
                continue
        if best is None or step < best[0]:
            best = (step, col)
    if best is None:
        return None
    step, col = best
    return col, (tau + dt * step) % cfg.height


def _ray_steps(cfg, events, sigma, tau, d, probe=None):
    """Yield (site, d_in) stops of the ray leaving (sigma, tau) along d.

    Stops are the non-vertical sites (plus the probe); the generator ends
    by yielding ("exit",) when the ray leaves the box.  The caller applies
    the state transform and decides when to halt.
    """
    while True:
        ds, dt = d
        j = sigma if ds > 0 else sigma - 1
        if j < 0 or j > cfg.width - 2:
            yield ("exit", None, None)
            return
        hit = _next_stop(cfg, events, j, tau, dt, probe)
        if hit is None:
            yield ("exit", None, None)
            return
        sigma, tau = hit
        d_in = (1 if sigma == j + 1 else -1, dt)
        new_d = yield ("site", (sigma, tau), d_in)
        d = new_d


def _follow(cfg, events, start, d, probe=None):
    """Trace to exit, closure at the start state, or the probe site.

    Returns (kind, arrivals) with kind one of "exit", "cycle", "probe";
    arrivals lists (site, d_in, d_out) for every stop before the end, and
    for "probe" the last entry carries d_out=None.
    """
    arrivals = []
    gen = _ray_steps(cfg, events, start[0], start[1], d, probe)
    msg = next(gen)
    while True:
        kind, site, d_in = msg
        if kind == "exit":
            return "exit", arrivals
        if probe is not None and site == probe:
            arrivals.append((site, d_in, None))
            return "probe", arrivals
        d_out = _transform(cfg.grid[site], d_in)
        arrivals.append((site, d_in, d_out))
        if site == (start[0], start[1]) and d_out == d:
            return "cycle", arrivals
        msg = gen.send(d_out)


def mirror_trace_loops(cfg) -> int:
    """Number of loops and paths that touch at least one site."""
    events = _event_lists(cfg)
    ell = 0
    # corridors with no stopping site at all are free strands
    for j in range(cfg.width - 1):
        if not events[j] and not events[j + 1]:
            ell += 1
    # vertical mirrors on the outer columns graze rays that bounce once
    for col in {0, cfg.width - 1}:
        ell += int(np.count_nonzero(cfg.grid[col] == MIRROR_V))
    if cfg.width == 1:
        ell += int(np.count_nonzero(cfg.grid[0] == MIRROR_V))

    visited = set()

    def mark(run):
        for site, d_in, d_out in run:
            visited.add((site, d_out))
            visited.add((site, (-d_in[0], -d_in[1])))

    for sigma in range(cfg.width):
        for tau in events[sigma]:
            for d in _DIRS:
                if ((sigma, tau), d) in visited:
                    continue
                visited.add(((sigma, tau), d))
                kind, run = _follow(cfg, events, (sigma, tau), d)
                mark(run)
                if kind == "exit":
                    d_in0 = _transform(cfg.grid[sigma, tau], d)
                    back = (-d_in0[0], -d_in0[1])
                    if ((sigma, tau), back) not in visited:
                        visited.add(((sigma, tau), back))
                        _, run2 = _follow(cfg, events, (sigma, tau), back)
                        mark(run2)
                ell += 1
    return ell


def mirror_trivial_loops(cfg) -> int:
    """Loops whose stops are exactly two distinct horizontal mirrors.

    This is the discrete twin of a trivial loop closed by two bars.
    """
    events = _event_lists(cfg)
    visited = set()
    count = 0
    for sigma in range(cfg.width):
        for tau in events[sigma]:
            for d in _DIRS:
                if ((sigma, tau), d) in visited:
                    continue
                visited.add(((sigma, tau), d))
                kind, run = _follow(cfg, events, (sigma, tau), d)
                for site, d_in, d_out in run:
                    visited.add((site, d_out))
                    visited.add((site, (-d_in[0], -d_in[1])))
                if kind != "cycle":
                    continue
                stops = [site for site, _, _ in run]
                if (
                    len(stops) == 2
                    and stops[0] != stops[1]
                    and all(cfg.grid[s] == MIRROR_H for s in stops)
                ):
                    count += 1
    return count


# ---------------------------------------------------------------------------
# heat bath

def _through_counts(cfg, events, site):
    """Trajectory counts through `site` for each of its three states.

    Traces the four stubs once to learn how the rest of the configuration
    matches them to each other (or to exits), then counts the connected
    components produced by each internal wiring.
    """
    sigma, tau = site
    col = list(events[sigma])
    i = bisect.bisect_left(col, tau)
    if i < len(col) and col[i] == tau:
        del col[i]
    probe_events = list(events)
    probe_events[sigma] = col

    external = {}
    for d in _DIRS:
        if d in external:
            continue
        kind, run = _follow(cfg, probe_events, site, d, probe=site)
        if kind == "exit":
            external[d] = None
        else:
            d_in = run[-1][1]
            external[d] = (-d_in[0], -d_in[1])
            external[(-d_in[0], -d_in[1])] = d

    counts = []
    for state in (MIRROR_V, MIRROR_H, MIRROR_NONE):
        internal = {}
        for d in _DIRS:
            out = _transform(state, d)
            internal[(-d[0], -d[1])] = out
            internal[out] = (-d[0], -d[1])
        seen, c = set(), 0
        for d in _DIRS:
            if d in seen:
                continue
            c += 1
            stack = [d]
            while stack:
                cur = stack.pop()
                if cur in seen:
                    continue
                seen.add(cur)
                stack.append(internal[cur])
                if external[cur] is not None:
                    stack.append(external[cur])
        counts.append(c)
    return counts


def site_conditional(cfg, params, site):
    """Heat-bath law of one site given the rest: (P[v], P[h], P[empty])."""
    sigma, tau = site
    if not cfg.is_site(sigma, tau):
        raise ValueError(f"{site} is not a lattice site")
    counts = _through_counts(cfg, _event_lists(cfg), site)
    w = [p * params.n ** c for p, c in zip(params.weights, counts)]
    z = sum(w)
    return tuple(x / z for x in w)


def mirror_heatbath_step(cfg, params, site, rng) -> MirrorConfig:
    """Resample one free site from its conditional law."""
    sigma, tau = site
    if not cfg.is_site(sigma, tau):
        raise ValueError(f"{site} is not a lattice site")
    if cfg.frozen[sigma, tau]:
        raise ValueError(f"site {site} is frozen by the boundary condition")
    probs = site_conditional(cfg, params, site)
    out = cfg.copy()
    out.grid[sigma, tau] = _draw(probs, rng)
    return out


def _draw(probs, rng):
    r = rng.random()
    acc = 0.0
    for state, p in enumerate(probs):
        acc += p
        if r < acc:
            return state
    return len(probs) - 1


@dataclass
class MirrorRun:
    samples: list
    ells: list
    final: MirrorConfig


def run_mirror_chain(params, cfg, schedule) -> MirrorRun:
    """Systematic-scan heat bath; samples every `thin` sweeps after burnin.

    The loop count is tracked through the local deltas and checked against
    a full retrace at the end.
    """
    cfg = cfg.copy()
    rng = make_rng(schedule.seed, schedule.chain_index)
    free = cfg.free_sites()
    if not free:
        raise ValueError("no free sites to update")
    events = _event_lists(cfg)
    ell = mirror_trace_loops(cfg)
    samples, ells = [], []
    for sweep in range(schedule.burnin + schedule.sweeps):
        for site in free:
            counts = _through_counts(cfg, events, site)
            w = [p * params.n ** c for p, c in zip(params.weights, counts)]
            z = sum(w)
            new = _draw([x / z for x in w], rng)
            old = cfg.grid[site]
            if new != old:
                ell += counts[new] - counts[old]
                cfg.grid[site] = new
                col = events[site[0]]
                if old > MIRROR_V:
                    col.remove(site[1])
                if new > MIRROR_V:
                    bisect.insort(col, site[1])
        if sweep >= schedule.burnin and (sweep - schedule.burnin) % schedule.thin == 0:
            samples.append(cfg.copy())
            ells.append(ell)
    if ell != mirror_trace_loops(cfg):
        raise RuntimeError("tracked loop count drifted from a full retrace")
    return MirrorRun(samples, ells, cfg)


# ---------------------------------------------------------------------------
# exact enumeration

@dataclass(frozen=True)
class MirrorEnumeration:
    sites: tuple
    probs: dict
    ells: dict = field(repr=False)

    def marginal(self, site):
        i = self.sites.index(site)
        out = [0.0, 0.0, 0.0]
        for states, p in self.probs.items():
            out[states[i]] += p
        return tuple(out)

    def argmax(self):
        return max(self.probs, key=self.probs.get)


def mirror_enumerate_exact(params, cfg) -> MirrorEnumeration:
    """Brute-force distribution over the free sites of a small box."""
    free = cfg.free_sites()
    if 3 ** len(free) > _ENUM_LIMIT:
        raise ValueError(f"{len(free)} free sites is too many to enumerate")
    work = cfg.copy()
    weights, ells = {}, {}
    for states in itertools.product((MIRROR_V, MIRROR_H, MIRROR_NONE), repeat=len(free)):
        for site, st in zip(free, states):
            work.grid[site] = st
        ell = mirror_trace_loops(work)
        ells[states] = ell
        w = params.n ** ell
        for st in states:
            w *= params.weights[st]
        weights[states] = w
    z = sum(weights.values())
    probs = {k: v / z for k, v in weights.items()}
    return MirrorEnumeration(tuple(free), probs, ells)


# ---------------------------------------------------------------------------
# order parameter

def _circled_fractions(cfg):
    """Fractions of black and white faces circled by a unit loop."""
    v = cfg.grid == MIRROR_V
    h = cfg.grid == MIRROR_H
    hits = {0: [0, 0], 1: [0, 0]}
    taus = range(cfg.height) if cfg.tau_periodic else range(1, cfg.height - 1)
    for sc in range(1, cfg.width - 1):
        for tc in taus:
            if (sc + tc) % 2 == 0:
                continue
            up, dn = (tc + 1) % cfg.height, (tc - 1) % cfg.height
            ok = v[sc - 1, tc] and v[sc + 1, tc] and h[sc, up] and h[sc, dn]
            rec = hits[sc % 2]
            rec[0] += bool(ok)
            rec[1] += 1
    black, white = hits[0], hits[1]
    fb = black[0] / black[1] if black[1] else 0.0
    fw = white[0] / white[1] if white[1] else 0.0
    return fb, fw


def black_white_order(samples):
    """Per-sample circled-face fraction difference, black minus white."""
    vals = []
    for cfg in samples:
        fb, fw = _circled_fractions(cfg)
        vals.append(fb - fw)
    return estimate(vals)
