"""Estimators over sample streams: error bars, loop estimators, diagnostics.

Monte Carlo series are correlated, so naive standard errors lie.  The
binning ladder averages neighbouring pairs level by level; the binned
error grows until bins are longer than the correlation time and then
plateaus, which also yields the integrated autocorrelation time.

The loop estimators evaluate local quantum observables directly on link
configurations: cutting the columns at the marked points splits the loops
into strands, and summing the observable tensor over one color per strand,
weighted by 1/n per loop through a marked point, reproduces the chain
expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .geometry import edge_parity
from .loops import LinkCollisionError, pairing_at, trace_loops
from .clusters import boundary_component, classify_trivial
from . import regions as rg

_MIN_BINS = 32


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    se: float
    tau: float
    n: int


def _ladder(x):
    """Standard error estimates at each pair-binning level."""
    m = x.size
    out = [(1, math.sqrt(x.var(ddof=1) / m))]
    level = x
    while level.size // 2 >= _MIN_BINS:
        if level.size % 2:
            level = level[:-1]
        level = 0.5 * (level[0::2] + level[1::2])
        out.append((out[-1][0] * 2, math.sqrt(level.var(ddof=1) / level.size)))
    return out


def binned_stats(series) -> SeriesStats:
    """Mean, autocorrelation-corrected standard error, and tau_int."""
    x = np.asarray(series, dtype=float)
    m = x.size
    if m == 0:
        raise ValueError("empty series")
    mean = float(x.mean())
    if m < 2 or float(x.var(ddof=1)) == 0.0:
        return SeriesStats(mean, 0.0, 0.5, m)
    ladder = _ladder(x)
    best = max(se for _, se in ladder)
    tau = max(0.5, 0.5 * (best / ladder[0][1]) ** 2)
    return SeriesStats(mean, best, tau, m)


def autocorrelation_time(series) -> float:
    return binned_stats(series).tau


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    std_error: float
    n_samples: int
    autocorrelation_time: float
    bins: tuple


def estimate(series) -> EstimatorResult:
    """Binning-ladder estimate of a (possibly correlated) scalar series."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    if x.size < 2 or float(x.var(ddof=1)) == 0.0:
        return EstimatorResult(float(x.mean()), 0.0, x.size, 0.5, ((1, 0.0),))
    ladder = _ladder(x)
    st = binned_stats(x)
    return EstimatorResult(st.mean, st.se, st.n, st.tau, tuple(ladder))


# ---------------------------------------------------------------------------
# loop-side quantum estimators

def _spec_points(specs):
    """Marked points of a list of observables, nudging exact collisions.

    Two observables may share a site and a time (equal-time products); the
    later one is lifted by a hair so the cut order realizes the operator
    product.  The bias is far below any Monte Carlo error.
    """
    points, seen = [], set()
    for spec in specs:
        for x in spec.sites:
            t = spec.t
            while (x, t) in seen:
                t += 1e-9
            seen.add((x, t))
            points.append((x, t))
    return points


def _combined_tensor(specs, n):
    tensor = np.ones(())
    for spec in specs:
        k = len(spec.sites)
        if spec.tensor.shape != (n,) * (2 * k):
            raise ValueError("observable tensor does not match n")
        tensor = np.tensordot(tensor, spec.tensor, axes=0)
    k = tensor.ndim // 2
    # interleave back to (rows..., cols...) in point order
    if k:
        perm = []
        ofs = 0
        for spec in specs:
            kk = len(spec.sites)
            perm.extend(range(ofs, ofs + kk))
            ofs += 2 * kk
        ofs = 0
        for spec in specs:
            kk = len(spec.sites)
            perm.extend(range(ofs + kk, ofs + 2 * kk))
            ofs += 2 * kk
        tensor = tensor.transpose(perm)
    return tensor, k


def _pairing_arrays(pairing, k, n):
    """Index arrays over strand colorings and the marked-loop count.

    Each pair of cut lips takes one free color; `above[i]` and `below[i]`
    give the color index of point i's upper and lower lip for every one of
    the n^k strand colorings.  Resealing the cuts and following the strand
    matching counts the loops through the marked points.
    """
    pairs, pair_no = [], {}
    for key in sorted(pairing):
        if key in pair_no:
            continue
        other = pairing[key]
        pair_no[key] = pair_no[other] = len(pairs)
        pairs.append((key, other))
    colors = np.indices((n,) * len(pairs)).reshape(len(pairs), -1)
    above = [colors[pair_no[(i, "above")]] for i in range(k)]
    below = [colors[pair_no[(i, "below")]] for i in range(k)]

    seen, ell = set(), 0
    for start in pair_no:
        if start in seen:
            continue
        ell += 1
        cur = start
        while cur not in seen:
            seen.add(cur)
            i, lip = pairing[cur]
            seen.add((i, lip))
            cur = (i, "above" if lip == "below" else "below")
    return above, below, ell


def sample_value(cfg, n, specs, _cache=None) -> float:
    """One-configuration value of a product of local observables."""
    specs = [s for s in specs if s.sites]
    tensor, k = _combined_tensor(specs, n)
    if k == 0:
        return float(tensor)
    points = _spec_points(specs)
    for bump in range(6):
        try:
            pairing = pairing_at(cfg, points)
            break
        except LinkCollisionError:
            if bump == 5:
                raise
            points = [(x, t + 1e-9) for x, t in points]
    key = tuple(sorted((a, pairing[a]) for a in pairing))
    if _cache is not None and key in _cache:
        above, below, ell = _cache[key]
    else:
        above, below, ell = _pairing_arrays(pairing, k, n)
        if _cache is not None:
            _cache[key] = (above, below, ell)
    return float(tensor[tuple(above) + tuple(below)].sum()) * n ** (-ell)


def loop_estimator(samples, domain, n, obs) -> EstimatorResult:
    """Monte Carlo estimate of a local observable via strand colorings."""
    specs = list(obs) if isinstance(obs, (list, tuple)) else [obs]
    n_sites = sum(len(s.sites) for s in specs)
    if n_sites > 4:
        raise ValueError("observable support exceeds 4 sites")
    for s in specs:
        for x in s.sites:
            if x not in domain.sites:
                raise ValueError(f"observable site {x} outside the domain")
    cache = {}
    vals = [sample_value(cfg, n, specs, cache) for cfg in samples]
    return estimate(vals)


# ---------------------------------------------------------------------------
# dimerization order parameter

def _central_edges(domain):
    lo, hi = min(domain.sites), max(domain.sites)
    mid = 0.5 * (lo + hi)
    half = 0.25 * (hi - lo + 1)
    return [e for e in domain.edges if abs(e + 0.5 - mid) <= half]


def _probe_times(domain, n_times=8):
    span = domain.t_hi - domain.t_lo
    return [domain.t_lo + (j + 0.5) * span / n_times for j in range(n_times)]


def dimer_order_parameter(samples, domain, params) -> EstimatorResult:
    """Primal-minus-dual coverage of probe points by small trivial loops.

    Probes sit on a fixed 8-time grid on every edge in the central half of
    the domain; a probe on an edge counts as covered when a small trivial
    loop on that edge spans the probe time.
    """
    edges = _central_edges(domain)
    times = _probe_times(domain)
    by_par = {"primal": [], "dual": []}
    for e in edges:
        by_par[edge_parity(e)].append(e)
    vals = []
    for cfg in samples:
        smalls = [
            r for r in classify_trivial(trace_loops(cfg), params) if r.small
        ]
        arcs = {}
        for r in smalls:
            arcs.setdefault(r.edge, []).append(r.arc)
        merged = {
            e: rg.merge_intervals(domain, ivs) for e, ivs in arcs.items()
        }
        rho = {}
        for par, es in by_par.items():
            hit = sum(
                1
                for e in es
                for t in times
                if e in merged and rg.contains_time(domain, merged[e], t)
            )
            rho[par] = hit / (len(es) * len(times)) if es else 0.0
        vals.append(rho["primal"] - rho["dual"])
    return estimate(vals)


# ---------------------------------------------------------------------------
# perimeter tail

@dataclass(frozen=True)
class PerimeterTail:
    vs: tuple
    survival: tuple
    slope: float
    intercept: float
    r_squared: float
    n_samples: int


def _log_linear_fit(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def perimeter_tail(samples, domain, params, x0) -> PerimeterTail:
    """Empirical survival of perim(C(x0)) and its log-linear decay fit."""
    perims = np.array(
        [boundary_component(cfg, domain, params, x0).perimeter for cfg in samples]
    )
    m = perims.size
    if m == 0:
        raise ValueError("empty sample stream")
    vmax = float(perims.max())
    grid = np.linspace(0.0, vmax, 25)[1:-1] if vmax > 0 else np.array([])
    surv = np.array([(perims > v).mean() for v in grid])
    keep = surv >= 25.0 / m
    if keep.sum() < 4:
        raise ValueError("insufficient tail data (fewer than 4 usable points)")
    slope, intercept, r2 = _log_linear_fit(grid[keep], np.log(surv[keep]))
    return PerimeterTail(
        tuple(grid.tolist()), tuple(surv.tolist()), slope, intercept, r2, m
    )


# ---------------------------------------------------------------------------
# correlation decay

@dataclass(frozen=True)
class CorrelationDecay:
    separations: tuple
    correlations: tuple
    std_errors: tuple
    rate: float
    r_squared: float


def correlation_decay(samples, domain, n, obs_a, obs_b, separations) -> CorrelationDecay:
    """Truncated correlations <A; B_d> over spatial separations, with fit.

    B is translated d sites to the right for each separation d; the decay
    rate is minus the slope of log |corr| against d.
    """
    samples = list(samples)
    cache = {}
    va = np.array([sample_value(cfg, n, [obs_a], cache) for cfg in samples])
    ma = float(va.mean())
    corrs, ses = [], []
    for d in separations:
        shifted = type(obs_b)(
            tuple(x + d for x in obs_b.sites), obs_b.tensor, obs_b.t
        )
        for x in shifted.sites:
            if x not in domain.sites:
                raise ValueError(f"separation {d} pushes B outside the domain")
        vb = np.array([sample_value(cfg, n, [shifted], cache) for cfg in samples])
        vab = np.array(
            [sample_value(cfg, n, [obs_a, shifted], cache) for cfg in samples]
        )
        mb = float(vb.mean())
        corrs.append(float(vab.mean()) - ma * mb)
        w = vab - va * mb - ma * vb + 2 * ma * mb
        ses.append(binned_stats(w).se)
    usable = [(d, c) for d, c in zip(separations, corrs) if c != 0.0]
    if len(usable) >= 2:
        slope, _, r2 = _log_linear_fit(
            [d for d, _ in usable], [math.log(abs(c)) for _, c in usable]
        )
        rate = -slope
    else:
        rate, r2 = 0.0, 0.0
    return CorrelationDecay(
        tuple(separations), tuple(corrs), tuple(ses), rate, r2
    )


# ---------------------------------------------------------------------------
# stochastic domination audit

@dataclass(frozen=True)
class DominationRow:
    window: int
    k: int
    empirical: float
    poisson: float
    flagged: bool


@dataclass(frozen=True)
class DominationReport:
    rows: tuple

    @property
    def flagged(self) -> bool:
        return any(r.flagged for r in self.rows)


def domination_check(samples, domain, n, windows) -> DominationReport:
    """Compare link counts in windows against the dominating Poisson law.

    A window is (edges, (t0, t1)); the link count in it should be
    stochastically below Poisson(n * total length).  A row is flagged when
    the empirical tail P[count >= k] exceeds the Poisson tail by more than
    three binomial standard errors.
    """
    samples = list(samples)
    m = len(samples)
    rows = []
    for wi, (edges, iv) in enumerate(windows):
        edges = set(edges)
        for e in edges:
            if e not in domain.edges:
                raise ValueError(f"window edge {e} outside the domain")
        pieces = rg.ival_pieces(domain, tuple(iv))
        lam = n * sum(rg.ival_length(domain, p) for p in pieces) * len(edges)
        counts = np.array(
            [
                sum(
                    1
                    for lk in cfg.links()
                    if lk.x_left in edges
                    and rg.contains_time(domain, pieces, lk.t)
                )
                for cfg in samples
            ]
        )
        kmax = int(max(counts.max(initial=0) + 1, math.ceil(lam + 4 * math.sqrt(lam) + 4)))
        for k in range(1, kmax + 1):
            phat = float((counts >= k).mean())
            ptail = float(sps.poisson.sf(k - 1, lam))
            se = math.sqrt(max(ptail * (1.0 - ptail), 1e-300) / m)
            rows.append(DominationRow(wi, k, phat, ptail, phat - ptail > 3.0 * se))
    return DominationReport(tuple(rows))
