"""Estimator checks: coloring dictionary vs diagonalization, fits, audits.

The hand values below come from enumerating the strand pairings on a single
edge explicitly: cutting both columns at the marked time leaves two pairs of
lips, and each link pattern pins which lips pair up and how many marked
loops the resealing closes.
"""

import math

import numpy as np
import pytest

from loopgas import observables as ob
from loopgas import quantum as qm
from loopgas import sampler as sa
from loopgas.geometry import make_domain
from loopgas.linkconfig import (
    BAR,
    CROSS,
    SimParams,
    config_from_links,
    empty_config,
    make_rng,
    sample_poisson,
)

T1 = make_domain("torus", 1, 1.0)


@pytest.fixture(scope="module")
def torus_runs():
    """Cached sample streams reused by the diagonalization comparisons."""
    out = {}
    for n, L, u in [(2, 1, 0.0), (2, 1, 0.5), (3, 2, 0.5)]:
        dom = make_domain("torus", L, 1.0)
        sched = sa.Schedule(burnin=300, sweeps=4000, seed=11)
        out[(n, L, u)] = (dom, sa.run_chain(SimParams(n=n, u=u), dom, sched).samples)
    return out


def test_identity_value_is_exactly_one():
    rng = make_rng(5)
    dom = make_domain("torus", 2, 1.5)
    ident = qm.identity_observable()
    for _ in range(20):
        cfg = sample_poisson(dom, 0.5, 2.0, rng)
        assert ob.sample_value(cfg, 3, [ident]) == 1.0


@pytest.mark.parametrize(
    "links,q,e00,e01",
    [
        # no links: each column reseals onto itself, two marked loops
        ([], 0.25, 0.25, 0.25),
        # one bar: lips pair across the edge on each side, one marked loop
        ([(0, 0.7, BAR)], 1.0, 0.5, 0.0),
        # one cross: above lips pair with the opposite column below
        ([(0, 0.7, CROSS)], 0.5, 0.5, 0.0),
        # two bars straddling the cut behave like one bar on each side
        ([(0, 0.2, BAR), (0, 0.5, BAR)], 1.0, 0.5, 0.0),
    ],
)
def test_hand_values_on_one_edge(links, q, e00, e01):
    n = 2
    cfg = config_from_links(T1, links)
    t = 0.35
    assert ob.sample_value(cfg, n, [qm.q_observable(n, 0, t=t)]) == q
    assert (
        ob.sample_value(cfg, n, [qm.elementary_observable(n, (0, 1), (0, 0), (0, 0), t=t)])
        == e00
    )
    assert (
        ob.sample_value(cfg, n, [qm.elementary_observable(n, (0, 1), (0, 1), (0, 1), t=t)])
        == e01
    )


def test_elementary_sample_terms_stay_in_unit_interval():
    rng = make_rng(9)
    dom = make_domain("torus", 2, 1.0)
    n = 2
    specs = [
        qm.elementary_observable(n, (0, 1), (0, 0), (0, 0), t=0.4),
        qm.elementary_observable(n, (-1, 0), (0, 1), (0, 1), t=0.6),
    ]
    for _ in range(40):
        cfg = sample_poisson(dom, 0.5, 2.5, rng)
        for spec in specs:
            v = ob.sample_value(cfg, n, [spec])
            assert 0.0 <= v <= 1.0


def test_estimator_matches_bar_count_closed_form(torus_runs):
    # u=0, one edge: k bars give value 1 for k >= 1 and 1/4 for k = 0,
    # so <Q> = e^{n beta} / (n^2 + e^{n beta} - 1)
    dom, samples = torus_runs[(2, 1, 0.0)]
    exact = math.exp(2.0) / (4.0 + math.exp(2.0) - 1.0)
    est = ob.loop_estimator(samples, dom, 2, qm.q_observable(2, 0, t=0.35))
    assert abs(est.mean - exact) < 4 * est.std_error


@pytest.mark.parametrize("point", [(2, 1, 0.5), (3, 2, 0.5)])
def test_estimator_matches_diagonalization(torus_runs, point):
    n, L, u = point
    dom, samples = torus_runs[point]
    uc, bc = qm.chain_params(n, u, 1.0)
    model = qm.build_model(n, L, uc)
    t = 0.35
    for obs in (
        qm.q_observable(n, 0, t=t),
        qm.elementary_observable(n, (0, 1), (0, 0), (0, 0), t=t),
        qm.elementary_observable(n, (0, 1), (0, 1), (0, 1), t=t),
    ):
        est = ob.loop_estimator(samples, dom, n, obs)
        exact = qm.gibbs_expectation(model, obs, bc)
        assert abs(est.mean - exact) < 4 * max(est.std_error, 1e-4)


def test_product_of_identical_projectors_collapses(torus_runs):
    # P e^{-eps H} P -> P as eps -> 0, so the pair estimate matches the
    # single-projector one up to Monte Carlo error
    n, L, u = 3, 2, 0.5
    dom, samples = torus_runs[(n, L, u)]
    p = qm.elementary_observable(n, (0, 1), (0, 0), (0, 0), t=0.35)
    single = ob.loop_estimator(samples, dom, n, p)
    pair = ob.loop_estimator(samples, dom, n, [p, p])
    se = math.hypot(single.std_error, pair.std_error)
    assert abs(single.mean - pair.mean) < 4 * max(se, 1e-4)


def test_estimator_validates_support():
    dom = make_domain("torus", 2, 1.0)
    cfg = [empty_config(dom)]
    with pytest.raises(ValueError):
        ob.loop_estimator(cfg, dom, 2, [qm.q_observable(2, 0)] * 3)
    with pytest.raises(ValueError):
        ob.loop_estimator(cfg, dom, 2, qm.q_observable(2, 5))


def test_estimate_recovers_iid_statistics():
    rng = np.random.default_rng(3)
    xs = rng.normal(2.0, 1.0, size=4096)
    res = ob.estimate(xs)
    naive = xs.std(ddof=1) / math.sqrt(xs.size)
    assert abs(res.mean - 2.0) < 4 * res.std_error
    assert 0.7 * naive < res.std_error < 1.3 * naive
    assert res.n_samples == 4096
    assert 0.3 < res.autocorrelation_time < 2.0


def test_doubling_samples_shrinks_error():
    rng = np.random.default_rng(7)
    xs = rng.exponential(1.0, size=8192)
    half = ob.estimate(xs[:4096])
    full = ob.estimate(xs)
    ratio = half.std_error / full.std_error
    assert 0.7 * math.sqrt(2) < ratio < 1.3 * math.sqrt(2)


def test_autocorrelated_series_inflates_tau():
    rng = np.random.default_rng(11)
    rho = 0.9
    xs = np.empty(8192)
    xs[0] = rng.normal()
    for k in range(1, xs.size):
        xs[k] = rho * xs[k - 1] + math.sqrt(1 - rho * rho) * rng.normal()
    res = ob.estimate(xs)
    naive = xs.std(ddof=1) / math.sqrt(xs.size)
    assert res.autocorrelation_time > 3.0
    assert res.std_error > 2.0 * naive


def test_dimer_vanishes_on_empty_torus():
    dom = make_domain("torus", 3, 2.0)
    res = ob.dimer_order_parameter(
        [empty_config(dom)] * 5, dom, SimParams(2, 0.5, kappa=1.0)
    )
    assert res.mean == 0.0 and res.std_error == 0.0


@pytest.mark.parametrize("edge,psi", [(0, 0.25), (1, -0.125)])
def test_dimer_sign_on_constructed_tiling(edge, psi):
    # bars at +-0.2 close a height-0.4 trivial loop on one central edge;
    # the cutoff 0.6 keeps it small while the sealed remainders stay tall.
    # central edges of the L=3 rectangle are -1, 0, 1 and the 8-time probe
    # grid meets (-0.2, 0.2) at +-0.125, so coverage is 2 of 8 probe slots.
    dom = make_domain("primal", 3, 2.0)
    params = SimParams(2, 0.5, kappa=1.0 / 1.2)
    cfg = config_from_links(dom, [(edge, -0.2, BAR), (edge, 0.2, BAR)])
    res = ob.dimer_order_parameter([cfg] * 4, dom, params)
    assert res.mean == pytest.approx(psi, abs=1e-12)
    assert res.std_error == 0.0


def test_perimeter_tail_degenerates_on_empty_stream():
    dom = make_domain("primal", 3, 2.0)
    params = SimParams(4, 0.5)
    tail = ob.perimeter_tail([empty_config(dom)] * 40, dom, params, (0.5, 0.0))
    assert all(s == 1.0 for s in tail.survival)
    assert tail.slope == 0.0


def test_perimeter_tail_decays_on_sampled_stream():
    dom = make_domain("primal", 3, 2.0)
    params = SimParams(4, 0.5)
    sched = sa.Schedule(burnin=200, sweeps=3000, thin=2, seed=21)
    samples = sa.run_chain(params, dom, sched).samples
    tail = ob.perimeter_tail(samples, dom, params, (0.5, 0.0))
    assert tail.slope < 0.0
    assert all(b <= a for a, b in zip(tail.survival, tail.survival[1:]))
    assert tail.n_samples == len(samples)


def test_correlation_identity_partner_vanishes(torus_runs):
    n, L, u = 3, 2, 0.5
    dom, samples = torus_runs[(n, L, u)]
    dec = ob.correlation_decay(
        samples, dom, n, qm.q_observable(n, 0, t=0.4), qm.identity_observable(), (0, 1)
    )
    assert dec.correlations == (0.0, 0.0)


def test_correlation_matches_diagonalization(torus_runs):
    n, L, u = 3, 2, 0.5
    dom, samples = torus_runs[(n, L, u)]
    p = qm.elementary_observable(n, (-1, 0), (0, 0), (0, 0), t=0.4)
    dec = ob.correlation_decay(samples, dom, n, p, p, (0, 1, 2))
    uc, bc = qm.chain_params(n, u, 1.0)
    model = qm.build_model(n, L, uc)
    for d, corr, se in zip(dec.separations, dec.correlations, dec.std_errors):
        shifted = qm.ObservableSpec((-1 + d, d), p.tensor, p.t)
        exact = qm.truncated_correlation(model, p, shifted, bc, 0.0)
        assert abs(corr - exact) < 4 * max(se, 1e-4)
    # separation 0 is a variance-like quantity for a projector
    assert dec.correlations[0] > -4 * dec.std_errors[0]


def test_correlation_rejects_separation_outside_domain(torus_runs):
    n, L, u = 3, 2, 0.5
    dom, samples = torus_runs[(n, L, u)]
    p = qm.elementary_observable(n, (0, 1), (0, 0), (0, 0))
    with pytest.raises(ValueError):
        ob.correlation_decay(samples[:5], dom, n, p, p, (0, 5))


def test_domination_base_process_matches_poisson():
    dom = make_domain("torus", 2, 2.0)
    sched = sa.Schedule(burnin=100, sweeps=3000, seed=13)
    samples = sa.run_chain(SimParams(1, 0.5), dom, sched).samples
    windows = [((0,), (0.0, 2.0)), ((-1, 0, 1), (0.25, 1.75))]
    report = ob.domination_check(samples, dom, 1, windows)
    assert not report.flagged
    assert {r.window for r in report.rows} == {0, 1}


def test_domination_holds_above_base(torus_runs):
    n, L, u = 3, 2, 0.5
    dom, samples = torus_runs[(n, L, u)]
    report = ob.domination_check(samples, dom, n, [((0,), (0.0, 1.0))])
    assert not report.flagged


def test_domination_flags_negative_control(torus_runs):
    # a stream sampled at n=3 is far denser than the n=1 Poisson law
    dom, samples = torus_runs[(3, 2, 0.5)]
    report = ob.domination_check(samples, dom, 1, [((-1, 0, 1), (0.0, 1.0))])
    assert report.flagged


def test_domination_validates_window_edges():
    dom = make_domain("torus", 2, 1.0)
    with pytest.raises(ValueError):
        ob.domination_check([empty_config(dom)], dom, 2, [((7,), (0.0, 1.0))])
