"""Sampler checks: determinism, exact laws, balance, checkpoints."""

import numpy as np
import pytest
from scipy import stats

from loopgas import sampler as sa
from loopgas.geometry import make_domain
from loopgas.linkconfig import BAR, SimParams, make_rng, serialize
from loopgas.smallexact import kl_distribution_series


def _chi2_pvalue(counts, pmf_tail):
    """Chi-square p-value against [pmf..., tail], pooling cells below 5."""
    exp = np.asarray(pmf_tail) * counts.sum()
    keep = exp >= 5
    obs2 = np.append(counts[keep], counts[~keep].sum())
    exp2 = np.append(exp[keep], exp[~keep].sum())
    return stats.chisquare(obs2, exp2 * obs2.sum() / exp2.sum()).pvalue


def _count_hist(values, kmax):
    return np.bincount(np.minimum(values, kmax + 1), minlength=kmax + 2)


def test_run_is_deterministic():
    dom = make_domain("torus", 2, 0.7)
    params = SimParams(3, 0.5)
    sched = sa.Schedule(burnin=20, sweeps=200, thin=5, seed=42)
    a = sa.run_chain(params, dom, sched)
    b = sa.run_chain(params, dom, sched)
    assert [serialize(c) for c in a.samples] == [serialize(c) for c in b.samples]
    assert a.ells == b.ells
    assert a.proposed == b.proposed and a.accepted == b.accepted
    assert a.tau_ell == b.tau_ell


def test_chain_index_splits_streams():
    dom = make_domain("torus", 2, 0.7)
    params = SimParams(3, 0.5)
    a = sa.run_chain(params, dom, sa.Schedule(burnin=20, sweeps=300, seed=42))
    b = sa.run_chain(
        params, dom, sa.Schedule(burnin=20, sweeps=300, seed=42, chain_index=1)
    )
    assert a.ells != b.ells


@pytest.mark.parametrize("u", [0.0, 0.5, 1.0])
def test_tallies_account_for_every_step(u):
    dom = make_domain("torus", 2, 0.7)
    sched = sa.Schedule(burnin=50, sweeps=500, seed=3)
    res = sa.run_chain(SimParams(3, u), dom, sched)
    total = (sched.burnin + sched.sweeps) * sa.sweep_length(dom)
    assert sum(res.proposed.values()) == total
    assert all(res.accepted[m] <= res.proposed[m] for m in sa.MOVES)
    if u in (0.0, 1.0):
        assert res.proposed["flip"] == 0


@pytest.mark.parametrize("u,kind", [(0.0, BAR), (1.0, sa.CROSS)])
def test_endpoint_couplings_use_one_kind(u, kind):
    dom = make_domain("torus", 2, 0.9)
    res = sa.run_chain(SimParams(3, u), dom, sa.Schedule(burnin=30, sweeps=300, seed=8))
    kinds = {
        k for c in res.samples for e in c.domain.edges for k in c.edge_kinds(e)
    }
    assert kinds <= {kind}


def test_move_probabilities():
    assert sa.move_probabilities(0.5) == (0.4, 0.4, 0.2)
    assert sa.move_probabilities(0.0) == (0.5, 0.5, 0.0)
    assert sa.move_probabilities(1.0) == (0.5, 0.5, 0.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        sa.Schedule(burnin=-1, sweeps=10)
    with pytest.raises(ValueError):
        sa.Schedule(burnin=0, sweeps=0)
    with pytest.raises(ValueError):
        sa.Schedule(burnin=0, sweeps=10, thin=0)


def test_link_count_is_poisson_when_weights_cancel():
    # at n=1 the loop weight is identically 1, so N ~ Poisson(nu) exactly
    dom = make_domain("torus", 2, 1.0)
    res = sa.run_chain(
        SimParams(1, 0.5), dom, sa.Schedule(burnin=100, sweeps=12000, thin=6, seed=7)
    )
    nu = dom.n_edges * dom.beta
    counts = np.array([c.n_links for c in res.samples])
    kmax = int(stats.poisson.ppf(0.999, nu))
    pmf = [stats.poisson.pmf(k, nu) for k in range(kmax + 1)]
    p = _chi2_pvalue(_count_hist(counts, kmax), pmf + [stats.poisson.sf(kmax, nu)])
    assert p > 0.01


def test_stationary_joint_law_matches_series():
    """Empirical (N, ell) distribution agrees with the truncated series."""
    dom = make_domain("torus", 1, 0.3)
    u, n, big_k = 0.5, 2, 6
    law = kl_distribution_series(dom, u, n, big_k)
    res = sa.run_chain(
        SimParams(n, u), dom, sa.Schedule(burnin=200, sweeps=40000, thin=10, seed=11)
    )
    m = len(res.samples)
    hits = {}
    over = 0
    for cfg, l in zip(res.samples, res.ells):
        k = cfg.n_links
        if k > big_k:
            over += 1
        else:
            key = (k, l)
            hits[key] = hits.get(key, 0) + 1
    assert set(hits) <= set(law.probs), "sampled a (k, ell) cell of weight zero"
    for key, p in law.probs.items():
        if p < 1e-4:
            continue
        phat = hits.get(key, 0) / m
        se = np.sqrt(p * (1.0 - p) / m)
        assert abs(phat - p) <= 4.0 * se, (key, phat, p)
    over_se = np.sqrt(max(over / m * (1 - over / m), 1e-12) / m)
    assert over / m <= law.tail_probability + 4.0 * over_se


@pytest.mark.parametrize(
    "kind,L,beta,n,u,pairs",
    [
        ("torus", 2, 0.7, 3, 0.5, 10000),
        ("torus", 2, 0.7, 3, 0.0, 4000),
        ("torus", 2, 0.7, 3, 1.0, 4000),
        ("primal", 3, 0.9, 2, 0.4, 4000),
    ],
)
def test_detailed_balance(kind, L, beta, n, u, pairs):
    dom = make_domain(kind, L, beta)
    worst = sa.detailed_balance_audit(SimParams(n, u), dom, pairs, seed=17)
    assert worst <= 1e-12


def test_cached_loop_count_audit_fires():
    dom = make_domain("torus", 1, 0.1)
    state = sa.init_state(dom, seed=5)
    state.ell += 1
    with pytest.raises(RuntimeError, match="diverged"):
        sa.run_chain(
            SimParams(2, 0.5), dom, sa.Schedule(burnin=0, sweeps=1000), state=state
        )


def test_cached_loop_count_audit_passes_honest_run():
    dom = make_domain("torus", 2, 0.7)
    sa.run_chain(SimParams(3, 0.5), dom, sa.Schedule(burnin=0, sweeps=2500, seed=19))


def test_checkpoint_resume_matches_single_run(tmp_path):
    """30 + 30 sweeps through a checkpoint equals 60 sweeps in one go."""
    dom = make_domain("primal", 3, 0.8)
    params = SimParams(3, 0.5)
    full = sa.run_chain(params, dom, sa.Schedule(burnin=40, sweeps=60, thin=3, seed=13))
    path = tmp_path / "chain.links"
    first = sa.run_chain(
        params,
        dom,
        sa.Schedule(burnin=40, sweeps=30, thin=3, seed=13),
        checkpoint_path=path,
    )
    st = sa.read_checkpoint(path)
    assert st.sweep == 70
    assert serialize(st.cfg) == serialize(first.state.cfg)
    second = sa.run_chain(
        params, dom, sa.Schedule(burnin=0, sweeps=30, thin=3, seed=99), state=st
    )
    got = [serialize(c) for c in first.samples + second.samples]
    want = [serialize(c) for c in full.samples]
    assert got == want
    assert first.ells + second.ells == full.ells


def test_checkpoint_footer_required(tmp_path):
    dom = make_domain("torus", 1, 0.5)
    state = sa.init_state(dom, seed=1)
    path = tmp_path / "bare.links"
    path.write_text(serialize(state.cfg))
    with pytest.raises(ValueError, match="footer"):
        sa.read_checkpoint(path)
    with pytest.raises(RuntimeError):
        sa.read_checkpoint(tmp_path / "missing.links")


def test_t1_direct_law():
    # conditioned measure: bars arrive Poisson((1-u) n beta) on the column
    dom = make_domain("primal", 1, 0.5)
    params = SimParams(3, 0.5)
    rng = make_rng(21)
    cfgs = [sa.sample_T1(params, dom, rng) for _ in range(3000)]
    for c in cfgs[:200]:
        for e in c.domain.edges:
            assert all(k == BAR for k in c.edge_kinds(e))
            assert all(dom.t_lo < t < dom.t_hi for t in c.edge_times(e))
    lam = (1.0 - params.u) * params.n * dom.beta
    counts = np.array([c.n_links for c in cfgs])
    kmax = int(stats.poisson.ppf(0.999, lam))
    pmf = [stats.poisson.pmf(k, lam) for k in range(kmax + 1)]
    p = _chi2_pvalue(_count_hist(counts, kmax), pmf + [stats.poisson.sf(kmax, lam)])
    assert p > 0.01


def test_t1_rejection_agrees_with_direct():
    dom = make_domain("primal", 1, 0.5)
    params = SimParams(3, 0.5)
    rng = make_rng(22)
    direct = np.array([sa.sample_T1(params, dom, rng).n_links for _ in range(1500)])
    rej = np.array(
        [sa.sample_T1(params, dom, rng, method="rejection").n_links for _ in range(1500)]
    )
    kmax = int(max(direct.max(), rej.max()))
    for k in range(kmax + 1):
        pd_, pr_ = (direct == k).mean(), (rej == k).mean()
        se = np.sqrt(pd_ * (1 - pd_) / len(direct) + pr_ * (1 - pr_) / len(rej))
        if se > 0:
            assert abs(pd_ - pr_) <= 4.0 * se, (k, pd_, pr_)


@pytest.mark.parametrize("method", ["direct", "rejection"])
def test_t1_all_crosses_coupling_is_empty(method):
    dom = make_domain("primal", 3, 0.8)
    rng = make_rng(4)
    for _ in range(50):
        assert sa.sample_T1(SimParams(3, 1.0), dom, rng, method=method).n_links == 0


def test_t1_rejects_wrong_domain():
    rng = make_rng(0)
    with pytest.raises(ValueError):
        sa.sample_T1(SimParams(3, 0.5), make_domain("torus", 1, 0.5), rng)
    with pytest.raises(ValueError):
        sa.sample_T1(SimParams(3, 0.5), make_domain("dual", 2, 0.5), rng)


def test_window_counts_dominated_by_poisson():
    """Tail of the per-window link count stays under the Poisson(n |W|) tail."""
    dom = make_domain("torus", 2, 0.8)
    params = SimParams(3, 0.5)
    res = sa.run_chain(params, dom, sa.Schedule(burnin=200, sweeps=8000, thin=4, seed=9))
    win_lo, win_hi, edge = 0.1, 0.5, dom.edges[0]
    lam = params.n * (win_hi - win_lo)
    cnt = np.array(
        [sum(1 for t in c.edge_times(edge) if win_lo <= t < win_hi) for c in res.samples]
    )
    m = len(cnt)
    for k in range(1, int(stats.poisson.ppf(0.999, lam)) + 1):
        phat = (cnt >= k).mean()
        se = np.sqrt(max(phat * (1 - phat), 1e-12) / m)
        assert phat <= stats.poisson.sf(k - 1, lam) + 3.0 * se, (k, phat)
