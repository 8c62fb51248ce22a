"""Birth/death/flip Metropolis chain for the n^ell-weighted link gas.

The target is the base link process reweighed by n^ell.  Birth proposals
draw an edge and a time uniformly and a kind with the base mark law, so
the mark weights cancel and the acceptance ratio reduces to the intensity
ratio times n^{delta ell}; births and deaths are proposed with equal
probability to keep the pair symmetric.  The loop count is tracked
incrementally and re-traced from scratch every _AUDIT_EVERY sweeps.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .geometry import PRIMAL, Domain, edge_parity
from .linkconfig import (
    BAR,
    CROSS,
    Delete,
    Flip,
    Insert,
    Link,
    LinkConfig,
    SimParams,
    _as_rng,
    apply_move,
    config_from_links,
    deserialize,
    empty_config,
    make_rng,
    sample_poisson,
    serialize,
)
from .loops import delta_loops, ell, ell_empty
from .observables import autocorrelation_time

_AUDIT_EVERY = 1000
MOVES = ("birth", "death", "flip")


@dataclass
class ChainState:
    cfg: LinkConfig
    ell: int
    sweep: int = 0
    rng: np.random.Generator = None
    proposed: dict = field(default_factory=lambda: {m: 0 for m in MOVES})
    accepted: dict = field(default_factory=lambda: {m: 0 for m in MOVES})


@dataclass(frozen=True)
class Schedule:
    burnin: int
    sweeps: int
    thin: int = 1
    seed: int = 0
    chain_index: int = 0

    def __post_init__(self):
        if self.burnin < 0 or self.sweeps <= 0 or self.thin < 1:
            raise ValueError("schedule must have burnin >= 0, sweeps > 0, thin >= 1")


@dataclass
class RunResult:
    samples: list
    ells: list
    proposed: dict
    accepted: dict
    tau_ell: float
    state: ChainState


def init_state(domain: Domain, seed=0, chain_index=0, cfg=None) -> ChainState:
    if cfg is None:
        cfg = empty_config(domain)
    return ChainState(cfg=cfg, ell=ell(cfg), rng=make_rng(seed, chain_index))


def move_probabilities(u):
    """(birth, death, flip) proposal mix; flips are useless at u in {0,1}."""
    if 0.0 < u < 1.0:
        return 0.4, 0.4, 0.2
    return 0.5, 0.5, 0.0


def _pick_link(cfg: LinkConfig, idx: int):
    for e in cfg.domain.edges:
        m = len(cfg.edge_times(e))
        if idx < m:
            return e, idx
        idx -= m
    raise IndexError("link index out of range")


def mcmc_step(state: ChainState, params: SimParams, domain: Domain) -> ChainState:
    rng = state.rng
    n, u = params.n, params.u
    nu = domain.n_edges * domain.beta
    cfg = state.cfg
    big_n = cfg.n_links
    p_b, p_d, _ = move_probabilities(u)
    r = rng.random()
    if r < p_b:
        state.proposed["birth"] += 1
        kind = CROSS if rng.random() < u else BAR
        edge = domain.edges[int(rng.integers(domain.n_edges))]
        t = rng.uniform(domain.t_lo, domain.t_hi)
        if not domain.time_in_range(t) or t in cfg.edge_times(edge):
            return state
        move = Insert(Link(edge, t, kind))
        dl = delta_loops(cfg, move)
        if rng.random() < min(1.0, nu / (big_n + 1) * float(n) ** dl):
            state.cfg = apply_move(cfg, move)
            state.ell += dl
            state.accepted["birth"] += 1
    elif r < p_b + p_d:
        state.proposed["death"] += 1
        if big_n == 0:
            return state
        edge, pos = _pick_link(cfg, int(rng.integers(big_n)))
        move = Delete(edge, pos)
        dl = delta_loops(cfg, move)
        if rng.random() < min(1.0, big_n / nu * float(n) ** dl):
            state.cfg = apply_move(cfg, move)
            state.ell += dl
            state.accepted["death"] += 1
    else:
        state.proposed["flip"] += 1
        if big_n == 0:
            return state
        edge, pos = _pick_link(cfg, int(rng.integers(big_n)))
        move = Flip(edge, pos)
        old_kind = cfg.edge_kinds(edge)[pos]
        ratio = (1.0 - u) / u if old_kind == CROSS else u / (1.0 - u)
        dl = delta_loops(cfg, move)
        if rng.random() < min(1.0, ratio * float(n) ** dl):
            state.cfg = apply_move(cfg, move)
            state.ell += dl
            state.accepted["flip"] += 1
    return state


def sweep_length(domain: Domain) -> int:
    return max(1, math.ceil(domain.n_edges * domain.beta))


def run_chain(
    params: SimParams,
    domain: Domain,
    schedule: Schedule,
    state: ChainState = None,
    checkpoint_path=None,
    checkpoint_every=0,
) -> RunResult:
    """Run the chain, returning thinned configurations and loop counts.

    Passing a state (e.g. from read_checkpoint) continues that chain and
    ignores the schedule's seed.  The cached loop count is audited against
    a full re-trace every _AUDIT_EVERY sweeps.
    """
    if state is None:
        state = init_state(domain, schedule.seed, schedule.chain_index)
    steps = sweep_length(domain)
    samples, ells = [], []
    for s in range(schedule.burnin + schedule.sweeps):
        for _ in range(steps):
            mcmc_step(state, params, domain)
        state.sweep += 1
        if state.sweep % _AUDIT_EVERY == 0 and state.ell != ell(state.cfg):
            raise RuntimeError(
                f"cached loop count diverged at sweep {state.sweep}: "
                f"{state.ell} != {ell(state.cfg)}"
            )
        if s >= schedule.burnin and (s - schedule.burnin) % schedule.thin == 0:
            samples.append(state.cfg)
            ells.append(state.ell)
        if checkpoint_path and checkpoint_every and state.sweep % checkpoint_every == 0:
            write_checkpoint(checkpoint_path, state)
    if checkpoint_path:
        write_checkpoint(checkpoint_path, state)
    tau = autocorrelation_time(ells) if len(ells) > 1 else 0.5
    return RunResult(
        samples, ells, dict(state.proposed), dict(state.accepted), tau, state
    )


# ---------------------------------------------------------------------------
# checkpoints

_FOOTER_RE = re.compile(r"^# checkpoint sweep=(\d+) rng=([0-9a-f]+)$", re.M)


def write_checkpoint(path, state: ChainState) -> None:
    st = json.dumps(state.rng.bit_generator.state).encode().hex()
    text = serialize(state.cfg) + f"# checkpoint sweep={state.sweep} rng={st}\n"
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise RuntimeError(f"writing checkpoint {path}: {e}") from e


def read_checkpoint(path) -> ChainState:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise RuntimeError(f"reading checkpoint {path}: {e}") from e
    m = _FOOTER_RE.search(text)
    if m is None:
        raise ValueError(f"{path}: missing checkpoint footer")
    cfg = deserialize(text)
    rng = make_rng(0)
    rng.bit_generator.state = json.loads(bytes.fromhex(m.group(2)))
    return ChainState(cfg=cfg, ell=ell(cfg), sweep=int(m.group(1)), rng=rng)


# ---------------------------------------------------------------------------
# conditioned sampling on the all-bars-on-primal-columns event

def _poisson_bars(domain, cols, rate, rng):
    links = []
    for e in cols:
        k = rng.poisson(rate * domain.beta)
        for t in rng.uniform(domain.t_lo, domain.t_hi, size=k):
            links.append((e, float(t), BAR))
    return config_from_links(domain, links)


def sample_T1(
    params: SimParams, domain: Domain, rng, method="direct", max_tries=100_000
) -> LinkConfig:
    """Draw from the loop measure conditioned on bars-on-primal-columns.

    Conditionally, every bar nests one more loop, so the law is a plain
    Poisson process of bars at rate (1-u)*n per primal column.  The
    rejection method re-derives this from the n^ell weight directly and
    exists as a cross-check of that identity.
    """
    if domain.kind != "primal":
        raise ValueError("conditioned sampling needs the primal rectangle")
    rng = _as_rng(rng)
    cols = [e for e in domain.edges if edge_parity(e) == PRIMAL]
    if method == "direct":
        return _poisson_bars(domain, cols, (1.0 - params.u) * params.n, rng)
    if method == "rejection":
        ell0 = ell_empty(domain)
        for _ in range(max_tries):
            cfg = _poisson_bars(domain, cols, float(params.n), rng)
            k = cfg.n_links
            p = (1.0 - params.u) ** k * float(params.n) ** (ell(cfg) - ell0 - k)
            if rng.random() < p:
                return cfg
        raise RuntimeError(f"rejection sampling failed within {max_tries} tries")
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# audits

def detailed_balance_audit(params: SimParams, domain: Domain, n_pairs, seed=0):
    """Max relative asymmetry of the flow identity over random transitions.

    For a random config and move, compares flow(x -> y) = q(x,y)*alpha(x,y)
    against pi(y)/pi(x) * flow(y -> x), with loop counts re-traced from
    scratch on both sides (independent of the incremental path).
    """
    rng = make_rng(seed)
    n, u = params.n, params.u
    nu = domain.n_edges * domain.beta
    p_b, p_d, p_f = move_probabilities(u)
    worst = 0.0
    for _ in range(n_pairs):
        cfg = sample_poisson(domain, u, rng.uniform(0.5, 1.5), rng)
        big_n = cfg.n_links
        if rng.random() < 0.5 or big_n == 0:
            kind = CROSS if rng.random() < u else BAR
            edge = domain.edges[int(rng.integers(domain.n_edges))]
            t = rng.uniform(domain.t_lo, domain.t_hi)
            if not domain.time_in_range(t) or t in cfg.edge_times(edge):
                continue
            new = apply_move(cfg, Insert(Link(edge, t, kind)))
            dl = ell(new) - ell(cfg)
            w = u if kind == CROSS else 1.0 - u
            if w == 0.0:
                continue
            fwd = p_b * w / nu * min(1.0, nu / (big_n + 1) * float(n) ** dl)
            rev = (
                w * float(n) ** dl
                * p_d / (big_n + 1)
                * min(1.0, (big_n + 1) / nu * float(n) ** (-dl))
            )
        else:
            edge, pos = _pick_link(cfg, int(rng.integers(big_n)))
            new = apply_move(cfg, Flip(edge, pos))
            dl = ell(new) - ell(cfg)
            old_kind = cfg.edge_kinds(edge)[pos]
            w_old = u if old_kind == CROSS else 1.0 - u
            w_new = 1.0 - u if old_kind == CROSS else u
            if w_old == 0.0 or w_new == 0.0:
                continue
            fwd = p_f / big_n * min(1.0, w_new / w_old * float(n) ** dl)
            rev = (
                w_new / w_old * float(n) ** dl
                * p_f / big_n
                * min(1.0, w_old / w_new * float(n) ** (-dl))
            )
        scale = max(abs(fwd), abs(rev))
        if scale > 0:
            worst = max(worst, abs(fwd - rev) / scale)
    return worst
