"""Dense exact diagonalization of the interpolating spin chain.

The Hamiltonian is H = -sum_edges [u*T + (1-u)*Q] with T the transposition
of the two neighboring n-state spins and Q = (1/n) sum_{a,b} |bb><aa|.
Everything is built as dense matrices, so a hard dimension guard keeps
n^(2L) small enough for numpy.linalg.eigh.

Matrix elements follow the row-is-ket convention: an observable tensor
A[i-, i+] stands for the operator sum A[i-, i+] |i-><i+|, with the multi-
index i- = (a_x)_{x in support} read in increasing site order.

Imaginary-time-displaced quantities are evaluated in the eigenbasis with
all eigenvalues shifted by the ground energy, so every exponential in a
normalized expectation decays and large beta stays finite.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

_DIM_LIMIT = 2000


def intensity_ratio(n, u_loop):
    """Total link intensity of the chain expansion per unit loop intensity.

    Expanding e^{-beta H} places crosses at rate u and double-bars at rate
    (1-u)/n (a double-bar matrix element carries 1/n), total c per edge.
    The loop model uses unit total intensity, so chain and loop descriptions
    match after rescaling time by c: loop (u_l, beta_l) corresponds to the
    chain at (u_q, beta_q) = (c*u_l, beta_l/c) with c = 1/(u_l + n*(1-u_l)).
    """
    return 1.0 / (u_loop + n * (1.0 - u_loop))


def chain_params(n, u_loop, beta_loop):
    """Chain (u, beta) whose Gibbs weight equals the n^ell loop measure."""
    c = intensity_ratio(n, u_loop)
    return u_loop * c, beta_loop / c


def loop_params(n, u_chain, beta_chain):
    """Inverse of chain_params."""
    c = u_chain + (1.0 - u_chain) / n
    return u_chain / c, beta_chain * c


@dataclass(frozen=True)
class ObservableSpec:
    """A local observable: sites it touches, its tensor, a time offset.

    tensor has shape (n,)*k + (n,)*k where k = len(sites); the first k
    indices are the row (ket) side. sites are chain labels, ascending.
    """

    sites: tuple
    tensor: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "tensor", np.asarray(self.tensor, dtype=float))
        k = len(self.sites)
        if list(self.sites) != sorted(set(self.sites)):
            raise ValueError("observable sites must be distinct and ascending")
        if self.tensor.shape != self.tensor.shape[:k] * 2 or self.tensor.ndim != 2 * k:
            raise ValueError(
                f"tensor shape {self.tensor.shape} does not match {k} sites"
            )


def identity_observable() -> ObservableSpec:
    return ObservableSpec((), np.ones(()))


def elementary_observable(n, sites, i_minus, i_plus, t=0.0) -> ObservableSpec:
    """|i-><i+| on the given sites, both multi-indices in site order."""
    k = len(sites)
    if len(i_minus) != k or len(i_plus) != k:
        raise ValueError("color tuples must match the number of sites")
    tensor = np.zeros((n,) * (2 * k))
    tensor[tuple(i_minus) + tuple(i_plus)] = 1.0
    return ObservableSpec(tuple(sites), tensor, t)


def _t_tensor(n):
    eye = np.eye(n)
    return np.einsum("ad,bc->abcd", eye, eye)


def _q_tensor(n):
    eye = np.eye(n)
    return np.einsum("ab,cd->abcd", eye, eye) / n


def t_observable(n, edge, t=0.0) -> ObservableSpec:
    return ObservableSpec((edge, edge + 1), _t_tensor(n), t)


def q_observable(n, edge, t=0.0) -> ObservableSpec:
    return ObservableSpec((edge, edge + 1), _q_tensor(n), t)


@dataclass
class QuantumModel:
    n: int
    L: int
    u: float
    H: np.ndarray
    evals: np.ndarray = field(repr=False)
    evecs: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.H.shape[0]

    @property
    def sites(self):
        return range(-self.L + 1, self.L + 1)

    def site_index(self, x):
        pos = x + self.L - 1
        if not 0 <= pos < 2 * self.L:
            raise ValueError(f"site {x} outside the chain")
        return pos

    def operator(self, obs: ObservableSpec) -> np.ndarray:
        positions = [self.site_index(x) for x in obs.sites]
        k = len(positions)
        if obs.tensor.shape != (self.n,) * (2 * k):
            raise ValueError("observable tensor does not match n")
        return _embed(self.n, 2 * self.L, positions, obs.tensor)


def _embed(n, n_sites, positions, tensor):
    """Tensor the local operator with identities on the other sites."""
    row = string.ascii_letters[:n_sites]
    col = string.ascii_letters[n_sites : 2 * n_sites]
    subs = ["".join(row[p] for p in positions) + "".join(col[p] for p in positions)]
    operands = [tensor]
    eye = np.eye(n)
    for x in range(n_sites):
        if x not in positions:
            subs.append(row[x] + col[x])
            operands.append(eye)
    full = np.einsum(",".join(subs) + "->" + row + col, *operands)
    dim = n**n_sites
    return full.reshape(dim, dim)


def build_model(n, L, u) -> QuantumModel:
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    if int(L) != L or L < 1:
        raise ValueError(f"L must be an integer >= 1, got {L}")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u}")
    n, L = int(n), int(L)
    dim = n ** (2 * L)
    if dim > _DIM_LIMIT:
        raise ValueError(f"Hilbert space dimension {dim} exceeds {_DIM_LIMIT}")
    bond = u * _t_tensor(n) + (1.0 - u) * _q_tensor(n)
    H = np.zeros((dim, dim))
    for e in range(-L + 1, L):
        H -= _embed(n, 2 * L, [e + L - 1, e + L], bond)
    evals, evecs = np.linalg.eigh(H)
    return QuantumModel(n, L, u, H, evals, evecs)


def dimer_state(model: QuantumModel) -> np.ndarray:
    """Product of maximally entangled pairs on sites (-L+1,-L+2), ..."""
    pair = np.eye(model.n).reshape(-1) / np.sqrt(model.n)
    psi = np.ones(1)
    for _ in range(model.L):
        psi = np.kron(psi, pair)
    return psi


def partition_function(model: QuantumModel, beta) -> float:
    return float(np.exp(-beta * model.evals).sum())


def _eigbasis(model, A):
    return model.evecs.T @ A @ model.evecs


def gibbs_expectation(model: QuantumModel, obs: ObservableSpec, beta) -> float:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    A = model.operator(obs)
    d = model.evals - model.evals[0]
    w = np.exp(-beta * d)
    diag = np.einsum("ai,ab,bi->i", model.evecs, A, model.evecs, optimize=True)
    return float((w * diag).sum() / w.sum())


def seeded_expectation(model: QuantumModel, obs: ObservableSpec, beta) -> float:
    """Expectation in the dimer-seeded finite-beta state.

    The observable acts at imaginary time obs.t in (-beta/2, beta/2).
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if abs(obs.t) > beta / 2:
        raise ValueError(f"time offset {obs.t} outside [-beta/2, beta/2]")
    d = model.evals - model.evals[0]
    v = model.evecs.T @ dimer_state(model)
    At = _eigbasis(model, model.operator(obs))
    left = v * np.exp(-(beta / 2 - obs.t) * d)
    right = np.exp(-(beta / 2 + obs.t) * d) * v
    den = float((v * v * np.exp(-beta * d)).sum())
    return float(left @ At @ right / den)


def truncated_correlation(
    model: QuantumModel, obs_a: ObservableSpec, obs_b: ObservableSpec, beta, t,
    state: str = "gibbs",
) -> float:
    """<A; B(t)> = <B(t_b) A(t_a)> - <B(t_b)><A(t_a)> at imaginary times.

    A sits at its own offset t_a = obs_a.t and B at t_b = obs_b.t + t;
    operators are ordered by increasing time, so t_a <= t_b is required.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    t_a = obs_a.t
    t_b = obs_b.t + t
    dt = t_b - t_a
    d = model.evals - model.evals[0]
    A = _eigbasis(model, model.operator(obs_a))
    B = _eigbasis(model, model.operator(obs_b))
    if state == "gibbs":
        if not 0 <= dt < beta:
            raise ValueError(f"time displacement {dt} outside [0, beta)")
        w = np.exp(-beta * d)
        z = float(w.sum())
        w1 = np.exp(-(beta - dt) * d)
        w2 = np.exp(-dt * d)
        joint = float(np.einsum("i,ij,j,ji->", w1, B, w2, A, optimize=True)) / z
        ea = float((w * np.diag(A)).sum()) / z
        eb = float((w * np.diag(B)).sum()) / z
        return joint - ea * eb
    if state == "seeded":
        if not (-beta / 2 <= t_a and t_a <= t_b and t_b <= beta / 2):
            raise ValueError("times must satisfy -beta/2 <= t_a <= t_b <= beta/2")
        v = model.evecs.T @ dimer_state(model)
        den = float((v * v * np.exp(-beta * d)).sum())
        lo = np.exp(-(beta / 2 - t_b) * d) * v
        mid = np.exp(-dt * d)
        hi = np.exp(-(t_a + beta / 2) * d) * v
        joint = float(np.einsum("i,ij,j,jk,k->", lo, B, mid, A, hi, optimize=True))
        joint /= den
        ea = float(
            (v * np.exp(-(beta / 2 - t_a) * d)) @ A @ (np.exp(-(t_a + beta / 2) * d) * v)
        ) / den
        eb = float(
            (v * np.exp(-(beta / 2 - t_b) * d)) @ B @ (np.exp(-(t_b + beta / 2) * d) * v)
        ) / den
        return joint - ea * eb
    raise ValueError(f"unknown state {state!r}")
