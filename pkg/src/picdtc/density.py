"""Exact density evolution of PIC-dTC ensembles on the BEC.

The component decoder transfer function is computed exactly from the
state-set process of the set-based BCJR decoder.  By linearity the all-zero
codeword can be assumed, so every known symbol is 0 and the consistent state
sets always contain the zero state.  The forward set process (start ``{0}``)
and the backward set process (start: all states) are finite Markov chains
driven by the i.i.d. erasure pattern of ``(u, u', parity)`` at each step.
Their stationary laws plus the erasure pattern at the current step give the
probability that an input symbol stays ambiguous.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numba import njit

from .chain import CouplingConfig
from .decoding import ERASED, bec_transmit, set_bcjr
from .trellis import Trellis, build_trellis, parse_octal, rsc_encode


class StationaryError(ArithmeticError):
    """The state-set chain did not settle to a stationary law."""


# erasure pattern p = k1 | k2 << 1 | kp << 2, bit set = symbol known
PATTERNS = tuple(range(8))


def _step_forward(ns, par, cur: int, pattern: int) -> int:
    k1, k2, kp = pattern & 1, (pattern >> 1) & 1, (pattern >> 2) & 1
    nxt = 0
    for s in range(ns.shape[0]):
        if not (cur >> s) & 1:
            continue
        for x in range(4):
            n = ns[s, x]
            if n < 0 or (k1 and x & 1) or (k2 and x >> 1) or (kp and par[s, x]):
                continue
            nxt |= 1 << n
    return nxt


def _step_backward(ns, par, fut: int, pattern: int) -> int:
    k1, k2, kp = pattern & 1, (pattern >> 1) & 1, (pattern >> 2) & 1
    cur = 0
    for s in range(ns.shape[0]):
        for x in range(4):
            n = ns[s, x]
            if n < 0 or not (fut >> n) & 1:
                continue
            if (k1 and x & 1) or (k2 and x >> 1) or (kp and par[s, x]):
                continue
            cur |= 1 << s
    return cur


def _explore(start: int, step) -> tuple[list[int], np.ndarray]:
    sets = [start]
    index = {start: 0}
    edges = []
    i = 0
    while i < len(sets):
        for p in PATTERNS:
            nxt = step(sets[i], p)
            if nxt not in index:
                index[nxt] = len(sets)
                sets.append(nxt)
            edges.append((p, i, index[nxt]))
        i += 1
    T = np.zeros((8, len(sets), len(sets)))
    for p, a, b in edges:
        T[p, a, b] = 1.0
    return sets, T


class TransferFunction:
    """Exact extrinsic erasure probabilities ``(e1, e2)`` of one component decoder.

    Call with erasure probabilities of the input-1 prior, the input-2 prior
    and the parity observation.  Arguments broadcast; the evaluation is
    vectorized over them.
    """

    def __init__(self, trellis: Trellis, tol: float = 1e-12):
        self.trellis = trellis
        self.tol = tol
        ns, par = trellis.tables
        S = trellis.num_states
        self.fwd_sets, self.Tf = _explore(1, lambda c, p: _step_forward(ns, par, c, p))
        self.bwd_sets, self.Tb = _explore((1 << S) - 1, lambda c, p: _step_backward(ns, par, c, p))
        nf, nb = len(self.fwd_sets), len(self.bwd_sets)
        # A[j][f, b, c]: input j ambiguous given sets f, b and the known/erased
        # state c = k_other | kp << 1 of the other input and the parity
        A = np.zeros((2, nf, nb, 4))
        for (fi, F), (bi, B), c in itertools.product(
            enumerate(self.fwd_sets), enumerate(self.bwd_sets), range(4)
        ):
            k_other, kp = c & 1, c >> 1
            for s in range(S):
                if not (F >> s) & 1:
                    continue
                for x in range(4):
                    n = ns[s, x]
                    if n < 0 or not (B >> n) & 1 or (kp and par[s, x]):
                        continue
                    if x & 1 and not (k_other and x >> 1):
                        A[0, fi, bi, c] = 1.0
                    if x >> 1 and not (k_other and x & 1):
                        A[1, fi, bi, c] = 1.0
        self.A = A

    def __call__(self, q1, q2, qp):
        q1, q2, qp = np.broadcast_arrays(
            np.asarray(q1, dtype=float), np.asarray(q2, dtype=float), np.asarray(qp, dtype=float)
        )
        shape = q1.shape
        e1, e2, status = _transfer_batch(
            self.Tf, self.Tb, self.A, np.ascontiguousarray(q1.ravel()),
            np.ascontiguousarray(q2.ravel()), np.ascontiguousarray(qp.ravel()), self.tol,
        )
        if status:
            raise StationaryError("state-set chain did not converge")
        return e1.reshape(shape), e2.reshape(shape)


@njit(cache=True)
def _stationary(T, w, tol, out, P, M, b):
    """Stationary law of ``sum_p w[p] T[p]`` written to ``out``; False on failure.

    Solves ``pi (P - I) = 0, sum(pi) = 1`` by Gaussian elimination.  When that
    system is singular (several closed classes) the law reached from the
    start set (index 0) is found by repeated squaring of the lazy chain.
    """
    n = T.shape[1]
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for p in range(8):
                acc += w[p] * T[p, i, j]
            P[i, j] = acc
    if n == 1:
        out[0] = 1.0
        return True
    for i in range(n):
        for j in range(n):
            M[i, j] = P[j, i] - (1.0 if i == j else 0.0)
        b[i] = 0.0
    M[n - 1, :] = 1.0
    b[n - 1] = 1.0
    ok = True
    for col in range(n):
        piv = col
        for r in range(col + 1, n):
            if abs(M[r, col]) > abs(M[piv, col]):
                piv = r
        if abs(M[piv, col]) < 1e-300:
            ok = False
            break
        if piv != col:
            for c in range(n):
                M[col, c], M[piv, c] = M[piv, c], M[col, c]
            b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, n):
            f = M[r, col] / M[col, col]
            if f != 0.0:
                for c in range(col, n):
                    M[r, c] -= f * M[col, c]
                b[r] -= f * b[col]
    if ok:
        for r in range(n - 1, -1, -1):
            acc = b[r]
            for c in range(r + 1, n):
                acc -= M[r, c] * out[c]
            out[r] = acc / M[r, r]
        resid = 0.0
        for j in range(n):
            acc = -out[j]
            for i in range(n):
                acc += out[i] * P[i, j]
            resid = max(resid, abs(acc))
        for j in range(n):
            if out[j] < -tol or not np.isfinite(out[j]):
                ok = False
        if resid > tol:
            ok = False
    if ok:
        for j in range(n):
            out[j] = max(out[j], 0.0)
        return True
    Q = 0.5 * (P.copy() + np.eye(n))
    for _ in range(128):
        Q2 = Q @ Q
        if np.abs(Q2[0] - Q[0]).max() < tol:
            out[:] = Q2[0]
            return True
        Q = Q2
    return False


@njit(cache=True)
def _transfer_batch(Tf, Tb, A, q1, q2, qp, tol):
    N = q1.shape[0]
    nf = Tf.shape[1]
    nb = Tb.shape[1]
    e1 = np.empty(N)
    e2 = np.empty(N)
    w = np.empty(8)
    pf = np.empty(nf)
    pb = np.empty(nb)
    c1 = np.empty(4)
    c2 = np.empty(4)
    n = max(nf, nb)
    P = np.empty((n, n))
    M = np.empty((n, n))
    rhs = np.empty(n)
    for i in range(N):
        a, b, c = q1[i], q2[i], qp[i]
        for p in range(8):
            w[p] = ((1 - a) if p & 1 else a) * ((1 - b) if p & 2 else b) * ((1 - c) if p & 4 else c)
        if not _stationary(Tf, w, tol, pf, P[:nf, :nf], M[:nf, :nf], rhs[:nf]):
            return e1, e2, 1
        if not _stationary(Tb, w, tol, pb, P[:nb, :nb], M[:nb, :nb], rhs[:nb]):
            return e1, e2, 1
        # index = other-input known | parity known << 1
        c1[0] = b * c
        c1[1] = (1 - b) * c
        c1[2] = b * (1 - c)
        c1[3] = (1 - b) * (1 - c)
        c2[0] = a * c
        c2[1] = (1 - a) * c
        c2[2] = a * (1 - c)
        c2[3] = (1 - a) * (1 - c)
        s1 = 0.0
        s2 = 0.0
        for f in range(nf):
            for g in range(nb):
                wfg = pf[f] * pb[g]
                if wfg == 0.0:
                    continue
                for k in range(4):
                    s1 += wfg * c1[k] * A[0, f, g, k]
                    s2 += wfg * c2[k] * A[1, f, g, k]
        e1[i] = min(max(s1, 0.0), 1.0)
        e2[i] = min(max(s2, 0.0), 1.0)
    return e1, e2, 0


@lru_cache(maxsize=64)
def _transfer_for(g_f: str, g_f2: str | None, g_b: str) -> TransferFunction:
    return TransferFunction(build_trellis(g_f, g_f2, g_b))


def transfer_function(trellis: Trellis) -> TransferFunction:
    g_f2 = None if trellis.g_f2 is None else trellis.g_f2.octal
    return _transfer_for(trellis.g_f.octal, g_f2, trellis.g_b.octal)


def transfer_exact(trellis: Trellis, q1: float, q2: float, eps_parity: float) -> tuple[float, float]:
    for v in (q1, q2, eps_parity):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"erasure probabilities must lie in [0, 1], got {v}")
    e1, e2 = transfer_function(trellis)(q1, q2, eps_parity)
    return float(e1), float(e2)


@dataclass
class MCTransfer:
    e1: float
    e2: float
    se1: float
    se2: float
    steps: int


def transfer_mc(trellis: Trellis, q1: float, q2: float, eps_parity: float,
                num_steps: int = 100_000, seed: int = 0, burn_in: int = 200,
                batches: int = 50) -> MCTransfer:
    """Sampled extrinsic erasure rates of ``set_bcjr`` on one long random section.

    ``burn_in`` steps at each end are dropped to remove the start/end
    boundary effects.  Standard errors are batch-means estimates (erasure
    events are correlated along the trellis), floored at the binomial value.
    """
    if num_steps < 10_000:
        raise ValueError("num_steps must be >= 1e4")
    rng = np.random.default_rng(seed)
    n = num_steps + 2 * burn_in
    u = rng.integers(0, 2, n)
    if trellis.num_inputs == 2:
        u2 = rng.integers(0, 2, n)
        v, _ = rsc_encode(trellis, u, u2)
        e1, e2 = set_bcjr(trellis, bec_transmit(u, q1, rng), bec_transmit(u2, q2, rng),
                          bec_transmit(v, eps_parity, rng))
    else:
        v, _ = rsc_encode(trellis, u)
        e1, e2 = set_bcjr(trellis, bec_transmit(u, q1, rng), None, bec_transmit(v, eps_parity, rng))
    sl = slice(burn_in, burn_in + num_steps)
    out = []
    for e, truth in ((e1[sl], u[sl]), (e2[sl], None if trellis.num_inputs == 1 else u2[sl])):
        if truth is not None and np.any((e != ERASED) & (e != truth)):
            raise AssertionError("set_bcjr produced a wrong extrinsic symbol")
        x = (e == ERASED).astype(float)
        mean = x.mean()
        binom = math.sqrt(max(mean * (1 - mean), 0.0) / num_steps)
        bm = x[: num_steps - num_steps % batches].reshape(batches, -1).mean(axis=1)
        batch_se = bm.std(ddof=1) / math.sqrt(batches)
        out.append((float(mean), float(max(binom, batch_se))))
    (m1, s1), (m2, s2) = out
    return MCTransfer(m1, m2, s1, s2, num_steps)


# ---------------------------------------------------------------------------
# density evolution over the chain


@dataclass
class DeState:
    """Factor-to-variable erasure probabilities per block, index ``t-1``."""

    p1U: np.ndarray
    p2U: np.ndarray
    p1L: np.ndarray
    p2L: np.ndarray
    iteration: int = 0

    @classmethod
    def ones(cls, L: int) -> DeState:
        return cls(np.ones(L), np.ones(L), np.ones(L), np.ones(L))

    def copy(self) -> DeState:
        return DeState(self.p1U.copy(), self.p2U.copy(), self.p1L.copy(), self.p2L.copy(), self.iteration)

    def max_change(self, other: DeState) -> float:
        return max(float(np.abs(a - b).max()) for a, b in
                   ((self.p1U, other.p1U), (self.p2U, other.p2U),
                    (self.p1L, other.p1L), (self.p2L, other.p2L)))


@dataclass(frozen=True)
class DeEnsemble:
    """Ensemble parameters for DE: coupling ratio, memory, chain length."""

    lam: float
    m: int = 1
    L: int = 100

    def __post_init__(self):
        if not 0.0 <= float(self.lam) <= 1.0:
            raise ValueError(f"coupling ratio must lie in [0, 1], got {self.lam}")
        if self.m < 1 or self.L < 1:
            raise ValueError("need m >= 1 and L >= 1")

    @classmethod
    def from_config(cls, config: CouplingConfig) -> DeEnsemble:
        return cls(float(config.lam), config.m, config.L)


def default_chain_length(m: int) -> int:
    return 100 if m <= 10 else max(100, 10 * m)


def _forward_sum(a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """``sum_{j=1..m} a[t+j] * b[t+j]`` with zero beyond the chain end."""
    prod = a * b
    L = prod.shape[0]
    pad = np.concatenate([prod, np.zeros(m)])
    c = np.concatenate([[0.0], np.cumsum(pad)])
    t = np.arange(L)
    return c[t + m + 1] - c[t + 1]


def _backward_sum(a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """``sum_{j=1..m} a[t-j] * b[t-j]`` with zero before the chain start."""
    prod = a * b
    L = prod.shape[0]
    c = np.concatenate([[0.0], np.cumsum(prod)])
    t = np.arange(L)
    return c[t] - c[np.maximum(t - m, 0)]


def de_step(state: DeState, epsilon: float, ens: DeEnsemble, transfer) -> DeState:
    """One DE iteration: upper decoders first, then lower, freshest values."""
    lam, m = float(ens.lam), ens.m
    s = state.copy()
    # to the upper decoders
    fwd = _forward_sum(s.p2U, s.p2L, m)
    bwd = _backward_sum(s.p1U, s.p1L, m)
    q1 = epsilon * s.p1L * (1 - lam + lam / m * fwd)
    q2 = epsilon * s.p2L * (lam / m * bwd)
    s.p1U, s.p2U = transfer(q1, q2, epsilon)
    # to the lower decoders
    fwd = _forward_sum(s.p2U, s.p2L, m)
    bwd = _backward_sum(s.p1U, s.p1L, m)
    q1 = epsilon * s.p1U * (1 - lam + lam / m * fwd)
    q2 = epsilon * s.p2U * (lam / m * bwd)
    s.p1L, s.p2L = transfer(q1, q2, epsilon)
    s.iteration += 1
    return s


def a_posteriori(state: DeState, epsilon: float, ens: DeEnsemble) -> np.ndarray:
    lam, m = float(ens.lam), ens.m
    fwd = _forward_sum(state.p2U, state.p2L, m)
    return epsilon * state.p1U * state.p1L * (1 - lam + lam / m * fwd)


@dataclass
class DeRun:
    converged: bool
    iterations: int
    profile: np.ndarray = field(repr=False)
    state: DeState = field(repr=False)
    reason: str = ""


def de_run(epsilon: float, ens: DeEnsemble, transfer, max_iters: int = 10_000,
           target: float = 1e-8, stall: float = 1e-12, trace=None) -> DeRun:
    """Iterate :func:`de_step` from all-ones until success, stall or budget.

    For a :class:`TransferFunction` without ``trace`` the loop runs in a
    compiled kernel that performs exactly the same arithmetic.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if isinstance(transfer, TransferFunction) and trace is None:
        probs = np.ones((4, ens.L))
        code, it = _de_loop(transfer.Tf, transfer.Tb, transfer.A, transfer.tol, float(epsilon),
                            float(ens.lam), ens.m, max_iters, target, stall, probs)
        if code == 3:
            raise StationaryError("state-set chain did not converge")
        state = DeState(probs[0], probs[1], probs[2], probs[3], it)
        reason = ("target", "stall", "budget")[code]
        return DeRun(code == 0, it, a_posteriori(state, epsilon, ens), state, reason)
    state = DeState.ones(ens.L)
    for _ in range(max_iters):
        new = de_step(state, epsilon, ens, transfer)
        if trace is not None:
            trace.append(new)
        prof = a_posteriori(new, epsilon, ens)
        if prof.max() < target:
            return DeRun(True, new.iteration, prof, new, "target")
        if new.max_change(state) < stall:
            return DeRun(False, new.iteration, prof, new, "stall")
        state = new
    return DeRun(False, state.iteration, a_posteriori(state, epsilon, ens), state, "budget")


@njit(cache=True)
def _forward_window(a, b, m, out):
    L = a.shape[0]
    acc = 0.0
    for t in range(L - 1, -1, -1):
        out[t] = acc
        acc += a[t] * b[t]
        if t + m < L:
            acc -= a[t + m] * b[t + m]


@njit(cache=True)
def _backward_window(a, b, m, out):
    L = a.shape[0]
    acc = 0.0
    for t in range(L):
        out[t] = acc
        acc += a[t] * b[t]
        if t - m >= 0:
            acc -= a[t - m] * b[t - m]


@njit(cache=True)
def _de_loop(Tf, Tb, A, tol, eps, lam, m, max_iters, target, stall, probs):
    """Compiled twin of the :func:`de_step` loop; ``probs`` rows p1U, p2U, p1L, p2L."""
    L = probs.shape[1]
    fwd = np.empty(L)
    bwd = np.empty(L)
    q1 = np.empty(L)
    q2 = np.empty(L)
    qp = np.full(L, eps)
    old = np.empty_like(probs)
    for it in range(1, max_iters + 1):
        old[:, :] = probs
        p1U, p2U, p1L, p2L = probs[0], probs[1], probs[2], probs[3]
        _forward_window(p2U, p2L, m, fwd)
        _backward_window(p1U, p1L, m, bwd)
        for t in range(L):
            q1[t] = eps * p1L[t] * (1 - lam + lam / m * fwd[t])
            q2[t] = eps * p2L[t] * (lam / m * bwd[t])
        e1, e2, status = _transfer_batch(Tf, Tb, A, q1, q2, qp, tol)
        if status:
            return 3, it
        p1U[:] = e1
        p2U[:] = e2
        _forward_window(p2U, p2L, m, fwd)
        _backward_window(p1U, p1L, m, bwd)
        for t in range(L):
            q1[t] = eps * p1U[t] * (1 - lam + lam / m * fwd[t])
            q2[t] = eps * p2U[t] * (lam / m * bwd[t])
        e1, e2, status = _transfer_batch(Tf, Tb, A, q1, q2, qp, tol)
        if status:
            return 3, it
        p1L[:] = e1
        p2L[:] = e2
        _forward_window(p2U, p2L, m, fwd)
        worst = 0.0
        for t in range(L):
            worst = max(worst, eps * p1U[t] * p1L[t] * (1 - lam + lam / m * fwd[t]))
        if worst < target:
            return 0, it
        if np.abs(probs - old).max() < stall:
            return 1, it
    return 2, max_iters


@dataclass
class ThresholdResult:
    eps_bp: float
    width: float
    lo: float
    hi: float
    lam: float
    m: int
    L: int
    precision: float
    iterations: list[int] = field(default_factory=list)

    def row(self) -> dict:
        return {"lambda": self.lam, "m": self.m, "L": self.L, "eps_bp": self.eps_bp,
                "precision": self.precision, "iterations": sum(self.iterations)}


def find_threshold(trellis: Trellis, ens: DeEnsemble, precision: float = 1e-4,
                   max_iters: int = 10_000, target: float = 1e-8,
                   lo: float = 0.0, hi: float = 1.0) -> ThresholdResult:
    """Bisect the largest epsilon at which DE drives the erasure rate to zero."""
    if precision < 1e-5:
        raise ValueError("precision must be >= 1e-5")
    transfer = transfer_function(trellis)
    iters = []
    while hi - lo > precision:
        mid = 0.5 * (lo + hi)
        run = de_run(mid, ens, transfer, max_iters=max_iters, target=target)
        iters.append(run.iterations)
        if run.converged:
            lo = mid
        else:
            hi = mid
    return ThresholdResult(0.5 * (lo + hi), hi - lo, lo, hi, float(ens.lam), ens.m, ens.L,
                           precision, iters)


@lru_cache(maxsize=256)
def cached_threshold(g_f: str, g_f2: str, g_b: str, lam: float, m: int, L: int,
                     precision: float = 1e-4) -> ThresholdResult:
    return find_threshold(build_trellis(g_f, g_f2, g_b), DeEnsemble(lam, m, L), precision)


def uncoupled_threshold(trellis: Trellis, precision: float = 1e-4, max_iters: int = 10_000,
                        target: float = 1e-8) -> float:
    """Threshold of the single turbo block with the second input shortened."""
    transfer = transfer_function(trellis)
    lo, hi = 0.0, 1.0
    while hi - lo > precision:
        eps = 0.5 * (lo + hi)
        pU = pL = 1.0
        ok = False
        for _ in range(max_iters):
            new_pU, _ = transfer(eps * pL, 0.0, eps)
            new_pL, _ = transfer(eps * new_pU, 0.0, eps)
            new_pU, new_pL = float(new_pU), float(new_pL)
            if eps * new_pU * new_pL < target:
                ok = True
                break
            if max(abs(new_pU - pU), abs(new_pL - pL)) < 1e-12:
                break
            pU, pL = new_pU, new_pL
        lo, hi = (eps, hi) if ok else (lo, eps)
    return 0.5 * (lo + hi)


def rank_gf2(g_f, g_b, candidates, lam=Fraction(1), m: int = 1, L: int | None = None,
             precision: float = 1e-4) -> list[tuple[str, float]]:
    """Rank second-input generators by the DE threshold of the coupled ensemble."""
    cands = [parse_octal(c) for c in candidates]
    if not cands:
        raise ValueError("candidate list is empty")
    g_f = parse_octal(g_f).octal
    g_b = parse_octal(g_b).octal
    L = default_chain_length(m) if L is None else L
    scored = []
    for c in cands:
        res = cached_threshold(g_f, c.octal, g_b, float(lam), m, L, precision)
        scored.append((c.octal, res.eps_bp))
    scored.sort(key=lambda item: (-item[1], int(item[0], 8)))
    return scored
