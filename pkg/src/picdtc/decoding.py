"""Erasure channel and iterative erasure decoding of PIC-dTC chains.

On the BEC every message is a ternary symbol: known 0, known 1, or erased
(``ERASED``).  The BCJR recursion degenerates to propagating the *set* of
trellis states consistent with the known symbols, which is what the kernels
below do with state sets packed into integer bitmasks.

All variables of a chain live in one flat knowledge array: ``L*K`` slots for
the first inputs ``u_t`` followed by one slot that is permanently 0 and
stands in for every shortened position.  A coupled segment is therefore
stored once and both blocks that encode it read and write the same slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .chain import ChainInterleavers, CouplingConfig, payload_mask, second_input_index, split_stream
from .trellis import Trellis

ERASED = 2
MAX_STATES = 32


class DecodeError(RuntimeError):
    """Known symbols contradict the trellis; cannot happen on a true BEC."""


def bec_transmit(bits, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Erase each bit independently with probability ``epsilon``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"erasure probability must be in [0, 1], got {epsilon}")
    out = np.array(bits, dtype=np.uint8, copy=True)
    out[rng.random(out.shape) < epsilon] = ERASED
    return out


def erased_fraction(word) -> float:
    word = np.asarray(word)
    return float(np.count_nonzero(word == ERASED)) / max(word.size, 1)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _bcjr_kernel(ns, par, p1, p2, pv, e1, e2, F, B):
    """Set-based BCJR.  Returns -1 on success or the first inconsistent step."""
    K = p1.shape[0]
    S = ns.shape[0]
    F[0] = 1
    for k in range(K):
        cur = F[k]
        nxt = 0
        a, b, c = p1[k], p2[k], pv[k]
        for s in range(S):
            if not (cur >> s) & 1:
                continue
            for x in range(4):
                n = ns[s, x]
                if n < 0:
                    continue
                if a != ERASED and (x & 1) != a:
                    continue
                if b != ERASED and (x >> 1) != b:
                    continue
                if c != ERASED and par[s, x] != c:
                    continue
                nxt |= 1 << n
        if nxt == 0:
            return k
        F[k + 1] = nxt
    B[K] = (1 << S) - 1
    for k in range(K - 1, -1, -1):
        fut = B[k + 1]
        cur = 0
        a, b, c = p1[k], p2[k], pv[k]
        for s in range(S):
            for x in range(4):
                n = ns[s, x]
                if n < 0 or not (fut >> n) & 1:
                    continue
                if a != ERASED and (x & 1) != a:
                    continue
                if b != ERASED and (x >> 1) != b:
                    continue
                if c != ERASED and par[s, x] != c:
                    continue
                cur |= 1 << s
                break
        if cur == 0:
            return k
        B[k] = cur
    for k in range(K):
        cur = F[k]
        fut = B[k + 1]
        a, b, c = p1[k], p2[k], pv[k]
        # bit v of seen1 set <=> u = v is consistent with everything but p1[k]
        seen1 = 0
        seen2 = 0
        for s in range(S):
            if not (cur >> s) & 1:
                continue
            for x in range(4):
                n = ns[s, x]
                if n < 0 or not (fut >> n) & 1:
                    continue
                if c != ERASED and par[s, x] != c:
                    continue
                if b == ERASED or (x >> 1) == b:
                    seen1 |= 1 << (x & 1)
                if a == ERASED or (x & 1) == a:
                    seen2 |= 1 << (x >> 1)
        if seen1 == 0 or seen2 == 0:
            return k
        e1[k] = 0 if seen1 == 1 else (1 if seen1 == 2 else ERASED)
        e2[k] = 0 if seen2 == 1 else (1 if seen2 == 2 else ERASED)
    return -1


@njit(cache=True)
def _component_pass(ns, par, src, dst, idx1, idx2, pv, work):
    """Run one component decoder reading priors from ``src``; merge into ``dst``.

    Returns the number of newly known symbols, or ``-1 - k`` on a
    contradiction at trellis step ``k``.
    """
    K = idx1.shape[0]
    p1 = work[0]
    p2 = work[1]
    e1 = work[2]
    e2 = work[3]
    F = np.empty(K + 1, dtype=np.int64)
    B = np.empty(K + 1, dtype=np.int64)
    for k in range(K):
        p1[k] = src[idx1[k]]
        p2[k] = src[idx2[k]]
    err = _bcjr_kernel(ns, par, p1[:K], p2[:K], pv, e1[:K], e2[:K], F, B)
    if err >= 0:
        return -1 - err
    changed = 0
    for k in range(K):
        for e, g in ((e1[k], idx1[k]), (e2[k], idx2[k])):
            if e == ERASED:
                continue
            if dst[g] == ERASED:
                dst[g] = e
                changed += 1
            elif dst[g] != e:
                return -1 - k
    return changed


@njit(cache=True)
def _turbo_block(ns, par, know, i1u, i2u, i1l, i2l, pvu, pvl, max_inner, work):
    """Alternate upper/lower passes until the lower pass adds nothing.

    Returns ``(newly_known, inner_iterations, error)`` where ``error`` is -1
    or the failing trellis step.
    """
    total = 0
    it = 0
    while it < max_inner:
        it += 1
        c = _component_pass(ns, par, know, know, i1u, i2u, pvu, work)
        if c < 0:
            return total, it, -1 - c
        total += c
        c = _component_pass(ns, par, know, know, i1l, i2l, pvl, work)
        if c < 0:
            return total, it, -1 - c
        total += c
        if c == 0:
            break
    return total, it, -1


def _tables(trellis: Trellis):
    if trellis.num_states > MAX_STATES:
        raise ValueError(f"erasure decoder supports at most {MAX_STATES} states")
    return trellis.tables


# ---------------------------------------------------------------------------
# single trellis


def set_bcjr(trellis: Trellis, prior_u, prior_u2, parity_obs):
    """Extrinsic ternary words for both inputs of one trellis section.

    The extrinsic symbol for input ``j`` at step ``k`` is determined from
    every observation except ``prior_j[k]``.  The forward recursion starts
    in the zero state; the backward recursion starts from all states.  For a
    one-input trellis pass ``prior_u2=None``; the returned second word is
    then all zeros.
    """
    ns, par = _tables(trellis)
    p1 = np.ascontiguousarray(prior_u, dtype=np.uint8)
    pv = np.ascontiguousarray(parity_obs, dtype=np.uint8)
    if prior_u2 is None:
        if trellis.num_inputs == 2:
            raise ValueError("two-input trellis needs prior_u2")
        p2 = np.zeros_like(p1)
    else:
        p2 = np.ascontiguousarray(prior_u2, dtype=np.uint8)
    if not p1.shape == p2.shape == pv.shape or p1.ndim != 1:
        raise ValueError("prior and parity words must be 1-D and of equal length")
    K = p1.shape[0]
    e1 = np.empty(K, dtype=np.uint8)
    e2 = np.empty(K, dtype=np.uint8)
    F = np.empty(K + 1, dtype=np.int64)
    B = np.empty(K + 1, dtype=np.int64)
    err = _bcjr_kernel(ns, par, p1, p2, pv, e1, e2, F, B)
    if err >= 0:
        raise DecodeError(f"observations inconsistent with the trellis at step {err}")
    return e1, e2


def turbo_decode_block(trellis: Trellis, u_obs, u2_obs, parity_upper, parity_lower,
                       perm1, perm2, max_inner_iters: int = 30):
    """Decode one stand-alone duo-binary turbo block.

    ``u2_obs`` holds whatever is known about the second input (incoming
    coupled knowledge and shortened zeros).  Returns the updated knowledge
    of ``u`` and ``u'`` and the number of inner iterations used.
    """
    ns, par = _tables(trellis)
    u_obs = np.asarray(u_obs, dtype=np.uint8)
    u2_obs = np.asarray(u2_obs, dtype=np.uint8)
    K = u_obs.shape[0]
    if u2_obs.shape[0] != K:
        raise ValueError("u and u' observations differ in length")
    know = np.concatenate([u_obs, u2_obs])
    i1 = np.arange(K, dtype=np.int64)
    i2 = np.arange(K, 2 * K, dtype=np.int64)
    perm1 = np.asarray(perm1, dtype=np.int64)
    perm2 = np.asarray(perm2, dtype=np.int64)
    work = np.empty((4, K), dtype=np.uint8)
    _, iters, err = _turbo_block(
        ns, par, know, i1, i2, i1[perm1], i2[perm2],
        np.ascontiguousarray(parity_upper, dtype=np.uint8),
        np.ascontiguousarray(parity_lower, dtype=np.uint8),
        max_inner_iters, work,
    )
    if err >= 0:
        raise DecodeError(f"block decode contradiction at trellis step {err}")
    return know[:K].copy(), know[K:].copy(), iters


# ---------------------------------------------------------------------------
# chain


@dataclass
class DecodeResult:
    u: np.ndarray  # (L, K) ternary knowledge of the first inputs
    payload: np.ndarray  # ternary, payload order
    residual_erasures: int
    sweeps: int
    block_visits: int
    history: list[int] = field(default_factory=list, repr=False)

    @property
    def ber(self) -> float:
        return self.residual_erasures / max(self.payload.size, 1)


class ChainDecoder:
    """Iterative decoder of a whole PIC-dTC chain.

    ``schedule="ffb"`` is the serial feed-forward/feed-back schedule:
    blocks ``1..L`` then ``L..1``, repeated until a double sweep learns
    nothing.  ``schedule="flooding"`` updates every component decoder from a
    common snapshot each round; it reaches the same fixed point.
    """

    def __init__(self, trellis: Trellis, config: CouplingConfig, interleavers: ChainInterleavers,
                 max_inner_iters: int = 30, max_sweeps: int = 20):
        if trellis.num_inputs != 2:
            raise ValueError("chain decoding needs a two-input trellis")
        self.ns, self.par = _tables(trellis)
        self.config = config
        self.max_inner_iters = max_inner_iters
        self.max_sweeps = max_sweeps
        K, L = config.K, config.L
        self.mask = payload_mask(config)
        base1 = np.arange(L * K, dtype=np.int64).reshape(L, K)
        base2 = second_input_index(config)
        rows = np.arange(L)[:, None]
        up = [interleavers.upper(t, K) for t in range(L)]
        self.i1u = np.ascontiguousarray(base1[rows, np.stack([a for a, _ in up])])
        self.i2u = np.ascontiguousarray(base2[rows, np.stack([b for _, b in up])])
        self.i1l = np.ascontiguousarray(base1[rows, interleavers.perm1])
        self.i2l = np.ascontiguousarray(base2[rows, interleavers.perm2])

    def initial_knowledge(self, u_obs) -> np.ndarray:
        K, L = self.config.K, self.config.L
        know = np.zeros(L * K + 1, dtype=np.uint8)
        know[:L * K] = np.where(self.mask, u_obs, 0).ravel()
        return know

    def decode(self, u_obs, pu_obs, pl_obs, schedule: str = "ffb") -> DecodeResult:
        K, L = self.config.K, self.config.L
        know = self.initial_knowledge(np.asarray(u_obs, dtype=np.uint8))
        pu_obs = np.ascontiguousarray(pu_obs, dtype=np.uint8)
        pl_obs = np.ascontiguousarray(pl_obs, dtype=np.uint8)
        work = np.empty((4, K), dtype=np.uint8)
        payload_view = know[:L * K].reshape(L, K)
        history = [int(np.count_nonzero(payload_view == ERASED))]
        if schedule == "ffb":
            sweeps, visits = self._ffb(know, pu_obs, pl_obs, work, history)
        elif schedule == "flooding":
            sweeps, visits = self._flooding(know, pu_obs, pl_obs, work, history)
        else:
            raise ValueError(f"unknown schedule {schedule!r}")
        u = payload_view.copy()
        payload = u[self.mask]
        return DecodeResult(u, payload, int(np.count_nonzero(payload == ERASED)),
                            sweeps, visits, history)

    def _visit(self, t, know, pu_obs, pl_obs, work):
        changed, _, err = _turbo_block(
            self.ns, self.par, know, self.i1u[t], self.i2u[t], self.i1l[t], self.i2l[t],
            pu_obs[t], pl_obs[t], self.max_inner_iters, work,
        )
        if err >= 0:
            raise DecodeError(f"block {t + 1}: contradiction at trellis step {err}")
        return changed

    def _ffb(self, know, pu_obs, pl_obs, work, history):
        L = self.config.L
        visits = 0
        sweeps = 0
        order = list(range(L)) + list(range(L - 1, -1, -1))
        while sweeps < self.max_sweeps:
            sweeps += 1
            changed = 0
            for t in order:
                changed += self._visit(t, know, pu_obs, pl_obs, work)
                visits += 1
                history.append(int(np.count_nonzero(know[:-1] == ERASED)))
                if history[-1] == 0:
                    return sweeps, visits
            if changed == 0:
                break
        return sweeps, visits

    def _flooding(self, know, pu_obs, pl_obs, work, history):
        L = self.config.L
        rounds = 0
        visits = 0
        while rounds < self.max_sweeps * self.max_inner_iters:
            rounds += 1
            snap = know.copy()
            changed = 0
            for t in range(L):
                for i1, i2, pv in ((self.i1u, self.i2u, pu_obs), (self.i1l, self.i2l, pl_obs)):
                    c = _component_pass(self.ns, self.par, snap, know, i1[t], i2[t], pv[t], work)
                    if c < 0:
                        raise DecodeError(f"block {t + 1}: contradiction at trellis step {-1 - c}")
                    changed += c
                visits += 1
            history.append(int(np.count_nonzero(know[:-1] == ERASED)))
            if changed == 0:
                break
        return rounds, visits


def ff_fb_decode(trellis: Trellis, config: CouplingConfig, interleavers: ChainInterleavers,
                 received, max_sweeps: int = 20, max_inner_iters: int = 30) -> DecodeResult:
    """Decode a received ternary chain stream (block order u_1, v_1, u_2, ...)."""
    u_obs, pu_obs, pl_obs = split_stream(np.asarray(received, dtype=np.uint8), config)
    dec = ChainDecoder(trellis, config, interleavers, max_inner_iters, max_sweeps)
    return dec.decode(u_obs, pu_obs, pl_obs)
