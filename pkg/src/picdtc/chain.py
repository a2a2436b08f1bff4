"""PIC-dTC chain geometry and encoder.

Block ``t`` (1-based) carries ``u_t`` on the first input of the duo-binary
component code and ``u'_t`` on the second input.  With segment length
``s = Kc / m`` the layouts are contiguous::

    u_t  = [ u_{t,t} (K - Kc) | u_{t,t+1} (s) | ... | u_{t,t+m} (s) ]
    u'_t = [ u_{t-1,t} (s) | u_{t-2,t} (s) | ... | u_{t-m,t} (s) | 0 (K - Kc) ]

Segments ``u_{t,t+j}`` with ``t + j > L`` and ``u_{t-j,t}`` with ``t - j < 1``
are structural zeros.  Only non-structural positions of ``u_t`` carry payload
and only those are transmitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .trellis import Trellis, rsc_encode


class ConfigError(ValueError):
    """Raised for inconsistent coupling parameters."""


@dataclass(frozen=True)
class CouplingConfig:
    K: int
    Kc: int
    m: int = 1
    L: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if not 0 <= self.Kc <= self.K:
            raise ConfigError(f"need 0 <= Kc <= K, got Kc={self.Kc}, K={self.K}")
        if self.m < 1:
            raise ConfigError(f"coupling memory m must be >= 1, got {self.m}")
        if self.L < 1:
            raise ConfigError(f"chain length L must be >= 1, got {self.L}")
        if self.Kc % self.m:
            raise ConfigError(f"Kc={self.Kc} is not divisible by m={self.m}")

    @property
    def lam(self) -> Fraction:
        return Fraction(self.Kc, self.K)

    @property
    def segment(self) -> int:
        return self.Kc // self.m

    @property
    def structural_zeros(self) -> int:
        """Number of shortened first-input positions over the whole chain."""
        # block t loses the segments u_{t,t+j} with t + j > L
        dead = sum(self.m - (self.L - t) for t in range(max(1, self.L - self.m + 1), self.L + 1))
        return dead * self.segment

    @property
    def payload_bits(self) -> int:
        return self.K * self.L - self.structural_zeros

    @property
    def transmitted_bits(self) -> int:
        return 3 * self.K * self.L - self.structural_zeros

    @classmethod
    def from_lambda(cls, K: int, lam, m: int = 1, L: int = 1) -> CouplingConfig:
        """Pick ``Kc = floor(lam * K)`` rounded down to a multiple of ``m``."""
        Kc = int(Fraction(lam) * K)
        Kc -= Kc % m
        return cls(K=K, Kc=Kc, m=m, L=L)


@dataclass(frozen=True)
class Segment:
    """A coupled segment ``u_{src,dst}`` living at ``u_src[start:stop]``."""

    src: int
    dst: int
    start: int
    stop: int
    live: bool


@dataclass(frozen=True)
class BlockLayout:
    t: int
    K: int
    uncoupled: tuple[int, int]
    outgoing: tuple[Segment, ...]
    # incoming[j-1] sits at u'_t[(j-1)s : js]
    incoming: tuple[Segment, ...]

    @property
    def padding(self) -> int:
        seg = sum(sg.stop - sg.start for sg in self.incoming if sg.live)
        return self.K - seg


def make_layout(config: CouplingConfig) -> list[BlockLayout]:
    K, Kc, m, L = config.K, config.Kc, config.m, config.L
    s = config.segment
    out = []
    for t in range(1, L + 1):
        outgoing = tuple(
            Segment(t, t + j, K - Kc + (j - 1) * s, K - Kc + j * s, t + j <= L)
            for j in range(1, m + 1)
        )
        incoming = tuple(
            Segment(t - j, t, K - Kc + (j - 1) * s, K - Kc + j * s, t - j >= 1)
            for j in range(1, m + 1)
        )
        out.append(BlockLayout(t, K, (0, K - Kc), outgoing, incoming))
    return out


def payload_mask(config: CouplingConfig) -> np.ndarray:
    """Boolean ``(L, K)`` array, True where ``u_t`` carries payload."""
    mask = np.ones((config.L, config.K), dtype=bool)
    for lay in make_layout(config):
        for sg in lay.outgoing:
            if not sg.live:
                mask[lay.t - 1, sg.start:sg.stop] = False
    return mask


def second_input_index(config: CouplingConfig) -> np.ndarray:
    """Map every ``u'_t`` position to a flat index into the ``(L, K)`` u-array.

    Structural zeros map to ``L * K``, an extra always-zero slot.
    """
    K, L = config.K, config.L
    s = config.segment
    idx = np.full((L, K), L * K, dtype=np.int64)
    for lay in make_layout(config):
        for j, sg in enumerate(lay.incoming):
            if sg.live:
                idx[lay.t - 1, j * s:(j + 1) * s] = (sg.src - 1) * K + np.arange(sg.start, sg.stop)
    return idx


def code_rate(config: CouplingConfig) -> Fraction:
    return Fraction(config.payload_bits, config.transmitted_bits)


@dataclass(frozen=True)
class ChainInterleavers:
    """Per-block permutations of both inputs for both component encoders.

    The lower encoder sees ``u_t[perm1[t]]`` and ``u'_t[perm2[t]]``. The
    upper encoder sees ``u_t[upper1[t]]`` and ``u'_t[upper2[t]]``, or the
    natural order when these are ``None``. In natural order the coupled
    segments and shortened zeros form contiguous runs along the upper
    trellis, which is not the i.i.d. erasure pattern density evolution
    assumes; scrambling the upper inputs too restores that assumption.
    """

    perm1: np.ndarray
    perm2: np.ndarray
    upper1: np.ndarray | None = None
    upper2: np.ndarray | None = None

    @classmethod
    def random(cls, config: CouplingConfig, rng: np.random.Generator,
               scramble_upper: bool = True) -> ChainInterleavers:
        def draw():
            return np.stack([rng.permutation(config.K) for _ in range(config.L)])

        p1, p2 = draw(), draw()
        if not scramble_upper:
            return cls(p1, p2)
        return cls(p1, p2, draw(), draw())

    @classmethod
    def from_seed(cls, config: CouplingConfig, seed: int,
                  scramble_upper: bool = True) -> ChainInterleavers:
        return cls.random(config, np.random.default_rng(seed), scramble_upper)

    def upper(self, t: int, K: int) -> tuple[np.ndarray, np.ndarray]:
        ident = np.arange(K)
        return (ident if self.upper1 is None else self.upper1[t],
                ident if self.upper2 is None else self.upper2[t])


@dataclass
class ChainCodeword:
    config: CouplingConfig
    u: np.ndarray  # (L, K) first inputs, structural zeros included
    u2: np.ndarray  # (L, K) second inputs (not transmitted)
    parity_upper: np.ndarray  # (L, K)
    parity_lower: np.ndarray  # (L, K)
    mask: np.ndarray = field(repr=False)

    def to_stream(self) -> np.ndarray:
        """Flat transmitted stream: per block, payload bits of u_t, then v_t^U, v_t^L."""
        parts = []
        for t in range(self.config.L):
            parts += [self.u[t][self.mask[t]], self.parity_upper[t], self.parity_lower[t]]
        return np.concatenate(parts).astype(np.uint8)


def split_stream(stream: np.ndarray, config: CouplingConfig):
    """Inverse of :meth:`ChainCodeword.to_stream`.

    Returns ``(u, parity_upper, parity_lower)`` as ``(L, K)`` arrays; the
    structural positions of ``u`` are filled with 0.
    """
    stream = np.asarray(stream)
    if stream.shape[0] != config.transmitted_bits:
        raise ConfigError(
            f"stream has {stream.shape[0]} symbols, expected {config.transmitted_bits}"
        )
    mask = payload_mask(config)
    K, L = config.K, config.L
    u = np.zeros((L, K), dtype=stream.dtype)
    pu = np.empty((L, K), dtype=stream.dtype)
    pl = np.empty((L, K), dtype=stream.dtype)
    pos = 0
    for t in range(L):
        n = int(mask[t].sum())
        u[t][mask[t]] = stream[pos:pos + n]
        pos += n
        pu[t] = stream[pos:pos + K]
        pos += K
        pl[t] = stream[pos:pos + K]
        pos += K
    return u, pu, pl


def encode_chain(info, config: CouplingConfig, interleavers: ChainInterleavers,
                 trellis2: Trellis) -> ChainCodeword:
    if trellis2.num_inputs != 2:
        raise ConfigError("chain encoding needs a two-input (duo-binary) trellis")
    info = np.asarray(info, dtype=np.uint8)
    if info.ndim != 1 or info.shape[0] != config.payload_bits:
        raise ConfigError(
            f"payload has {info.size} bits, chain carries {config.payload_bits}"
        )
    mask = payload_mask(config)
    u = np.zeros((config.L, config.K), dtype=np.uint8)
    u[mask] = info
    flat = np.concatenate([u.ravel(), np.zeros(1, dtype=np.uint8)])
    u2 = flat[second_input_index(config)]
    pu = np.empty_like(u)
    pl = np.empty_like(u)
    for t in range(config.L):
        q1, q2 = interleavers.upper(t, config.K)
        pu[t], _ = rsc_encode(trellis2, u[t][q1], u2[t][q2])
        p1, p2 = interleavers.perm1[t], interleavers.perm2[t]
        pl[t], _ = rsc_encode(trellis2, u[t][p1], u2[t][p2])
    return ChainCodeword(config, u, u2, pu, pl, mask)
