"""Recursive systematic convolutional trellises built from octal generators.

Polynomials follow the usual turbo-code convention: the octal string ``"5"``
is binary ``101`` which is ``1 + D^2`` (most significant bit = highest degree).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit


class TrellisError(ValueError):
    """Raised for malformed polynomials or trellis construction failures."""


@dataclass(frozen=True)
class OctalPoly:
    """Binary polynomial; ``coefficients[i]`` is the coefficient of ``D**i``."""

    coefficients: tuple[int, ...]

    @property
    def degree(self) -> int:
        nz = [i for i, c in enumerate(self.coefficients) if c]
        return nz[-1] if nz else 0

    @property
    def octal(self) -> str:
        value = sum(c << i for i, c in enumerate(self.coefficients))
        return format(value, "o")

    def coef(self, i: int) -> int:
        return self.coefficients[i] if i < len(self.coefficients) else 0

    def __str__(self) -> str:
        return self.octal


def parse_octal(text: str | int | OctalPoly) -> OctalPoly:
    """Parse an octal generator such as ``"7"`` into an :class:`OctalPoly`."""
    if isinstance(text, OctalPoly):
        return text
    text = str(text).strip()
    if text.lower().startswith("0o"):
        text = text[2:]
    if not text or any(ch not in "01234567" for ch in text):
        raise TrellisError(f"not an octal polynomial: {text!r}")
    value = int(text, 8)
    if value == 0:
        return OctalPoly((0,))
    coeffs = tuple((value >> i) & 1 for i in range(value.bit_length()))
    return OctalPoly(coeffs)


@dataclass(frozen=True, eq=False)
class Trellis:
    """Time-invariant trellis of an RSC encoder with one or two inputs.

    Input tuples are packed into an integer ``x``: bit 0 is the first input
    ``u`` and bit 1 (when present) is the second input ``u'``.  ``next_state``
    and ``parity`` are ``(num_states, 2**num_inputs)`` arrays.
    """

    g_f: OctalPoly
    g_f2: OctalPoly | None
    g_b: OctalPoly
    next_state: np.ndarray
    parity: np.ndarray

    @property
    def memory(self) -> int:
        return self.g_b.degree

    @property
    def num_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def num_inputs(self) -> int:
        return 1 if self.g_f2 is None else 2

    @property
    def label(self) -> str:
        if self.g_f2 is None:
            return f"({self.g_f}/{self.g_b})"
        return f"({self.g_f}/{self.g_b}, {self.g_f2}/{self.g_b})"

    @cached_property
    def tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Two-input view of the transition tables (``u'`` pinned to 0 if absent).

        Kernels always run on a 4-column table; a single-input trellis gets
        its ``u' = 1`` columns marked invalid with ``-1``.
        """
        ns = np.full((self.num_states, 4), -1, dtype=np.int64)
        par = np.full((self.num_states, 4), -1, dtype=np.int64)
        cols = 2**self.num_inputs
        ns[:, :cols] = self.next_state
        par[:, :cols] = self.parity
        ns.setflags(write=False)
        par.setflags(write=False)
        return ns, par

    def shortened(self) -> Trellis:
        """Transition table with the second input pinned to zero."""
        if self.g_f2 is None:
            return self
        return Trellis(
            self.g_f,
            None,
            self.g_b,
            _readonly(self.next_state[:, :2].copy()),
            _readonly(self.parity[:, :2].copy()),
        )

    def __repr__(self) -> str:
        return f"Trellis{self.label}"


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_trellis(g_f, g_f2, g_b) -> Trellis:
    """Build the trellis of ``[1 g_f/g_b]`` or ``[1 0 g_f/g_b; 0 1 g_f2/g_b]``.

    The encoder is realized in observer (transposed) canonical form:
    ``memory = deg(g_b)`` registers ``s_1 .. s_m`` hold the pending parity
    contributions, with

        v_k   = s_1 + g_f[0] u_k + g_f2[0] u'_k
        s_i  <- s_{i+1} + g_f[i] u_k + g_f2[i] u'_k + g_b[i] v_k

    This is minimal for both arities, so the shortened two-input trellis is
    transition-for-transition the one-input trellis.  State integer bit
    ``i-1`` holds ``s_i``.
    """
    g_f = parse_octal(g_f)
    g_b = parse_octal(g_b)
    g_f2 = None if g_f2 is None else parse_octal(g_f2)

    if not any(g_b.coefficients):
        raise TrellisError("feedback polynomial must be nonzero")
    if g_b.coef(0) != 1:
        raise TrellisError(f"feedback polynomial {g_b} must have constant term 1")
    nu = g_b.degree
    if nu < 1:
        raise TrellisError("feedback polynomial must have degree >= 1")
    for name, g in (("g_f", g_f), ("g_f2", g_f2)):
        if g is not None and g.degree > nu:
            raise TrellisError(f"{name}={g} has degree {g.degree} > deg(g_b)={nu}")

    num_inputs = 1 if g_f2 is None else 2
    num_states = 1 << nu
    next_state = np.zeros((num_states, 1 << num_inputs), dtype=np.int64)
    parity = np.zeros_like(next_state)
    for s in range(num_states):
        regs = [(s >> i) & 1 for i in range(nu)] + [0]
        for x in range(1 << num_inputs):
            u = x & 1
            u2 = (x >> 1) & 1
            v = regs[0] ^ (g_f.coef(0) & u)
            if g_f2 is not None:
                v ^= g_f2.coef(0) & u2
            ns = 0
            for i in range(1, nu + 1):
                bit = regs[i] ^ (g_f.coef(i) & u) ^ (g_b.coef(i) & v)
                if g_f2 is not None:
                    bit ^= g_f2.coef(i) & u2
                ns |= bit << (i - 1)
            next_state[s, x] = ns
            parity[s, x] = v
    return Trellis(g_f, g_f2, g_b, _readonly(next_state), _readonly(parity))


def rsc_encode(trellis: Trellis, u, u2=None, *, initial_state: int = 0):
    """Encode one (or two) bit sequences; returns ``(parity, final_state)``.

    No termination bits are appended.
    """
    u = np.asarray(u, dtype=np.int64)
    if trellis.num_inputs == 2:
        if u2 is None:
            raise TrellisError("two-input trellis needs both input sequences")
        u2 = np.asarray(u2, dtype=np.int64)
        if u2.shape != u.shape:
            raise TrellisError(f"input lengths differ: {u.shape[0]} vs {u2.shape[0]}")
        x = u | (u2 << 1)
    else:
        if u2 is not None:
            raise TrellisError("one-input trellis takes a single input sequence")
        x = u
    if x.ndim != 1:
        raise TrellisError("inputs must be one-dimensional bit sequences")
    if np.any((u < 0) | (u > 1)) or (u2 is not None and np.any((u2 < 0) | (u2 > 1))):
        raise TrellisError("inputs must be bits")
    parity, state = _encode_kernel(trellis.next_state, trellis.parity, x, initial_state)
    return parity.astype(np.uint8), int(state)


@njit(cache=True)
def _encode_kernel(next_state, parity_table, x, state):
    out = np.empty(x.shape[0], dtype=np.int64)
    for k in range(x.shape[0]):
        out[k] = parity_table[state, x[k]]
        state = next_state[state, x[k]]
    return out, state

