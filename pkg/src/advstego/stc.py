"""Single-layered syndrome-trellis codes.

The parity-check matrix H (l x n) tiles a small h x w sub-matrix Hhat along
the diagonal: message bit i owns a block of consecutive cover positions and
every column in that block touches rows i .. i+h-1. Rows past l are cut off.
A Viterbi pass over the 2**h partial syndromes finds the minimum-cost
stego LSB vector y with H y = m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSyndromeError, PayloadError

DEFAULT_HEIGHT = 7
MAX_BRUTE_FORCE = 20


def message_length(alpha: float, n: int) -> int:
    """Number of message bits carried at payload rate ``alpha`` (bits per pixel)."""
    if not 0 < alpha <= 1:
        raise PayloadError(f"payload rate {alpha} outside (0, 1]")
    return max(1, int(math.floor(alpha * n + 0.5)))


def column_bits(col: int, h: int) -> str:
    """Top-to-bottom bit string of a column pattern (bit 0 is the top row)."""
    return "".join(str((col >> r) & 1) for r in range(h))


def parse_column(bits: str) -> int:
    """Inverse of :func:`column_bits`: ``"10"`` is the top row only."""
    return sum(1 << r for r, b in enumerate(bits) if b == "1")


@dataclass(frozen=True)
class StcCode:
    n: int
    l: int
    h: int
    columns: tuple[int, ...]
    widths: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not 1 <= self.l <= self.n:
            raise ValueError(f"need 1 <= l <= n, got l={self.l}, n={self.n}")
        if not 1 <= self.h <= 16:
            raise ValueError(f"constraint height {self.h} out of range")
        w_max = -(-self.n // self.l)
        if len(self.columns) < w_max:
            raise ValueError(f"need {w_max} sub-matrix columns, got {len(self.columns)}")
        for c in self.columns:
            if not 0 < c < (1 << self.h) or not c & 1:
                raise ValueError(f"column {column_bits(c, self.h)} must have its top bit set")
        widths = tuple((i + 1) * self.n // self.l - i * self.n // self.l for i in range(self.l))
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        object.__setattr__(self, "widths", widths)

    @property
    def rate(self) -> float:
        return self.l / self.n

    def block_index(self) -> np.ndarray:
        """Message row owning each cover position."""
        return np.repeat(np.arange(self.l), self.widths)

    def column_patterns(self) -> np.ndarray:
        """Per-position column pattern, truncated below row l."""
        pats = np.concatenate([np.array(self.columns[:w], dtype=np.int64) for w in self.widths])
        rows_left = self.l - self.block_index()
        mask = np.where(rows_left >= self.h, (1 << self.h) - 1, (1 << np.minimum(rows_left, self.h)) - 1)
        return pats & mask

    def parity_check_matrix(self) -> np.ndarray:
        """Dense H; only sensible for small codes."""
        H = np.zeros((self.l, self.n), dtype=np.uint8)
        j = 0
        for i, w in enumerate(self.widths):
            for k in range(w):
                for r in range(self.h):
                    if i + r < self.l and (self.columns[k] >> r) & 1:
                        H[i + r, j] = 1
                j += 1
        return H


def build_code(n: int, l: int, h: int = DEFAULT_HEIGHT, seed: int = 0, columns=None) -> StcCode:
    """Deterministic code for an n-pixel cover carrying l bits.

    ``columns`` overrides the seeded sub-matrix; entries may be ints or
    top-first bit strings such as ``"10"``.
    """
    if l < 1 or 2 * l > n:
        raise PayloadError(f"payload l={l} exceeds n/2 for n={n}")
    if not 1 <= h <= 10:
        raise ValueError(f"constraint height {h} outside [1, 10]")
    w_max = -(-n // l)
    if columns is None:
        columns = _seeded_columns(w_max, h, seed)
    else:
        columns = [parse_column(c) if isinstance(c, str) else int(c) for c in columns]
    return StcCode(n=n, l=l, h=h, columns=tuple(columns))


def _seeded_columns(w: int, h: int, seed: int) -> list[int]:
    """Top-bit-set columns, first and last all-ones, distinct while the pool allows."""
    rng = np.random.default_rng(seed)
    full = (1 << h) - 1
    pool = [c for c in range(1, full, 2)]  # top bit set, all-ones excluded
    n_mid = max(0, w - 2) if w > 1 else 0
    if w == 2:
        n_mid = 1
    if n_mid <= len(pool):
        mid = rng.choice(pool, size=n_mid, replace=False).tolist()
    else:
        mid = (rng.integers(0, 1 << (h - 1), size=n_mid) * 2 + 1).tolist()
    if w == 1:
        return [full]
    if w == 2:
        # two all-ones columns would make every block rank one
        return [full] + mid
    return [full] + mid + [full]


@dataclass(frozen=True, eq=False)
class EmbedResult:
    stego_lsb: np.ndarray
    flip_pattern: np.ndarray
    total_cost: float

    @property
    def positions(self) -> np.ndarray:
        return np.flatnonzero(self.flip_pattern)


def _as_bits(v, name: str, length: int) -> np.ndarray:
    a = np.asarray(v).astype(np.uint8).ravel()
    if a.size != length:
        raise ValueError(f"{name} has length {a.size}, expected {length}")
    if a.size and a.max() > 1:
        raise ValueError(f"{name} must be binary")
    return a


def _result(x: np.ndarray, y: np.ndarray, rho: np.ndarray) -> EmbedResult:
    s = (x ^ y).astype(np.uint8)
    return EmbedResult(y.astype(np.uint8), s, math.fsum(rho[s == 1]))


def _check_inputs(x, m, rho, code):
    x = _as_bits(x, "cover LSB vector", code.n)
    m = _as_bits(m, "message", code.l)
    rho = np.asarray(rho, dtype=np.float64).ravel()
    if rho.size != code.n:
        raise ValueError(f"cost vector has length {rho.size}, expected {code.n}")
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise ValueError("costs must be finite and non-negative")
    return x, m, rho


def stc_embed(x, m, rho, code: StcCode) -> EmbedResult:
    x, m, rho = _check_inputs(x, m, rho, code)
    n_states = 1 << code.h
    half = n_states >> 1
    states = np.arange(n_states)
    cols = code.column_patterns()

    cost = np.full(n_states, np.inf)
    cost[0] = 0.0
    flips = np.zeros(n_states, dtype=np.int64)
    choice = np.empty((code.n, n_states), dtype=bool)
    inf_half = np.full(n_states - half, np.inf)
    zero_half = np.zeros(n_states - half, dtype=np.int64)

    j = 0
    for i, w in enumerate(code.widths):
        for _ in range(w):
            xj = int(x[j])
            src = states ^ cols[j]
            c0 = cost + rho[j] * xj
            c1 = cost[src] + rho[j] * (1 - xj)
            f0 = flips + xj
            f1 = flips[src] + (1 - xj)
            take1 = (c1 < c0) | ((c1 == c0) & (f1 < f0))
            cost = np.where(take1, c1, c0)
            flips = np.where(take1, f1, f0)
            choice[j] = take1
            j += 1
        # leave row i: keep states whose lowest bit matches m_i, then shift
        bit = int(m[i])
        cost = np.concatenate([cost[bit::2], inf_half])
        flips = np.concatenate([flips[bit::2], zero_half])

    if not np.isfinite(cost[0]):
        raise InfeasibleSyndromeError("no stego vector satisfies the syndrome")

    y = np.empty(code.n, dtype=np.uint8)
    state = 0
    j = code.n
    for i in range(code.l - 1, -1, -1):
        state = (state << 1) | int(m[i])
        for _ in range(code.widths[i]):
            j -= 1
            yj = choice[j, state]
            y[j] = yj
            if yj:
                state ^= int(cols[j])
    if state != 0:
        raise InfeasibleSyndromeError("trellis back-tracking did not return to the zero state")
    return _result(x, y, rho)


def stc_extract(y, code: StcCode) -> np.ndarray:
    """Syndrome H y over GF(2), computed from the band structure."""
    y = _as_bits(y, "stego LSB vector", code.n)
    cols = code.column_patterns()
    rows = code.block_index()
    acc = np.zeros(code.l + code.h, dtype=np.int64)
    for r in range(code.h):
        hit = ((cols >> r) & 1).astype(bool) & (y == 1)
        acc += np.bincount(rows[hit] + r, minlength=code.l + code.h)
    return (acc[:code.l] & 1).astype(np.uint8)


def brute_force_embed(x, m, rho, code: StcCode) -> EmbedResult:
    """Exact optimum of the syndrome-constrained problem by enumerating all 2**n vectors."""
    if code.n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force limited to n <= {MAX_BRUTE_FORCE}, got {code.n}")
    x, m, rho = _check_inputs(x, m, rho, code)
    H = code.parity_check_matrix().astype(np.int64)
    cand = ((np.arange(1 << code.n)[:, None] >> np.arange(code.n)) & 1).astype(np.int64)
    ok = np.all((cand @ H.T) % 2 == m, axis=1)
    cand = cand[ok]
    if len(cand) == 0:
        raise InfeasibleSyndromeError("no vector satisfies the syndrome")
    changed = cand != x
    costs = changed @ rho
    nflips = changed.sum(axis=1)
    best = np.lexsort((nflips, costs))[0]
    return _result(x, cand[best].astype(np.uint8), rho)


def bytes_to_bits(data: bytes) -> np.ndarray:
    """MSB-first bit expansion."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    """MSB-first packing; a ragged tail is zero-padded."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()
