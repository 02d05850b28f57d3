"""Shift-space primitives.

One-sided subshifts of finite type over the alphabet {1, ..., m}, with the
beta-adic metric d(x, y) = sum_j |x_j - y_j| / beta^j.  All symbol data is
1-based to match the usual alphabet convention; transition matrices are 0/1
numpy arrays indexed from 0 (symbol s occupies row/column s-1).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DepthError, InputError, InvariantError


def _as_symbols(word):
    """Normalize a word-like input to a tuple of Python ints."""
    return tuple(int(s) for s in word)


@dataclass(frozen=True)
class ShiftSpace:
    """A topologically mixing SFT: alphabet size, 0/1 transition matrix, metric base."""

    alphabet_size: int
    transition: np.ndarray
    beta: float

    def __post_init__(self):
        m = self.alphabet_size
        if m < 2:
            raise InvariantError(f"alphabet_size must be >= 2, got {m}",
                                 module="sofic", operation="ShiftSpace")
        if self.beta <= 1.0:
            raise InvariantError(f"beta must be > 1, got {self.beta}",
                                 module="sofic", operation="ShiftSpace")
        t = np.asarray(self.transition, dtype=np.int8)
        if t.shape != (m, m):
            raise InvariantError(f"transition must be {m}x{m}, got {t.shape}",
                                 module="sofic", operation="ShiftSpace")
        if not np.isin(t, (0, 1)).all():
            raise InvariantError("transition entries must be 0 or 1",
                                 module="sofic", operation="ShiftSpace")
        for i in range(m):
            if not t[i].any():
                raise InvariantError(f"transition row {i + 1} is all zero (dead symbol)",
                                     module="sofic", operation="ShiftSpace")
            if not t[:, i].any():
                raise InvariantError(f"transition column {i + 1} is all zero (dead symbol)",
                                     module="sofic", operation="ShiftSpace")
        t.setflags(write=False)
        object.__setattr__(self, "transition", t)
        if not self._is_primitive():
            raise InvariantError(
                "transition matrix is not primitive (SFT not topologically mixing)",
                module="sofic", operation="ShiftSpace")

    def _is_primitive(self):
        # Wielandt bound: a primitive m x m matrix has a positive power with
        # exponent at most (m-1)^2 + 1.
        m = self.alphabet_size
        bound = (m - 1) ** 2 + 1
        p = np.asarray(self.transition, dtype=bool)
        acc = p.copy()
        for _ in range(bound - 1):
            if acc.all():
                return True
            acc = (acc.astype(np.int64) @ p.astype(np.int64)) > 0
        return bool(acc.all())

    @property
    def m(self):
        return self.alphabet_size

    def allows(self, a, b):
        """Whether symbol b may follow symbol a."""
        return bool(self.transition[a - 1, b - 1])

    def successors(self, a):
        """Symbols that may follow a, in increasing order."""
        return tuple(int(j) + 1 for j in np.flatnonzero(self.transition[a - 1]))

    def metric_tail_bound(self, depth):
        """Upper bound on the metric mass beyond the given depth."""
        return (self.m - 1) * self.beta ** (-depth) / (self.beta - 1.0)

    def to_json(self):
        return {"m": self.alphabet_size,
                "beta": float(self.beta),
                "transition": self.transition.astype(int).tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(alphabet_size=int(obj["m"]),
                   transition=np.array(obj["transition"], dtype=np.int8),
                   beta=float(obj["beta"]))

    @classmethod
    def full_shift(cls, m, beta=2.0):
        return cls(alphabet_size=m, transition=np.ones((m, m), dtype=np.int8), beta=beta)

    @classmethod
    def golden_mean(cls, beta=2.0):
        return cls(alphabet_size=2, transition=np.array([[1, 1], [1, 0]], dtype=np.int8),
                   beta=beta)


@dataclass(frozen=True)
class PointPrefix:
    """A finite, trusted prefix of a point of the shift space.

    The tail rule used at construction time (periodic continuation or seeded
    generation) is realized by materializing symbols up to usable_depth; all
    downstream metric and measure operations take an explicit depth budget
    and fail loudly past it.
    """

    symbols: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.int16)
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    @property
    def usable_depth(self):
        return int(self.symbols.shape[0])

    def shift(self, j):
        """Drop the first j symbols (apply the shift map j times)."""
        if j < 0 or j > self.usable_depth:
            raise DepthError(f"shift by {j} outside usable depth {self.usable_depth}",
                             module="sofic", operation="shift")
        return PointPrefix(self.symbols[j:])

    def head(self, depth):
        if depth > self.usable_depth:
            raise DepthError(f"requested depth {depth} > usable depth {self.usable_depth}",
                             module="sofic", operation="head")
        return _as_symbols(self.symbols[:depth])

    @classmethod
    def periodic(cls, word, depth, space=None):
        """The point obtained by repeating `word`, materialized to `depth` symbols."""
        w = _as_symbols(word)
        if not w:
            raise InputError("periodic point needs a nonempty word",
                             module="sofic", operation="PointPrefix.periodic")
        if space is not None:
            if not is_admissible(w, space):
                raise InputError(f"word {w} is not admissible",
                                 module="sofic", operation="PointPrefix.periodic")
            if not space.allows(w[-1], w[0]):
                raise InputError(f"word {w} cannot be repeated (wrap pair forbidden)",
                                 module="sofic", operation="PointPrefix.periodic")
        reps = -(-depth // len(w))
        return cls(np.tile(np.asarray(w, dtype=np.int16), max(reps, 1))[:depth])

    @classmethod
    def from_word(cls, word):
        return cls(np.asarray(_as_symbols(word), dtype=np.int16))


def is_admissible(word, space):
    """True iff every adjacent symbol pair of the word is allowed."""
    w = _as_symbols(word)
    for s in w:
        if not 1 <= s <= space.m:
            raise InputError(f"symbol {s} outside alphabet 1..{space.m}",
                             module="sofic", operation="is_admissible")
    return all(space.allows(a, b) for a, b in zip(w, w[1:]))


def truncated_metric(x, y, depth, space):
    """Partial sum of the beta-adic metric to `depth`, with a rigorous tail bound.

    Returns (value, error_bound); the true distance lies in
    [value, value + error_bound].
    """
    if depth > min(x.usable_depth, y.usable_depth):
        raise DepthError(
            f"depth {depth} exceeds usable depths ({x.usable_depth}, {y.usable_depth})",
            module="sofic", operation="truncated_metric")
    a = x.symbols[:depth].astype(np.float64)
    b = y.symbols[:depth].astype(np.float64)
    weights = space.beta ** (-np.arange(1, depth + 1, dtype=np.float64))
    value = float(np.abs(a - b) @ weights)
    return value, space.metric_tail_bound(depth)


def connector(u, v, space, m_blk=1, allow_empty=True):
    """Shortest bridge word omega with |omega| a multiple of m_blk and u omega v admissible.

    Ties at the minimal length are broken lexicographically.  Only the last
    symbol of u and the first of v matter.
    """
    if m_blk < 1:
        raise InputError(f"m_blk must be >= 1, got {m_blk}",
                         module="sofic", operation="connector")
    u = _as_symbols(u)
    v = _as_symbols(v)
    if not u or not v:
        raise InputError("connector requires nonempty words",
                         module="sofic", operation="connector")
    a, b = u[-1], v[0]
    if allow_empty and space.allows(a, b):
        return ()
    max_len = m_blk * ((space.m - 1) ** 2 + 2)
    for length in range(m_blk, max_len + 1, m_blk):
        for cand in itertools.product(range(1, space.m + 1), repeat=length):
            if not space.allows(a, cand[0]):
                continue
            ok = all(space.allows(p, q) for p, q in zip(cand, cand[1:]))
            if ok and space.allows(cand[-1], b):
                return cand
    raise InvariantError(
        f"no bridge of length <= {max_len} between symbols {a} and {b}; "
        "space should have been rejected as non-primitive",
        module="sofic", operation="connector")


def specification_constant(space, m_blk=1):
    """Diagnostic tau: max over symbol pairs of the minimal bridge length."""
    worst = 0
    for a in range(1, space.m + 1):
        for b in range(1, space.m + 1):
            w = connector((a,), (b,), space, m_blk=m_blk, allow_empty=True)
            worst = max(worst, len(w))
    return worst


def topological_entropy(space, tol=1e-12, max_iter=200000):
    """log of the Perron eigenvalue of the transition matrix, by power iteration."""
    a = space.transition.astype(np.float64)
    v = np.full(space.m, 1.0 / space.m)
    lam = 0.0
    for _ in range(max_iter):
        w = a @ v
        new_lam = float(np.linalg.norm(w))
        w /= new_lam
        if abs(new_lam - lam) <= tol * max(new_lam, 1.0):
            # one Rayleigh-quotient polish for the eigenvalue itself
            lam = float(w @ (a @ w) / (w @ w))
            return float(np.log(lam))
        v, lam = w, new_lam
    raise InvariantError("power iteration failed to converge",
                         module="sofic", operation="topological_entropy")


def count_admissible(space, n):
    """Number of admissible words of length n (exact, arbitrary precision)."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}",
                         module="sofic", operation="count_admissible")
    m = space.m
    t = [[int(space.transition[i, j]) for j in range(m)] for i in range(m)]
    # row vector of ones times transition^(n-1), all in Python ints: no overflow
    row = [1] * m
    for _ in range(n - 1):
        row = [sum(row[i] * t[i][j] for i in range(m)) for j in range(m)]
    return sum(row)


def admissible_words(space, n):
    """All admissible words of length n, lexicographically ordered."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}",
                         module="sofic", operation="admissible_words")
    out = [(s,) for s in range(1, space.m + 1)]
    for _ in range(n - 1):
        out = [w + (s,) for w in out for s in space.successors(w[-1])]
    return out
