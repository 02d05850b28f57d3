"""Markov measures, empirical measures, and exact Wasserstein-1 transport.

Finitely supported measures store their atoms as a (k, width) array of
symbol prefixes.  The W1 solver works on ground costs truncated at an
explicit depth; the only error source is the metric truncation bound, which
is returned alongside every value.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import DepthError, InputError, InvariantError, SizeError
from .sofic import PointPrefix, ShiftSpace, admissible_words, topological_entropy

# Counter-based RNG used by every sampling operation (documented in the CLI).
def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


try:
    from numba import njit as _njit
except ImportError:          # pragma: no cover - numba is optional
    _njit = None

if _njit is not None:
    @_njit(cache=True)
    def _chain_walk_jit(cums, u, s0, out):
        s = s0
        m = cums.shape[0]
        out[0] = s + 1
        for i in range(1, u.shape[0]):
            ui = u[i]
            t = 0
            while t < m - 1 and cums[s, t] <= ui:
                t += 1
            s = t
            out[i] = s + 1


def _chain_walk(cums, u, s0, out):
    """Inverse-CDF walk of the chain; identical semantics to the jit kernel."""
    if _njit is not None and u.shape[0] > 4096:
        _chain_walk_jit(cums, u, s0, out)
        return
    s = s0
    m = cums.shape[0]
    out[0] = s + 1
    for i in range(1, u.shape[0]):
        s = min(int(np.searchsorted(cums[s], u[i], side="right")), m - 1)
        out[i] = s + 1


@dataclass(frozen=True)
class MarkovMeasure:
    """A shift-invariant Markov measure compatible with a given space."""

    stochastic: np.ndarray
    space: ShiftSpace
    stationary: np.ndarray = None

    def __post_init__(self):
        p = np.asarray(self.stochastic, dtype=np.float64)
        m = self.space.m
        if p.shape != (m, m):
            raise InvariantError(f"stochastic matrix must be {m}x{m}, got {p.shape}",
                                 module="measures", operation="MarkovMeasure")
        if (p < 0).any():
            raise InvariantError("stochastic entries must be nonnegative",
                                 module="measures", operation="MarkovMeasure")
        if np.abs(p.sum(axis=1) - 1.0).max() > 1e-12:
            raise InvariantError("stochastic rows must sum to 1 within 1e-12",
                                 module="measures", operation="MarkovMeasure")
        if ((p > 0) & (self.space.transition == 0)).any():
            raise InvariantError("stochastic support exceeds the transition matrix",
                                 module="measures", operation="MarkovMeasure")
        p.setflags(write=False)
        object.__setattr__(self, "stochastic", p)
        if self.stationary is None:
            object.__setattr__(self, "stationary", _stationary_vector(p))
        pi = np.asarray(self.stationary, dtype=np.float64)
        if (pi < 0).any() or abs(pi.sum() - 1.0) > 1e-10:
            raise InvariantError("stationary vector must be a probability vector",
                                 module="measures", operation="MarkovMeasure")
        if np.abs(pi @ p - pi).max() > 1e-10:
            raise InvariantError("stationary vector is not invariant within 1e-10",
                                 module="measures", operation="MarkovMeasure")
        pi.setflags(write=False)
        object.__setattr__(self, "stationary", pi)

    @property
    def is_bernoulli(self):
        return bool(np.abs(self.stochastic - self.stochastic[0]).max() == 0.0)

    def cylinder_probability(self, word):
        w = [int(s) for s in word]
        if not w:
            return 1.0
        p = self.stationary[w[0] - 1]
        for a, b in zip(w, w[1:]):
            p *= self.stochastic[a - 1, b - 1]
        return float(p)

    def entropy(self):
        p = self.stochastic
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(p > 0, p * np.log(p), 0.0)
        return float(-(self.stationary @ plogp.sum(axis=1)))

    def sample(self, n, rng):
        """A length-n word from the stationary chain (fast path for iid rows)."""
        if n < 1:
            raise InputError(f"n must be >= 1, got {n}",
                             module="measures", operation="sample")
        if self.is_bernoulli:
            cum = np.cumsum(self.stochastic[0])
            u = rng.random(n)
            return (np.searchsorted(cum, u, side="right") + 1).astype(np.int16)
        cums = np.cumsum(self.stochastic, axis=1)
        u = rng.random(n)
        out = np.empty(n, dtype=np.int16)
        s0 = min(int(np.searchsorted(np.cumsum(self.stationary), u[0], side="right")),
                 self.space.m - 1)
        _chain_walk(cums, u, s0, out)
        return out

    def to_json(self):
        return {"stochastic": self.stochastic.tolist(),
                "stationary": self.stationary.tolist()}

    @classmethod
    def from_json(cls, obj, space):
        return cls(stochastic=np.array(obj["stochastic"], dtype=np.float64),
                   space=space,
                   stationary=(np.array(obj["stationary"], dtype=np.float64)
                               if obj.get("stationary") is not None else None))

    @classmethod
    def bernoulli(cls, probs, space):
        probs = np.asarray(probs, dtype=np.float64)
        return cls(stochastic=np.tile(probs, (space.m, 1)), space=space,
                   stationary=probs.copy())

    @classmethod
    def parry(cls, space):
        """The measure of maximal entropy."""
        a = space.transition.astype(np.float64)
        lam = float(np.exp(topological_entropy(space)))
        v = _perron_vector(a)
        u = _perron_vector(a.T)
        p = a * v[None, :] / (lam * v[:, None])
        p /= p.sum(axis=1, keepdims=True)
        pi = u * v
        pi /= pi.sum()
        return cls(stochastic=p, space=space, stationary=pi)


def _perron_vector(a, tol=1e-14, max_iter=200000):
    v = np.full(a.shape[0], 1.0 / a.shape[0])
    for _ in range(max_iter):
        w = a @ v
        w /= w.sum()
        if np.abs(w - v).max() <= tol:
            return w
        v = w
    raise InvariantError("Perron vector iteration failed to converge",
                         module="measures", operation="_perron_vector")


def _stationary_vector(p, tol=1e-13, max_iter=500000):
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        nxt = pi @ p
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= tol:
            return nxt
        pi = nxt
    raise InvariantError("stationary vector iteration failed to converge",
                         module="measures", operation="_stationary_vector")


@dataclass(frozen=True)
class FinSuppMeasure:
    """Weighted atoms, each a symbol prefix of uniform width."""

    atoms: np.ndarray     # (k, width) int16
    weights: np.ndarray   # (k,) float64

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.atoms, dtype=np.int16))
        w = np.asarray(self.weights, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != w.shape[0]:
            raise InvariantError("atoms/weights shape mismatch",
                                 module="measures", operation="FinSuppMeasure")
        if (w < 0).any() or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvariantError("weights must be nonnegative and sum to 1 within 1e-12",
                                 module="measures", operation="FinSuppMeasure")
        a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    @property
    def width(self):
        return int(self.atoms.shape[1])

    @property
    def n_atoms(self):
        return int(self.atoms.shape[0])

    def atom(self, i):
        return PointPrefix(self.atoms[i])

    def merged(self, depth, m):
        """Atoms truncated to `depth` with duplicate prefixes merged.

        Returns (prefixes, weights, keys) with keys the packed integer codes,
        all sorted by key for determinism.
        """
        if depth > self.width:
            raise DepthError(f"depth {depth} exceeds stored atom width {self.width}",
                             module="measures", operation="merged")
        keys = _pack_prefixes(self.atoms[:, :depth], m)
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        w = np.bincount(inverse, weights=self.weights, minlength=uniq.shape[0])
        return np.ascontiguousarray(self.atoms[first, :depth]), w, uniq

    def to_csv(self):
        buf = io.StringIO()
        buf.write("weight," + ",".join(f"s{i+1}" for i in range(self.width)) + "\n")
        for w, row in zip(self.weights, self.atoms):
            buf.write(f"{w:.17g}," + ",".join(str(int(s)) for s in row) + "\n")
        return buf.getvalue()

    @classmethod
    def point_mass(cls, point, width):
        return cls(atoms=np.asarray(point.head(width), dtype=np.int16)[None, :],
                   weights=np.array([1.0]))

    @classmethod
    def from_prefixes(cls, prefixes, weights, width):
        rows = [np.asarray(p.head(width), dtype=np.int16) for p in prefixes]
        return cls(atoms=np.stack(rows), weights=np.asarray(weights, dtype=np.float64))


def _pack_prefixes(rows, m):
    """Encode symbol rows as int64 radix-(m+1) keys; requires width small enough."""
    width = rows.shape[1]
    if width * np.log2(m + 1) > 62:
        raise SizeError(f"prefix width {width} too large to pack for m={m}",
                        module="measures", operation="_pack_prefixes")
    powers = (m + 1) ** np.arange(width, dtype=np.int64)
    return rows.astype(np.int64) @ powers


def _window_keys(symbols, n, depth, m):
    """Packed keys of the n sliding depth-windows of a symbol array."""
    if n + depth - 1 > symbols.shape[0]:
        raise DepthError(
            f"need {n + depth - 1} symbols for {n} windows of depth {depth}, "
            f"have {symbols.shape[0]}",
            module="measures", operation="empirical_measure")
    if depth * np.log2(m + 1) > 62:
        raise SizeError(f"depth {depth} too large to pack for m={m}",
                        module="measures", operation="empirical_measure")
    s = symbols.astype(np.int64)
    keys = np.zeros(n, dtype=np.int64)
    for d in range(depth):
        keys += s[d:d + n] * (m + 1) ** d
    return keys


def empirical_measure(x, n, depth, space):
    """The uniform measure on the first n shifts of x, merged at `depth`."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}",
                         module="measures", operation="empirical_measure")
    keys = _window_keys(x.symbols, n, depth, space.m)
    uniq, inverse = np.unique(keys, return_inverse=True)
    w = np.bincount(inverse, weights=np.full(n, 1.0 / n), minlength=uniq.shape[0])
    atoms = _unpack_keys(uniq, depth, space.m)
    return FinSuppMeasure(atoms=atoms, weights=w / w.sum())


def empirical_snapshots(x, times, depth, space):
    """Empirical measures at several window counts, sharing one key pass.

    Equivalent to [empirical_measure(x, t, depth, space) for t in times] but
    the sliding-window keys over the longest prefix are computed once.
    """
    times = [int(t) for t in times]
    if not times or any(t < 1 for t in times):
        raise InputError(f"times must be nonempty positive integers, got {times}",
                         module="measures", operation="empirical_snapshots")
    keys = _window_keys(x.symbols, max(times), depth, space.m)
    uniq, inverse = np.unique(keys, return_inverse=True)
    del keys
    atoms_all = _unpack_keys(uniq, depth, space.m)
    out = []
    for t in times:
        cnt = np.bincount(inverse[:t], minlength=uniq.shape[0])
        keep = cnt > 0
        w = cnt[keep].astype(np.float64) / t
        out.append(FinSuppMeasure(atoms=np.ascontiguousarray(atoms_all[keep]),
                                  weights=w / w.sum()))
    return out


def _unpack_keys(keys, width, m):
    out = np.empty((keys.shape[0], width), dtype=np.int16)
    k = keys.copy()
    for d in range(width):
        out[:, d] = (k % (m + 1)).astype(np.int16)
        k //= m + 1
    return out


@dataclass(frozen=True)
class MarkovMixture:
    """A convex combination of Markov measures (a point of the simplex A_L)."""

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if (w < 0).any() or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvariantError("mixture weights must lie on the probability simplex",
                                 module="measures", operation="MarkovMixture")
        if w.shape[0] != len(self.components):
            raise InvariantError("mixture weights/components length mismatch",
                                 module="measures", operation="MarkovMixture")
        w.setflags(write=False)
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", w)

    @property
    def space(self):
        return self.components[0].space

    def cylinder_probability(self, word):
        return float(sum(t * c.cylinder_probability(word)
                         for t, c in zip(self.weights, self.components)))


def cylinder_probability(mu, word):
    return mu.cylinder_probability(word)


def measure_entropy(mu):
    return mu.entropy()


def sample_generic(mu, n, seed):
    """A length-n word from the stationary chain; deterministic given seed."""
    return mu.sample(n, make_rng(seed))


def mixture_distance_proxy(mix, n, seed, n_samples=64):
    """Empirical stand-in for a mixture: sample a component per t, then a generic word."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}",
                         module="measures", operation="mixture_distance_proxy")
    rng = make_rng(seed)
    comp_idx = rng.choice(len(mix.components), size=n_samples, p=mix.weights)
    rows = [mix.components[int(c)].sample(n, rng) for c in comp_idx]
    return FinSuppMeasure(atoms=np.stack(rows),
                          weights=np.full(n_samples, 1.0 / n_samples))


def truncation_proxy(mu, depth, space=None):
    """Exact depth-truncation of a Markov measure or mixture.

    Atoms are the admissible depth-cylinders weighted by their exact
    probabilities; W1 against the true measure is at most the metric tail
    bound at `depth`.
    """
    space = space or mu.space
    words = admissible_words(space, depth)
    probs = np.array([mu.cylinder_probability(w) for w in words])
    keep = probs > 0
    atoms = np.asarray([w for w, k in zip(words, keep) if k], dtype=np.int16)
    w = probs[keep]
    return FinSuppMeasure(atoms=atoms, weights=w / w.sum())


def wasserstein1(mu, nu, depth, space, atom_cap=4096):
    """Exact W1 between finitely supported measures at truncated ground costs.

    Returns (value, error_bound).  Truncated costs underestimate the true
    metric, so the true W1 lies in [value, value + error_bound].
    """
    a_atoms, a_w, a_keys = mu.merged(depth, space.m)
    b_atoms, b_w, b_keys = nu.merged(depth, space.m)
    if a_atoms.shape[0] + b_atoms.shape[0] > atom_cap:
        raise SizeError(
            f"combined atom count {a_atoms.shape[0] + b_atoms.shape[0]} exceeds cap {atom_cap}",
            module="measures", operation="wasserstein1")
    err = space.metric_tail_bound(depth)

    # W1 depends only on mu - nu: drop the common mass exactly.
    common, ia, ib = np.intersect1d(a_keys, b_keys, return_indices=True)
    if common.shape[0]:
        shared = np.minimum(a_w[ia], b_w[ib])
        a_w = a_w.copy()
        b_w = b_w.copy()
        a_w[ia] -= shared
        b_w[ib] -= shared
    keep_a = a_w > 1e-15
    keep_b = b_w > 1e-15
    a_atoms, a_w = a_atoms[keep_a], a_w[keep_a]
    b_atoms, b_w = b_atoms[keep_b], b_w[keep_b]
    if a_atoms.shape[0] == 0 or b_atoms.shape[0] == 0:
        return 0.0, err
    # normalize residual masses (cost is linear in mass; rescale afterwards)
    mass = float(a_w.sum())
    a_w = a_w / a_w.sum()
    b_w = b_w / b_w.sum()

    cost = _truncated_cost_matrix(a_atoms, b_atoms, space.beta)
    return mass * _solve_transport(cost, a_w, b_w), err


def _truncated_cost_matrix(a, b, beta):
    depth = a.shape[1]
    cost = np.zeros((a.shape[0], b.shape[0]))
    af = a.astype(np.float64)
    bf = b.astype(np.float64)
    for d in range(depth):
        cost += np.abs(af[:, d, None] - bf[None, :, d]) * beta ** (-(d + 1))
    return cost


def _solve_transport(cost, supply, demand):
    """Exact transportation LP (HiGHS simplex on the dense bipartite instance)."""
    na, nb = cost.shape
    if na == 1:
        return float(cost[0] @ demand)
    if nb == 1:
        return float(cost[:, 0] @ supply)
    rows = []
    cols = []
    for i in range(na):
        rows.append(np.full(nb, i))
        cols.append(np.arange(i * nb, (i + 1) * nb))
    for j in range(nb - 1):  # drop the last demand row (redundant)
        rows.append(np.full(na, na + j))
        cols.append(j + np.arange(na) * nb)
    a_eq = sp.coo_matrix(
        (np.ones(na * nb + na * (nb - 1)),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(na + nb - 1, na * nb)).tocsr()
    b_eq = np.concatenate([supply, demand[:-1]])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        # HiGHS presolve can misreport balanced instances with tiny masses
        # (~1e-9) as infeasible; the raw simplex handles them.
        res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                      method="highs", options={"presolve": False})
    if not res.success:
        raise InvariantError(f"transport LP failed: {res.message}",
                             module="measures", operation="wasserstein1")
    return float(res.fun)
