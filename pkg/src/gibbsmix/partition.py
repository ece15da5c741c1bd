"""Gibbs partition distributions over ordered set partitions.

A Gibbs partition assigns an ordered partition ``(A_1, ..., A_t)`` of
``{1..n}`` the probability ``v_n(t) * prod_i w_n(|A_i|)``.  The Dirichlet and
Pitman-Yor processes are the two parametric cases; arbitrary nonnegative
weight tables are accepted as ``custom``.

All arithmetic is in natural-log space.  Internally an unordered partition is
a restricted growth string (RGS); the ordered-partition factor ``t!`` is
attached analytically.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, Refusal, StructuralError

__all__ = [
    "GibbsPartitionModel",
    "OrderedPartition",
    "ClusterCountPrior",
    "log_eppf",
    "c_w",
    "c_v",
    "prior_on_t",
    "enumerate_partitions",
    "rgs_array",
    "rgs_chunks",
    "log_partial_bell",
    "stirling2",
    "ENUMERATION_CAP",
]

ENUMERATION_CAP = 13
_N_TOL = 1e-12


def _ratio(log_num: float, log_den: float) -> float:
    """exp(log_num - log_den) with 0/0 = 0 and y/0 = inf."""
    if log_den == -math.inf:
        return 0.0 if log_num == -math.inf else math.inf
    return math.exp(log_num - log_den)


class GibbsPartitionModel:
    """Weight sequences ``v_n`` and ``w_n`` of a Gibbs partition.

    Use the constructors :meth:`dirichlet`, :meth:`pitman_yor`,
    :meth:`custom` or :meth:`from_dict`.  Instances are immutable.
    """

    __slots__ = ("kind", "theta", "sigma", "N", "_v", "_w")

    def __init__(self, kind, theta=None, sigma=None, N=None, v=None, w=None):
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_w", w)

    def __setattr__(self, name, value):
        raise AttributeError("GibbsPartitionModel is immutable")

    def __repr__(self):
        if self.kind == "custom":
            return f"GibbsPartitionModel(custom, n<={max(self._v)})"
        if self.kind == "dp":
            return f"GibbsPartitionModel(dp, theta={self.theta})"
        return f"GibbsPartitionModel(py, sigma={self.sigma}, theta={self.theta})"

    def __eq__(self, other):
        if not isinstance(other, GibbsPartitionModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.kind, self.theta, self.sigma))

    # -- constructors -----------------------------------------------------

    @classmethod
    def dirichlet(cls, theta: float) -> "GibbsPartitionModel":
        theta = float(theta)
        if not theta > 0 or not math.isfinite(theta):
            raise DomainError(f"Dirichlet process needs theta > 0, got {theta}")
        return cls("dp", theta=theta, sigma=0.0)

    @classmethod
    def pitman_yor(cls, sigma: float, theta: float) -> "GibbsPartitionModel":
        sigma, theta = float(sigma), float(theta)
        if 0.0 <= sigma < 1.0:
            if not theta > -sigma:
                raise DomainError(
                    f"Pitman-Yor with sigma in [0,1) needs theta > -sigma; "
                    f"got sigma={sigma}, theta={theta}")
            return cls("py", theta=theta, sigma=sigma)
        if sigma < 0.0:
            ratio = theta / abs(sigma)
            N = round(ratio)
            if N < 1 or abs(ratio - N) > _N_TOL * max(1.0, abs(ratio)):
                raise DomainError(
                    f"Pitman-Yor with sigma < 0 needs theta = N*|sigma| for an "
                    f"integer N >= 1; theta/|sigma| = {ratio!r}")
            return cls("py", theta=theta, sigma=sigma, N=int(N))
        raise DomainError(f"Pitman-Yor needs sigma < 1, got {sigma}")

    @classmethod
    def custom(cls, v, w) -> "GibbsPartitionModel":
        """Tabulated weights: ``v[n]`` and ``w[n]`` are length-``n`` sequences
        indexed by ``t-1`` and ``a-1``."""
        vt, wt = {}, {}
        for name, src, dst in (("v", v, vt), ("w", w, wt)):
            for key, row in dict(src).items():
                n = int(key)
                arr = np.asarray(row, dtype=float)
                if arr.shape != (n,):
                    raise DomainError(f"custom {name}[{n}] must have length {n}, got {arr.shape}")
                if not np.all(arr >= 0) or not np.all(np.isfinite(arr)):
                    raise DomainError(f"custom {name}[{n}] entries must be finite and >= 0")
                arr.setflags(write=False)
                dst[n] = arr
        if not vt or set(vt) != set(wt):
            raise DomainError("custom model needs v and w tables for the same set of n")
        return cls("custom", v=vt, w=wt)

    @classmethod
    def from_dict(cls, spec: dict) -> "GibbsPartitionModel":
        """Build from ``{"kind": "dp"|"py"|"custom", "theta", "sigma", "v", "w"}``."""
        kind = spec.get("kind")
        if kind == "dp":
            return cls.dirichlet(spec["theta"])
        if kind == "py":
            return cls.pitman_yor(spec["sigma"], spec["theta"])
        if kind == "custom":
            return cls.custom(spec["v"], spec["w"])
        raise DomainError(f"model kind must be 'dp', 'py' or 'custom', got {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "dp":
            return {"kind": "dp", "theta": self.theta}
        if self.kind == "py":
            return {"kind": "py", "sigma": self.sigma, "theta": self.theta}
        return {
            "kind": "custom",
            "v": {str(n): self._v[n].tolist() for n in sorted(self._v)},
            "w": {str(n): self._w[n].tolist() for n in sorted(self._w)},
        }

    # -- weights ----------------------------------------------------------

    def _check_n(self, n):
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        if self.kind == "custom" and n not in self._v:
            raise DomainError(f"custom model has no weight table for n={n}")

    def _log_v_numerator(self, t: np.ndarray) -> np.ndarray:
        """log[(theta+sigma)_{t-1 up sigma} / t!] for parametric models."""
        sigma, theta = self.sigma, self.theta
        t = np.asarray(t)
        if sigma > 0:
            r = theta / sigma
            out = (t - 1) * math.log(sigma) + gammaln(r + t) - gammaln(r + 1)
        elif sigma == 0:
            out = (t - 1) * math.log(theta)
        else:
            # explicit product; the factor i = N vanishes
            steps = theta + sigma * np.arange(1, max(int(t.max()), 1))
            with np.errstate(divide="ignore", invalid="ignore"):
                logs = np.where(steps > 0, np.log(np.abs(steps)), -np.inf)
            cum = np.concatenate([[0.0], np.cumsum(logs)])
            out = cum[t - 1]
        return out - gammaln(t + 1)

    @lru_cache(maxsize=64)
    def log_v(self, n: int) -> np.ndarray:
        """``log v_n(t)`` for t = 0..n+1 (entries outside 1..n are -inf)."""
        self._check_n(n)
        out = np.full(n + 2, -np.inf)
        if self.kind == "custom":
            with np.errstate(divide="ignore"):
                out[1:n + 1] = np.log(self._v[n])
        else:
            t = np.arange(1, n + 1)
            denom = gammaln(self.theta + n) - gammaln(self.theta + 1)
            out[1:n + 1] = self._log_v_numerator(t) - denom
        out.setflags(write=False)
        return out

    @lru_cache(maxsize=64)
    def log_w(self, n: int) -> np.ndarray:
        """``log w_n(a)`` for a = 0..n+1 (entries outside 1..n are -inf)."""
        self._check_n(n)
        out = np.full(n + 2, -np.inf)
        if self.kind == "custom":
            with np.errstate(divide="ignore"):
                out[1:n + 1] = np.log(self._w[n])
        else:
            a = np.arange(1, n + 1)
            out[1:n + 1] = gammaln(a - self.sigma) - gammaln(1 - self.sigma)
        out.setflags(write=False)
        return out

    def log_tv(self, n: int) -> np.ndarray:
        """``log(t! v_n(t))`` for t = 0..n+1: the unordered-partition factor."""
        lv = self.log_v(n)
        return lv + gammaln(np.arange(n + 2) + 1)


@dataclass(frozen=True)
class OrderedPartition:
    """Ordered partition of ``{1..n}``; ``assignment[j]`` is the part label
    (1-based) of element ``j+1``."""

    assignment: tuple

    def __post_init__(self):
        labels = tuple(int(a) for a in self.assignment)
        object.__setattr__(self, "assignment", labels)
        if not labels:
            raise StructuralError("partition of an empty set")
        t = max(labels)
        if min(labels) < 1:
            raise StructuralError(f"part labels must be >= 1, got {min(labels)}")
        used = set(labels)
        if len(used) != t:
            missing = sorted(set(range(1, t + 1)) - used)
            raise StructuralError(f"parts {missing} are empty")

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], n: int | None = None):
        """Blocks are 1-based element collections, in part order."""
        if n is None:
            n = sum(len(b) for b in blocks)
        assignment = [0] * n
        for label, block in enumerate(blocks, start=1):
            if not block:
                raise StructuralError(f"part {label} is empty")
            for e in block:
                if not 1 <= e <= n:
                    raise StructuralError(f"element {e} outside 1..{n}")
                if assignment[e - 1]:
                    raise StructuralError(f"element {e} appears in two parts")
                assignment[e - 1] = label
        if 0 in assignment:
            raise StructuralError(f"element {assignment.index(0) + 1} is in no part")
        return cls(tuple(assignment))

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def t(self) -> int:
        return max(self.assignment)

    @property
    def multiplicity(self) -> int:
        """Number of ordered partitions sharing this unordered partition."""
        return math.factorial(self.t)

    def blocks(self) -> list[list[int]]:
        out = [[] for _ in range(self.t)]
        for j, a in enumerate(self.assignment, start=1):
            out[a - 1].append(j)
        return out

    def sizes(self) -> list[int]:
        return [len(b) for b in self.blocks()]

    def masks(self) -> list[int]:
        """Block bitmasks over 0-based element indices."""
        out = [0] * self.t
        for j, a in enumerate(self.assignment):
            out[a - 1] |= 1 << j
        return out


def log_eppf(model: GibbsPartitionModel, partition: OrderedPartition) -> float:
    """``log p(A) = log v_n(t) + sum_i log w_n(|A_i|)``; -inf on a zero factor."""
    if not isinstance(partition, OrderedPartition):
        partition = OrderedPartition(tuple(partition))
    n, t = partition.n, partition.t
    lv = model.log_v(n)[t]
    if lv == -math.inf:
        return -math.inf
    lw = model.log_w(n)
    return float(lv + sum(lw[a] for a in partition.sizes()))


def c_w(model: GibbsPartitionModel, n: int) -> float:
    """``max_{a=2..n} w_n(a) / (a w_n(a-1) w_n(1))`` with 0/0 = 0, y/0 = inf."""
    if n < 2:
        raise DomainError(f"c_w needs n >= 2, got {n}")
    lw = model.log_w(n)
    best = 0.0
    for a in range(2, n + 1):
        best = max(best, _ratio(lw[a], math.log(a) + lw[a - 1] + lw[1]))
    return best


def c_v(model: GibbsPartitionModel, n: int, t: int) -> float:
    """``v_n(t) / v_n(t+1)`` with 0/0 = 0 and y/0 = inf.

    For the parametric models the n-dependent normalizer cancels and is never
    formed, so the ratio carries only the roundoff of the per-t factors.
    """
    if not 1 <= t < n:
        raise DomainError(f"c_v needs 1 <= t < n, got t={t}, n={n}")
    model._check_n(n)
    if model.kind == "custom":
        lv = model.log_v(n)
        return _ratio(lv[t], lv[t + 1])
    num = model._log_v_numerator(np.array([t, t + 1]))
    return _ratio(float(num[0]), float(num[1]))


@dataclass
class ClusterCountPrior:
    """``p_n(t)`` for t = 1..n (``mass[t-1]``)."""

    n: int
    mass: np.ndarray
    total: float = field(init=False)
    normalized: bool = field(init=False)

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        self.total = math.fsum(self.mass)
        self.normalized = abs(self.total - 1.0) <= 1e-10

    def __getitem__(self, t: int) -> float:
        if 1 <= t <= self.n:
            return float(self.mass[t - 1])
        return 0.0

    def rows(self):
        return [(self.n, t, float(p)) for t, p in enumerate(self.mass, start=1)]

    def to_csv(self, header=True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(["n", "t", "probability"])
        for row in self.rows():
            writer.writerow([row[0], row[1], repr(row[2])])
        return buf.getvalue()


def _log_binom_table(n: int) -> np.ndarray:
    k = np.arange(n + 1)
    lf = gammaln(k + 1)
    return lf[:, None] - lf[None, :] - lf[np.maximum(k[:, None] - k[None, :], 0)]


def log_partial_bell(log_w: np.ndarray, n: int) -> np.ndarray:
    """``log B_{m,t}(w_1, w_2, ...)`` for 0 <= t <= m <= n.

    Recurrence on the size ``a`` of the block holding the first element:
    ``B_{m,t} = sum_a C(m-1, a-1) w_a B_{m-a, t-1}``.
    """
    LB = np.full((n + 1, n + 1), -np.inf)
    LB[0, 0] = 0.0
    if n == 0:
        return LB
    lC = _log_binom_table(n)
    m = np.arange(1, n + 1)[:, None]
    a = np.arange(1, n + 1)[None, :]
    valid = a <= m
    rem = np.where(valid, m - a, 0)
    base = np.where(valid, lC[m - 1, np.where(valid, a - 1, 0)] + log_w[a], -np.inf)
    for t in range(1, n + 1):
        terms = base + LB[rem, t - 1]
        terms[~valid] = -np.inf
        LB[1:, t] = logsumexp(terms, axis=1)
    return LB


def prior_on_t(model: GibbsPartitionModel, n: int) -> ClusterCountPrior:
    """Prior ``p_n(t) = t! v_n(t) B_{n,t}(w_n(1), w_n(2), ...)`` on t."""
    model._check_n(n)
    LB = log_partial_bell(model.log_w(n), n)
    t = np.arange(1, n + 1)
    with np.errstate(invalid="ignore"):
        log_p = model.log_tv(n)[1:n + 1] + LB[n, 1:]
    log_p = np.where(np.isnan(log_p), -np.inf, log_p)
    return ClusterCountPrior(n, np.exp(log_p))


# -- enumeration ----------------------------------------------------------

def _check_cap(n, cap):
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if cap is not None and n > cap:
        raise Refusal(
            f"n={n} exceeds the enumeration cap of {cap} "
            f"(pass a larger cap to override; Bell({n}) partitions)")


def _rgs_iter(n: int, t: int | None):
    """Restricted growth strings of length n in lexicographic order."""
    a = [0] * n
    b = [0] * n  # b[i] = max(a[:i]) + 1
    b[0] = 0
    i = n - 1
    for k in range(1, n):
        b[k] = 1
    while True:
        nb = max(a) + 1
        if t is None or nb == t:
            yield tuple(a)
        # advance to the next RGS
        i = n - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        m = max(b[i], a[i] + 1)
        for k in range(i + 1, n):
            a[k] = 0
            b[k] = m


def enumerate_partitions(n: int, t: int | None = None,
                         cap: int | None = ENUMERATION_CAP) -> Iterator[OrderedPartition]:
    """Yield each unordered partition of ``{1..n}`` once (into exactly ``t``
    parts when given), as its canonical ordered representative.

    Each representative stands for ``partition.multiplicity = t!`` ordered
    partitions.
    """
    _check_cap(n, cap)
    if t is not None and not 1 <= t <= n:
        return
    for rgs in _rgs_iter(n, t):
        yield OrderedPartition(tuple(a + 1 for a in rgs))


def _rgs_extend(rows, top, steps):
    """Append ``steps`` columns to each RGS prefix in ``rows``."""
    for _ in range(steps):
        reps = top + 1
        idx = np.repeat(np.arange(rows.shape[0]), reps)
        starts = np.repeat(np.cumsum(reps) - reps, reps)
        new_col = np.arange(idx.size) - starts
        rows = np.concatenate([rows[idx], new_col[:, None].astype(np.int8)], axis=1)
        top = np.maximum(top[idx], new_col + 1)
    return rows, top


@lru_cache(maxsize=4)
def _rgs_array_cached(n: int) -> np.ndarray:
    rows, _ = _rgs_extend(np.zeros((1, 1), dtype=np.int8), np.ones(1, dtype=np.int64), n - 1)
    rows.setflags(write=False)
    return rows


def _n_extensions(top: int, r: int) -> int:
    """Number of ways to extend an RGS prefix using ``top`` labels by r entries."""
    if r == 0:
        return 1
    return top * _n_extensions(top, r - 1) + _n_extensions(top + 1, r - 1)


def rgs_chunks(n: int, cap: int | None = ENUMERATION_CAP, max_rows: int = 1 << 20):
    """Yield all restricted growth strings of length n, in lexicographic
    order, as arrays of at most ``max_rows`` rows (or one prefix's worth)."""
    _check_cap(n, cap)
    tail = min(n - 1, 6)
    prefix = _rgs_array_cached(n - tail)
    top = prefix.max(axis=1).astype(np.int64) + 1
    counts = np.array([_n_extensions(int(m), tail) for m in range(n + 1)])[top]
    i, P = 0, prefix.shape[0]
    while i < P:
        j, rows = i + 1, counts[i]
        while j < P and rows + counts[j] <= max_rows:
            rows += counts[j]
            j += 1
        out, _ = _rgs_extend(np.asarray(prefix[i:j]), top[i:j].copy(), tail)
        yield out
        i = j


def rgs_array(n: int, cap: int | None = ENUMERATION_CAP) -> np.ndarray:
    """All restricted growth strings of length n as an int8 array
    (``Bell(n)`` rows, lexicographic order)."""
    _check_cap(n, cap)
    return _rgs_array_cached(n)


@lru_cache(maxsize=None)
def stirling2(n: int, t: int) -> int:
    """Stirling number of the second kind (exact integer)."""
    if n == t:
        return 1
    if t == 0 or t > n:
        return 0
    return t * stirling2(n - 1, t) + stirling2(n - 1, t - 1)
