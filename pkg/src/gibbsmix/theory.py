"""Constants and predicates of the inconsistency argument.

``S_A(x, c)`` collects the indices j whose part ``A_l`` satisfies
``m(x_{A_l}) <= c m(x_{A_l \\ j}) m(x_j)``; ``phi_t`` is the smallest
fraction ``|S_A| / n`` over partitions into t parts.  When
``phi_t > t / n`` the posterior at t is at most ``C_t / (1 + C_t)`` with
``C_t = t c c_w c_v(t) / (phi_t - t/n)``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import get_kernels
from .certify import MomentSpaceBox, splitting_bound
from .errors import DomainError, Refusal
from .expfam import ConjugateHyperparameters, ExponentialFamily, log_marginal
from .partition import (GibbsPartitionModel, OrderedPartition, c_v, c_w,
                        enumerate_partitions)
from .posterior import (DP_CAP, ClusterCountPosterior, Dataset,
                        exact_joint_subset_dp, subset_log_marginals)

__all__ = [
    "PHI_ENUMERATION_CAP",
    "GRID_SUP_SAFETY",
    "s_a_set",
    "splittable_counts",
    "phi_t",
    "BoundReport",
    "lemma_bound",
    "bounded_case_constant",
    "fraction_in_region",
    "HalfspaceRegion",
    "capture_check",
    "capture_convergence_experiment",
    "EventVerdict",
    "subset_marginal_event_check",
    "event_constant",
]

PHI_ENUMERATION_CAP = 12
GRID_SUP_SAFETY = 1.05


def _log_c(c: float) -> float:
    if c < 0:
        raise DomainError(f"c must be >= 0, got {c}")
    return -math.inf if c == 0 else math.log(c)


def _points(family, data):
    if isinstance(data, Dataset):
        return data.points, data.stats
    pts = np.asarray(data, dtype=float)
    return pts, family.suff_stats(pts)


def s_a_set(family, hyper, data, partition, c: float) -> list[int]:
    """1-based indices j in ``S_A(x, c)``, from closed-form marginals."""
    pts, _ = _points(family, data)
    if not isinstance(partition, OrderedPartition):
        partition = OrderedPartition(tuple(partition))
    if partition.n != len(pts):
        raise DomainError("partition size differs from the data size")
    lc = _log_c(c)
    out = []
    for block in partition.blocks():
        idx = [j - 1 for j in block]
        lm_block = log_marginal(family, hyper, pts[idx])
        for j in idx:
            rest = [i for i in idx if i != j]
            rhs = lc + log_marginal(family, hyper, pts[rest]) + log_marginal(family, hyper, pts[[j]])
            if lm_block <= rhs:
                out.append(j + 1)
    return sorted(out)


def splittable_counts(family, hyper, data, c: float) -> np.ndarray:
    """For every bitmask B, the number of j in B with
    ``m(x_B) <= c m(x_{B \\ j}) m(x_j)``."""
    _, stats = _points(family, data)
    n = stats.shape[0]
    logm = subset_log_marginals(family, hyper, stats)
    lc = _log_c(c)
    masks = np.arange(1 << n, dtype=np.int64)
    cnt = np.zeros(1 << n, dtype=np.int64)
    for j in range(n):
        bit = 1 << j
        sel = masks[(masks & bit) != 0]
        cnt[sel] += logm[sel] <= lc + logm[sel ^ bit] + logm[bit]
    return cnt


def phi_t(family, hyper, data, t: int, c: float, method: str = "dp",
          cap: int | None = None, backend=None):
    """Exact ``phi_t`` and a minimizing partition (as an OrderedPartition).

    ``method="dp"`` runs a min-plus subset recurrence (cap 20);
    ``method="enumerate"`` scans partitions into exactly t parts (cap 12).
    """
    _, stats = _points(family, data)
    n = stats.shape[0]
    if not 1 <= t <= n:
        raise DomainError(f"need 1 <= t <= n, got t={t}, n={n}")
    if method == "dp":
        cap = DP_CAP if cap is None else cap
    elif method == "enumerate":
        cap = PHI_ENUMERATION_CAP if cap is None else cap
    else:
        raise DomainError(f"unknown phi method {method!r}")
    if cap is not None and n > cap:
        raise Refusal(f"n={n} exceeds the phi_t {method} cap of {cap}")
    cnt = splittable_counts(family, hyper, data, c)
    if method == "dp":
        value, blocks = get_kernels(backend).partition_minplus(cnt, n, t)
        if value < 0:
            raise Refusal(f"no partition of {n} elements into {t} parts")
        blocks = sorted(blocks, key=lambda b: b & -b)
        assignment = [0] * n
        for lab, B in enumerate(blocks, start=1):
            for j in range(n):
                if B >> j & 1:
                    assignment[j] = lab
        return value / n, OrderedPartition(tuple(assignment))
    best, arg = None, None
    for part in enumerate_partitions(n, t, cap=None):
        v = sum(int(cnt[m]) for m in part.masks())
        if best is None or v < best:
            best, arg = v, part
    return best / n, arg


@dataclass
class BoundReport:
    n: int
    t: int
    c: float
    c_w: float
    c_v: float
    phi: float | None
    phi_partition: list | None
    phi_source: str
    C_t: float | None
    bound: float
    posterior: float | None
    phi_ok: bool
    cw_finite: bool
    cv_finite: bool
    c_finite: bool
    preconditions: bool
    uninformative: bool
    holds: bool | None
    notes: list = field(default_factory=list)

    def to_dict(self):
        def f(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else "-inf"
            return v
        return {k: f(v) for k, v in self.__dict__.items()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def lemma_bound(model: GibbsPartitionModel, family, hyper, data, t: int, c: float,
                phi: float | None = None, phi_source: str | None = None,
                posterior: ClusterCountPosterior | float | None = None,
                exact: bool = True) -> BoundReport:
    """Assemble ``C_t`` and the bound ``C_t / (1 + C_t)`` on ``p(T = t | x)``.

    ``phi`` defaults to the exact value (subset DP); a caller may pass any
    lower bound on it instead (e.g. the fraction of points in a region
    where a marginal inequality holds), named by ``phi_source``.  The
    posterior at t defaults to the exact subset-DP value.
    Failed preconditions are reported in the flags, never raised; the bound
    is then the trivial 1.
    """
    pts, stats = _points(family, data)
    n = stats.shape[0]
    if not 1 <= t <= n:
        raise DomainError(f"need 1 <= t <= n, got t={t}, n={n}")
    notes = []
    part = None
    if phi is None:
        phi, arg = phi_t(family, hyper, data, t, c)
        part = list(arg.assignment)
        phi_source = "exact"
    phi_source = phi_source or "supplied"
    cw = c_w(model, n) if n >= 2 else 0.0
    cv = c_v(model, n, t) if t < n else math.inf
    phi_ok = phi > t / n
    cw_fin, cv_fin, c_fin = math.isfinite(cw), math.isfinite(cv), math.isfinite(c)
    pre = phi_ok and cw_fin and cv_fin and c_fin and t < n
    Ct = None
    bound = 1.0
    if pre:
        Ct = t * c * cw * cv / (phi - t / n)
        bound = Ct / (1.0 + Ct) if math.isfinite(Ct) else 1.0
    uninformative = not pre or bound >= 1.0
    if not cv_fin:
        notes.append("c_v is infinite at this t (v_n(t+1) = 0); bound is vacuous")
    if t >= n:
        notes.append("need n > t")
    if posterior is None and exact:
        posterior = exact_joint_subset_dp(model, family, hyper, data)
    if isinstance(posterior, ClusterCountPosterior):
        post = posterior[t]
    else:
        post = None if posterior is None else float(posterior)
    holds = None
    if pre and post is not None:
        holds = bool(post <= bound)
    return BoundReport(n=n, t=t, c=float(c), c_w=cw, c_v=cv, phi=float(phi),
                       phi_partition=part, phi_source=phi_source, C_t=Ct, bound=bound,
                       posterior=post, phi_ok=phi_ok, cw_finite=cw_fin, cv_finite=cv_fin,
                       c_finite=c_fin, preconditions=pre, uninformative=uninformative,
                       holds=holds, notes=notes)


def bounded_case_constant(family: ExponentialFamily, hyper: ConjugateHyperparameters,
                          U, resolution: int = 1001) -> float:
    """``c = sup_{x in U, theta} p_theta(x) / m(x)``.

    ``U`` is a finite point list (any family) or, for continuous families, a
    ``MomentSpaceBox``-like ``(lo, hi)`` interval box in sample space scanned
    on a grid (the result is then padded by 5%).  The sup over theta is
    analytic for every supported family.  Returns inf when it is unbounded.
    """
    grid_based = False
    if isinstance(U, MomentSpaceBox):
        lo, hi = np.array(U.lo), np.array(U.hi)
        grid_based = True
    elif isinstance(U, tuple) and len(U) == 2 and not family.discrete:
        lo, hi = np.atleast_1d(np.asarray(U[0], float)), np.atleast_1d(np.asarray(U[1], float))
        grid_based = True
    if grid_based:
        if family.discrete:
            raise DomainError("interval regions are for continuous families; list the points")
        d = lo.size
        if d == 1:
            pts = np.linspace(lo[0], hi[0], resolution)[:, None]
        else:
            r = max(2, int(round(resolution ** (1.0 / d))))
            axes = [np.linspace(a, b, r) for a, b in zip(lo, hi)]
            pts = np.stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")], 1)
        if family.k == 1 and pts.shape[1] == 1:
            pts = pts[:, 0]
    else:
        pts = np.asarray(U, dtype=float)
        if pts.ndim == 1 and family.name == "gaussian" and family.k > 1:
            pts = pts[None, :]
    if len(pts) == 0:
        raise DomainError("region U is empty")
    sup_p = family.sup_log_density(pts)
    stats = family.suff_stats(pts)
    psi0 = float(family.log_psi(hyper.xi, np.float64(hyper.nu)))
    logm = family.log_psi(hyper.xi + stats, np.full(stats.shape[0], hyper.nu + 1.0)) - psi0
    with np.errstate(invalid="ignore"):
        ratio = np.where(np.isneginf(logm), np.inf, sup_p - logm)
    val = float(np.max(ratio))
    if not math.isfinite(val):
        return math.inf
    c = math.exp(val)
    return c * GRID_SUP_SAFETY if grid_based else c


def fraction_in_region(family, data, U) -> float:
    """Fraction of points in U (a point list, or a ``(lo, hi)`` box)."""
    pts, _ = _points(family, data)
    if isinstance(U, MomentSpaceBox) or (isinstance(U, tuple) and len(U) == 2
                                          and not family.discrete):
        lo = np.atleast_1d(np.asarray(U.lo if isinstance(U, MomentSpaceBox) else U[0], float))
        hi = np.atleast_1d(np.asarray(U.hi if isinstance(U, MomentSpaceBox) else U[1], float))
        P = pts.reshape(len(pts), -1)
        inside = np.all((P >= lo) & (P <= hi), axis=1)
    else:
        Upts = np.asarray(U, dtype=float).reshape(len(U), -1)
        P = pts.reshape(len(pts), -1)
        inside = np.array([np.any(np.all(Upts == p, axis=1)) for p in P])
    return float(inside.mean())


# -- capture -----------------------------------------------------------------

@dataclass(frozen=True)
class HalfspaceRegion:
    """Intersection of closed halfspaces ``{y : u . y <= b}``."""

    directions: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.directions, dtype=float))
        b = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if u.shape[0] != b.shape[0]:
            raise DomainError("need one offset per direction")
        if not np.all(np.abs(np.linalg.norm(u, axis=1) - 1.0) <= 1e-12):
            raise DomainError("halfspace directions must be unit vectors")
        object.__setattr__(self, "directions", u)
        object.__setattr__(self, "offsets", b)

    @classmethod
    def box(cls, lo, hi) -> "HalfspaceRegion":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        k = lo.size
        eye = np.eye(k)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @property
    def k(self):
        return self.directions.shape[1]

    def contains(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.all(y @ self.directions.T <= self.offsets, axis=1)

    def to_dict(self):
        return {"directions": self.directions.tolist(), "offsets": self.offsets.tolist()}


def _ceil_frac(beta: float, n: int) -> int:
    from fractions import Fraction
    return math.ceil(Fraction(beta) * n)


def capture_check(points, region: HalfspaceRegion, beta: float) -> bool:
    """True iff the mean of every subset of size >= beta n lies in the region.

    Per halfspace, the worst subset of size m is the top m projections, and
    the top-m mean is nonincreasing in m, so only ``m = ceil(beta n)``
    needs checking.
    """
    if not 0 < beta <= 1:
        raise DomainError(f"beta must be in (0, 1], got {beta}")
    y = np.asarray(points, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = y.shape[0]
    if n == 0:
        raise DomainError("capture needs at least one point")
    if y.shape[1] != region.k:
        raise DomainError("point dimension differs from the region dimension")
    m = max(1, _ceil_frac(beta, n))
    proj = y @ region.directions.T  # (n, H)
    top = -np.sort(-proj, axis=0)[:m]
    means = top.sum(axis=0) / m
    return bool(np.all(means <= region.offsets))


def capture_convergence_experiment(draw, beta: float, region: HalfspaceRegion, n_grid,
                                   seeds, moment_check=None):
    """Empirical frequency of Capture over seeds for each n.

    ``draw(n, rng)`` returns an ``(n, k)`` array of statistics; the generator
    for ``(seed, n)`` is Philox keyed by ``seed | (n << 64)``.
    ``moment_check(points)``, when given, must accept the region's
    vertices/extremes (e.g. a family's moment-space predicate).
    Returns ``(rows, freq, threshold)`` with rows ``(n, seed, capture)``,
    ``freq[n]`` and the smallest grid n from which every frequency is 1.
    """
    n_grid = [int(n) for n in n_grid]
    if n_grid != sorted(n_grid):
        raise DomainError("n grid must be ascending")
    if moment_check is not None and not moment_check(region):
        raise DomainError("capture region is not strictly inside the moment space")
    rows = []
    freq = {}
    for n in n_grid:
        hits = 0
        for s in seeds:
            rng = np.random.Generator(np.random.Philox(key=int(s) | (n << 64)))
            cap = capture_check(draw(n, rng), region, beta)
            hits += cap
            rows.append((n, int(s), int(cap)))
        freq[n] = hits / len(seeds)
    threshold = None
    for n in reversed(n_grid):
        if freq[n] < 1.0:
            break
        threshold = n
    return rows, freq, threshold


# -- subset marginal event ---------------------------------------------------------

@dataclass
class EventVerdict:
    mode: str
    holds: bool
    details: dict = field(default_factory=dict)


def event_constant(family, hyper, U1: MomentSpaceBox, U2: MomentSpaceBox) -> float:
    """``c = (nu + 1)^{k/2} C`` with C the splitting constant on the box
    hull of ``U1`` and ``U2``."""
    lo = np.minimum(U1.lo, U2.lo)
    hi = np.maximum(U1.hi, U2.hi)
    box = MomentSpaceBox.make(lo, hi, max(U1.resolution, U2.resolution))
    C = splitting_bound(family, hyper, box).C
    return (hyper.nu + 1) ** (0.5 * family.k) * C


def subset_marginal_event_check(family, hyper, data, beta: float, c: float,
                                mode: str = "auto", U1: MomentSpaceBox | None = None,
                                U2: MomentSpaceBox | None = None, spot_checks: int = 1000,
                                seed: int = 0, exact_cap: int = 15) -> EventVerdict:
    """Does every J with |J| >= beta n contain K, |K| >= |J|/2, of indices j
    with ``m(x_J) <= c m(x_{J \\ j}) m(x_j)``?

    ``exact`` enumerates all such J (n <= 15).  ``sufficient`` checks
    Capture_{beta/2} of the statistics in U1 and Capture_beta of the
    indicators ``1{mu_{x_j} in U2}`` in [1/2, 1], plus random spot checks
    of the event itself; its verdict is labelled "sufficient-only".
    """
    if not 0 < beta <= 1:
        raise DomainError(f"beta must be in (0, 1], got {beta}")
    pts, stats = _points(family, data)
    n = stats.shape[0]
    if mode == "auto":
        mode = "exact" if n <= exact_cap else "sufficient"
    lc = _log_c(c)
    m_min = _ceil_frac(beta, n)
    if mode == "exact":
        if n > exact_cap:
            raise Refusal(f"exact event check is capped at n={exact_cap}")
        cnt = splittable_counts(family, hyper, data, c)
        pc = np.zeros(1 << n, dtype=np.int64)
        for i in range(n):
            lo = 1 << i
            pc[lo:2 * lo] = pc[:lo] + 1
        big = pc >= max(m_min, 1)
        ok = 2 * cnt[big] >= pc[big]
        bad = np.flatnonzero(big)[~ok]
        return EventVerdict("exact", bool(ok.all()),
                            {"subsets_checked": int(big.sum()),
                             "first_failure": None if bad.size == 0 else
                             [j + 1 for j in range(n) if bad[0] >> j & 1]})
    if mode != "sufficient":
        raise DomainError(f"unknown mode {mode!r}")
    if U1 is None or U2 is None:
        raise DomainError("sufficient mode needs the boxes U1 and U2")
    from .expfam import mu_x
    reg1 = HalfspaceRegion.box(U1.lo, U1.hi)
    cap1 = capture_check(stats, reg1, beta / 2)
    ind = np.array([float(U2.contains(mu_x(family, hyper, pts[[j]])[0])) for j in range(n)])
    cap2 = capture_check(ind[:, None], HalfspaceRegion.box([0.5], [1.0]), beta)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    failures = 0
    for _ in range(spot_checks):
        size = int(rng.integers(max(m_min, 1), n + 1))
        J = np.sort(rng.choice(n, size=size, replace=False))
        lmJ = log_marginal(family, hyper, pts[J])
        good = 0
        for pos_, j in enumerate(J):
            rest = np.delete(J, pos_)
            if lmJ <= lc + log_marginal(family, hyper, pts[rest]) + log_marginal(family, hyper, pts[[j]]):
                good += 1
        failures += 2 * good < size
    holds = bool(cap1 and cap2 and failures == 0 and beta * n >= 2)
    return EventVerdict("sufficient-only", holds,
                        {"capture_stats": cap1, "capture_indicators": cap2,
                         "spot_checks": spot_checks, "spot_failures": failures})
