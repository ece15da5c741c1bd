"""Posterior on the number of clusters: exact engines and collapsed Gibbs.

Two exact engines compute ``log p(x, T = t)`` for every t:

* ``exact_joint_enumeration`` scores every set partition (restricted growth
  strings, processed in chunks) and is the reference oracle;
* ``exact_joint_subset_dp`` runs the recurrence
  ``f_t(S) = sum_{B contains min S} h(B) f_{t-1}(S \\ B)`` over bitmasks,
  with ``h(B) = w(|B|) m(x_B)``.

Both attach the ``t! v_n(t)`` factor for ordered partitions at the end.

The sampler works on unordered partitions.  Random numbers come from numpy's
Philox counter-based generator; chain ``i`` of a run with seed ``s`` uses the
128-bit key ``s | (i << 64)``, so each chain's stream depends only on
``(seed, i)`` and never on scheduling or thread count.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._backend import get_kernels
from .errors import DomainError, ImpossibleStateError, Refusal
from .expfam import ConjugateHyperparameters, ExponentialFamily
from .partition import ENUMERATION_CAP, GibbsPartitionModel, rgs_chunks

__all__ = [
    "Dataset",
    "ClusterCountPosterior",
    "GibbsChainConfig",
    "ChainResult",
    "DP_CAP",
    "subset_log_marginals",
    "exact_joint_enumeration",
    "exact_joint_subset_dp",
    "joint_from_table_enumeration",
    "joint_from_table_dp",
    "gibbs_sampler",
    "posterior_of_t",
    "chain_rng",
]

DP_CAP = 20


@dataclass
class Dataset:
    """Data points of a family's sample space with cached statistics."""

    family: ExponentialFamily
    points: np.ndarray
    labels: np.ndarray | None = None
    stats: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.stats = np.ascontiguousarray(self.family.suff_stats(self.points), dtype=float)
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != self.n:
                raise DomainError("labels and points differ in length")

    @property
    def n(self) -> int:
        return self.stats.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        lab = None if self.labels is None else self.labels[idx]
        return Dataset(self.family, self.points[idx], lab)

    def head(self, n: int) -> "Dataset":
        return self.subset(np.arange(n))


def _as_dataset(family, data) -> Dataset:
    if isinstance(data, Dataset):
        if data.family != family:
            raise DomainError("dataset was built for a different family")
        return data
    return Dataset(family, data)


@dataclass
class ClusterCountPosterior:
    """``log p(x, T = t)`` for t = 1..n (``log_joint[t-1]``) and the normalized
    posterior.  ``degenerate`` is set when every joint entry is -inf, in which
    case the posterior is all zeros."""

    n: int
    log_joint: np.ndarray
    log_evidence: float = field(init=False)
    posterior: np.ndarray = field(init=False)
    degenerate: bool = field(init=False)
    engine: str = ""

    def __post_init__(self):
        self.log_joint = np.asarray(self.log_joint, dtype=float)
        if self.log_joint.shape != (self.n,):
            raise DomainError(f"log_joint must have length n={self.n}")
        self.posterior, self.degenerate = posterior_of_t(self.log_joint)
        self.log_evidence = float(logsumexp(self.log_joint)) if not self.degenerate else -math.inf

    def __getitem__(self, t: int) -> float:
        return float(self.posterior[t - 1]) if 1 <= t <= self.n else 0.0

    def to_dict(self):
        def f(v):
            return None if not np.isfinite(v) else float(v)
        return {"n": self.n, "engine": self.engine,
                "log_joint": [f(v) for v in self.log_joint],
                "posterior": [float(v) for v in self.posterior],
                "log_evidence": f(self.log_evidence),
                "degenerate": self.degenerate}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "posterior"])
        for t, p in enumerate(self.posterior, start=1):
            w.writerow([t, repr(float(p))])
        return buf.getvalue()


def posterior_of_t(log_joint) -> tuple[np.ndarray, bool]:
    """Softmax of the log joint; all -inf gives zeros and ``degenerate=True``."""
    lj = np.asarray(log_joint, dtype=float)
    if lj.size == 0 or not np.any(np.isfinite(lj)):
        return np.zeros_like(lj), True
    m = np.max(lj)
    p = np.exp(lj - m)
    return p / p.sum(), False


# -- subset tables ---------------------------------------------------------

def subset_log_marginals(family, hyper, stats) -> np.ndarray:
    """``log m(x_B)`` for every bitmask B (index 0 is the empty set, = 0).

    Sums are built by doubling: the block of masks whose top bit is i is the
    block below it plus ``s(x_i)``.
    """
    stats = np.asarray(stats, dtype=float)
    n, k = stats.shape
    size = 1 << n
    sums = np.zeros((size, k))
    cnt = np.zeros(size)
    for i in range(n):
        lo = 1 << i
        sums[lo:2 * lo] = sums[:lo] + stats[i]
        cnt[lo:2 * lo] = cnt[:lo] + 1
    psi0 = float(family.log_psi(hyper.xi, np.float64(hyper.nu)))
    out = family.log_psi(hyper.xi + sums, hyper.nu + cnt) - psi0
    out[0] = 0.0
    return out


def _popcounts(n):
    size = 1 << n
    pc = np.zeros(size, dtype=np.int64)
    for i in range(n):
        lo = 1 << i
        pc[lo:2 * lo] = pc[:lo] + 1
    return pc


def _check_n(n, cap, what):
    if n < 1:
        raise DomainError("need at least one data point")
    if cap is not None and n > cap:
        raise Refusal(f"n={n} exceeds the {what} cap of {cap}; pass a larger cap to override")


def joint_from_table_dp(model: GibbsPartitionModel, n: int, logm: np.ndarray,
                        backend=None) -> np.ndarray:
    """Log joint over t = 1..n from a subset table of log marginals (DP)."""
    lw = model.log_w(n)
    log_h = np.ascontiguousarray(lw[_popcounts(n)] + logm)
    log_h[0] = -np.inf
    L = np.asarray(get_kernels(backend).partition_logsums(log_h, n))
    with np.errstate(invalid="ignore"):
        out = model.log_tv(n)[1:n + 1] + L[1:]
    return np.where(np.isnan(out), -np.inf, out)


def joint_from_table_enumeration(model: GibbsPartitionModel, n: int, logm: np.ndarray,
                                 cap: int | None = ENUMERATION_CAP) -> np.ndarray:
    """Log joint over t = 1..n by scoring every set partition."""
    lw = model.log_w(n)
    with np.errstate(invalid="ignore"):
        h = lw[_popcounts(n)] + logm
    h[0] = 0.0  # unused block slots
    acc = np.full(n + 1, -np.inf)
    bits = (1 << np.arange(n)).astype(np.int64)
    for rows in rgs_chunks(n, cap=cap):
        P = rows.shape[0]
        masks = np.zeros((P, n), dtype=np.int64)
        r = np.arange(P)
        for j in range(n):
            masks[r, rows[:, j]] += bits[j]
        score = h[masks].sum(axis=1)
        t = rows.max(axis=1).astype(np.int64) + 1
        for tt in np.unique(t):
            acc[tt] = np.logaddexp(acc[tt], logsumexp(score[t == tt]))
    with np.errstate(invalid="ignore"):
        out = model.log_tv(n)[1:n + 1] + acc[1:]
    return np.where(np.isnan(out), -np.inf, out)


def exact_joint_enumeration(model, family, hyper, data, cap: int | None = ENUMERATION_CAP
                            ) -> ClusterCountPosterior:
    """Reference oracle: explicit sum over all set partitions."""
    ds = _as_dataset(family, data)
    n = ds.n
    _check_n(n, cap, "enumeration")
    # block sums straight from a membership matrix, not the doubling table
    masks = np.arange(1 << n, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    psi0 = float(family.log_psi(hyper.xi, np.float64(hyper.nu)))
    logm = family.log_psi(hyper.xi + member @ ds.stats, hyper.nu + member.sum(axis=1)) - psi0
    logm[0] = 0.0
    lj = joint_from_table_enumeration(model, n, logm, cap=cap)
    return ClusterCountPosterior(n, lj, engine="enumeration")


def exact_joint_subset_dp(model, family, hyper, data, cap: int | None = DP_CAP,
                          backend=None) -> ClusterCountPosterior:
    """Exact log joint by the O(3^n) subset recurrence."""
    ds = _as_dataset(family, data)
    n = ds.n
    _check_n(n, cap, "subset-DP")
    logm = subset_log_marginals(family, hyper, ds.stats)
    return ClusterCountPosterior(n, joint_from_table_dp(model, n, logm, backend),
                                 engine="subset_dp")


# -- collapsed Gibbs --------------------------------------------------------

_INITS = ("one_block", "singletons", "random")


@dataclass(frozen=True)
class GibbsChainConfig:
    seed: int = 0
    burn_in_sweeps: int = 10_000
    sample_sweeps: int = 100_000
    init: str = "one_block"
    chains: int = 1
    random_scan: bool = False
    census_threshold: int = 0
    chunk_sweeps: int = 1000

    def __post_init__(self):
        if self.burn_in_sweeps < 0 or self.sample_sweeps < 0:
            raise DomainError("sweep counts must be >= 0")
        if self.chains < 1:
            raise DomainError("chains must be >= 1")
        if self.init not in _INITS:
            raise DomainError(f"init must be one of {_INITS}, got {self.init!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.census_threshold < 0:
            raise DomainError("census_threshold must be >= 0")
        if self.chunk_sweeps < 1:
            raise DomainError("chunk_sweeps must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "GibbsChainConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown gibbs config fields: {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ChainResult:
    """Per-chain T histograms (index t = 0..n), traces and final partitions."""

    n: int
    config: GibbsChainConfig
    histograms: np.ndarray
    traces: np.ndarray
    census: np.ndarray | None
    final_partitions: list
    backend: str

    @property
    def pooled(self) -> np.ndarray:
        """Pooled estimate of ``p(T = t | x)`` for t = 1..n."""
        tot = self.histograms.sum(axis=0)[1:].astype(float)
        s = tot.sum()
        return tot / s if s else tot

    @property
    def chain_means(self) -> np.ndarray:
        t = np.arange(self.n + 1)
        h = self.histograms.astype(float)
        with np.errstate(invalid="ignore"):
            return (h * t).sum(axis=1) / h.sum(axis=1)

    def stderr(self, batches: int = 20) -> np.ndarray:
        """Batch-means standard error of each pooled ``p(T = t)`` estimate."""
        S = self.traces.shape[1]
        if S == 0:
            return np.zeros(self.n)
        b = max(1, min(batches, S))
        L = S // b
        tr = self.traces[:, :L * b].reshape(self.traces.shape[0] * b, L)
        means = np.stack([(tr == t).mean(axis=1) for t in range(1, self.n + 1)], axis=1)
        if means.shape[0] < 2:
            return np.zeros(self.n)
        return means.std(axis=0, ddof=1) / math.sqrt(means.shape[0])

    def trace_csv(self, chain: int = 0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sweep", "t"])
        for i, t in enumerate(self.traces[chain], start=1):
            w.writerow([self.config.burn_in_sweeps + i, int(t)])
        return buf.getvalue()

    def to_dict(self):
        return {"n": self.n, "backend": self.backend, "config": self.config.to_dict(),
                "posterior": self.pooled.tolist(),
                "stderr": self.stderr().tolist(),
                "histograms": self.histograms[:, 1:].tolist(),
                "chain_means": self.chain_means.tolist(),
                "final_partitions": [list(map(int, p)) for p in self.final_partitions]}


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Philox stream for one chain: key = seed | (chain << 64)."""
    return np.random.Generator(np.random.Philox(key=int(seed) | (int(chain) << 64)))


def _canonical(labels):
    seen = {}
    return [seen.setdefault(int(b), len(seen) + 1) for b in labels]


def _run_chain(model, family, hyper, ds, config, chain, kern):
    n, k = ds.stats.shape
    rng = chain_rng(config.seed, chain)
    lw = np.array(model.log_w(n), dtype=float)
    ltv = np.array(model.log_tv(n), dtype=float)
    psi0 = float(family.log_psi(hyper.xi, np.float64(hyper.nu)))
    xi = np.array(hyper.xi, dtype=float)
    params = np.array(family.params, dtype=float)
    logm1 = np.ascontiguousarray(
        family.log_psi(xi + ds.stats, np.full(n, hyper.nu + 1.0)) - psi0, dtype=float)

    if config.init == "one_block":
        lab0 = np.zeros(n, dtype=np.int64)
    elif config.init == "singletons":
        lab0 = np.arange(n, dtype=np.int64)
    else:
        cap = n
        if model.kind == "py" and model.sigma < 0:
            cap = min(n, int(model.N))
        lab0 = rng.integers(0, cap, size=n).astype(np.int64)
    # compact ids 0..t-1 in order of first appearance
    _, first = np.unique(lab0, return_index=True)
    order_ids = np.argsort(first)
    remap = np.empty(int(lab0.max()) + 1, dtype=np.int64)
    remap[np.unique(lab0)[order_ids]] = np.arange(order_ids.size)
    labels = remap[lab0]
    t0 = int(labels.max()) + 1
    if ltv[t0] == -np.inf:
        raise DomainError(f"initial partition has t={t0} blocks, which has zero prior mass")
    sizes = np.bincount(labels, minlength=n).astype(np.int64)
    bstats = np.zeros((n, k))
    np.add.at(bstats, labels, ds.stats)
    blogm = np.zeros(n)
    blogm[:t0] = family.log_psi(xi + bstats[:t0], hyper.nu + sizes[:t0]) - psi0
    active = np.zeros(n, dtype=np.int64)
    active[:t0] = np.arange(t0)
    pos = np.zeros(n, dtype=np.int64)
    pos[:t0] = np.arange(t0)
    free = np.zeros(n, dtype=np.int64)
    nf = n - t0
    free[:nf] = np.arange(n - 1, t0 - 1, -1)
    counters = np.array([t0, nf], dtype=np.int64)

    S = config.sample_sweeps
    trace = np.zeros(S, dtype=np.int64)
    census = np.zeros(S, dtype=np.int64) if config.census_threshold > 0 else None
    empty_order = np.zeros((0, n), dtype=np.int64)
    base = np.tile(np.arange(n, dtype=np.int64), (1, 1))

    def run(num, t_dst, c_dst):
        done = 0
        while done < num:
            c = min(config.chunk_sweeps, num - done)
            if config.random_scan:
                order = np.ascontiguousarray(rng.permuted(np.repeat(base, c, axis=0), axis=1))
            else:
                order = empty_order
            u = rng.random((c, n))
            t_out = np.zeros(c, dtype=np.int64)
            c_out = np.zeros(c, dtype=np.int64)
            status = kern.gibbs_sweeps(
                family.code, params, xi, float(hyper.nu), psi0, ds.stats, logm1, ltv, lw,
                labels, sizes, bstats, blogm, active, pos, free, counters, u, order,
                int(config.census_threshold), t_out, c_out)
            if status:
                raise ImpossibleStateError(
                    f"every reassignment weight for element {status} is zero; "
                    "the model and data admit no partition here")
            if t_dst is not None:
                t_dst[done:done + c] = t_out
                if c_dst is not None:
                    c_dst[done:done + c] = c_out
            done += c

    run(config.burn_in_sweeps, None, None)
    run(S, trace, census)
    return trace, census, _canonical(labels)


def gibbs_sampler(model: GibbsPartitionModel, family: ExponentialFamily,
                  hyper: ConjugateHyperparameters, data, config: GibbsChainConfig,
                  threads: int = 1, backend: str | None = None) -> ChainResult:
    """Collapsed Gibbs over unordered partitions; see module docstring for the RNG."""
    ds = _as_dataset(family, data)
    kern = get_kernels(backend)
    name = "python" if kern.__name__.endswith("_pycore") else "cython"

    def one(chain):
        return _run_chain(model, family, hyper, ds, config, chain, kern)

    if threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, range(config.chains)))
    else:
        results = [one(c) for c in range(config.chains)]
    n = ds.n
    traces = np.stack([r[0] for r in results]) if results else np.zeros((0, 0), np.int64)
    hist = np.stack([np.bincount(tr, minlength=n + 1)[:n + 1] for tr in traces])
    census = None
    if config.census_threshold > 0:
        census = np.stack([r[1] for r in results])
    return ChainResult(n=n, config=config, histograms=hist, traces=traces, census=census,
                       final_partitions=[r[2] for r in results], backend=name)
