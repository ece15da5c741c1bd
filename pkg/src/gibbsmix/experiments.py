"""Synthetic mixture data and the desk-scale experiment drivers.

All randomness is derived from a master seed and the task coordinates
(replicate, n) through ``numpy.random.SeedSequence``, so each CSV row can be
regenerated on its own and rows never depend on execution order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, Refusal
from .expfam import ExponentialFamily, family_from_dict
from .partition import GibbsPartitionModel
from .posterior import (ChainResult, Dataset, GibbsChainConfig,
                        exact_joint_subset_dp, gibbs_sampler)
from .theory import (bounded_case_constant, fraction_in_region, lemma_bound)

__all__ = [
    "MixtureSpec",
    "ExperimentConfig",
    "derive_seed",
    "gen_mixture_data",
    "Fig3Result",
    "fig3_size_distribution",
    "fig1b_experiment",
    "CensusSummary",
    "extra_cluster_census",
    "inconsistency_sweep",
    "rows_to_csv",
    "FIG1B_DEFAULTS",
]

CSV_VERSION = 1


def derive_seed(seed: int, *coords: int) -> int:
    """64-bit seed for the task at ``coords`` under master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(c) for c in coords))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class MixtureSpec:
    """Finite mixture ``sum_i pi_i P_theta(i)`` in canonical parameters."""

    weights: tuple
    thetas: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise DomainError("mixture needs at least one weight")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"mixture weights must be >= 0 and sum to 1, got sum {w.sum()}")
        if len(self.thetas) != w.size:
            raise DomainError("need one parameter per weight")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "thetas", tuple(tuple(np.atleast_1d(np.asarray(t, float)))
                                                 for t in self.thetas))

    @property
    def t_star(self) -> int:
        return len(self.weights)

    @classmethod
    def from_means(cls, family: ExponentialFamily, weights, means) -> "MixtureSpec":
        thetas = [family.legendre(np.atleast_1d(np.asarray(m, float)))[1] for m in means]
        return cls(tuple(weights), tuple(tuple(t) for t in thetas))

    @classmethod
    def from_dict(cls, family, d: dict) -> "MixtureSpec":
        if "means" in d:
            return cls.from_means(family, d["weights"], d["means"])
        if "thetas" in d:
            return cls(tuple(d["weights"]), tuple(d["thetas"]))
        raise DomainError("mixture needs 'means' or 'thetas'")

    def validate(self, family):
        for th in self.thetas:
            family.check_theta(np.asarray(th))

    def to_dict(self):
        return {"weights": list(self.weights), "thetas": [list(t) for t in self.thetas]}


def gen_mixture_data(family: ExponentialFamily, spec: MixtureSpec, n: int,
                     seed: int) -> Dataset:
    """i.i.d. draws: a component index from the weights, then a point.

    Point j depends only on (seed, j)'s position in the stream, so a run with
    a larger n extends the data of a smaller one (prefix property).
    """
    spec.validate(family)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    comps = rng.choice(spec.t_star, size=n, p=np.asarray(spec.weights))
    d = family.k if family.name == "gaussian" else 1
    pts = np.zeros((n, d))
    for i, th in enumerate(spec.thetas):
        # one substream per component keeps the prefix property
        sub = np.random.Generator(np.random.Philox(key=int(seed) | ((i + 1) << 64)))
        draws = family.sample(np.asarray(th), n, sub).reshape(n, d)
        sel = comps == i
        pts[sel] = draws[sel]
    if d == 1:
        pts = pts[:, 0]
    return Dataset(family, pts, labels=comps + 1)


# -- figure 3 -----------------------------------------------------------------

@dataclass
class Fig3Result:
    n: int
    a: np.ndarray
    pmf: np.ndarray
    cdf: np.ndarray

    def tail(self, frac: float) -> float:
        """``P(a_1 <= frac n | t = 2)``."""
        return float(math.fsum(self.pmf[self.a <= frac * self.n]))

    def extremes(self, frac: float) -> float:
        """``P(min(a_1, n - a_1) <= frac n | t = 2)``."""
        lo = np.minimum(self.a, self.n - self.a)
        return float(math.fsum(self.pmf[lo <= frac * self.n]))

    def rows(self):
        return [(self.n, int(a), float(p), float(c)) for a, p, c in zip(self.a, self.pmf, self.cdf)]


def fig3_size_distribution(theta: float, n: int,
                           model: GibbsPartitionModel | None = None) -> Fig3Result:
    """Exact law of ``a_1 = |A_1|`` given t = 2.

    There are ``C(n, a)`` ordered partitions with ``|A_1| = a``, each of
    weight ``v_n(2) w_n(a) w_n(n - a)``; under a Dirichlet process this is
    proportional to ``1 / (a (n - a))`` and free of theta.
    """
    if n < 2:
        raise DomainError("need n >= 2")
    model = model or GibbsPartitionModel.dirichlet(theta)
    a = np.arange(1, n)
    lw = model.log_w(n)
    logp = gammaln(n + 1) - gammaln(a + 1) - gammaln(n - a + 1) + lw[a] + lw[n - a]
    logp = logp - logsumexp(logp)
    pmf = np.exp(logp)
    pmf /= math.fsum(pmf)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0 if abs(cdf[-1] - 1.0) < 1e-12 else cdf[-1]
    return Fig3Result(n, a, pmf, cdf)


# -- configs --------------------------------------------------------------------

FIG1B_DEFAULTS = {
    "experiment": "fig1b",
    "family": {"family": "gaussian", "params": {"dim": 2, "variance": 1.0},
               "xi": [0.0, 0.0], "nu": 0.1},
    "model": {"kind": "dp", "theta": 1.0},
    "mixture": {"weights": [0.25, 0.25, 0.25, 0.25],
                "means": [[3.0, 3.0], [3.0, -3.0], [-3.0, 3.0], [-3.0, -3.0]]},
    "n_grid": [100, 400, 1600],
    "replicates": 10,
    "seed": 2024,
    "gibbs": {"burn_in_sweeps": 1000, "sample_sweeps": 10000, "chains": 1},
    "census_threshold": 3,
}


@dataclass
class ExperimentConfig:
    family: ExponentialFamily
    hyper: object
    model: GibbsPartitionModel
    mixture: MixtureSpec
    n_grid: list
    replicates: int = 1
    seed: int = 0
    gibbs: dict = field(default_factory=dict)
    exact_max_n: int = 14
    region: object = None
    c: float | None = None
    phi_source: str = "region"
    census_threshold: int = 0
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if list(self.n_grid) != sorted(self.n_grid) or not self.n_grid:
            raise DomainError("n_grid must be a nonempty ascending list")
        if self.replicates < 1:
            raise DomainError("replicates must be >= 1")
        if self.phi_source not in ("region", "exact"):
            raise DomainError("phi_source must be 'region' or 'exact'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        fam, hyper = family_from_dict(d["family"])
        if hyper is None:
            raise DomainError("experiment family spec needs xi and nu")
        model = GibbsPartitionModel.from_dict(d["model"])
        mix = MixtureSpec.from_dict(fam, d["mixture"])
        region = d.get("region")
        if region is not None and isinstance(region, dict):
            region = (region["lo"], region["hi"])
        return cls(family=fam, hyper=hyper, model=model, mixture=mix,
                   n_grid=[int(n) for n in d["n_grid"]],
                   replicates=int(d.get("replicates", 1)), seed=int(d.get("seed", 0)),
                   gibbs=dict(d.get("gibbs", {})), exact_max_n=int(d.get("exact_max_n", 14)),
                   region=region, c=d.get("c"), phi_source=d.get("phi_source", "region"),
                   census_threshold=int(d.get("census_threshold", 0)), raw=dict(d))

    def gibbs_config(self, seed: int) -> GibbsChainConfig:
        g = dict(self.gibbs)
        g["seed"] = seed
        g.setdefault("census_threshold", self.census_threshold)
        return GibbsChainConfig.from_dict(g)


def rows_to_csv(columns, rows, config: dict | None = None) -> str:
    """CSV text with a ``# config:`` comment line carrying the config JSON."""
    buf = io.StringIO()
    if config is not None:
        buf.write("# csv_version: %d\n" % CSV_VERSION)
        buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating))
                                          else v) for v in r])
    return buf.getvalue()


# -- figure 1(b) and census ---------------------------------------------------------

def fig1b_experiment(config: ExperimentConfig, threads: int = 1):
    """Averaged Gibbs estimate of ``p(T = t | x)`` per n over replicates.

    Returns ``(rows, chains)`` with rows ``(n, t, mean_posterior, stderr)``
    (stderr across replicates) and the per-(n, replicate) ChainResults.
    """
    rows = []
    chains = {}
    for ni, n in enumerate(config.n_grid):
        est = []
        for r in range(config.replicates):
            data = gen_mixture_data(config.family, config.mixture, n,
                                    derive_seed(config.seed, 0, r))
            gcfg = config.gibbs_config(derive_seed(config.seed, 1, r, n))
            res = gibbs_sampler(config.model, config.family, config.hyper, data, gcfg,
                                threads=threads)
            est.append(res.pooled)
            chains[(n, r)] = res
        est = np.array(est)
        mean = est.mean(axis=0)
        se = est.std(axis=0, ddof=1) / math.sqrt(len(est)) if len(est) > 1 else np.zeros(n)
        for t in range(1, n + 1):
            rows.append((n, t, float(mean[t - 1]), float(se[t - 1])))
    return rows, chains


@dataclass
class CensusSummary:
    threshold: int
    counts: np.ndarray
    quantiles: dict

    def to_dict(self):
        return {"threshold": self.threshold, "sweeps": int(self.counts.size),
                "quantiles": self.quantiles, "mean": float(self.counts.mean())
                if self.counts.size else None}


def extra_cluster_census(result, threshold: int) -> CensusSummary:
    """Counts of blocks of size <= threshold per sampled partition.

    ``result`` is a ChainResult run with ``census_threshold == threshold``,
    or a sequence of partitions given as label vectors.
    """
    if threshold < 1:
        raise DomainError("threshold must be >= 1")
    if isinstance(result, ChainResult):
        if result.census is None or result.config.census_threshold != threshold:
            raise DomainError(
                f"chain was run with census_threshold={result.config.census_threshold}; "
                f"rerun with {threshold}")
        counts = result.census.reshape(-1)
    else:
        counts = []
        for labels in result:
            labels = getattr(labels, "assignment", labels)
            sizes = np.bincount(np.asarray(labels, dtype=np.int64))
            sizes = sizes[sizes > 0]
            counts.append(int(np.sum(sizes <= threshold)))
        counts = np.asarray(counts, dtype=np.int64)
    qs = {}
    if counts.size:
        for q in (0.05, 0.25, 0.5, 0.75, 0.95):
            qs[str(q)] = float(np.quantile(counts, q))
    return CensusSummary(threshold, counts, qs)


# -- inconsistency sweep ------------------------------------------------------------

SWEEP_COLUMNS = ["n", "engine", "posterior", "stderr", "gibbs_anchor", "phi", "phi_source",
                 "c", "C_t", "bound", "preconditions", "running_max"]


def inconsistency_sweep(config: ExperimentConfig, t_star: int, threads: int = 1):
    """Posterior at ``t_star`` along one growing data sequence, joined with
    the per-n bound.  Exact subset DP for n <= exact_max_n, Gibbs beyond;
    at the largest exact n the sampler is also run as an anchor."""
    if t_star != config.mixture.t_star:
        raise DomainError(f"t* = {t_star} differs from the mixture's {config.mixture.t_star} components")
    if config.n_grid[0] <= t_star:
        raise Refusal(f"n = {config.n_grid[0]} <= t* = {t_star}: the bound needs n > t")
    model = config.model
    excluded = model.kind == "py" and model.sigma < 0 and t_star >= model.N
    fam, hyper = config.family, config.hyper
    c_region = bounded_case_constant(fam, hyper, config.region) if config.region is not None \
        else None
    if config.c is not None:
        c = float(config.c)
        # the region fraction lower-bounds phi only for c >= sup_U p_theta / m
        if config.phi_source == "region" and c_region is not None and \
                c < c_region * (1 - 1e-12):
            raise DomainError(f"c = {c:g} is below the region constant {c_region:g}; "
                              "the region fraction would not bound phi")
    else:
        c = c_region
    data = gen_mixture_data(fam, config.mixture, config.n_grid[-1], derive_seed(config.seed, 0))
    exact_ns = [n for n in config.n_grid if n <= config.exact_max_n]
    anchor_n = exact_ns[-1] if exact_ns else None
    rows = []
    running = -math.inf
    for n in config.n_grid:
        ds = data.head(n)
        se = None
        anchor = None
        if n <= config.exact_max_n:
            post = exact_joint_subset_dp(model, fam, hyper, ds)[t_star]
            engine = "exact"
            if n == anchor_n:
                g = gibbs_sampler(model, fam, hyper, ds,
                                  config.gibbs_config(derive_seed(config.seed, 1, n)), threads)
                anchor = float(g.pooled[t_star - 1])
        else:
            g = gibbs_sampler(model, fam, hyper, ds,
                              config.gibbs_config(derive_seed(config.seed, 1, n)), threads)
            post = float(g.pooled[t_star - 1])
            se = float(g.stderr()[t_star - 1])
            engine = "gibbs"
        running = max(running, post)
        phi = None
        Ct = None
        bound = None
        pre = False
        if not excluded and c is not None:
            if config.phi_source == "exact" and n <= config.exact_max_n:
                rep = lemma_bound(model, fam, hyper, ds, t_star, c, posterior=post, exact=False)
            else:
                if config.region is None:
                    raise DomainError("phi_source 'region' needs a region")
                phi_val = fraction_in_region(fam, ds, config.region)
                rep = lemma_bound(model, fam, hyper, ds, t_star, c, phi=phi_val,
                                  phi_source="region", posterior=post, exact=False)
            phi, Ct, pre = rep.phi, rep.C_t, rep.preconditions
            bound = rep.bound if pre else None
        rows.append((n, engine, post, se, anchor, phi,
                     "excluded" if excluded else config.phi_source, c, Ct, bound,
                     int(pre), running))
    return rows
