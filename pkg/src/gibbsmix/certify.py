"""Laplace-type sandwich bounds and the marginal splitting inequality.

For a compact box ``U`` inside the moment space, ``certify_box`` produces
constants ``C1 <= m(x) / m~(x) <= C2`` valid whenever ``mu_x`` lies in
``U``.  ``splitting_bound`` turns those into a constant ``C`` with

    m(x) / (m(x_A) m(x_B)) <= C (a b / (nu + n))^{k/2}

for splits whose block means stay in ``U``.

Sup/inf quantities over ``U`` that have no closed form (``gamma``, ``delta``
and the ``C0`` terms) are evaluated on a grid and then padded by a factor of
two, so the constants are conservative but not interval-verified.
Hessian bounds are exact for the separable families (``kappa''`` is
monotone along each axis) and are refused for the normal-gamma family.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammainc

from .errors import DomainError, Refusal
from .expfam import ConjugateHyperparameters, ExponentialFamily, log_psi

__all__ = [
    "MomentSpaceBox",
    "LaplaceCertificate",
    "SplittingBound",
    "SplitCheck",
    "chi_ball_prob",
    "laplace_sandwich",
    "certify_box",
    "splitting_bound",
    "splitting_check",
]

GRID_SAFETY = 2.0
EPS_LADDER = [0.5 * 2.0 ** -i for i in range(20)]


def chi_ball_prob(k: int, r: float) -> float:
    """``P(|Z| <= r)`` for a standard normal ``Z`` in ``R^k``."""
    if r <= 0:
        return 0.0
    if math.isinf(r):
        return 1.0
    return float(gammainc(0.5 * k, 0.5 * r * r))


@dataclass(frozen=True)
class MomentSpaceBox:
    """Axis-aligned box ``[lo, hi]`` in moment space, with a grid resolution
    (points per axis, endpoints included) for sup/inf evaluation."""

    lo: tuple
    hi: tuple
    resolution: int = 64

    @classmethod
    def make(cls, lo, hi, resolution=64):
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo) != len(hi):
            raise DomainError("box corners differ in dimension")
        if not all(a < b for a, b in zip(lo, hi)):
            raise DomainError("box must have nonempty interior (lo < hi on every axis)")
        if int(resolution) < 2:
            raise DomainError("box resolution must be >= 2")
        return cls(lo, hi, int(resolution))

    @property
    def k(self):
        return len(self.lo)

    def grid(self) -> np.ndarray:
        axes = [np.linspace(a, b, self.resolution) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lo, self.hi))))

    def contains(self, mu) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return bool(np.all(mu >= np.array(self.lo)) and np.all(mu <= np.array(self.hi)))

    def hull_with(self, point) -> "MomentSpaceBox":
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return MomentSpaceBox.make(np.minimum(self.lo, p), np.maximum(self.hi, p),
                                   self.resolution)

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "resolution": self.resolution}


@dataclass
class LaplaceCertificate:
    family: dict
    hyper: dict
    box: dict
    eps: float
    alpha: float
    beta: float
    gamma: float
    delta: float
    c1: float
    c2: float
    C1: float
    C2: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _check_box(family: ExponentialFamily, box: MomentSpaceBox):
    if box.k != family.k:
        raise DomainError(f"box dimension {box.k} != family dimension {family.k}")
    pts = np.vstack([box.corners(), box.grid()])
    if not np.all(family.in_moment_space(pts)):
        raise DomainError("box is not contained in the moment space")


def _theta_box(family, box):
    lo, hi = family.theta_box(np.array(box.lo), np.array(box.hi))
    return np.minimum(lo, hi), np.maximum(lo, hi)


def _pick_eps(family, tlo, thi):
    bounds = family.theta_bounds()
    for eps in EPS_LADDER:
        if np.all(tlo - eps > bounds[:, 0]) and np.all(thi + eps < bounds[:, 1]):
            return eps
    raise Refusal("no eps >= 2^-20 keeps the eps-neighbourhood inside Theta")


def _sup_tk(k, delta):
    """``sup_{t >= 1} t^{k/2} exp(-(t-1) delta)``."""
    tstar = 0.5 * k / delta
    t = tstar if tstar > 1 else 1.0
    return t ** (0.5 * k) * math.exp(-(t - 1.0) * delta)


def certify_box(family: ExponentialFamily, hyper: ConjugateHyperparameters,
                box: MomentSpaceBox) -> LaplaceCertificate:
    """Constants ``C1, C2`` with ``C1 <= m(x)/m~(x) <= C2`` for ``mu_x`` in the box."""
    _check_box(family, box)
    tlo, thi = _theta_box(family, box)
    eps = _pick_eps(family, tlo, thi)
    # eigenvalue range over the eps-expanded theta box (contains V_eps)
    alpha, beta = family.hess_eig_range(tlo - eps, thi + eps)
    if not (alpha > 0 and math.isfinite(beta)):
        raise Refusal("Hessian bounds are degenerate on the eps-neighbourhood")
    grid = box.grid()
    k = family.k
    log_g = []
    hmin = math.inf
    for mu in grid:
        lam, _ = family.legendre(mu)
        log_g.append(-lam + log_psi(family, mu, 1.0))
        hmin = min(hmin, float(family.h_sphere_min(mu, eps)))
    gamma = GRID_SAFETY * math.exp(max(log_g))
    delta = hmin / GRID_SAFETY
    if not delta > 0:
        raise Refusal("could not certify a positive delta on the eps-sphere")
    c1 = (2 * math.pi / beta) ** (0.5 * k) * chi_ball_prob(k, eps * math.sqrt(beta))
    c2 = float((2 * math.pi / alpha) ** (0.5 * k) + gamma * _sup_tk(k, delta))
    lp0 = log_psi(family, hyper.xi, hyper.nu)
    return LaplaceCertificate(
        family=family.to_dict(), hyper=hyper.to_dict(), box=box.to_dict(),
        eps=eps, alpha=alpha, beta=beta, gamma=gamma, delta=delta,
        c1=c1, c2=c2, C1=c1 * math.exp(-lp0), C2=c2 * math.exp(-lp0),
        notes=["gamma and delta are grid estimates padded by a factor 2"])


def laplace_sandwich(family: ExponentialFamily, mu, t: float, eps: float,
                     alpha: float | None = None, beta: float | None = None,
                     delta: float | None = None, s: float = 1.0,
                     quad: bool = True):
    """Sandwich for ``g(t) = int exp(t (theta . mu - kappa(theta))) dtheta``.

    Returns ``(lower, upper, ratio)`` where all three are normalized by
    ``(2 pi / t)^{k/2} exp(t Lambda(mu))``; ``ratio`` is the closed-form
    value of the normalized integral, and for ``k = 1`` it is additionally
    cross-checked by adaptive quadrature (``ratio_quad`` in the 4th slot).
    ``alpha``, ``beta`` and ``delta`` default to the certified values on the
    eps-ball and are rejected if they are not valid.
    """
    mu = family.check_mu(mu)
    k = family.k
    t = float(t)
    s = float(s)
    if not (t >= s > 0):
        raise DomainError("need t >= s > 0")
    lam, th = family.legendre(mu)
    bounds = family.theta_bounds()
    if not (np.all(th - eps > bounds[:, 0]) and np.all(th + eps < bounds[:, 1])):
        raise Refusal("eps-ball around theta_mu leaves Theta")
    a_true, b_true = family.hess_eig_range(th - eps, th + eps)
    alpha = a_true if alpha is None else float(alpha)
    beta = b_true if beta is None else float(beta)
    if alpha > a_true * (1 + 1e-12) or beta < b_true * (1 - 1e-12):
        raise Refusal("supplied Hessian bounds do not hold on the eps-ball")
    d_true = family.h_sphere_min(mu, eps)
    delta = d_true if delta is None else float(delta)
    if delta > d_true * (1 + 1e-12):
        raise Refusal("supplied delta exceeds the minimum of h on the eps-sphere")
    lower = chi_ball_prob(k, eps * math.sqrt(t * beta)) / beta ** (0.5 * k)
    # tail: (t/2pi)^{k/2} e^{-(t-s) delta} e^{-s Lambda} g(s)
    log_tail = (0.5 * k * math.log(t / (2 * math.pi)) - (t - s) * delta
                - s * lam + log_psi(family, s * mu, s))
    upper = chi_ball_prob(k, eps * math.sqrt(t * alpha)) / alpha ** (0.5 * k) + math.exp(log_tail)
    log_norm = 0.5 * k * math.log(2 * math.pi / t) + t * lam
    ratio = math.exp(log_psi(family, t * mu, t) - log_norm)
    ratio_quad = None
    if quad and k == 1:
        ratio_quad = _quad_ratio(family, mu, t, lam, th[0])
    return lower, upper, ratio, ratio_quad


def _quad_ratio(family, mu, t, lam, th0):
    lo, hi = family.theta_bounds()[0]

    def f(x):
        tt = np.array([x])
        if not lo < x < hi:
            return 0.0
        h = family.kappa(tt) - x * mu[0] + lam
        return math.exp(-t * h)

    w = 1.0 / math.sqrt(t * family.kappa_hess(np.array([th0]))[0, 0])
    total = 0.0
    # core pieces, then tails
    a = max(th0 - 40 * w, lo + 1e-300) if math.isfinite(lo) else th0 - 40 * w
    b = min(th0 + 40 * w, hi) if math.isfinite(hi) else th0 + 40 * w
    for p, q in ((a, th0), (th0, b)):
        v, _ = integrate.quad(f, p, q, epsabs=1e-14, epsrel=1e-12, limit=200)
        total += v
    for p, q in ((lo, a), (b, hi)):
        if p < q:
            v, _ = integrate.quad(f, p, q, epsabs=1e-14, epsrel=1e-12, limit=200)
            total += v
    return total / math.sqrt(2 * math.pi / t)


@dataclass
class SplittingBound:
    C: float
    C0: float
    certificate: LaplaceCertificate
    hull: dict

    def to_dict(self):
        return {"C": self.C, "C0": self.C0, "hull": self.hull,
                "certificate": self.certificate.to_dict()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def splitting_bound(family: ExponentialFamily, hyper: ConjugateHyperparameters,
                    box: MomentSpaceBox) -> SplittingBound:
    """Constant ``C`` of the splitting inequality for block means in ``box``.

    The certificate is taken on the bounding box of ``box`` and the prior
    mean ``xi/nu``; for the separable families this contains the convex
    hull and stays inside the moment space.
    """
    _check_box(family, box)
    prior_mean = hyper.xi / hyper.nu
    hull = box.hull_with(prior_mean)
    cert = certify_box(family, hyper, hull)
    grid = hull.grid()
    s1 = 0.0
    s2 = 0.0
    for y in grid:
        lam, th = family.legendre(y)
        # Lambda'(y) = theta_y
        s1 = max(s1, abs(float((prior_mean - y) @ th)))
        s2 = max(s2, abs(lam))
    C0 = GRID_SAFETY * (hyper.nu * s1 + hyper.nu * s2)
    C = cert.C2 * math.exp(C0) / cert.C1 ** 2
    return SplittingBound(C=C, C0=C0, certificate=cert, hull=hull.to_dict())


@dataclass
class SplitCheck:
    holds: bool | None
    log_lhs: float | None = None
    log_rhs: float | None = None
    reason: str = ""


def splitting_check(family: ExponentialFamily, hyper: ConjugateHyperparameters,
                    box: MomentSpaceBox, data, A, bound: SplittingBound | None = None
                    ) -> SplitCheck:
    """Check the splitting inequality for one split ``(A, complement)``.

    ``A`` holds 0-based indices.  Splits whose preconditions fail (empty
    side, block mean of A or posterior mean of B outside the box) are
    skipped with a reason rather than counted.
    """
    from .expfam import log_marginal, mu_x

    s = family.suff_stats(data)
    n = s.shape[0]
    A = np.asarray(sorted(set(int(i) for i in A)), dtype=int)
    if A.size and (A.min() < 0 or A.max() >= n):
        raise DomainError("split indices out of range")
    mask = np.zeros(n, bool)
    mask[A] = True
    a, b = int(mask.sum()), int((~mask).sum())
    if a == 0 or b == 0:
        return SplitCheck(None, reason="empty side")
    if not box.contains(s[mask].mean(axis=0)):
        return SplitCheck(None, reason="mean of s over A outside box")
    muB, _ = mu_x(family, hyper, np.asarray(data)[~mask])
    if not box.contains(muB):
        return SplitCheck(None, reason="mu of B outside box")
    if bound is None:
        bound = splitting_bound(family, hyper, box)
    x = np.asarray(data)
    lhs = (log_marginal(family, hyper, x) - log_marginal(family, hyper, x[mask])
           - log_marginal(family, hyper, x[~mask]))
    rhs = math.log(bound.C) + 0.5 * family.k * math.log(a * b / (hyper.nu + n))
    return SplitCheck(bool(lhs <= rhs), lhs, rhs)
