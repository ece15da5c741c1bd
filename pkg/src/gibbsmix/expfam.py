"""Canonical exponential families with conjugate priors.

Each family is written as ``p_theta(x) = exp(theta . s(x) - kappa(theta))``
with respect to a base measure ``lambda`` on the sample space, and carries
the conjugate prior ``pi(theta) ∝ exp(xi . theta - nu kappa(theta))`` whose
log-normalizer is ``psi(xi, nu)``.  Marginals of a block of data are
differences of ``psi`` values.

Supported families and their regularity (full, nonempty, regular and
identifiable in every case; all five have open convex moment spaces, and for
the continuous ones the sufficient statistic is real analytic on an open
connected sample space, so mixtures of the family put no mass on
hyperplanes):

=======================  ======  =================  ===================
family                   k       Theta              moment space M
=======================  ======  =================  ===================
gaussian (known var)     d       R^d                R^d
normal_gamma             2       R x (-inf, 0)      {mu2 > mu1^2}
exponential_gamma        1       (-inf, 0)          (0, inf)
poisson_gamma            1       R                  (0, inf)
geometric_beta           1       (-inf, 0)          (0, inf)
=======================  ======  =================  ===================
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from ._backend import (FAM_EXPONENTIAL, FAM_GAUSSIAN, FAM_GEOMETRIC,
                       FAM_NORMAL_GAMMA, FAM_POISSON)
from .errors import DomainError, Refusal

__all__ = [
    "ExponentialFamily",
    "GaussianKnownVariance",
    "UnivariateNormalGamma",
    "ExponentialGamma",
    "PoissonGamma",
    "GeometricBeta",
    "ConjugateHyperparameters",
    "family_from_dict",
    "kappa",
    "kappa_prime",
    "kappa_hess",
    "legendre",
    "legendre_newton",
    "log_psi",
    "log_marginal",
    "mu_x",
    "log_marginal_tilde",
]

LOG_2PI = math.log(2.0 * math.pi)


def _vec(x, k):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != k:
        raise DomainError(f"expected a vector of length {k}, got shape {arr.shape}")
    return arr


class ExponentialFamily:
    """Base class; subclasses fill in the closed forms."""

    name: str = ""
    code: int = -1
    k: int = 1
    discrete: bool = False

    # -- identity ---------------------------------------------------------

    @property
    def params(self) -> np.ndarray:
        """Family parameters passed to the compiled kernels."""
        return np.zeros(1)

    def to_dict(self) -> dict:
        return {"family": self.name, "params": {}}

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()['params']})"

    # -- parameter spaces -------------------------------------------------

    def theta_bounds(self) -> np.ndarray:
        """Per-coordinate open interval ``(lo, hi)`` whose product is Theta
        (shape ``(k, 2)``)."""
        raise NotImplementedError

    def check_theta(self, theta) -> np.ndarray:
        theta = _vec(theta, self.k)
        bounds = self.theta_bounds()
        lo, hi = bounds[:, 0], bounds[:, 1]
        bad = ~((theta > lo) & (theta < hi))
        if np.any(bad):
            i = int(np.argwhere(bad.reshape(-1, self.k))[0][-1])
            raise DomainError(
                f"{self.name}: theta[{i}] must lie in ({lo[i]}, {hi[i]})")
        return theta

    def in_moment_space(self, mu) -> bool | np.ndarray:
        raise NotImplementedError

    def check_mu(self, mu) -> np.ndarray:
        mu = _vec(mu, self.k)
        if not np.all(self.in_moment_space(mu)):
            raise DomainError(f"{self.name}: mu={mu.tolist()} is outside the moment space")
        return mu

    def in_xi(self, xi, nu) -> bool | np.ndarray:
        xi = np.asarray(xi, dtype=float)
        nu = np.asarray(nu, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inside = self.in_moment_space(xi / nu[..., None])
        return (nu > 0) & inside

    def check_support(self, x) -> np.ndarray:
        """Validate points of the sample space; returns an ``(n, d)`` array."""
        raise NotImplementedError

    # -- closed forms -----------------------------------------------------

    def kappa(self, theta):
        raise NotImplementedError

    def kappa_prime(self, theta):
        raise NotImplementedError

    def kappa_hess(self, theta):
        raise NotImplementedError

    def legendre(self, mu):
        """``(Lambda(mu), theta_mu)`` in closed form."""
        raise NotImplementedError

    def log_psi(self, xi, nu):
        """Vectorized conjugate log-normalizer; ``xi`` has trailing axis k."""
        raise NotImplementedError

    def suff_stats(self, x) -> np.ndarray:
        return self.check_support(x).astype(float)

    def log_density(self, x, theta) -> np.ndarray:
        """``log p_theta(x)`` with respect to the base measure."""
        s = self.suff_stats(x)
        theta = self.check_theta(theta)
        return s @ theta - self.kappa(theta)

    def sup_log_density(self, x) -> np.ndarray:
        """``sup_theta log p_theta(x)`` (limits included)."""
        raise NotImplementedError

    def sample(self, theta, size, rng) -> np.ndarray:
        raise NotImplementedError

    # -- certification helpers --------------------------------------------

    def hess_eig_range(self, lo, hi) -> tuple[float, float]:
        """Min and max eigenvalue of ``kappa''`` over the theta box [lo, hi]."""
        raise Refusal(f"{self.name}: Hessian bounds on a ball cannot be verified")

    def theta_box(self, mu_lo, mu_hi) -> tuple[np.ndarray, np.ndarray]:
        """Image of a moment box under ``kappa'^{-1}`` (separable families)."""
        if self.k != 1 and not isinstance(self, GaussianKnownVariance):
            raise Refusal(f"{self.name}: theta image of a moment box is not a box")
        return self.legendre(mu_lo)[1], self.legendre(mu_hi)[1]

    def h_sphere_min(self, mu, eps) -> float:
        """``min_{|u|=1} Lambda(mu) - (theta_mu + eps u).mu + kappa(theta_mu + eps u)``."""
        lam, th = self.legendre(mu)
        if self.k != 1:
            raise Refusal(f"{self.name}: sphere minimum is only available for k = 1")
        vals = []
        for sgn in (-1.0, 1.0):
            tt = th + sgn * eps
            lo, hi = self.theta_bounds()[0]
            if not lo < tt[0] < hi:
                return -math.inf
            vals.append(lam - float(tt @ mu) + self.kappa(tt))
        return min(vals)

    def newton_start(self, mu) -> np.ndarray:
        """Rough mean-matching start for the Newton solver."""
        return np.zeros(self.k)


class GaussianKnownVariance(ExponentialFamily):
    """Gaussian with known diagonal covariance, ``s(x) = x``.

    The base measure is the centred Gaussian with the same covariance, so
    ``kappa(theta) = sum_i var_i theta_i^2 / 2`` and the mean is
    ``var * theta``.
    """

    name = "gaussian"
    code = FAM_GAUSSIAN

    def __init__(self, dim: int = 1, variance=1.0):
        dim = int(dim)
        if dim < 1:
            raise DomainError(f"gaussian: dim must be >= 1, got {dim}")
        var = np.broadcast_to(np.asarray(variance, dtype=float), (dim,)).copy()
        if not np.all(var > 0) or not np.all(np.isfinite(var)):
            raise DomainError("gaussian: variances must be positive and finite")
        self.k = dim
        self.variance = var

    @property
    def params(self):
        return self.variance.copy()

    def to_dict(self):
        return {"family": self.name,
                "params": {"dim": self.k, "variance": self.variance.tolist()}}

    def theta_bounds(self):
        return np.tile([-np.inf, np.inf], (self.k, 1))

    def in_moment_space(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.all(np.isfinite(mu), axis=-1)

    def check_support(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.k == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] != self.k:
            raise DomainError(f"gaussian: points must have shape (n, {self.k}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("gaussian: points must be finite")
        return x

    def kappa(self, theta):
        theta = self.check_theta(theta)
        return float(0.5 * np.sum(self.variance * theta ** 2))

    def kappa_prime(self, theta):
        return self.variance * self.check_theta(theta)

    def kappa_hess(self, theta):
        self.check_theta(theta)
        return np.diag(self.variance)

    def legendre(self, mu):
        mu = self.check_mu(mu)
        return float(0.5 * np.sum(mu ** 2 / self.variance)), mu / self.variance

    def log_psi(self, xi, nu):
        xi = np.asarray(xi, dtype=float)
        nu = np.asarray(nu, dtype=float)
        a = nu[..., None] * self.variance
        return np.sum(xi ** 2 / (2.0 * a) + 0.5 * np.log(2.0 * np.pi / a), axis=-1)

    def sup_log_density(self, x):
        x = self.check_support(x)
        return np.sum(x ** 2 / (2.0 * self.variance), axis=-1)

    def sample(self, theta, size, rng):
        mean = self.variance * self.check_theta(theta)
        return mean + np.sqrt(self.variance) * rng.standard_normal((size, self.k))

    def hess_eig_range(self, lo, hi):
        return float(self.variance.min()), float(self.variance.max())

    def h_sphere_min(self, mu, eps):
        # h is exactly quadratic: eps^2 u' diag(var) u / 2
        return 0.5 * eps ** 2 * float(self.variance.min())

    def newton_start(self, mu):
        return np.zeros(self.k)


class UnivariateNormalGamma(ExponentialFamily):
    """Gaussian with unknown mean and precision, ``s(x) = (x, x^2)``,
    Lebesgue base measure, ``theta = (m / v, -1 / (2 v))``."""

    name = "normal_gamma"
    code = FAM_NORMAL_GAMMA
    k = 2

    def theta_bounds(self):
        return np.array([[-np.inf, np.inf], [-np.inf, 0.0]])

    def in_moment_space(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu[..., 1] > mu[..., 0] ** 2

    def check_support(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise DomainError("normal_gamma: points must be finite")
        return x[:, None]

    def suff_stats(self, x):
        x = self.check_support(x)[:, 0]
        return np.stack([x, x * x], axis=1)

    def kappa(self, theta):
        t1, t2 = self.check_theta(theta)
        return float(-t1 * t1 / (4.0 * t2) + 0.5 * math.log(math.pi / -t2))

    def kappa_prime(self, theta):
        t1, t2 = self.check_theta(theta)
        v = -1.0 / (2.0 * t2)
        m = t1 * v
        return np.array([m, m * m + v])

    def kappa_hess(self, theta):
        t1, t2 = self.check_theta(theta)
        v = -1.0 / (2.0 * t2)
        m = t1 * v
        return np.array([[v, 2 * m * v], [2 * m * v, 4 * m * m * v + 2 * v * v]])

    def legendre(self, mu):
        mu = self.check_mu(mu)
        v = mu[1] - mu[0] ** 2
        return -0.5 * math.log(2 * math.pi * v) - 0.5, np.array([mu[0] / v, -0.5 / v])

    def log_psi(self, xi, nu):
        xi = np.asarray(xi, dtype=float)
        nu = np.asarray(nu, dtype=float)
        b = 0.5 * (xi[..., 1] - xi[..., 0] ** 2 / nu)
        a = 0.5 * (nu + 3.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return (math.log(0.5) + 0.5 * np.log(2 * np.pi / nu) - 0.5 * nu * LOG_2PI
                    + gammaln(a) - a * np.log(b))

    def sup_log_density(self, x):
        # variance -> 0 at the mean x: unbounded
        return np.full(self.check_support(x).shape[0], np.inf)

    def sample(self, theta, size, rng):
        t1, t2 = self.check_theta(theta)
        v = -1.0 / (2.0 * t2)
        return t1 * v + math.sqrt(v) * rng.standard_normal(size)

    def h_sphere_min(self, mu, eps):
        lam, th = self.legendre(mu)
        ang = np.linspace(0.0, 2 * np.pi, 256, endpoint=False)
        pts = th + eps * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        if np.any(pts[:, 1] >= 0):
            return -math.inf
        vals = [lam - float(p @ mu) + self.kappa(p) for p in pts]
        return min(vals)

    def newton_start(self, mu):
        return np.array([0.0, -0.5])


class ExponentialGamma(ExponentialFamily):
    """Exponential(rate r) with ``theta = -r``; Lebesgue measure on (0, inf)."""

    name = "exponential_gamma"
    code = FAM_EXPONENTIAL

    def theta_bounds(self):
        return np.array([[-np.inf, 0.0]])

    def in_moment_space(self, mu):
        return np.asarray(mu, dtype=float)[..., 0] > 0

    def check_support(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.all(x > 0) or not np.all(np.isfinite(x)):
            raise DomainError("exponential_gamma: points must be positive and finite")
        return x[:, None]

    def kappa(self, theta):
        (t,) = self.check_theta(theta)
        return -math.log(-t)

    def kappa_prime(self, theta):
        (t,) = self.check_theta(theta)
        return np.array([-1.0 / t])

    def kappa_hess(self, theta):
        (t,) = self.check_theta(theta)
        return np.array([[1.0 / (t * t)]])

    def legendre(self, mu):
        m = float(self.check_mu(mu)[0])
        return -1.0 - math.log(m), np.array([-1.0 / m])

    def log_psi(self, xi, nu):
        xi = np.asarray(xi, dtype=float)
        nu = np.asarray(nu, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return gammaln(nu + 1.0) - (nu + 1.0) * np.log(xi[..., 0])

    def sup_log_density(self, x):
        x = self.check_support(x)[:, 0]
        return -1.0 - np.log(x)

    def sample(self, theta, size, rng):
        (t,) = self.check_theta(theta)
        return rng.exponential(-1.0 / t, size)

    def hess_eig_range(self, lo, hi):
        lo, hi = float(np.ravel(lo)[0]), float(np.ravel(hi)[0])
        if not hi < 0:
            raise Refusal("exponential_gamma: theta box leaves Theta")
        return 1.0 / (lo * lo), 1.0 / (hi * hi)

    def newton_start(self, mu):
        return np.array([-1.0])


class PoissonGamma(ExponentialFamily):
    """Poisson(e^theta); base measure 1/x! on {0, 1, 2, ...}."""

    name = "poisson_gamma"
    code = FAM_POISSON
    discrete = True

    def theta_bounds(self):
        return np.array([[-np.inf, np.inf]])

    def in_moment_space(self, mu):
        return np.asarray(mu, dtype=float)[..., 0] > 0

    def check_support(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.all((x >= 0) & (x == np.floor(x))) or not np.all(np.isfinite(x)):
            raise DomainError("poisson_gamma: points must be nonnegative integers")
        return x[:, None]

    def kappa(self, theta):
        (t,) = self.check_theta(theta)
        return math.exp(t)

    def kappa_prime(self, theta):
        (t,) = self.check_theta(theta)
        return np.array([math.exp(t)])

    def kappa_hess(self, theta):
        (t,) = self.check_theta(theta)
        return np.array([[math.exp(t)]])

    def legendre(self, mu):
        m = float(self.check_mu(mu)[0])
        return m * math.log(m) - m, np.array([math.log(m)])

    def log_psi(self, xi, nu):
        xi = np.asarray(xi, dtype=float)
        nu = np.asarray(nu, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return gammaln(xi[..., 0]) - xi[..., 0] * np.log(nu)

    def sup_log_density(self, x):
        x = self.check_support(x)[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, x * np.log(x) - x, 0.0)

    def sample(self, theta, size, rng):
        (t,) = self.check_theta(theta)
        return rng.poisson(math.exp(t), size).astype(float)

    def hess_eig_range(self, lo, hi):
        return math.exp(float(np.ravel(lo)[0])), math.exp(float(np.ravel(hi)[0]))

    def newton_start(self, mu):
        return np.array([0.0])


class GeometricBeta(ExponentialFamily):
    """Geometric on {0, 1, ...} with success prob 1 - q, ``theta = log q``."""

    name = "geometric_beta"
    code = FAM_GEOMETRIC
    discrete = True

    def theta_bounds(self):
        return np.array([[-np.inf, 0.0]])

    def in_moment_space(self, mu):
        return np.asarray(mu, dtype=float)[..., 0] > 0

    def check_support(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.all((x >= 0) & (x == np.floor(x))) or not np.all(np.isfinite(x)):
            raise DomainError("geometric_beta: points must be nonnegative integers")
        return x[:, None]

    def kappa(self, theta):
        (t,) = self.check_theta(theta)
        return -math.log1p(-math.exp(t))

    def kappa_prime(self, theta):
        (t,) = self.check_theta(theta)
        q = math.exp(t)
        return np.array([q / (1.0 - q)])

    def kappa_hess(self, theta):
        (t,) = self.check_theta(theta)
        q = math.exp(t)
        return np.array([[q / (1.0 - q) ** 2]])

    def legendre(self, mu):
        m = float(self.check_mu(mu)[0])
        return m * math.log(m) - (1 + m) * math.log1p(m), np.array([math.log(m / (1 + m))])

    def log_psi(self, xi, nu):
        xi = np.asarray(xi, dtype=float)
        nu = np.asarray(nu, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return betaln(xi[..., 0], nu + 1.0)

    def sup_log_density(self, x):
        x = self.check_support(x)[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, x * np.log(x / (1 + x)) - np.log1p(x), 0.0)

    def sample(self, theta, size, rng):
        (t,) = self.check_theta(theta)
        return (rng.geometric(1.0 - math.exp(t), size) - 1).astype(float)

    def hess_eig_range(self, lo, hi):
        lo, hi = float(np.ravel(lo)[0]), float(np.ravel(hi)[0])
        if not hi < 0:
            raise Refusal("geometric_beta: theta box leaves Theta")

        def h(t):
            q = math.exp(t)
            return q / (1.0 - q) ** 2

        return h(lo), h(hi)

    def newton_start(self, mu):
        return np.array([-1.0])


_FAMILIES = {
    "gaussian": GaussianKnownVariance,
    "normal_gamma": UnivariateNormalGamma,
    "exponential_gamma": ExponentialGamma,
    "poisson_gamma": PoissonGamma,
    "geometric_beta": GeometricBeta,
}


@dataclass(frozen=True)
class ConjugateHyperparameters:
    """Conjugate prior parameters ``(xi, nu)`` with ``xi / nu`` in M."""

    xi: np.ndarray
    nu: float

    @classmethod
    def make(cls, family: ExponentialFamily, xi, nu) -> "ConjugateHyperparameters":
        xi = _vec(xi, family.k).copy()
        nu = float(nu)
        if not nu > 0:
            raise DomainError(f"conjugate prior needs nu > 0, got {nu}")
        if not family.in_moment_space(xi / nu):
            raise DomainError(
                f"{family.name}: xi/nu = {(xi / nu).tolist()} is outside the moment space")
        xi.setflags(write=False)
        return cls(xi, nu)

    def to_dict(self):
        return {"xi": self.xi.tolist(), "nu": self.nu}


def family_from_dict(spec: dict):
    """Parse ``{"family": ..., "params": {...}, "xi": [...], "nu": ...}``.

    Returns ``(family, hyper)``; ``hyper`` is None when xi/nu are absent.
    """
    name = spec.get("family")
    if name not in _FAMILIES:
        raise DomainError(f"family must be one of {sorted(_FAMILIES)}, got {name!r}")
    params = dict(spec.get("params") or {})
    try:
        fam = _FAMILIES[name](**params)
    except TypeError as exc:
        raise DomainError(f"{name}: bad params {params}: {exc}") from None
    hyper = None
    if "xi" in spec or "nu" in spec:
        hyper = ConjugateHyperparameters.make(fam, spec.get("xi"), spec.get("nu"))
    return fam, hyper


# -- module-level operations ------------------------------------------------

def kappa(family, theta):
    return family.kappa(theta)


def kappa_prime(family, theta):
    return family.kappa_prime(theta)


def kappa_hess(family, theta):
    return family.kappa_hess(theta)


def legendre(family, mu):
    """``(Lambda(mu), theta_mu)``: convex conjugate of kappa and its maximizer."""
    return family.legendre(mu)


def legendre_newton(family, mu, tol=1e-12, max_iter=50):
    """Maximize ``theta . mu - kappa(theta)`` by damped Newton.

    Used to cross-check the closed forms.  Steps are halved until the
    iterate stays in Theta and the objective does not decrease; 1-D
    families fall back to bisection on ``kappa'(theta) = mu`` if Newton has
    not met the gradient tolerance within ``max_iter`` iterations.
    """
    mu = family.check_mu(mu)
    lo, hi = family.theta_bounds().T

    def inside(th):
        return bool(np.all((th > lo) & (th < hi)))

    def obj(th):
        return float(th @ mu) - family.kappa(th)

    th = family.newton_start(mu).astype(float)
    for _ in range(max_iter):
        grad = mu - family.kappa_prime(th)
        if np.max(np.abs(grad)) <= tol * max(1.0, float(np.max(np.abs(mu)))):
            return obj(th), th
        step = np.linalg.solve(family.kappa_hess(th), grad)
        f0 = obj(th)
        lam = 1.0
        while lam > 1e-12:
            cand = th + lam * step
            if inside(cand) and obj(cand) >= f0 - 1e-15 * abs(f0):
                break
            lam *= 0.5
        th = th + lam * step
    grad = mu - family.kappa_prime(th)
    if np.max(np.abs(grad)) <= 1e-9 * max(1.0, float(np.max(np.abs(mu)))):
        return obj(th), th
    if family.k != 1:
        raise DomainError(f"{family.name}: Newton solve for theta_mu did not converge")
    # bisection on the monotone map kappa'
    a = th[0] - 1.0 if not np.isfinite(lo[0]) else lo[0]
    b = th[0] + 1.0 if not np.isfinite(hi[0]) else hi[0]
    while np.isfinite(a) and family.kappa_prime(np.array([a]))[0] > mu[0]:
        a = a - 2 * (b - a)
    while not np.isfinite(hi[0]) and family.kappa_prime(np.array([b]))[0] < mu[0]:
        b = b + 2 * (b - a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if family.kappa_prime(np.array([mid]))[0] < mu[0]:
            a = mid
        else:
            b = mid
    th = np.array([0.5 * (a + b)])
    return obj(th), th


def log_psi(family, xi, nu) -> float:
    """Closed-form ``psi(xi, nu)``; raises outside Xi."""
    xi = _vec(xi, family.k)
    if not family.in_xi(xi, nu):
        raise DomainError(f"{family.name}: (xi={xi.tolist()}, nu={nu}) is outside Xi")
    return float(family.log_psi(xi, np.asarray(nu, dtype=float)))


def _hyper(family, hyper):
    if isinstance(hyper, ConjugateHyperparameters):
        return hyper
    xi, nu = hyper
    return ConjugateHyperparameters.make(family, xi, nu)


def log_marginal(family, hyper, x) -> float:
    """``log m(x_J) = psi(xi + sum s(x_j), nu + |J|) - psi(xi, nu)``; 0 for J empty."""
    hyper = _hyper(family, hyper)
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    s = family.suff_stats(x)
    return log_psi(family, hyper.xi + s.sum(axis=0), hyper.nu + s.shape[0]) - \
        log_psi(family, hyper.xi, hyper.nu)


def mu_x(family, hyper, x):
    """Posterior-mean moment point ``(xi + sum s) / (nu + n)`` and whether it is in M."""
    hyper = _hyper(family, hyper)
    s = family.suff_stats(x)
    if s.shape[0] == 0:
        raise DomainError("mu_x needs a nonempty subset")
    mu = (hyper.xi + s.sum(axis=0)) / (hyper.nu + s.shape[0])
    return mu, bool(family.in_moment_space(mu))


def log_marginal_tilde(family, hyper, x) -> float:
    """``-(k/2) log(nu + n) + (nu + n) Lambda(mu_x)``."""
    hyper = _hyper(family, hyper)
    mu, ok = mu_x(family, hyper, x)
    if not ok:
        raise DomainError(f"{family.name}: mu_x={mu.tolist()} is outside the moment space")
    t = hyper.nu + family.suff_stats(x).shape[0]
    return -0.5 * family.k * math.log(t) + t * family.legendre(mu)[0]
