"""Generalized Pareto and exponentiated GPD distributions.

The extended GPD ("family 1") raises the GPD CDF ``H(y; sigma, xi)`` to a power
``kappa``.  Differencing that CDF at the integers ``0..y_max+1`` and
renormalising by ``F(y_max + 1)`` gives the truncated discrete law (TDeGPD)
whose negative log-likelihood is used as an ordinal training loss.

Conventions
-----------
Parameter triples are always ordered ``(sigma, kappa, xi)``.  Gradients are
returned in the same order.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import DegenerateDistributionError, DegenerateSampleError, DomainError

#: Below this |xi| the exponential limit of the GPD is used.
XI_EXP_SWITCH = 1e-8
#: Floor applied to PMF values before taking logs.
PMF_FLOOR = 1e-12
#: Smallest admissible truncation mass F(y_max + 1).
TRUNCATION_FLOOR = 1e-300
#: Below this |xi * y / sigma| the xi-derivative uses a power series.
_SERIES_SWITCH = 1e-3

DEFAULT_BOUNDS = ((1e-6, 1e6), (1e-6, 1e3), (1e-6, 10.0))


@dataclass(frozen=True)
class EgpdParams:
    """Scale ``sigma``, exponent ``kappa`` and tail shape ``xi`` (all > 0)."""

    sigma: float
    kappa: float
    xi: float

    def __post_init__(self):
        for name in ("sigma", "kappa", "xi"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "xi", float(self.xi))

    def as_array(self):
        return np.array([self.sigma, self.kappa, self.xi])

    def to_dict(self):
        return {"sigma": self.sigma, "kappa": self.kappa, "xi": self.xi}

    @classmethod
    def from_array(cls, values):
        sigma, kappa, xi = (float(v) for v in values)
        return cls(sigma, kappa, xi)


@dataclass(frozen=True)
class TruncatedPmf:
    """Probabilities of classes ``0..y_max`` under a truncated discrete law."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or np.any(probs < 0) or np.any(probs > 1):
            raise DomainError("probs must be a 1-D vector with entries in [0, 1]")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError(f"probs sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __getitem__(self, y):
        return self.probs[y]

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class FitConfig:
    """Budgets and box constraints for :func:`fit_egpd`.

    ``bounds`` holds one ``(lo, hi)`` pair per parameter in ``(sigma, kappa,
    xi)`` order.
    """

    max_iter_simplex: int = 500
    max_iter_refine: int = 200
    bounds: tuple = field(default=DEFAULT_BOUNDS)
    tol: float = 1e-8

    def __post_init__(self):
        if len(self.bounds) != 3:
            raise DomainError("bounds needs one (lo, hi) pair per parameter")
        for lo, hi in self.bounds:
            if not lo > 0 or not lo < hi:
                raise DomainError(f"invalid bound ({lo}, {hi}): need 0 < lo < hi")
        if not self.tol > 0:
            raise DomainError("tol must be > 0")
        if self.max_iter_simplex < 1 or self.max_iter_refine < 1:
            raise DomainError("iteration budgets must be >= 1")


class NllResult(NamedTuple):
    value: float
    grad: np.ndarray
    clamped: bool


class FitResult(NamedTuple):
    params: EgpdParams
    nll: float
    converged: bool
    stage1_nll: float


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("inputs must be finite")


def _log_survival(y, sigma, xi):
    """log of the GPD survival function, elementwise; -inf past the support."""
    y, sigma, xi = np.broadcast_arrays(
        np.asarray(y, float), np.asarray(sigma, float), np.asarray(xi, float)
    )
    out = np.empty(y.shape)
    small = np.abs(xi) < XI_EXP_SWITCH
    out[small] = -y[small] / sigma[small]
    big = ~small
    t = xi[big] * y[big] / sigma[big]
    with np.errstate(divide="ignore", invalid="ignore"):
        ls = -np.log1p(t) / xi[big]
    # xi < 0 beyond the upper endpoint -sigma/xi: all mass already accumulated
    ls = np.where(t <= -1.0, -np.inf, ls)
    out[big] = ls
    return out


def _log_gpd_cdf(log_s):
    """``log(1 - S)`` from ``log S``, accurate for S near 0 and near 1."""
    log_s = np.asarray(log_s, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(log_s < -np.log(2.0), np.log1p(-np.exp(log_s)),
                        np.log(-np.expm1(log_s)))


def gpd_cdf(y, sigma, xi):
    """GPD cumulative distribution function ``1 - (1 + xi*y/sigma)^(-1/xi)``.

    For ``|xi| < XI_EXP_SWITCH`` the exponential limit ``1 - exp(-y/sigma)`` is
    returned.  Vectorised over all arguments; returns a float for scalar input.
    """
    y = np.asarray(y, dtype=float)
    _check_finite(y, sigma, xi)
    if np.any(y < 0):
        raise DomainError("y must be >= 0")
    if np.any(np.asarray(sigma) <= 0):
        raise DomainError("sigma must be > 0")
    out = -np.expm1(_log_survival(y, sigma, xi))
    return out[()] if out.ndim == 0 else out


def egpd_cdf(y, params: EgpdParams):
    """Extended GPD CDF ``H(y)^kappa``."""
    h = gpd_cdf(y, params.sigma, params.xi)
    return h ** params.kappa


def egpd_logpdf(y, params: EgpdParams):
    """Log density ``log(kappa * h(y) * H(y)^(kappa - 1))`` for ``y > 0``."""
    y = np.asarray(y, dtype=float)
    sigma, kappa, xi = params.sigma, params.kappa, params.xi
    log_s = _log_survival(y, sigma, xi)
    if abs(xi) < XI_EXP_SWITCH:
        log_h = -np.log(sigma) + log_s
    else:
        log_h = -np.log(sigma) - (1.0 / xi + 1.0) * np.log1p(xi * y / sigma)
    log_big_h = _log_gpd_cdf(log_s)
    return np.log(kappa) + log_h + (kappa - 1.0) * log_big_h


def egpd_quantile(q, params: EgpdParams):
    """Inverse of :func:`egpd_cdf`: ``(sigma/xi) * ((1 - q^(1/kappa))^(-xi) - 1)``."""
    q = np.asarray(q, dtype=float)
    if np.any(~np.isfinite(q)) or np.any(q <= 0) or np.any(q >= 1):
        raise DomainError("q must lie in the open interval (0, 1)")
    sigma, kappa, xi = params.sigma, params.kappa, params.xi
    # log(1 - q^(1/kappa))
    log_tail = _log_gpd_cdf(np.log(q) / kappa)
    if abs(xi) < XI_EXP_SWITCH:
        out = -sigma * log_tail
    else:
        out = sigma / xi * np.expm1(-xi * log_tail)
    return out[()] if out.ndim == 0 else out


def egpd_sample(n, params: EgpdParams, rng):
    """Draw ``n`` variates by inverse-CDF sampling with generator ``rng``."""
    u = rng.uniform(size=n)
    u = np.clip(u, np.finfo(float).tiny, 1 - np.finfo(float).eps)
    return egpd_quantile(u, params)


def _cdf_and_grad(y, sigma, kappa, xi):
    """eGPD CDF, its complement ``1 - F`` and the partials of ``F`` w.r.t.
    (sigma, kappa, xi), broadcast elementwise.

    The complement is computed directly so differences of CDF values close
    to one keep their relative precision.  ``F(0) = 0`` for every parameter
    value, so its partials are exactly zero.
    """
    y, sigma, kappa, xi = np.broadcast_arrays(
        np.asarray(y, float), np.asarray(sigma, float),
        np.asarray(kappa, float), np.asarray(xi, float),
    )
    F = np.zeros(y.shape)
    G = np.ones(y.shape)
    dsig = np.zeros(y.shape)
    dkap = np.zeros(y.shape)
    dxi = np.zeros(y.shape)
    pos = y > 0
    if not np.any(pos):
        return F, G, dsig, dkap, dxi
    yp, sp, kp, xp = y[pos], sigma[pos], kappa[pos], xi[pos]
    log_s = _log_survival(yp, sp, xp)
    s = np.exp(log_s)
    log_h = _log_gpd_cdf(log_s)
    h = np.exp(log_h)
    fp = np.exp(kp * log_h)

    small = np.abs(xp) < XI_EXP_SWITCH
    t = xp * yp / sp
    u = np.where(small, 1.0, 1.0 + t)
    # d log S / d xi = (log1p(t) - t/(1+t)) / xi^2, with its xi -> 0 limit
    dlogs_dxi = np.empty(yp.shape)
    series = ~small & (np.abs(t) < _SERIES_SWITCH)
    direct = ~small & ~series
    td = t[direct]
    dlogs_dxi[direct] = (np.log1p(td) - td / (1.0 + td)) / xp[direct] ** 2
    ts = t[series]
    poly = np.zeros_like(ts)
    for k in range(8, 1, -1):
        poly = poly * ts + (-1) ** k * (k - 1) / k
    dlogs_dxi[series] = poly * (yp[series] / sp[series]) ** 2
    dlogs_dxi[small] = yp[small] ** 2 / (2.0 * sp[small] ** 2)

    dh_dsig = -s * yp / (sp ** 2 * u)
    dh_dxi = -s * dlogs_dxi
    ratio = kp * fp / h
    F[pos] = fp
    G[pos] = -np.expm1(kp * log_h)
    dsig[pos] = ratio * dh_dsig
    dkap[pos] = fp * log_h
    dxi[pos] = ratio * dh_dxi
    return F, G, dsig, dkap, dxi


def _cdf_diff(F, G, lo, hi):
    """``F[hi] - F[lo]`` along the last axis, from whichever side is smaller."""
    upper = F[..., lo] > 0.5
    return np.where(upper, G[..., lo] - G[..., hi], F[..., hi] - F[..., lo])


def tdegpd_pmf_batch(sigma, kappa, xi, y_max=4, with_grad=False):
    """Row-wise truncated discrete eGPD probabilities.

    Parameters
    ----------
    sigma, kappa, xi : array_like, shape (N,)
        Positive parameters, one triple per row.
    y_max : int
        Largest class; rows have ``y_max + 1`` entries.
    with_grad : bool
        Also return ``dP`` of shape (N, y_max + 1, 3), the partials of every
        probability w.r.t. ``(sigma, kappa, xi)``.

    Raises
    ------
    DegenerateDistributionError
        If ``F(y_max + 1) < TRUNCATION_FLOOR`` for some row; ``.index`` holds
        the first offending row.
    """
    sigma = np.atleast_1d(np.asarray(sigma, float))
    kappa = np.atleast_1d(np.asarray(kappa, float))
    xi = np.atleast_1d(np.asarray(xi, float))
    if y_max < 1:
        raise DomainError("y_max must be >= 1")
    grid = np.arange(y_max + 2, dtype=float)[None, :]
    F, G, ds, dk, dx = _cdf_and_grad(grid, sigma[:, None], kappa[:, None], xi[:, None])
    Z = F[:, -1]
    bad = np.flatnonzero(~(Z >= TRUNCATION_FLOOR))
    if bad.size:
        raise DegenerateDistributionError(
            f"truncation mass F({y_max + 1}) underflowed for row {bad[0]}",
            index=int(bad[0]),
        )
    raw = np.where(F[:, :-1] > 0.5, -np.diff(G, axis=1), np.diff(F, axis=1))
    probs = raw / Z[:, None]
    if not with_grad:
        return probs
    dF = np.stack([ds, dk, dx], axis=-1)
    draw = np.diff(dF, axis=1)
    dZ = dF[:, -1, :]
    dP = draw / Z[:, None, None] - probs[:, :, None] * (dZ / Z[:, None])[:, None, :]
    return probs, dP


def tdegpd_pmf(params: EgpdParams, y_max: int = 4) -> TruncatedPmf:
    """Truncated discrete eGPD on ``{0..y_max}``."""
    probs = tdegpd_pmf_batch(params.sigma, params.kappa, params.xi, y_max)[0]
    # renormalise away the last-ulp drift of the differenced CDF
    return TruncatedPmf(probs / probs.sum())


def tdegpd_nll_batch(sigma, kappa, xi, y, y_max=4):
    """Per-row truncated NLL, its (N, 3) gradient, and a clamped mask.

    Rows whose probability falls below :data:`PMF_FLOOR` are evaluated at the
    floor and get a zero gradient.
    """
    sigma = np.atleast_1d(np.asarray(sigma, float))
    kappa = np.atleast_1d(np.asarray(kappa, float))
    xi = np.atleast_1d(np.asarray(xi, float))
    y = np.atleast_1d(np.asarray(y))
    if np.any((y < 0) | (y > y_max)):
        raise DomainError(f"class labels must lie in 0..{y_max}")
    y = y.astype(int)
    n = len(y)
    lo = y.astype(float)
    pts = np.stack([lo, lo + 1.0, np.full(n, y_max + 1.0)], axis=1)
    F, G, ds, dk, dx = _cdf_and_grad(pts, sigma[:, None], kappa[:, None], xi[:, None])
    Z = F[:, 2]
    bad = np.flatnonzero(~(Z >= TRUNCATION_FLOOR))
    if bad.size:
        raise DegenerateDistributionError(
            f"truncation mass F({y_max + 1}) underflowed for row {bad[0]}",
            index=int(bad[0]),
        )
    raw = _cdf_diff(F, G, 0, 1)
    p = raw / Z
    clamped = ~(p >= PMF_FLOOR)
    dF = np.stack([ds, dk, dx], axis=-1)
    values = np.where(clamped, -np.log(PMF_FLOOR), -np.log(np.where(clamped, 1.0, raw)) + np.log(Z))
    safe_raw = np.where(clamped, 1.0, raw)
    grad = -(dF[:, 1] - dF[:, 0]) / safe_raw[:, None] + dF[:, 2] / Z[:, None]
    grad[clamped] = 0.0
    return values, grad, clamped


def tdegpd_nll(params: EgpdParams, y: int, y_max: int = 4) -> NllResult:
    """``-log p_trunc(y)`` and its gradient w.r.t. ``(sigma, kappa, xi)``."""
    values, grad, clamped = tdegpd_nll_batch(
        params.sigma, params.kappa, params.xi, [y], y_max
    )
    return NllResult(float(values[0]), grad[0], bool(clamped[0]))


def egpd_nll(samples, params: EgpdParams):
    """Mean negative log-likelihood of continuous eGPD ``samples``."""
    return -float(np.mean(egpd_logpdf(samples, params)))


def _mean_nll(theta, y):
    sigma, kappa, xi = theta
    if not (sigma > 0 and kappa > 0 and xi > 0) or not np.all(np.isfinite(theta)):
        return np.inf
    with np.errstate(all="ignore"):
        value = egpd_nll(y, EgpdParams(sigma, kappa, xi))
    return value if np.isfinite(value) else np.inf


def _central_diff(fun, theta):
    grad = np.empty_like(theta)
    for i in range(len(theta)):
        h = 1e-6 * max(1.0, abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fun(up) - fun(down)) / (2 * h)
    return grad


def fit_egpd(samples: Sequence[float], cfg: Optional[FitConfig] = None, x0=None) -> FitResult:
    """Maximum-likelihood fit of the continuous eGPD.

    A bounded Nelder-Mead search from ``x0`` (default: sample mean, 1, 0.1) is
    refined by L-BFGS-B using central finite-difference gradients.  The
    returned ``nll`` is the mean negative log-likelihood per sample and never
    exceeds the simplex stage's value by more than ``cfg.tol``.

    Raises
    ------
    DomainError
        Fewer than 10 samples, or a non-positive / non-finite sample.
    DegenerateSampleError
        All samples equal.
    """
    cfg = cfg or FitConfig()
    y = np.asarray(samples, dtype=float).ravel()
    if y.size < 10:
        raise DomainError(f"need at least 10 samples, got {y.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise DomainError("samples must be finite and strictly positive")
    if np.all(y == y[0]):
        raise DegenerateSampleError("all samples are equal")

    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    if x0 is None:
        x0 = np.array([y.mean(), 1.0, 0.1])
    x0 = np.clip(np.asarray(x0, float), lo, hi)
    fun = lambda theta: _mean_nll(theta, y)  # noqa: E731

    stage1 = optimize.minimize(
        fun, x0, method="Nelder-Mead", bounds=list(cfg.bounds),
        options={"maxiter": cfg.max_iter_simplex, "xatol": 1e-8, "fatol": cfg.tol},
    )
    # never start the refinement from a worse point than x0
    start = stage1.x if stage1.fun <= fun(x0) else x0
    start_f = min(stage1.fun, fun(x0))

    def jac(theta):
        return _central_diff(fun, np.clip(theta, lo * (1 + 1e-6), hi * (1 - 1e-6)))

    stage2 = optimize.minimize(
        fun, start, jac=jac, method="L-BFGS-B", bounds=list(cfg.bounds),
        options={"maxiter": cfg.max_iter_refine, "ftol": cfg.tol, "gtol": 1e-10},
    )
    if np.isfinite(stage2.fun) and stage2.fun <= start_f:
        best, best_f, ok = stage2.x, float(stage2.fun), bool(stage2.success)
    else:
        best, best_f, ok = start, float(start_f), bool(stage1.success)
    best = np.clip(best, lo, hi)
    return FitResult(EgpdParams.from_array(best), best_f, ok, float(start_f))
