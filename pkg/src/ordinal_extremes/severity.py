"""Five-level ordinal severity classes from raw event magnitudes.

Class 0 is reserved for zero magnitudes.  Strictly positive magnitudes are
split into classes 1-4 either by an exact 1-D k-means (``kmeans``) or by
quantiles of a fitted eGPD (``egpd_risk``), optionally on the square-root
scale.
"""

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError, UndefinedScoreError
from .extreme_dist import EgpdParams, FitConfig, egpd_quantile, fit_egpd

DEFAULT_QUANTILES = (0.30, 0.60, 0.90)
N_POSITIVE_CLASSES = 4
TRANSFORMS = ("identity", "sqrt")


def apply_transform(values, transform):
    values = np.asarray(values, dtype=float)
    if transform == "identity":
        return values
    if transform == "sqrt":
        return np.sqrt(values)
    raise DomainError(f"unknown transform {transform!r}")


@dataclass(frozen=True)
class SeverityScheme:
    """A fitted mapping from magnitudes to classes ``0..4``.

    ``thresholds`` (egpd_risk) and ``centers`` (kmeans) live on the
    transformed scale.
    """

    method: str
    transform: str = "identity"
    thresholds: Optional[tuple] = None
    centers: Optional[tuple] = None
    egpd_params: Optional[EgpdParams] = None

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise DomainError(f"unknown transform {self.transform!r}")
        if self.method == "egpd_risk":
            values, n = self.thresholds, N_POSITIVE_CLASSES - 1
        elif self.method == "kmeans":
            values, n = self.centers, N_POSITIVE_CLASSES
        else:
            raise DomainError(f"unknown method {self.method!r}")
        if values is None or len(values) != n:
            raise DomainError(f"{self.method} scheme needs {n} boundary values")
        if np.any(np.diff(values) <= 0):
            raise DomainError("scheme boundaries must be strictly ascending")

    def to_dict(self):
        return {
            "method": self.method,
            "transform": self.transform,
            "thresholds": None if self.thresholds is None else list(self.thresholds),
            "centers": None if self.centers is None else list(self.centers),
            "egpd_params": None if self.egpd_params is None else self.egpd_params.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        params = d.get("egpd_params")
        return cls(
            method=d["method"],
            transform=d.get("transform", "identity"),
            thresholds=None if d.get("thresholds") is None else tuple(d["thresholds"]),
            centers=None if d.get("centers") is None else tuple(d["centers"]),
            egpd_params=None if params is None else EgpdParams(**params),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _weighted_prefix(values, weights):
    w = np.concatenate([[0.0], np.cumsum(weights)])
    s1 = np.concatenate([[0.0], np.cumsum(weights * values)])
    s2 = np.concatenate([[0.0], np.cumsum(weights * values ** 2)])
    return w, s1, s2


def _segment_cost(w, s1, s2, i, j):
    """Within-cluster sum of squares of sorted points ``i..j-1``."""
    n = w[j] - w[i]
    if n <= 0:
        return 0.0
    s = s1[j] - s1[i]
    return max(s2[j] - s2[i] - s * s / n, 0.0)


def kmeans_1d(values, k, weights=None):
    """Globally optimal 1-D k-means by dynamic programming.

    Uses the divide-and-conquer speed-up (optimal split points are monotone in
    the prefix length), so the cost is O(k n log n) segment evaluations.

    Returns
    -------
    centers : ndarray, shape (k,)
        Ascending cluster means.
    bounds : list of (start, stop)
        Index ranges of each cluster in the sorted input.
    sse : float
    """
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="stable")
    x = x[order]
    wts = np.ones_like(x) if weights is None else np.asarray(weights, float)[order]
    n = len(x)
    if n < k:
        raise InsufficientDataError(f"need at least {k} points, got {n}", count=n)
    w, s1, s2 = _weighted_prefix(x, wts)

    inf = np.inf
    # cost[m][i]: best SSE of the first i points in m + 1 clusters
    prev = np.array([_segment_cost(w, s1, s2, 0, i) for i in range(n + 1)])
    splits = []
    for m in range(1, k):
        cur = np.full(n + 1, inf)
        arg = np.zeros(n + 1, dtype=int)
        stack = [(m + 1, n, m, n - 1)]
        while stack:
            lo, hi, opt_lo, opt_hi = stack.pop()
            if lo > hi:
                continue
            mid = (lo + hi) // 2
            best, best_j = inf, opt_lo
            for j in range(opt_lo, min(mid - 1, opt_hi) + 1):
                c = prev[j] + _segment_cost(w, s1, s2, j, mid)
                if c < best:
                    best, best_j = c, j
            cur[mid], arg[mid] = best, best_j
            stack.append((lo, mid - 1, opt_lo, best_j))
            stack.append((mid + 1, hi, best_j, opt_hi))
        splits.append(arg)
        prev = cur

    bounds = []
    stop = n
    for arg in reversed(splits):
        start = int(arg[stop])
        bounds.append((start, stop))
        stop = start
    bounds.append((0, stop))
    bounds.reverse()
    centers = np.array([(s1[b] - s1[a]) / (w[b] - w[a]) for a, b in bounds])
    return centers, bounds, float(prev[n])


def fit_kmeans_scheme(magnitudes: Sequence[float], transform: str = "identity") -> SeverityScheme:
    """Optimal 4-means on the transformed strictly positive magnitudes."""
    z = apply_transform(_positives(magnitudes), transform)
    uniq, counts = np.unique(z, return_counts=True)
    if len(uniq) < N_POSITIVE_CLASSES:
        raise InsufficientDataError(
            f"need at least {N_POSITIVE_CLASSES} distinct positive values, got {len(uniq)}",
            count=len(uniq),
        )
    centers, _, _ = kmeans_1d(uniq, N_POSITIVE_CLASSES, weights=counts)
    return SeverityScheme("kmeans", transform, centers=tuple(float(c) for c in centers))


def fit_egpd_scheme(magnitudes: Sequence[float], q=DEFAULT_QUANTILES,
                    cfg: Optional[FitConfig] = None, transform: str = "identity") -> SeverityScheme:
    """Fit an eGPD on the positives; thresholds are its ``q`` quantiles."""
    q = tuple(float(v) for v in q)
    if len(q) != N_POSITIVE_CLASSES - 1:
        raise DomainError(f"need {N_POSITIVE_CLASSES - 1} quantiles, got {len(q)}")
    if np.any(np.diff(q) <= 0) or q[0] <= 0 or q[-1] >= 1:
        raise DomainError("quantiles must be strictly ascending inside (0, 1)")
    z = apply_transform(_positives(magnitudes), transform)
    if len(z) < 10:
        raise InsufficientDataError(f"need at least 10 positive magnitudes, got {len(z)}", count=len(z))
    fit = fit_egpd(z, cfg)
    thresholds = tuple(float(t) for t in egpd_quantile(np.array(q), fit.params))
    return SeverityScheme("egpd_risk", transform, thresholds=thresholds, egpd_params=fit.params)


def _positives(magnitudes):
    m = np.asarray(magnitudes, dtype=float).ravel()
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise DomainError("magnitudes must be finite and nonnegative")
    return m[m > 0]


def classify(scheme: SeverityScheme, magnitudes) -> np.ndarray:
    """Map magnitudes to classes; zero is always class 0."""
    m = np.asarray(magnitudes, dtype=float)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise DomainError("magnitudes must be finite and nonnegative")
    z = apply_transform(m, scheme.transform)
    if scheme.method == "egpd_risk":
        pos_class = 1 + np.searchsorted(np.asarray(scheme.thresholds), z, side="left")
    else:
        centers = np.asarray(scheme.centers)
        # nearest center, ties to the lower class: cut at the midpoints, a point
        # exactly on a midpoint stays below it
        mids = (centers[:-1] + centers[1:]) / 2
        pos_class = 1 + np.searchsorted(mids, z, side="left")
    return np.where(m > 0, pos_class, 0).astype(int)


def silhouette_1d(values, classes) -> float:
    """Mean silhouette coefficient with absolute distance on 1-D values.

    Singleton clusters score 0.  A point whose mean intra- and nearest
    inter-cluster distances are both zero also scores 0.  Runs in
    O(n log n) using sorted prefix sums.
    """
    x = np.asarray(values, dtype=float).ravel()
    labels = np.asarray(classes).ravel()
    if x.shape != labels.shape:
        raise DomainError("values and classes must align")
    groups = np.unique(labels)
    if len(groups) < 2:
        raise UndefinedScoreError("silhouette needs at least two nonempty classes")

    n = len(x)
    # mean_dist[g][i]: mean |x_i - x_j| over j in group g
    sums = np.empty((len(groups), n))
    sizes = np.empty(len(groups))
    for gi, g in enumerate(groups):
        member = np.sort(x[labels == g])
        prefix = np.concatenate([[0.0], np.cumsum(member)])
        cnt = len(member)
        below = np.searchsorted(member, x, side="right")
        left = below * x - prefix[below]
        right = (prefix[cnt] - prefix[below]) - (cnt - below) * x
        sums[gi] = left + right
        sizes[gi] = cnt

    own = np.searchsorted(groups, labels)
    own_size = sizes[own]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = sums[own, np.arange(n)] / (own_size - 1)
        other = sums / sizes[:, None]
    other[own, np.arange(n)] = np.inf
    b = other.min(axis=0)
    denom = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[own_size == 1] = 0.0
    return float(np.mean(s))
