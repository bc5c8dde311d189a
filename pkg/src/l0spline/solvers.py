"""Exact piece-budgeted least squares and the penalized model selector.

The segment machinery fits degree-d polynomials on index windows using a
length-normalized power basis, so Gram matrices depend only on the window
length and can be factored once per length.  The dynamic program solves
the d0 = -1 problem exactly; the exhaustive solver covers every smoothness
order by enumerating knot vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BudgetExceededError,
    DegenerateSystemError,
    ValidationError,
)
from .model import (
    KnotVector,
    ModelParams,
    PiecewiseSpline,
    SignalVector,
    count_knot_vectors,
    iter_knot_vectors,
    local_coefficients_from_truncated_power,
    raw_basis,
    transition_boundary,
    validate_knots,
)

__all__ = [
    "FitResult",
    "PenaltySpec",
    "segment_cost",
    "fit_given_knots",
    "dp_fit",
    "exhaustive_fit",
    "penalty",
    "adaptive_fit",
    "estimate_sigma",
]

_RCOND = 1e-10


@dataclass(frozen=True)
class FitResult:
    """A fitted piecewise polynomial plus bookkeeping."""

    theta_hat: SignalVector
    knots: KnotVector
    coeffs: tuple
    sse: float
    k_selected: int

    @property
    def spline(self) -> PiecewiseSpline:
        return PiecewiseSpline(self.knots, self.coeffs)


@dataclass(frozen=True)
class PenaltySpec:
    """Multiplier and context for the piece-count penalty."""

    tau: float
    sigma: float
    d: int
    d0: int
    n: int

    def __post_init__(self):
        if self.tau < 0:
            raise ValidationError(f"tau must be >= 0, got {self.tau}")
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be > 0, got {self.sigma}")
        transition_boundary(self.d, self.d0)
        if self.n < self.d + 1:
            raise ValidationError(
                f"n must be >= d+1 = {self.d + 1}, got {self.n}")


def penalty(k: int, spec: PenaltySpec) -> float:
    """Piece-count penalty with the two-regime shape.

    tau * sigma^2 times: 1 at k = 1; k * loglog(16n/k) for 2 <= k <= k0;
    k * log(en/k) above k0.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    k0 = transition_boundary(spec.d, spec.d0)
    scale = spec.tau * spec.sigma ** 2
    if k == 1:
        return scale
    if k <= k0:
        return scale * k * math.log(math.log(16 * spec.n / k))
    return scale * k * math.log(math.e * spec.n / k)


def estimate_sigma(y) -> float:
    """Robust noise scale from first differences:
    median(|Y_{i+1} - Y_i|) / (sqrt(2) * 0.6745)."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ValidationError("need at least 2 observations to estimate sigma")
    return float(np.median(np.abs(np.diff(y))) / (math.sqrt(2) * 0.6745))


# ---------------------------------------------------------------------------
# per-segment polynomial fits
# ---------------------------------------------------------------------------

def segment_cost(segment, d: int):
    """Least squares cost of one degree-d polynomial on a window.

    The basis is (j/L)^l for l in [0;d] with j = 1..L the within-window
    position, solved by a rank-revealing orthogonal decomposition.
    Returns (sse, coefficients).
    """
    seg = np.asarray(segment, dtype=float)
    L = seg.size
    if L < d + 1:
        raise ValidationError(
            f"segment of length {L} cannot identify a degree-{d} polynomial"
            f" (need at least {d + 1} points)")
    j = np.arange(1, L + 1, dtype=float) / L
    X = np.column_stack([j ** ell for ell in range(d + 1)])
    coef, _, rank, _ = np.linalg.lstsq(X, seg, rcond=_RCOND)
    if rank < d + 1:
        raise DegenerateSystemError(
            f"segment design rank {rank} < {d + 1}")
    resid = seg - X @ coef
    return float(resid @ resid), coef


class _SegmentSweeper:
    """All-segments cost engine: costs of fitting y on (t; s] for every s,
    one start t at a time, via cached per-length Gram inverses."""

    def __init__(self, y, d: int):
        self.y = np.asarray(y, dtype=float)
        self.d = d
        self.n = self.y.size
        n, dd = self.n, d
        lengths = np.arange(dd + 1, n + 1, dtype=float)
        # power sums S_m(L) = sum_{j<=L} j^m for the Gram entries
        j = np.arange(1, n + 1, dtype=float)
        psum = np.stack([np.cumsum(j ** m) for m in range(2 * dd + 1)])
        G = np.empty((lengths.size, dd + 1, dd + 1))
        for p in range(dd + 1):
            for q in range(dd + 1):
                G[:, p, q] = psum[p + q, dd:] / lengths ** (p + q)
        self._ginv = np.linalg.inv(G)

    def sweep(self, t: int):
        """Vector of costs for segments (t; s], s = t+d+1 .. n."""
        d, n = self.d, self.n
        ys = self.y[t:]
        m = ys.size
        if m < d + 1:
            return np.empty(0)
        j = np.arange(1, m + 1, dtype=float)
        R = np.stack([np.cumsum((j ** p) * ys) for p in range(d + 1)])
        ss = np.cumsum(ys * ys)
        L = j[d:]
        b = (R[:, d:] / L ** np.arange(d + 1, dtype=float)[:, None]).T
        ginv = self._ginv[: L.size]
        quad = np.einsum("lp,lpq,lq->l", b, ginv, b)
        return ss[d:] - quad


# ---------------------------------------------------------------------------
# fitting at fixed knots
# ---------------------------------------------------------------------------

def _fit_at(y: np.ndarray, d: int, d0: int, knots) -> tuple:
    """Least squares fit at one knot vector.  Returns (theta, sse, coeffs)
    with coeffs in per-piece local storage aligned to the given vector."""
    n = y.size
    kv = KnotVector(tuple(knots), d)
    if d0 == -1:
        theta = np.empty(n)
        coeffs = []
        for p in range(kv.k):
            lo, hi = kv.knots[p], kv.knots[p + 1]
            if lo == hi:
                coeffs.append(None)
                continue
            seg = y[lo:hi]
            Lloc = hi - lo
            jj = (np.arange(1, Lloc + 1, dtype=float)) / n
            X = np.column_stack([jj ** ell for ell in range(d + 1)])
            coef, _, rank, _ = np.linalg.lstsq(X, seg, rcond=_RCOND)
            if rank < d + 1:
                raise DegenerateSystemError(
                    f"piece ({lo};{hi}] design rank {rank} < {d + 1}")
            theta[lo:hi] = X @ coef
            coeffs.append(tuple(coef))
        resid = y - theta
        return theta, float(resid @ resid), tuple(coeffs)

    distinct = kv.distinct()
    X = raw_basis(n, d, d0, distinct)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=_RCOND)
    if rank < X.shape[1]:
        raise DegenerateSystemError(
            f"design with knots {distinct} has rank {rank} < {X.shape[1]}")
    theta = X @ coef
    resid = y - theta
    # spread the distinct-knot coefficients over the full vector, zero
    # blocks on duplicated inner knots
    per_knot = d - d0
    g = list(coef[: d + 1])
    pos = d + 1
    for jx in range(1, kv.k):
        if kv.knots[jx] == kv.knots[jx - 1]:
            g.extend([0.0] * per_knot)
        else:
            g.extend(coef[pos: pos + per_knot])
            pos += per_knot
    spline = local_coefficients_from_truncated_power(kv, d0, np.asarray(g))
    return theta, float(resid @ resid), spline.coeffs


def fit_given_knots(y, params: ModelParams, knots) -> FitResult:
    """Project y onto the span of the class members with these knots."""
    y = np.asarray(y, dtype=float)
    if y.size != params.n:
        raise ValidationError(
            f"y has length {y.size}, params expect n={params.n}")
    kv = (knots if isinstance(knots, KnotVector)
          else validate_knots(knots, params.d, params.n))
    if kv.k != params.k:
        raise ValidationError(
            f"knot vector has {kv.k} pieces, params expect {params.k}")
    theta, sse, coeffs = _fit_at(y, params.d, params.d0, kv.knots)
    return FitResult(SignalVector(theta), kv, coeffs, sse, kv.k)


# ---------------------------------------------------------------------------
# global solvers
# ---------------------------------------------------------------------------

def dp_fit(y, params: ModelParams) -> FitResult:
    """Exact minimizer over all knot vectors with <= k pieces for d0 = -1.

    Optimal-partitioning recursion over segment costs, O(n^2 k d) work.
    Ties are resolved to the lexicographically smallest knot vector by
    walking the table from the left and preferring the smallest feasible
    next knot (an empty piece first, then the nearest split).
    """
    y = np.asarray(y, dtype=float)
    if params.d0 != -1:
        raise ValidationError(
            f"dynamic program requires d0 = -1, got d0={params.d0}")
    if y.size != params.n:
        raise ValidationError(
            f"y has length {y.size}, params expect n={params.n}")
    n, d, k = params.n, params.d, params.k
    sweeper = _SegmentSweeper(y, d)

    INF = np.inf
    C = np.full((n + 1, k + 1), INF)
    C[n, :] = 0.0
    sweeps_cache = {}
    for t in range(n - 1, -1, -1):
        costs = sweeper.sweep(t)
        starts = t + d + 1
        for r in range(1, k + 1):
            best = C[t, r - 1]
            if costs.size:
                cand = costs + C[starts: n + 1, r - 1]
                m = cand.min()
                if m < best:
                    best = m
            C[t, r] = best

    knots = [0]
    t, r = 0, k
    while t < n:
        if C[t, r - 1] == C[t, r]:
            knots.append(t)
            r -= 1
            continue
        costs = sweeps_cache.get(t)
        if costs is None:
            costs = sweeper.sweep(t)
            sweeps_cache[t] = costs
        starts = t + d + 1
        cand = costs + C[starts: n + 1, r - 1]
        hits = np.nonzero(cand == C[t, r])[0]
        if hits.size == 0:
            # numerically impossible by construction; guard regardless
            hits = np.array([int(np.argmin(cand))])
        s = starts + int(hits[0])
        knots.append(s)
        t = s
        r -= 1
    while r > 0:
        knots.append(n)
        r -= 1

    theta, sse, coeffs = _fit_at(y, d, -1, knots)
    return FitResult(SignalVector(theta), KnotVector(tuple(knots), d),
                     coeffs, sse, k)


def exhaustive_fit(y, params: ModelParams,
                   budget: int = 10_000_000) -> FitResult:
    """Scan every valid knot vector with <= k pieces; any d0.

    Refuses with the exact configuration count when it exceeds the budget.
    The first strictly best configuration in lexicographic order wins, so
    ties go to the lexicographically smallest knot vector.
    """
    y = np.asarray(y, dtype=float)
    if y.size != params.n:
        raise ValidationError(
            f"y has length {y.size}, params expect n={params.n}")
    n, d, d0, k = params.n, params.d, params.d0, params.k
    total = count_knot_vectors(n, k, d)
    if total > budget:
        raise BudgetExceededError(
            f"{total} knot configurations exceed the budget of {budget}")

    seg_cache = {}

    def cost_decoupled(knots):
        sse = 0.0
        for lo, hi in zip(knots, knots[1:]):
            if lo == hi:
                continue
            c = seg_cache.get((lo, hi))
            if c is None:
                c, _ = segment_cost(y[lo:hi], d)
                seg_cache[(lo, hi)] = c
            sse += c
        return sse

    best_sse = np.inf
    best_knots = None
    for knots in iter_knot_vectors(n, k, d):
        if d0 == -1:
            sse = cost_decoupled(knots)
        else:
            distinct = KnotVector(knots, d).distinct()
            X = raw_basis(n, d, d0, distinct)
            coef, _, _, _ = np.linalg.lstsq(X, y, rcond=_RCOND)
            r = y - X @ coef
            sse = float(r @ r)
        if sse < best_sse:
            best_sse = sse
            best_knots = knots

    theta, sse, coeffs = _fit_at(y, d, d0, best_knots)
    return FitResult(SignalVector(theta), KnotVector(best_knots, d),
                     coeffs, sse, k)


def default_k_max(params: ModelParams) -> int:
    """min(k0 + 3, n // (d+1)) and at least 1."""
    return max(1, min(params.k0 + 3, params.n // (params.d + 1)))


def adaptive_fit(y, params: ModelParams, spec: PenaltySpec,
                 k_max: int | None = None, solver: str | None = None,
                 with_trace: bool = False, budget: int = 10_000_000):
    """Penalized selection of the number of pieces.

    Minimizes sse(k) + penalty(k) over k in [1; k_max]; ties go to the
    smallest k.  sse(k) comes from the dynamic program when d0 = -1 and
    from the exhaustive scan otherwise (or per the solver override).
    """
    y = np.asarray(y, dtype=float)
    if k_max is None:
        k_max = default_k_max(params)
    if k_max < 1:
        raise ValidationError(f"k_max must be >= 1, got {k_max}")
    if solver is None:
        solver = "dp" if params.d0 == -1 else "exhaustive"
    if solver == "dp" and params.d0 != -1:
        raise ValidationError("the dp solver supports only d0 = -1")
    if solver not in ("dp", "exhaustive"):
        raise ValidationError(f"unknown solver {solver!r}")

    best = None
    best_obj = np.inf
    trace = []
    for k in range(1, k_max + 1):
        pk = ModelParams(params.d, params.d0, k, params.n, params.sigma)
        if solver == "dp":
            fit = dp_fit(y, pk)
        else:
            fit = exhaustive_fit(y, pk, budget=budget)
        pen = penalty(k, spec)
        obj = fit.sse + pen
        trace.append((k, fit.sse, pen, obj))
        if obj < best_obj:
            best_obj = obj
            best = fit
    if with_trace:
        return best, trace
    return best
