"""Entropy densities, plain and relative, plus the cutoff-adjusted relative entropy.

All densities take species on axis 0 and broadcast over any trailing cell
axes. ``0 * log 0`` is taken as 0 throughout.

The cutoff is ``xi_M(u) = theta(s)`` with
``s = (log sum(u) - log M) / ((K - 1) log M)`` and the quintic profile
``theta(s) = 1 - (6 s^5 - 15 s^4 + 10 s^3)`` on ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "CoercivityWitness",
    "CutoffParams",
    "EntropyValue",
    "adjusted_relative_entropy_density",
    "choose_K",
    "choose_M",
    "coercivity_check",
    "coercivity_constant",
    "coercivity_slacks",
    "cutoff_profile",
    "cutoff_xi",
    "cutoff_xi_derivatives",
    "entropy_density",
    "field_integral",
    "pairwise_sum",
    "relative_entropy_density",
]

# sup|theta'| = 15/8, sup|theta''| = 10/sqrt(3); absorbed with K/((K-1) log M) <= 2/log 2
GRADIENT_BOUND = 6.0
HESSIAN_BOUND = 40.0


@dataclass(frozen=True)
class CutoffParams:
    M: float
    K: float

    def __post_init__(self):
        if not (self.M >= 2 and self.K >= 2):
            raise ValueError(f"cutoff needs M >= 2 and K >= 2, got M={self.M}, K={self.K}")

    @property
    def upper(self) -> float:
        """``M**K``, above which the cutoff vanishes."""
        return self.M**self.K


@dataclass
class EntropyValue:
    value: float
    breakdown: dict[str, float] | None = None

    def to_json(self) -> dict:
        return {"value": self.value, "breakdown": self.breakdown}


@dataclass
class CoercivityWitness:
    """Slacks of the two pointwise coercivity inequalities (``None`` where inapplicable)."""

    slack_large: float | None
    slack_small: float | None
    density: float
    C_M: float

    @property
    def passed(self) -> bool:
        return all(s is None or s >= 0 for s in (self.slack_large, self.slack_small))


def _as_species(u, name="u") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise ValueError(f"{name} must be nonnegative")
    return u


def _mu_like(mu, u: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.shape[0] != u.shape[0]:
        raise ValueError(f"mu has length {mu.shape[0]}, expected {u.shape[0]}")
    return mu.reshape((-1,) + (1,) * (u.ndim - 1))


def _xlogx(u: np.ndarray) -> np.ndarray:
    return np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0)), 0.0)


def entropy_density(u, mu) -> np.ndarray:
    """``sum_i u_i (log u_i + mu_i - 1)``."""
    u = _as_species(u)
    m = _mu_like(mu, u)
    return (_xlogx(u) + u * (m - 1.0)).sum(axis=0)


def _relative_pointwise(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``u log(u/v) - u + v`` per component, accurate near ``u = v``."""
    y = (u - v) / v
    small = np.abs(y) < 1e-3
    ys = np.where(small, y, 0.0)
    # (1+y) log(1+y) - y = sum_{n>=2} (-1)^n y^n / (n (n-1))
    series = ys * ys * (0.5 + ys * (-1 / 6 + ys * (1 / 12 + ys * (-1 / 20 + ys * (1 / 30)))))
    # log1p(y) is accurate for moderate y; far below v, y rounds to -1, so use log u - log v there
    far = (y <= -0.5) & (u > 0)
    yl = np.where(small | far | (u == 0), 0.0, y)
    logratio = np.where(far, np.log(np.where(far, u, 1.0)) - np.log(np.where(far, v, 1.0)), np.log1p(yl))
    direct = u * logratio - (u - v)
    out = np.where(small, v * series, direct)
    return np.where(u == 0, v, out)


def _check_positive(v, name="v") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if not np.all(v > 0):
        raise ValueError(f"{name} must be strictly positive")
    return v


def relative_entropy_density(u, v, mu=None) -> np.ndarray:
    """``sum_i u_i(log u_i + mu_i - 1) - u_i(log v_i + mu_i) + v_i``.

    The potentials cancel, so ``mu`` is accepted only for signature symmetry.
    """
    u = _as_species(u)
    v = _check_positive(v)
    return _relative_pointwise(u, v).sum(axis=0)


def _theta(s):
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 + s * (-15.0 + 6.0 * s))


def _theta_d1(s):
    inside = (s > 0) & (s < 1)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, -30.0 * s**2 * (s - 1.0) ** 2, 0.0)


def _theta_d2(s):
    inside = (s > 0) & (s < 1)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, -60.0 * s * (2.0 * s - 1.0) * (s - 1.0), 0.0)


def cutoff_profile(U, p: CutoffParams):
    """``(xi, dxi/dU, d2xi/dU2)`` as functions of the total concentration ``U``.

    Exactly ``(1, 0, 0)`` on ``U <= M`` and ``(0, 0, 0)`` on ``U >= M**K``.
    """
    U = np.asarray(U, dtype=float)
    logM = math.log(p.M)
    width = (p.K - 1.0) * logM
    mid = (U > p.M) & (U < p.upper)
    Us = np.where(mid, U, p.M)
    s = (np.log(Us) - logM) / width
    xi = np.where(U <= p.M, 1.0, np.where(U >= p.upper, 0.0, _theta(s)))
    d1 = np.where(mid, _theta_d1(s) / (width * Us), 0.0)
    d2 = np.where(mid, (_theta_d2(s) / width - _theta_d1(s)) / (width * Us) / Us, 0.0)
    return xi, d1, d2


def cutoff_xi(u, p: CutoffParams) -> np.ndarray:
    """Smooth cutoff in ``[0, 1]``, a function of ``sum(u)`` only."""
    u = _as_species(u)
    return cutoff_profile(u.sum(axis=0), p)[0]


def cutoff_xi_derivatives(u, p: CutoffParams):
    """Gradient ``(S, ...)`` and Hessian ``(S, S, ...)`` of :func:`cutoff_xi`.

    Since the cutoff depends on ``sum(u)`` only, all gradient components are
    equal and so are all Hessian entries.
    """
    u = _as_species(u)
    U = u.sum(axis=0)
    if np.any(U == 0):
        raise ValueError("cutoff derivatives need sum(u) > 0")
    _, d1, d2 = cutoff_profile(U, p)
    S = u.shape[0]
    grad = np.broadcast_to(d1, (S,) + U.shape).copy()
    hess = np.broadcast_to(d2, (S, S) + U.shape).copy()
    return grad, hess


def adjusted_relative_entropy_density(u, v, mu, p: CutoffParams) -> np.ndarray:
    """``sum_i u_i(log u_i + mu_i - 1) - xi_M(u) u_i (log v_i + mu_i) + v_i``.

    Evaluated as the relative entropy plus ``(1 - xi) u_i (log v_i + mu_i)``,
    so it equals :func:`relative_entropy_density` exactly where ``sum(u) <= M``.
    """
    u = _as_species(u)
    v = _check_positive(v)
    m = _mu_like(mu, u)
    xi = cutoff_profile(u.sum(axis=0), p)[0]
    base = _relative_pointwise(u, v).sum(axis=0)
    screened = (u * (np.log(v) + m)).sum(axis=0)
    return base + np.where(xi < 1.0, (1.0 - xi) * screened, 0.0)


def coercivity_constant(M: float, mu) -> float:
    """``C(M) = 4 M (1 + max|mu| + log M + M)``."""
    mu = np.asarray(mu, dtype=float)
    mmax = float(np.max(np.abs(mu))) if mu.size else 0.0
    return 4.0 * M * (1.0 + mmax + math.log(M) + M)


def coercivity_slacks(u, v, mu, p: CutoffParams):
    """Vectorised slacks ``(large, small)`` of the two coercivity inequalities.

    ``u`` and ``v`` have species on axis 0. Entries where a branch does not
    apply are NaN.
    """
    u = _as_species(u)
    v = _check_positive(v)
    dens = adjusted_relative_entropy_density(u, v, mu, p)
    U = u.sum(axis=0)
    C = coercivity_constant(p.M, mu)
    large = 2.0 * dens - (1.0 + U + np.sum(u * np.log1p(u), axis=0))
    small = C * dens - np.sum((u - v) ** 2, axis=0)
    return np.where(U >= p.M, large, np.nan), np.where(U <= p.M, small, np.nan)


def coercivity_check(u, v, mu, p: CutoffParams) -> CoercivityWitness:
    """Evaluate both pointwise coercivity inequalities at one ``(u, v)`` pair.

    Large branch (``sum u >= M``)::

        1 + sum u + sum u log(u + 1) <= 2 * density

    Small branch (``sum u <= M``)::

        sum |u - v|^2 <= C(M) * density
    """
    u = _as_species(u)
    if u.ndim != 1:
        raise ValueError("coercivity_check works on a single point")
    large, small = coercivity_slacks(u, v, mu, p)
    dens = float(adjusted_relative_entropy_density(u, v, mu, p))
    return CoercivityWitness(
        None if np.isnan(large) else float(large),
        None if np.isnan(small) else float(small),
        dens,
        coercivity_constant(p.M, mu),
    )


def _large_branch_worst_slack(M: float, K: float, v_max: float, mu: np.ndarray, S: int) -> float:
    """Smallest sampled slack of the large-``sum u`` coercivity bound.

    Scans total concentration on a log grid over ``[M, e^2 M^K]``; for each
    total tries mass concentrated in one species and spread uniformly, with
    the worst admissible reference ``v`` per species (the minimiser of
    ``-2 xi u log v + 2 v`` on ``(0, v_max]``).
    """
    p = CutoffParams(M, K)
    U = np.exp(np.linspace(math.log(M), K * math.log(M) + 2.0, 2048))
    xi = cutoff_profile(U, p)[0]
    worst = math.inf
    shapes = [np.eye(S)[j] for j in range(S)] + [np.full(S, 1.0 / S)]
    for w in shapes:
        u = w[:, None] * U[None, :]
        v = np.clip(xi[None, :] * u, 1e-300, v_max)
        dens = (
            _xlogx(u)
            + u * (mu[:, None] - 1.0)
            - xi[None, :] * u * (np.log(v) + mu[:, None])
            + v
        ).sum(axis=0)
        lhs = 1.0 + U + (u * np.log1p(u)).sum(axis=0)
        worst = min(worst, float(np.min(2.0 * dens - lhs)))
    return worst


def choose_M(v_max: float, mu, S: int, K: float | None = None) -> float:
    """Cutoff concentration: smallest power of two ``>= max(2, 4 S v_max e^(2 + max|mu|))``.

    With ``K`` given, the value is doubled until a scan of the large-``sum u``
    coercivity bound finds no violation for that cutoff width.
    """
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.size == 1 and S > 1:
        mu = np.full(S, float(mu[0]))
    mmax = float(np.max(np.abs(mu))) if mu.size else 0.0
    target = max(2.0, 4.0 * S * v_max * math.exp(2.0 + mmax))
    M = 2.0 ** math.ceil(math.log2(target))
    if M < target:  # guard log2 rounding
        M *= 2.0
    if K is not None:
        while _large_branch_worst_slack(M, K, v_max, mu, S) < 0.0:
            M *= 2.0
    return M


def choose_K(log_v_plus_mu_max: float) -> float:
    """``K = max(2, ceil(4 (1 + max|log v_i + mu_i|)))``."""
    return float(max(2, math.ceil(4.0 * (1.0 + abs(log_v_plus_mu_max)))))


def pairwise_sum(values) -> float:
    """Deterministic tree summation over a flat array."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        return 0.0
    n = 1 << (x.size - 1).bit_length()
    buf = np.zeros(n)
    buf[: x.size] = x
    while buf.size > 1:
        buf = buf[0::2] + buf[1::2]
    return float(buf[0])


def field_integral(
    density: Callable[..., np.ndarray],
    state_u,
    state_v=None,
    *,
    cutoff: CutoffParams | None = None,
    **params,
) -> EntropyValue:
    """Integrate a pointwise density over the grid cells of a state.

    ``density`` is called as ``density(u)`` or ``density(u, v)`` with the
    cell fields (species on axis 0) and ``params`` as keyword arguments.
    With ``cutoff`` given, the value is also split by the regions
    ``sum u <= M``, ``M < sum u < M**K`` and ``sum u >= M**K``.
    """
    u = np.asarray(state_u.u, dtype=float)
    vol = state_u.grid.cell_volume
    if state_v is None:
        dens = density(u, **params)
    else:
        if state_v.grid != state_u.grid:
            raise ValueError("states live on different grids")
        dens = density(u, np.asarray(state_v.u, dtype=float), **params)
    contrib = np.asarray(dens) * vol
    value = pairwise_sum(contrib)
    breakdown = None
    if cutoff is not None:
        U = u.sum(axis=0)
        below = U <= cutoff.M
        above = U >= cutoff.upper
        breakdown = {
            "below_M": pairwise_sum(np.where(below, contrib, 0.0)),
            "middle": pairwise_sum(np.where(~below & ~above, contrib, 0.0)),
            "above_MK": pairwise_sum(np.where(above, contrib, 0.0)),
        }
    return EntropyValue(value, breakdown)
