"""Deterministic per-cycle kinetics and its scaling limit.

A PCR cycle replicates each molecule with probability v*K/(K + z), where z
is the current molecule count and K the Michaelis-Menten scale.  In density
units x = z/K the mean of one cycle is

    mean_map(x) = x + v*x/(1 + x)

and the whole deterministic theory of the reaction lives in the iterates of
that map: the saturation profile is the pointwise limit of n-fold iterates
applied to x/b**n with b = 1 + v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Kinetics",
    "Precision",
    "PrecisionError",
    "PROFILE_PRECISION",
    "INVERSE_PRECISION",
    "mean_map",
    "mean_map_deficit",
    "iterate_mean_map",
    "limit_profile",
    "inverse_profile",
    "limit_sequence",
]


@dataclass(frozen=True)
class Kinetics:
    """Reaction parameters: replication efficiency v and scale K.

    v is the per-molecule replication probability at vanishing density,
    0 < v <= 1.  K > 0 is the Michaelis-Menten constant of the enzymatic
    rate law; densities are molecule counts divided by K.
    """

    v: float
    K: float

    def __post_init__(self):
        if not 0.0 < self.v <= 1.0:
            raise ValueError(f"efficiency v must be in (0, 1], got {self.v}")
        if not self.K > 0.0:
            raise ValueError(f"scale K must be positive, got {self.K}")

    @property
    def b(self) -> float:
        """Per-cycle growth factor 1 + v of the low-density regime."""
        return 1.0 + self.v

    @classmethod
    def from_exponent(cls, v: float, m: int) -> "Kinetics":
        """Kinetics with K = (1+v)**m, so log_b(K) is the integer m."""
        return cls(v=v, K=(1.0 + v) ** m)


@dataclass(frozen=True)
class Precision:
    """Numerical stopping rule: absolute tolerance and iteration cap."""

    tol: float
    max_iter: int = 100_000

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


#: defaults quoted by the acceptance tolerances: profile to 1e-10, inverse to 1e-8
PROFILE_PRECISION = Precision(tol=1e-10)
INVERSE_PRECISION = Precision(tol=1e-8)


class PrecisionError(RuntimeError):
    """Requested tolerance not reachable within the iteration cap.

    Carries the best value computed so far (``value``) together with its
    certified error bound (``bound``), or the last bisection ``bracket``.
    """

    def __init__(self, message, value=None, bound=None, bracket=None):
        super().__init__(message)
        self.value = value
        self.bound = bound
        self.bracket = bracket


def _as_nonnegative_array(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.size and np.any(arr < 0.0):
        raise ValueError(f"{name} must be nonnegative")
    return arr


def mean_map(x, kin: Kinetics):
    """One-cycle mean density map x + v*x/(1+x).  Accepts scalars or arrays."""
    arr = _as_nonnegative_array(x, "density")
    out = arr + kin.v * arr / (1.0 + arr)
    return float(out) if np.ndim(x) == 0 else out


def mean_map_deficit(x, kin: Kinetics):
    """Shortfall v*x**2/(1+x) of the mean map below linear growth b*x."""
    arr = _as_nonnegative_array(x, "density")
    out = kin.v * arr * arr / (1.0 + arr)
    return float(out) if np.ndim(x) == 0 else out


def iterate_mean_map(x, n: int, kin: Kinetics):
    """n-fold composition of the mean map, n >= 0."""
    if n < 0:
        raise ValueError("iteration count must be nonnegative")
    arr = _as_nonnegative_array(x, "density")
    v = kin.v
    for _ in range(n):
        arr = arr + v * arr / (1.0 + arr)
    return float(arr) if np.ndim(x) == 0 else arr


def _profile_depth(xmax: float, v: float, tol: float) -> int:
    # smallest n >= 0 with xmax**2 * b**(1-n) <= tol; the per-step drop of
    # f_n(x/b**n) is at most v*x**2*b**-n, so the remaining tail after n
    # steps sums to at most x**2 * b**(1-n).
    b = 1.0 + v
    if xmax * xmax * b <= tol:
        return 0
    return 1 + math.ceil(math.log(xmax * xmax / tol) / math.log(b))


def limit_profile(x, kin: Kinetics, prec: Precision = PROFILE_PRECISION):
    """Saturation profile: limit of n-fold mean-map iterates of x/b**n.

    The returned value lies in [true value, true value + prec.tol]; the
    iterates converge monotonically from above and the truncation depth is
    chosen so the certified tail is below prec.tol.  Scalars map to floats,
    arrays map elementwise.

    Raises PrecisionError when the certified depth exceeds prec.max_iter;
    the exception carries the best value and its tail bound.
    """
    arr = _as_nonnegative_array(x, "density")
    scalar = np.ndim(x) == 0
    if arr.size == 0:
        return arr.copy()
    xmax = float(arr.max())
    if xmax == 0.0:
        out = np.zeros_like(arr)
        return 0.0 if scalar else out

    v = kin.v
    b = 1.0 + v
    n = _profile_depth(xmax, v, prec.tol)
    depth = min(n, prec.max_iter)
    u = arr * math.exp(-depth * math.log(b))
    for _ in range(depth):
        u = u + v * u / (1.0 + u)
    if n > prec.max_iter:
        bound = xmax * xmax * b ** (1 - prec.max_iter)
        raise PrecisionError(
            f"profile needs {n} iterations for tol={prec.tol}, cap is {prec.max_iter}",
            value=float(u) if scalar else u,
            bound=bound,
        )
    return float(u) if scalar else u


def inverse_profile(y, kin: Kinetics, prec: Precision = INVERSE_PRECISION):
    """Inverse of the saturation profile, by monotone bisection.

    Since the profile never exceeds its argument, the inverse is bracketed
    below by y itself; the upper bracket grows geometrically by b until the
    profile clears y.  Bisection stops when the bracket width is below
    prec.tol.  Scalars map to floats, arrays map elementwise.
    """
    arr = _as_nonnegative_array(y, "profile value")
    scalar = np.ndim(y) == 0
    if arr.size == 0:
        return arr.copy()

    b = 1.0 + kin.v
    inner = Precision(
        tol=min(1e-10, prec.tol / 100.0), max_iter=max(prec.max_iter, 100_000)
    )
    lo = arr.astype(float).copy()
    hi = np.maximum(arr, 1e-12)
    positive = arr > 0.0

    for _ in range(prec.max_iter):
        short = positive & (limit_profile(hi, kin, inner) < arr)
        if not short.any():
            break
        hi = np.where(short, hi * b, hi)
    else:
        raise PrecisionError(
            "no upper bracket found within max_iter", bracket=(lo, hi)
        )

    for _ in range(prec.max_iter):
        width = float((hi - lo).max())
        if width <= prec.tol:
            break
        mid = 0.5 * (lo + hi)
        below = limit_profile(mid, kin, inner) < arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        raise PrecisionError(
            f"bisection did not reach tol={prec.tol} within {prec.max_iter} steps",
            bracket=(lo, hi),
        )

    out = np.where(positive, 0.5 * (lo + hi), 0.0)
    return float(out) if scalar else out


def limit_sequence(
    x0: float,
    kin: Kinetics,
    n_lo: int,
    n_hi: int,
    prec: Precision | None = None,
) -> np.ndarray:
    """Two-sided deterministic density sequence through x0 at index 0.

    Nonnegative indices iterate the mean map forward from x0.  Negative
    indices are defined through the conjugacy with linear growth: entry n is
    the profile evaluated at w*b**n where w is the inverse profile of x0.
    Returned in index order n_lo..n_hi inclusive.
    """
    if n_lo > n_hi:
        raise ValueError("n_lo must not exceed n_hi")
    if not x0 > 0.0:
        raise ValueError("x0 must be positive")
    if prec is None:
        prec = Precision(tol=1e-10)

    b = 1.0 + kin.v
    out = np.empty(n_hi - n_lo + 1, dtype=float)

    if n_lo < 0:
        w = inverse_profile(x0, kin, prec)
        neg_idx = np.arange(n_lo, min(n_hi, -1) + 1)
        args = w * b ** neg_idx.astype(float)
        inner = Precision(tol=min(prec.tol, 1e-10), max_iter=prec.max_iter)
        out[: neg_idx.size] = limit_profile(args, kin, inner)

    if n_hi >= 0:
        x = float(x0)
        start = max(n_lo, 0)
        for _ in range(start):
            x = x + kin.v * x / (1.0 + x)
        for n in range(start, n_hi + 1):
            out[n - n_lo] = x
            x = x + kin.v * x / (1.0 + x)
    return out
