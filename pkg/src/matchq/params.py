"""Parameter sets for the finite systems, their diffusion limit, and the
scaling family that connects them.

A system has K >= 2 component categories.  Category i receives Poisson
arrivals at rate lambda_i, each waiting component abandons after an
exponential patience time with rate delta_i, and a match consumes one
component from every category the instant all K are available.  The
scaling family indexes systems by n with arrival rates
lambda_i = lambda0 * n + beta_i * sqrt(n), which is the regime in which
the sqrt(n)-scaled queue lengths have a diffusion limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Raised when a parameter set violates its constraints."""


def _float_vector(name: str, values, k: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (k,):
        raise ParameterError(f"{name} must have shape ({k},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


def _int_vector(name: str, values, k: int) -> np.ndarray:
    arr = np.asarray(values)
    if arr.shape != (k,):
        raise ParameterError(f"{name} must have shape ({k},), got {arr.shape}")
    out = np.asarray(np.rint(arr), dtype=np.int64)
    if not np.allclose(arr, out):
        raise ParameterError(f"{name} must be integer-valued")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SystemParams:
    """One finite matching system.

    Fields
    ------
    K : number of categories (>= 2)
    n : scale index of the system (positive integer)
    lam : per-category Poisson arrival rates, all > 0
    delta : per-category exponential patience rates, all > 0
    q0 : initial queue lengths, nonnegative integers with at least one 0
    """

    K: int
    n: int
    lam: np.ndarray
    delta: np.ndarray
    q0: np.ndarray

    def __post_init__(self):
        if self.K < 2:
            raise ParameterError(f"K must be >= 2, got {self.K}")
        if self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "lam", _float_vector("lam", self.lam, self.K))
        object.__setattr__(self, "delta", _float_vector("delta", self.delta, self.K))
        object.__setattr__(self, "q0", _int_vector("q0", self.q0, self.K))
        for i in range(self.K):
            if self.lam[i] <= 0.0:
                raise ParameterError(f"lam[{i}] must be > 0, got {self.lam[i]}")
            if self.delta[i] <= 0.0:
                raise ParameterError(f"delta[{i}] must be > 0, got {self.delta[i]}")
            if self.q0[i] < 0:
                raise ParameterError(f"q0[{i}] must be >= 0, got {self.q0[i]}")
        # At least one queue starts empty: the state space requires it.
        if int(self.q0.min()) != 0:
            raise ParameterError("q0 must contain at least one zero entry")


@dataclass(frozen=True)
class LimitParams:
    """Parameters of the diffusion limit.

    Fields
    ------
    K : number of categories (>= 2)
    x : nonnegative initial state with at least one zero entry
    beta : per-category drifts
    sigma : per-category diffusion coefficients, all > 0
    delta : per-category abandonment rates, >= 0 (zero expresses the
        no-abandonment model with its closed-form solution)
    """

    K: int
    x: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        if self.K < 2:
            raise ParameterError(f"K must be >= 2, got {self.K}")
        object.__setattr__(self, "x", _float_vector("x", self.x, self.K))
        object.__setattr__(self, "beta", _float_vector("beta", self.beta, self.K))
        object.__setattr__(self, "sigma", _float_vector("sigma", self.sigma, self.K))
        object.__setattr__(self, "delta", _float_vector("delta", self.delta, self.K))
        for i in range(self.K):
            if self.x[i] < 0.0:
                raise ParameterError(f"x[{i}] must be >= 0, got {self.x[i]}")
            if self.sigma[i] <= 0.0:
                raise ParameterError(f"sigma[{i}] must be > 0, got {self.sigma[i]}")
            if self.delta[i] < 0.0:
                raise ParameterError(f"delta[{i}] must be >= 0, got {self.delta[i]}")
        if float(self.x.min()) != 0.0:
            raise ParameterError("x must contain at least one zero entry")


@dataclass(frozen=True)
class RegimeFamily:
    """A family of systems indexed by n with rates lambda0*n + beta*sqrt(n).

    `delta_limit` is used unchanged for every member (the simplest sequence
    with the required limit) and `x` is the sqrt(n)-scaled initial state,
    so member q0 entries are round(x*sqrt(n)) with the minimal entry
    forced to zero.
    """

    K: int
    lambda0: float
    beta: np.ndarray
    delta_limit: np.ndarray
    x: np.ndarray
    n_list: tuple = field(default=())

    def __post_init__(self):
        if self.K < 2:
            raise ParameterError(f"K must be >= 2, got {self.K}")
        if not (self.lambda0 > 0.0 and math.isfinite(self.lambda0)):
            raise ParameterError(f"lambda0 must be > 0, got {self.lambda0}")
        object.__setattr__(self, "beta", _float_vector("beta", self.beta, self.K))
        object.__setattr__(
            self, "delta_limit", _float_vector("delta_limit", self.delta_limit, self.K)
        )
        object.__setattr__(self, "x", _float_vector("x", self.x, self.K))
        for i in range(self.K):
            if self.delta_limit[i] <= 0.0:
                raise ParameterError(
                    f"delta_limit[{i}] must be > 0, got {self.delta_limit[i]}"
                )
            if self.x[i] < 0.0:
                raise ParameterError(f"x[{i}] must be >= 0, got {self.x[i]}")
        if float(self.x.min()) != 0.0:
            raise ParameterError("x must contain at least one zero entry")
        n_list = tuple(int(n) for n in self.n_list)
        if any(n < 1 for n in n_list):
            raise ParameterError("n_list entries must be positive integers")
        object.__setattr__(self, "n_list", n_list)


def make_regime_member(f: RegimeFamily, n: int) -> SystemParams:
    """The n-th system of the family: lambda_i = lambda0*n + beta_i*sqrt(n)."""
    if n not in f.n_list:
        raise ParameterError(f"n={n} is not in the family's n_list {f.n_list}")
    sqrt_n = math.sqrt(n)
    lam = f.lambda0 * n + f.beta * sqrt_n
    for i in range(f.K):
        if lam[i] <= 0.0:
            raise ParameterError(
                f"category {i + 1}: lambda0*n + beta*sqrt(n) = {lam[i]} is not > 0"
            )
    q0 = np.rint(f.x * sqrt_n).astype(np.int64)
    # Force the minimal entry to zero so at least one queue starts empty.
    q0[int(np.argmin(q0))] = 0
    return SystemParams(K=f.K, n=n, lam=lam, delta=f.delta_limit, q0=q0)


def limit_of(f: RegimeFamily) -> LimitParams:
    """Diffusion-limit parameters of the family.

    sigma_i = sqrt(lambda0) because a rate lambda0*n Poisson process,
    centered and scaled by sqrt(n), converges to a Brownian motion with
    variance lambda0*t.
    """
    sigma = np.full(f.K, math.sqrt(f.lambda0))
    return LimitParams(K=f.K, x=f.x, beta=f.beta, sigma=sigma, delta=f.delta_limit)
