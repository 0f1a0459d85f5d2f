"""Diffusion scaling of simulated paths and grid path functionals.

For a system with scale index n, the centered and scaled processes are

  Qhat_i(t) = Q_i(t) / sqrt(n)
  Ahat_i(t) = (A_i(t) - lam_i * t) / sqrt(n)
  Ghat_i(t) = G_i(t) / sqrt(n)
  Rhat(t)   = (R(t) - lambda0 * n * t) / sqrt(n)
  Mhat_i(t) = (G_i(t) - delta_i * int_0^t Q_i ds) / sqrt(n)

Mhat is the martingale part of the scaled abandonment process, so
Ghat_i = Mhat_i + delta_i * int_0^t Qhat_i ds holds identically.  The
time integral of Q is evaluated exactly over event intervals (Q is a
step function); the grid is only a sampling device.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .events import EventLog, queue_step_paths
from .params import SystemParams


@dataclass(frozen=True)
class ScaledPathBundle:
    """Grid samples of the five scaled path families of one run."""

    grid: np.ndarray
    Qhat: np.ndarray
    Ahat: np.ndarray
    Ghat: np.ndarray
    Rhat: np.ndarray
    Mhat: np.ndarray
    Ihat: np.ndarray  # exact int_0^t Qhat_i ds at grid points
    n: int
    lambda0: float
    params: SystemParams

    def __post_init__(self):
        for name in ("grid", "Qhat", "Ahat", "Ghat", "Rhat", "Mhat", "Ihat"):
            getattr(self, name).flags.writeable = False


def scale(log: EventLog, params: SystemParams, lambda0: float, grid) -> ScaledPathBundle:
    """Sample all five scaled families of one log on a reporting grid."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be nonempty and strictly increasing")
    if grid[0] < 0.0 or grid[-1] > log.horizon:
        raise ValueError("grid must lie within [0, horizon]")
    sqrt_n = math.sqrt(params.n)
    A, G, R = log.counts_at(grid)
    steps = queue_step_paths(log)
    Qhat = steps.at(grid) / sqrt_n
    Ihat = steps.integral(grid) / sqrt_n
    Ahat = (A - params.lam[:, None] * grid[None, :]) / sqrt_n
    Ghat = G / sqrt_n
    Rhat = (R - lambda0 * params.n * grid) / sqrt_n
    Mhat = Ghat - params.delta[:, None] * Ihat
    return ScaledPathBundle(
        grid=grid,
        Qhat=Qhat,
        Ahat=Ahat,
        Ghat=Ghat,
        Rhat=Rhat,
        Mhat=Mhat,
        Ihat=Ihat,
        n=params.n,
        lambda0=float(lambda0),
        params=params,
    )


def occupation_at_zero(path, grid, eps: float) -> float:
    """Length fraction of grid intervals on which |path| <= eps.

    The value on [t_j, t_{j+1}) is taken from the left endpoint, the
    step-function convention.  Use eps=0 for integer pre-limit paths and
    a small positive eps for solver output.
    """
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    path = np.asarray(path, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if path.shape != grid.shape:
        raise ValueError("path and grid must have equal length")
    widths = np.diff(grid)
    if widths.size == 0:
        return float(abs(path[0]) <= eps)
    hits = np.abs(path[:-1]) <= eps
    return float((widths * hits).sum() / widths.sum())


def sup_norm(pathA, pathB, grid) -> float:
    """max over grid points of the Euclidean norm of pathA - pathB.

    Paths are (K, G) vector paths or (G,) scalar paths on a common grid.
    """
    a = np.atleast_2d(np.asarray(pathA, dtype=np.float64))
    b = np.atleast_2d(np.asarray(pathB, dtype=np.float64))
    grid = np.asarray(grid, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"path shapes differ: {a.shape} vs {b.shape}")
    if a.shape[1] != grid.size:
        raise ValueError("paths and grid have different lengths")
    return float(np.sqrt(((a - b) ** 2).sum(axis=0)).max())


def bundle_to_csv(bundle: ScaledPathBundle, path) -> None:
    """Long-format serialization: t, series, category, value.

    Category is 1-based; the single Rhat series uses an empty category.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={bundle.n} lambda0={bundle.lambda0!r} K={bundle.params.K}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "series", "category", "value"])
        K = bundle.params.K
        for name in ("Qhat", "Ahat", "Ghat", "Mhat"):
            series = getattr(bundle, name)
            for i in range(K):
                for g, t in enumerate(bundle.grid):
                    writer.writerow([repr(float(t)), name, i + 1, repr(float(series[i, g]))])
        for g, t in enumerate(bundle.grid):
            writer.writerow([repr(float(t)), "Rhat", "", repr(float(bundle.Rhat[g]))])
