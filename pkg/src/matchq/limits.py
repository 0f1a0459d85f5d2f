"""Grid solvers for the coupled diffusion-limit equation.

The limit process solves, coordinatewise,

  X_i(t) = x_i + beta_i t + sigma_i W_i(t) - delta_i int_0^t X_i ds - R(t)
  R(t)   = min_k { x_k + beta_k t + sigma_k W_k(t) - delta_k int_0^t X_k ds }

so that X_i >= 0 and min_i X_i = 0: one scalar running-minimum process
couples all coordinates.  Writing xi_i(t) = x_i + beta_i t + sigma_i
W_i(t) and G_i(t) = delta_i int_0^t X_i ds, the grid scheme evaluates G
by the trapezoidal rule with the step's own value treated implicitly
(one scalar division per coordinate), which makes the discrete coupling
identities hold exactly:

  y_i = xi_i(t_j) - [trapezoid through t_(j-1) plus half weight]
  R(t_j) = min_i y_i,   X_i(t_j) = (y_i - R(t_j)) / (1 + delta_i dt/2)

A literal explicit mode (predictor X(t_{j-1}) inside the trapezoid) is
kept behind a flag.  With delta = 0 both modes reduce algebraically to
the closed form X_i = xi_i - min_k xi_k.

A Picard fixed-point solver for the same discrete system doubles as an
independent uniqueness check; when the contraction factor
(1+K) sqrt(K) max(delta) T is not below one, it restarts on a time
partition fine enough to contract, mirroring how uniqueness is proved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import LimitParams
from .rng import generator_for


class ConfigurationError(ValueError):
    """Raised when a solver precondition on the grid or mode fails."""


class ConvergenceError(RuntimeError):
    """Raised when the fixed-point iteration exhausts max_iter."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class NoiseDraws:
    """Brownian increments on a uniform grid: dW[i, j] ~ Normal(0, dt)."""

    grid: np.ndarray
    dW: np.ndarray
    seed: int

    def __post_init__(self):
        self.grid.flags.writeable = False
        self.dW.flags.writeable = False
        if self.dW.shape[1] != self.grid.size - 1:
            raise ValueError("dW must have one column per grid step")

    @property
    def n_steps(self) -> int:
        return int(self.dW.shape[1])

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])


def noise_draws(K: int, n_steps: int, horizon: float, seed: int) -> NoiseDraws:
    """Independent Normal(0, dt) increments, deterministic in the seed."""
    if n_steps < 1 or horizon <= 0.0:
        raise ValueError("need n_steps >= 1 and horizon > 0")
    grid = np.linspace(0.0, horizon, n_steps + 1)
    dt = horizon / n_steps
    dW = generator_for(seed).standard_normal((K, n_steps)) * math.sqrt(dt)
    return NoiseDraws(grid=grid, dW=dW, seed=int(seed))


def coarsen(noise: NoiseDraws, factor: int) -> NoiseDraws:
    """Aggregate increments onto a grid `factor` times coarser.

    Refinement studies generate noise once at the finest grid and sum,
    so every resolution sees the same Brownian path.
    """
    if factor < 1 or noise.n_steps % factor != 0:
        raise ValueError("factor must divide the number of steps")
    K, N = noise.dW.shape
    dW = noise.dW.reshape(K, N // factor, factor).sum(axis=2)
    return NoiseDraws(grid=noise.grid[::factor].copy(), dW=dW, seed=noise.seed)


def brownian_paths(noise: NoiseDraws) -> np.ndarray:
    """W on the grid, shape (K, N+1), W(0) = 0."""
    K = noise.dW.shape[0]
    return np.concatenate([np.zeros((K, 1)), np.cumsum(noise.dW, axis=1)], axis=1)


def drive_paths(p: LimitParams, noise: NoiseDraws) -> np.ndarray:
    """xi_i(t_j) = x_i + beta_i t_j + sigma_i W_i(t_j), shape (K, N+1)."""
    W = brownian_paths(noise)
    return p.x[:, None] + p.beta[:, None] * noise.grid[None, :] + p.sigma[:, None] * W


def trapezoid_cumulative(X: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoidal integral along the last axis, zero at t_0."""
    inner = np.cumsum(0.5 * dt * (X[..., :-1] + X[..., 1:]), axis=-1)
    pad = np.zeros(X.shape[:-1] + (1,))
    return np.concatenate([pad, inner], axis=-1)


def tolerance_zero(p: LimitParams, horizon: float) -> float:
    """Slack for the discrete coupling and nonnegativity invariants."""
    return 1e-9 * (1.0 + float(p.sigma.max()) * math.sqrt(horizon))


@dataclass(frozen=True)
class LimitPath:
    """One grid solution: X_i(t_j), the coupling process R, and the
    per-coordinate absorbed mass G_i(t) = delta_i int_0^t X_i ds.

    `xi` retains the driving paths so identity checks need not rebuild
    the noise.  R always satisfies R(t_j) = min_i (xi_i - G_i)(t_j)
    bitwise: solvers store that expression.
    """

    grid: np.ndarray
    X: np.ndarray
    R: np.ndarray
    G: np.ndarray
    xi: np.ndarray
    params: LimitParams
    seed: int
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("grid", "X", "R", "G", "xi"):
            getattr(self, name).flags.writeable = False

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])


def _finalize(grid, X, p, xi, seed, info) -> LimitPath:
    dt = float(grid[1] - grid[0])
    G = p.delta[:, None] * trapezoid_cumulative(X, dt)
    R = (xi - G).min(axis=0)
    return LimitPath(grid=grid, X=X, R=R, G=G, xi=xi, params=p, seed=seed, info=info)


def solve_explicit_many(
    p: LimitParams, grid: np.ndarray, dW: np.ndarray, explicit_predictor: bool = False
):
    """Vectorized march over a batch of noise draws.

    dW has shape (P, K, N); returns (X, R, G) with leading batch axis.
    The default mode treats each step's own trapezoid term implicitly;
    `explicit_predictor=True` uses the previous step value instead.
    """
    P, K, N = dW.shape
    if grid.shape != (N + 1,):
        raise ConfigurationError("grid and increments disagree on step count")
    dt = float(grid[1] - grid[0])
    if not dt * float(p.delta.max()) < 1.0:
        raise ConfigurationError("explicit step needs dt * max(delta) < 1")
    W = np.concatenate([np.zeros((P, K, 1)), np.cumsum(dW, axis=2)], axis=2)
    xi = p.x[None, :, None] + p.beta[None, :, None] * grid[None, None, :] + (
        p.sigma[None, :, None] * W
    )
    c = p.delta * (dt / 2.0)
    one_plus_c = 1.0 + c
    X = np.empty_like(xi)
    X[:, :, 0] = xi[:, :, 0]
    # gpart_j = delta * dt * (X_0/2 + X_1 + ... + X_{j-1})
    gpart = np.zeros((P, K))
    for j in range(1, N + 1):
        gpart = gpart + (c if j == 1 else 2.0 * c) * X[:, :, j - 1]
        if explicit_predictor:
            g = gpart + c * X[:, :, j - 1]
            v = xi[:, :, j] - g
            X[:, :, j] = v - v.min(axis=1, keepdims=True)
        else:
            y = xi[:, :, j] - gpart
            r = y.min(axis=1, keepdims=True)
            X[:, :, j] = (y - r) / one_plus_c
    G = p.delta[None, :, None] * trapezoid_cumulative(X, dt)
    R = (xi - G).min(axis=1)
    return X, R, G, xi


def solve_explicit(
    p: LimitParams, noise: NoiseDraws, explicit_predictor: bool = False
) -> LimitPath:
    """March the grid scheme over one noise draw."""
    X, R, G, xi = solve_explicit_many(
        p, noise.grid, noise.dW[None, :, :], explicit_predictor=explicit_predictor
    )
    info = {"method": "explicit", "predictor": bool(explicit_predictor)}
    return LimitPath(
        grid=noise.grid, X=X[0], R=R[0], G=G[0], xi=xi[0], params=p,
        seed=noise.seed, info=info,
    )


def contraction_factor(p: LimitParams, horizon: float) -> float:
    """(1+K) sqrt(K) max(delta) T: below one, Picard contracts globally."""
    return (1.0 + p.K) * math.sqrt(p.K) * float(p.delta.max()) * horizon


def contraction_blocks(p: LimitParams, horizon: float) -> int:
    """Number of time blocks needed so each block's factor is <= 1/2."""
    eps = contraction_factor(p, horizon)
    if eps < 1.0:
        return 1
    return int(math.ceil(eps / 0.5))


def solve_fixed_point(
    p: LimitParams,
    noise: NoiseDraws,
    tol: float = 1e-8,
    max_iter: int = 500,
    init: str | np.ndarray = "zero",
) -> LimitPath:
    """Picard iteration of X -> xi - delta*int(X) - R_X on the grid.

    The iteration runs block-sequentially over a partition of [0, T]
    fine enough that each block contracts (factor <= 1/2); with a
    factor below one there is a single block.  `init` seeds each block
    with zeros ("zero"), the driving path ("input"), or a given array.
    Converges to the same discrete system the explicit march solves, so
    the two agree to roughly `tol`.
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    grid = noise.grid
    N = noise.n_steps
    dt = noise.dt
    xi = drive_paths(p, noise)
    if isinstance(init, str):
        if init == "zero":
            X0 = np.zeros_like(xi)
        elif init == "input":
            X0 = xi.copy()
        else:
            raise ValueError("init must be 'zero', 'input', or an array")
    else:
        X0 = np.array(init, dtype=np.float64)
        if X0.shape != xi.shape:
            raise ValueError(f"init array must have shape {xi.shape}")
    X = X0
    X[:, 0] = xi[:, 0]
    blocks = contraction_blocks(p, float(grid[-1]))
    edges = np.unique(np.round(np.linspace(0, N, blocks + 1)).astype(int))
    total_iters = 0
    residual = 0.0
    for b in range(edges.size - 1):
        lo, hi = int(edges[b]), int(edges[b + 1])
        sl = slice(lo + 1, hi + 1)
        converged = False
        for _ in range(max_iter):
            total_iters += 1
            integral = p.delta[:, None] * trapezoid_cumulative(X, dt)
            v = xi - integral
            Xn = v - v.min(axis=0, keepdims=True)
            residual = float(np.abs(Xn[:, sl] - X[:, sl]).max()) if hi > lo else 0.0
            X[:, sl] = Xn[:, sl]
            if residual < tol:
                converged = True
                break
        if not converged:
            raise ConvergenceError(
                f"fixed point not reached in {max_iter} sweeps "
                f"(block {b + 1}/{edges.size - 1}, residual {residual:.3e})",
                residual,
            )
    info = {
        "method": "fixed_point",
        "iterations": total_iters,
        "blocks": int(edges.size - 1),
        "residual": residual,
        "tol": tol,
    }
    return _finalize(grid, X, p, xi, noise.seed, info)


def solve_no_abandonment(p: LimitParams, noise: NoiseDraws) -> LimitPath:
    """Closed form for delta = 0: X_i = xi_i - min_k xi_k, R = min_k xi_k."""
    if float(p.delta.max()) != 0.0:
        raise ValueError("closed form requires delta = 0")
    xi = drive_paths(p, noise)
    R = xi.min(axis=0)
    X = xi - R[None, :]
    G = np.zeros_like(xi)
    return LimitPath(
        grid=noise.grid, X=X, R=R, G=G, xi=xi, params=p, seed=noise.seed,
        info={"method": "closed_form"},
    )


def verify_limit_invariants(path: LimitPath) -> dict:
    """Exact and toleranced structural checks on a solved path."""
    p = path.params
    tz = tolerance_zero(p, path.horizon)
    min_x = path.X.min(axis=0)
    if float(path.R[0]) != 0.0:
        raise AssertionError("R(0) must be exactly 0")
    if np.any(path.X < -tz):
        raise AssertionError("coordinate below -tol_neg")
    if np.any(np.abs(min_x) > tz):
        raise AssertionError("coupling violated: min_i X_i beyond tol_zero")
    r_check = (path.xi - path.G).min(axis=0)
    if not np.array_equal(r_check, path.R):
        raise AssertionError("R does not match min_i (xi_i - G_i)")
    return {
        "max_abs_min_x": float(np.abs(min_x).max()),
        "min_coordinate": float(path.X.min()),
        "tol_zero": tz,
    }


@dataclass(frozen=True)
class SemimartingaleReport:
    """Iterated max/min decomposition of one coordinate (delta = 0).

    With the target coordinate relabeled first, the recursion

      Y_(K-1) = -xi_(K-1) + xi_K        eta_(K-1) = -xi_K + max(Y_(K-1), 0)
      Y_l     = -xi_l - eta_(l+1)       eta_l     = eta_(l+1) + max(Y_l, 0)

    folds eta_1 into max_k(-xi_k), so X = xi_1 + eta_1 must equal
    xi_1 - min_k xi_k pathwise.  Local times of each Y_l at zero are
    estimated by the occupation estimator restricted to a band of width
    eps = dt**(1/4) * vol: L = (1/(2 eps)) * sum of squared increments
    started inside the band.  The per-level Tanaka residual
    (Y(T))+ - (Y(0))+ - int 1[Y>0] dY - L/2 is reported as a
    diagnostic; its estimator error dominates any assertable tolerance.
    """

    grid: np.ndarray
    order: np.ndarray
    xi: np.ndarray
    Y: np.ndarray
    eta: np.ndarray
    X_target: np.ndarray
    identity_max_error: float
    local_time: np.ndarray
    tanaka_residual: np.ndarray
    epsilon: np.ndarray
    pair_brownian: np.ndarray


def semimartingale_decomposition(
    p: LimitParams, noise: NoiseDraws, target_category: int = 0
) -> SemimartingaleReport:
    """Run the recursion for one coordinate and verify its exact identity."""
    if float(p.delta.max()) != 0.0:
        raise ValueError("decomposition requires delta = 0")
    K = p.K
    if not 0 <= target_category < K:
        raise ValueError("target_category out of range")
    order = np.array(
        [target_category] + [i for i in range(K) if i != target_category], dtype=np.int64
    )
    xi_all = drive_paths(p, noise)
    xi = xi_all[order]
    n_grid = xi.shape[1]
    Y = np.zeros((K - 1, n_grid))
    eta = np.zeros((K - 1, n_grid))
    # Levels l = K-1 down to 1 live at array rows l-1.
    Y[K - 2] = -xi[K - 2] + xi[K - 1]
    eta[K - 2] = -xi[K - 1] + np.maximum(Y[K - 2], 0.0)
    for l in range(K - 2, 0, -1):
        Y[l - 1] = -xi[l - 1] - eta[l]
        eta[l - 1] = eta[l] + np.maximum(Y[l - 1], 0.0)
    X_target = xi[0] + eta[0]
    identity_max_error = float(np.abs(X_target - (xi[0] - xi.min(axis=0))).max())

    dt = noise.dt
    sig = p.sigma[order]
    vol = np.sqrt(sig[:-1] ** 2 + sig[-1] ** 2)
    epsilon = dt**0.25 * vol
    dY = np.diff(Y, axis=1)
    in_band = np.abs(Y[:, :-1]) <= epsilon[:, None]
    local_time = (in_band * dY**2).sum(axis=1) / (2.0 * epsilon)
    stieltjes = ((Y[:, :-1] > 0.0) * dY).sum(axis=1)
    tanaka_residual = (
        np.maximum(Y[:, -1], 0.0)
        - np.maximum(Y[:, 0], 0.0)
        - stieltjes
        - 0.5 * local_time
    )
    W = brownian_paths(noise)[order]
    pair = (sig[-1] * W[-1][None, :] - sig[:-1, None] * W[:-1]) / vol[:, None]
    return SemimartingaleReport(
        grid=noise.grid,
        order=order,
        xi=xi,
        Y=Y,
        eta=eta,
        X_target=X_target,
        identity_max_error=identity_max_error,
        local_time=local_time,
        tanaka_residual=tanaka_residual,
        epsilon=epsilon,
        pair_brownian=pair,
    )


def limit_path_to_csv(path: LimitPath, file_path) -> None:
    """Long-format serialization matching the scaled-bundle schema."""
    import csv

    with open(file_path, "w", newline="") as fh:
        fh.write(f"# K={path.params.K} seed={path.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "series", "category", "value"])
        for i in range(path.params.K):
            for g, t in enumerate(path.grid):
                writer.writerow([repr(float(t)), "X", i + 1, repr(float(path.X[i, g]))])
        for i in range(path.params.K):
            for g, t in enumerate(path.grid):
                writer.writerow([repr(float(t)), "G", i + 1, repr(float(path.G[i, g]))])
        for g, t in enumerate(path.grid):
            writer.writerow([repr(float(t)), "R", "", repr(float(path.R[g]))])
