"""Empirical checks of the limit theory: virtual-wait replay and the
asymptotic Little's law, discounted cost functionals, and convergence
studies comparing pre-limit systems against the limit process.

The virtual waiting time V_i(t) is how long an infinitely patient
hypothetical component of category i arriving at time t would wait.
It is recovered from an event log by replay: place a marker behind the
Q_i(t) components currently queued; every match consumes queue i's
head, so it decrements the ahead-count, as does every category-i
abandonment of a component that arrived at or before t; the first
match that fires with the ahead-count already at zero takes the marker.

Replays on a realized log satisfy an exact balance identity at the
departure time d = t + V: the realized queue then holds exactly the
post-t arrivals minus those of them that abandoned, minus the one
component the departing match consumed in the marker's place:

  Q_i(d) = #arrivals in (t, d] - #abandonments among them - 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats

from .events import ABANDONMENT, ARRIVAL, MATCH, EventLog, queue_step_paths
from .limits import LimitPath, noise_draws, solve_explicit
from .params import RegimeFamily, limit_of, make_regime_member
from .rng import (
    STREAM_LIMIT_NOISE,
    STREAM_SIMULATION,
    derive_seed,
    map_replications,
)
from .scaling import scale
from .simulate import simulate


@dataclass(frozen=True)
class VirtualWaitSeries:
    """Virtual waiting times of one category at the given sample times.

    Censored samples (no departure before the horizon) carry the
    elapsed lower bound horizon - t in V and True in `censored`.
    """

    category: int
    times: np.ndarray
    V: np.ndarray
    censored: np.ndarray

    def __post_init__(self):
        for name in ("times", "V", "censored"):
            getattr(self, name).flags.writeable = False
        if np.any(self.V < 0.0):
            raise ValueError("virtual waits must be nonnegative")


def virtual_wait_replay(
    log: EventLog, category: int, sample_times: np.ndarray
) -> VirtualWaitSeries:
    """Replay the log to measure V_category at each sample time."""
    i = int(category)
    if not 0 <= i < log.params.K:
        raise ValueError("category out of range")
    t_arr = np.asarray(sample_times, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > log.horizon):
        raise ValueError("sample times must lie within [0, horizon]")
    match_times = log.time[log.kind == MATCH]
    ab_mask = (log.kind == ABANDONMENT) & (log.category == i)
    ab_time = log.time[ab_mask]
    ab_arrival = log.arrival_time[ab_mask]
    qi = queue_step_paths(log)
    ahead0 = qi.at(t_arr)[i].astype(np.int64)
    V = np.empty(t_arr.size)
    censored = np.zeros(t_arr.size, dtype=bool)
    for s, t in enumerate(t_arr):
        k0 = int(np.searchsorted(match_times, t, side="right"))
        later = match_times[k0:]
        sel = ab_time[(ab_time > t) & (ab_arrival <= t)]
        # Marker departs at the first match with the ahead-count at 0:
        # before the j-th later match, j-1 matches and (aheads abandoned
        # strictly before it) have each consumed one ahead component.
        gone = np.arange(later.size) + np.searchsorted(sel, later, side="left")
        hits = np.nonzero(gone >= ahead0[s])[0]
        if hits.size == 0:
            V[s] = log.horizon - t
            censored[s] = True
        else:
            V[s] = later[hits[0]] - t
    return VirtualWaitSeries(category=i, times=t_arr, V=V, censored=censored)


def replay_balance_errors(log: EventLog, series: VirtualWaitSeries) -> np.ndarray:
    """Exact balance-identity violations, one per uncensored sample.

    All entries are zero for any series produced by replay on its log.
    """
    i = series.category
    arr_times = log.time[(log.kind == ARRIVAL) & (log.category == i)]
    ab_mask = (log.kind == ABANDONMENT) & (log.category == i)
    ab_time = log.time[ab_mask]
    ab_arrival = log.arrival_time[ab_mask]
    qi = queue_step_paths(log)
    out = []
    for t, v, cens in zip(series.times, series.V, series.censored):
        if cens:
            continue
        d = t + v
        arrivals = int(
            np.searchsorted(arr_times, d, side="right")
            - np.searchsorted(arr_times, t, side="right")
        )
        ab_new = int(np.count_nonzero((ab_time > t) & (ab_time <= d) & (ab_arrival > t)))
        q_at_d = int(qi.at(d)[i])
        out.append(q_at_d - (arrivals - ab_new - 1))
    return np.array(out, dtype=np.int64)


def default_sample_times(horizon: float, count: int = 21) -> np.ndarray:
    """Uniform sampling grid excluding the final 10% to limit censoring."""
    if count < 1 or horizon <= 0.0:
        raise ValueError("need count >= 1 and horizon > 0")
    return np.linspace(0.0, 0.9 * horizon, count)


class AllCensoredError(ValueError):
    """The gap statistic is undefined: every sample was censored."""


def littles_law_gaps(bundle, series_list, lambda0: float) -> dict:
    """Gap statistics max_{i,t} |Qhat_i(t) - m_i Vhat_i(t)| over
    uncensored samples, for both candidate multipliers m_i: the limit
    rate lambda0 and the finite-n rate lam_i / n.
    """
    sqrt_n = math.sqrt(bundle.n)
    per_limit = np.zeros(len(series_list))
    per_prelimit = np.zeros(len(series_list))
    excluded = 0
    used = 0
    for series in series_list:
        i = series.category
        if not np.array_equal(series.times, bundle.grid):
            raise ValueError("series sample times must equal the bundle grid")
        keep = ~series.censored
        excluded += int(series.censored.sum())
        used += int(keep.sum())
        if not np.any(keep):
            raise AllCensoredError(
                f"category {i}: all virtual-wait samples censored"
            )
        vhat = sqrt_n * series.V[keep]
        qhat = bundle.Qhat[i, keep]
        rate_n = float(bundle.params.lam[i]) / bundle.n
        per_limit[i] = np.abs(qhat - lambda0 * vhat).max()
        per_prelimit[i] = np.abs(qhat - rate_n * vhat).max()
    return {
        "gap": float(per_limit.max()),
        "gap_prelimit_multiplier": float(per_prelimit.max()),
        "per_category": per_limit,
        "per_category_prelimit": per_prelimit,
        "excluded": excluded,
        "used": used,
    }


def littles_law_gap(bundle, series_list, lambda0: float) -> float:
    """max_{i,t} |Qhat_i(t) - lambda0 Vhat_i(t)|, censored samples excluded."""
    return littles_law_gaps(bundle, series_list, lambda0)["gap"]


@dataclass(frozen=True)
class CostSpec:
    """Discounted cost: holding C_j(x) = c_j x^pexp plus abandonment
    surcharge p_j per unit of scaled abandoned flow, discount gamma,
    evaluated on [0, T_max] with an analytic tail bound for the rest.
    """

    gamma: float
    p: np.ndarray
    c: np.ndarray
    pexp: float = 1.0
    T_max: float = 1.0
    tail_tol: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=np.float64))
        self.p.flags.writeable = False
        self.c.flags.writeable = False
        if not self.gamma > 0.0:
            raise ValueError("gamma must be > 0")
        if np.any(self.p <= 0.0):
            raise ValueError("abandonment penalties must be > 0")
        if np.any(self.c < 0.0):
            raise ValueError("holding weights must be >= 0")
        if self.pexp < 1.0:
            raise ValueError("holding exponent must be >= 1")
        if not self.T_max > 0.0 or not self.tail_tol > 0.0:
            raise ValueError("T_max and tail_tol must be > 0")


def gamma_feasible(spec: CostSpec, delta: np.ndarray) -> bool:
    """Whether gamma > 2 l c0 (1+K) with c0 = max abandonment rate and
    l the holding exponent; needed for the limit theorem's uniform
    integrability, not for finite-horizon evaluation.
    """
    K = delta.size
    return spec.gamma > 2.0 * spec.pexp * float(np.max(delta)) * (1.0 + K)


@dataclass(frozen=True)
class CostEstimate:
    """Truncated cost value plus the analytic bound on the dropped tail."""

    value: float
    tail_bound: float


def cost_prelimit(log: EventLog, bundle, spec: CostSpec) -> CostEstimate:
    """Discounted holding plus abandonment cost of a scaled system.

    The holding integral is exact piecewise quadrature against the step
    path of Qhat; the abandonment part is the exact event sum
    sum p_j exp(-gamma u) / sqrt(n) over abandonments at times u. The
    tail bound uses the observed sup of |Qhat_j| as envelope M_j:
    exp(-gamma T_max)/gamma * sum_j (c_j M_j^pexp + p_j delta_j M_j).
    """
    if log.horizon < spec.T_max:
        raise ValueError("log horizon must cover T_max")
    p = log.params
    if spec.p.shape != (p.K,) or spec.c.shape != (p.K,):
        raise ValueError("cost vectors must have one entry per category")
    sqrt_n = math.sqrt(bundle.n)
    steps = queue_step_paths(log)
    holding = float(
        steps.discounted_power_integral(
            spec.gamma, spec.T_max, scale=1.0 / sqrt_n, power=spec.pexp, weights=spec.c
        ).sum()
    )
    ab = (log.kind == ABANDONMENT) & (log.time <= spec.T_max)
    surcharge = float(
        np.sum(spec.p[log.category[ab]] * np.exp(-spec.gamma * log.time[ab]))
    ) / sqrt_n
    envelope = steps.sup(spec.T_max) / sqrt_n
    tail = math.exp(-spec.gamma * spec.T_max) / spec.gamma * float(
        np.sum(spec.c * envelope**spec.pexp + spec.p * p.delta * envelope)
    )
    return CostEstimate(value=holding + surcharge, tail_bound=tail)


def cost_limit(path: LimitPath, spec: CostSpec) -> CostEstimate:
    """Trapezoidal discounted cost of a limit path over [0, T_max]."""
    if path.horizon < spec.T_max:
        raise ValueError("path horizon must cover T_max")
    q = path.params
    if spec.p.shape != (q.K,) or spec.c.shape != (q.K,):
        raise ValueError("cost vectors must have one entry per category")
    grid = path.grid
    weight = np.exp(-spec.gamma * grid)
    integrand = weight * (
        spec.c[:, None] * path.X**spec.pexp
        + (spec.p * q.delta)[:, None] * path.X
    ).sum(axis=0)
    j = int(np.searchsorted(grid, spec.T_max, side="right")) - 1
    value = float(np.trapezoid(integrand[: j + 1], grid[: j + 1]))
    if spec.T_max > grid[j]:
        dt = spec.T_max - float(grid[j])
        frac = dt / float(grid[1] - grid[0])
        end = integrand[j] + (integrand[j + 1] - integrand[j]) * frac
        value += 0.5 * dt * (float(integrand[j]) + float(end))
    envelope = np.abs(path.X[:, grid <= spec.T_max]).max(axis=1)
    tail = math.exp(-spec.gamma * spec.T_max) / spec.gamma * float(
        np.sum(spec.c * envelope**spec.pexp + spec.p * q.delta * envelope)
    )
    return CostEstimate(value=value, tail_bound=tail)


class StreamingMoments:
    """Mergeable count/mean/variance accumulator (Welford form)."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        d = other.mean - self.mean
        self.m2 += other.m2 + d * d * self.count * other.count / n
        self.mean += d * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else float("nan")


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-n Monte Carlo statistics against the limit process.

    All standard errors come from independent replications. `ks` holds
    the two-sample KS distance between terminal marginals of Qhat_i and
    X_i, one column per category.
    """

    n_values: np.ndarray
    reps: int
    cost_mean: np.ndarray
    cost_se: np.ndarray
    ks: np.ndarray
    sup_mean: np.ndarray
    sup_se: np.ndarray
    limit_cost_mean: float
    limit_cost_se: float
    gamma_ok: bool

    def rows(self) -> list[dict]:
        out = []
        for a, n in enumerate(self.n_values):
            out.append(
                {
                    "n": int(n),
                    "reps": self.reps,
                    "cost_mean": float(self.cost_mean[a]),
                    "cost_se": float(self.cost_se[a]),
                    "sup_mean": float(self.sup_mean[a]),
                    "sup_se": float(self.sup_se[a]),
                    **{
                        f"ks_{i + 1}": float(self.ks[a, i])
                        for i in range(self.ks.shape[1])
                    },
                }
            )
        out.append(
            {
                "n": 0,
                "reps": self.reps,
                "cost_mean": self.limit_cost_mean,
                "cost_se": self.limit_cost_se,
                "sup_mean": float("nan"),
                "sup_se": float("nan"),
                **{f"ks_{i + 1}": 0.0 for i in range(self.ks.shape[1])},
            }
        )
        return out

    def to_csv(self, file_path) -> None:
        import csv

        rows = self.rows()
        with open(file_path, "w", newline="") as fh:
            fh.write("# n=0 row holds the limit-process statistics\n")
            fh.write(f"# gamma_feasible={self.gamma_ok}\n")
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            for row in rows:
                writer.writerow(
                    {k: (v if isinstance(v, int) else repr(float(v))) for k, v in row.items()}
                )

    def summary(self) -> str:
        lines = [
            f"{'n':>8} {'cost_mean':>14} {'cost_se':>12} {'max_ks':>10} {'sup_mean':>12}"
        ]
        for row in self.rows():
            label = "limit" if row["n"] == 0 else str(row["n"])
            max_ks = max(
                v for k, v in row.items() if k.startswith("ks_")
            )
            lines.append(
                f"{label:>8} {row['cost_mean']:>14.6f} {row['cost_se']:>12.6f} "
                f"{max_ks:>10.4f} {row['sup_mean']:>12.6f}"
            )
        lines.append(f"gamma feasible for limit theorem: {self.gamma_ok}")
        return "\n".join(lines)


def _one_prelimit_rep(args):
    family, n, spec, grid_points, seed = args
    member = make_regime_member(family, n)
    horizon = spec.T_max
    log = simulate(member, horizon, seed)
    grid = np.linspace(0.0, horizon, grid_points)
    bundle = scale(log, member, family.lambda0, grid)
    cost = cost_prelimit(log, bundle, spec)
    terminal = bundle.Qhat[:, -1].copy()
    sup_stat = float(np.abs(bundle.Qhat).max())
    return cost.value, cost.tail_bound, terminal, sup_stat


def _one_limit_rep(args):
    limit_params, spec, n_steps, seed = args
    noise = noise_draws(limit_params.K, n_steps, spec.T_max, seed)
    path = solve_explicit(limit_params, noise)
    cost = cost_limit(path, spec)
    return cost.value, path.X[:, -1].copy()


def convergence_study(
    family: RegimeFamily,
    spec: CostSpec,
    reps: int,
    master_seed: int,
    grid_points: int = 201,
    limit_steps: int = 400,
    threads: int = 1,
) -> ConvergenceReport:
    """Compare pre-limit replications across family.n_list to the limit.

    Per n: mean/SE of the truncated discounted cost, terminal-marginal
    KS distances against limit samples, and mean/SE of the path sup of
    |Qhat|. Limit-side replications reuse one common sample set.
    """
    if reps < 2:
        raise ValueError("need reps >= 2 for standard errors")
    if not gamma_feasible(spec, family.delta_limit):
        warnings.warn(
            "gamma below the limit-theorem feasibility threshold; "
            "finite-horizon values remain well-defined",
            stacklevel=2,
        )
    lp = limit_of(family)
    limit_jobs = [
        (lp, spec, limit_steps, derive_seed(master_seed, STREAM_LIMIT_NOISE, r))
        for r in range(reps)
    ]
    limit_out = map_replications(_one_limit_rep, limit_jobs, threads)
    limit_costs = StreamingMoments()
    for value, _ in limit_out:
        limit_costs.add(value)
    limit_terminal = np.stack([term for _, term in limit_out], axis=0)

    n_values = np.array(family.n_list, dtype=np.int64)
    cost_mean = np.zeros(n_values.size)
    cost_se = np.zeros(n_values.size)
    sup_mean = np.zeros(n_values.size)
    sup_se = np.zeros(n_values.size)
    ks = np.zeros((n_values.size, family.K))
    for a, n in enumerate(n_values):
        jobs = [
            (
                family,
                int(n),
                spec,
                grid_points,
                derive_seed(master_seed, STREAM_SIMULATION, a, r),
            )
            for r in range(reps)
        ]
        out = map_replications(_one_prelimit_rep, jobs, threads)
        costs = StreamingMoments()
        sups = StreamingMoments()
        for value, _, _, sup_stat in out:
            costs.add(value)
            sups.add(sup_stat)
        terminal = np.stack([term for _, _, term, _ in out], axis=0)
        for i in range(family.K):
            ks[a, i] = _stats.ks_2samp(terminal[:, i], limit_terminal[:, i]).statistic
        cost_mean[a], cost_se[a] = costs.mean, costs.stderr
        sup_mean[a], sup_se[a] = sups.mean, sups.stderr
    return ConvergenceReport(
        n_values=n_values,
        reps=reps,
        cost_mean=cost_mean,
        cost_se=cost_se,
        ks=ks,
        sup_mean=sup_mean,
        sup_se=sup_se,
        limit_cost_mean=limit_costs.mean,
        limit_cost_se=limit_costs.stderr,
        gamma_ok=gamma_feasible(spec, family.delta_limit),
    )
