"""Event-driven simulation of one finite matching system.

The system is a continuous-time Markov chain: category-i arrivals at
rate lam_i, each mortal waiting component abandons at rate delta_i, and
an arrival to category i while every other queue is nonempty triggers
an instantaneous match that consumes the head of every queue (the
arriver included, as its own queue's head).  One exponential clock at
the aggregate rate drives the chain; the event stream is selected with
probability proportional to its rate, which gives the same law as
per-component clocks at O(1) memory per component.

Initial components have infinite patience by default (they are excluded
from the abandonment rate); `mortal_initial=True` makes them behave
like ordinary arrivals for sensitivity runs.

Two interchangeable kernels produce bit-identical logs from the same
seed: a compiled one (matchq._sim_core) and the pure-Python reference
below.  Both draw from one PCG64 stream in a fixed order per
transition: holding time, stream selection, then (abandonments only)
the victim position.
"""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import events as ev
from .params import SystemParams

try:
    from . import _sim_core
except ImportError:
    _sim_core = None


def available_backends() -> tuple[str, ...]:
    return ("c", "python") if _sim_core is not None else ("python",)


def default_backend() -> str:
    env = os.environ.get("MATCHQ_BACKEND", "").strip().lower()
    if env in ("c", "python"):
        return env
    return "c" if _sim_core is not None else "python"


@dataclass(frozen=True)
class ComponentRecord:
    """One waiting component: its category, arrival number, arrival time.

    Initial components carry indices <= 0 (oldest first) and arrival
    time 0; true arrivals are numbered 1, 2, ... per category.
    """

    category: int
    arrival_index: int
    arrival_time: float


@dataclass(frozen=True)
class Arrival:
    time: float
    category: int


@dataclass(frozen=True)
class Abandonment:
    time: float
    category: int
    arrival_index: int
    arrival_time: float


@dataclass(frozen=True)
class Match:
    time: float


class QueueState:
    """Live per-category FIFO queues plus the simulation clock."""

    __slots__ = ("q", "immortal", "now", "arrival_counts")

    def __init__(self, q, immortal, now, arrival_counts):
        self.q = q
        self.immortal = immortal
        self.now = now
        self.arrival_counts = arrival_counts

    @classmethod
    def initial(cls, params: SystemParams, mortal_initial: bool = False) -> "QueueState":
        q = []
        for i in range(params.K):
            q0 = int(params.q0[i])
            q.append(
                deque(
                    ComponentRecord(i, j - q0 + 1, 0.0) for j in range(q0)
                )
            )
        immortal = [0 if mortal_initial else int(v) for v in params.q0]
        return cls(q=q, immortal=immortal, now=0.0, arrival_counts=[0] * params.K)

    def counts(self) -> np.ndarray:
        return np.array([len(d) for d in self.q], dtype=np.int64)

    def mortal_count(self, i: int) -> int:
        return len(self.q[i]) - self.immortal[i]

    def pop_head(self, i: int) -> ComponentRecord:
        rec = self.q[i].popleft()
        if self.immortal[i] > 0:
            self.immortal[i] -= 1
        return rec


def next_event_sampler(
    state: QueueState,
    params: SystemParams,
    rng: np.random.Generator,
    deadline: float | None = None,
    arrivals_enabled: bool = True,
):
    """Draw the next transition from the current state.

    Returns (holding_time, event) where event is an Arrival or an
    Abandonment at absolute time state.now + holding_time.  Returns
    (inf, None) when the total rate is zero, and (holding_time, None)
    when a deadline is given and the event would land beyond it (the
    stream-selection draw is then not consumed).  The abandoning
    component is chosen uniformly among the mortal occupants, which is
    the correct joint law because exponential patience makes residual
    lifetimes exchangeable.
    """
    K = params.K
    lam_tot = 0.0
    if arrivals_enabled:
        for i in range(K):
            lam_tot += params.lam[i]
    ab_tot = 0.0
    for i in range(K):
        ab_tot += params.delta[i] * state.mortal_count(i)
    total = lam_tot + ab_tot
    if total <= 0.0:
        return math.inf, None

    u1 = rng.random()
    holding = -math.log1p(-u1) / total
    t = state.now + holding
    if deadline is not None and t > deadline:
        return holding, None

    u2 = rng.random()
    target = u2 * total
    sel = -1
    sel_arrival = False
    last_pos = -1
    last_pos_arrival = False
    if arrivals_enabled:
        for i in range(K):
            rate = params.lam[i]
            if rate > 0.0:
                last_pos = i
                last_pos_arrival = True
            target -= rate
            if target < 0.0 and rate > 0.0:
                sel = i
                sel_arrival = True
                break
    if sel < 0:
        for i in range(K):
            rate = params.delta[i] * state.mortal_count(i)
            if rate > 0.0:
                last_pos = i
                last_pos_arrival = False
            target -= rate
            if target < 0.0 and rate > 0.0:
                sel = i
                break
    if sel < 0:
        # Floating-point underflow at the right edge of the scan.
        sel = last_pos
        sel_arrival = last_pos_arrival
    if sel_arrival:
        return holding, Arrival(time=t, category=sel)
    m = state.mortal_count(sel)
    u3 = rng.random()
    pos = int(u3 * m)
    if pos >= m:
        pos = m - 1
    rec = state.q[sel][state.immortal[sel] + pos]
    return holding, Abandonment(
        time=t, category=sel, arrival_index=rec.arrival_index, arrival_time=rec.arrival_time
    )


def apply_event(state: QueueState, event) -> tuple:
    """Advance the state by one transition; return the log rows it emits.

    An arrival that finds every other queue nonempty emits
    (Arrival, Match) at one timestamp and consumes the head of every
    queue; the arriver is never stored.
    """
    state.now = event.time
    if isinstance(event, Arrival):
        i = event.category
        state.arrival_counts[i] += 1
        triggers = all(len(state.q[j]) > 0 for j in range(len(state.q)) if j != i)
        if triggers:
            for j in range(len(state.q)):
                if j != i:
                    state.pop_head(j)
            return (event, Match(time=event.time))
        state.q[i].append(
            ComponentRecord(i, state.arrival_counts[i], event.time)
        )
        return (event,)
    i = event.category
    pos = None
    offset = state.immortal[i]
    for p in range(offset, len(state.q[i])):
        if state.q[i][p].arrival_index == event.arrival_index:
            pos = p
            break
    if pos is None:
        raise ev.InvariantError("abandoning component not found in its queue")
    del state.q[i][pos]
    return (event,)


def _simulate_python(params, horizon, rng, mortal_initial, arrivals_enabled, max_rows):
    state = QueueState.initial(params, mortal_initial)
    time_col: list[float] = []
    kind_col: list[int] = []
    cat_col: list[int] = []
    aidx_col: list[int] = []
    atime_col: list[float] = []
    while True:
        if max_rows and len(time_col) >= max_rows:
            break
        holding, event = next_event_sampler(
            state, params, rng, deadline=horizon, arrivals_enabled=arrivals_enabled
        )
        if event is None:
            break
        for row in apply_event(state, event):
            time_col.append(row.time)
            if isinstance(row, Arrival):
                kind_col.append(ev.ARRIVAL)
                cat_col.append(row.category)
                aidx_col.append(state.arrival_counts[row.category])
                atime_col.append(row.time)
            elif isinstance(row, Abandonment):
                kind_col.append(ev.ABANDONMENT)
                cat_col.append(row.category)
                aidx_col.append(row.arrival_index)
                atime_col.append(row.arrival_time)
            else:
                kind_col.append(ev.MATCH)
                cat_col.append(-1)
                aidx_col.append(0)
                atime_col.append(row.time)
    return (
        np.array(time_col, dtype=np.float64),
        np.array(kind_col, dtype=np.int8),
        np.array(cat_col, dtype=np.int16),
        np.array(aidx_col, dtype=np.int64),
        np.array(atime_col, dtype=np.float64),
        state.counts(),
    )


def simulate(
    params: SystemParams,
    horizon: float,
    seed: int,
    mortal_initial: bool = False,
    arrivals_enabled: bool = True,
    max_rows: int = 0,
    backend: str = "auto",
) -> ev.EventLog:
    """Run one replication over [0, horizon] and return its event log.

    Deterministic: identical (params, horizon, seed) give bit-identical
    logs on either backend.  `arrivals_enabled=False` is a test hook
    that silences the arrival streams (pure-abandonment dynamics).
    """
    if not horizon > 0.0:
        raise ValueError("horizon must be > 0")
    if backend == "auto":
        backend = default_backend()
    if backend not in available_backends():
        raise ValueError(f"backend {backend!r} not available (have {available_backends()})")
    bitgen = np.random.PCG64(seed)
    if backend == "c":
        cols = _sim_core.simulate_core(
            np.asarray(params.lam, dtype=np.float64),
            np.asarray(params.delta, dtype=np.float64),
            np.asarray(params.q0, dtype=np.int64),
            float(horizon),
            bitgen,
            bool(mortal_initial),
            bool(arrivals_enabled),
            int(max_rows),
        )
    else:
        rng = np.random.Generator(bitgen)
        cols = _simulate_python(
            params, float(horizon), rng, mortal_initial, arrivals_enabled, max_rows
        )
    time_col, kind_col, cat_col, aidx_col, atime_col, q_final = cols
    return ev.EventLog(
        params=params,
        horizon=float(horizon),
        seed=int(seed),
        mortal_initial=bool(mortal_initial),
        time=time_col,
        kind=kind_col,
        category=cat_col,
        arrival_index=aidx_col,
        arrival_time=atime_col,
        q_final=np.asarray(q_final, dtype=np.int64),
    )
