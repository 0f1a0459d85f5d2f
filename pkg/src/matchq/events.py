"""Columnar event logs and exact step-path algebra.

A simulation run is recorded as a time-ordered table of rows, one per
arrival, abandonment, or match.  A match triggered by an arrival shares
the arrival's timestamp (one transition, two rows); every other
timestamp is almost surely unique.  All cumulative counters and
integrals downstream are computed from these rows exactly, never by
grid quadrature: queue lengths are step functions, so piecewise sums
are exact.

Row effect on queue lengths:
  arrival row      +1 to its category
  abandonment row  -1 to its category
  match row        -1 to every category (the triggering arriver is
                   enqueued by its own row and consumed here)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .params import SystemParams

ARRIVAL = 0
ABANDONMENT = 1
MATCH = 2

KIND_NAMES = {ARRIVAL: "arrival", ABANDONMENT: "abandonment", MATCH: "match"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}


class InvariantError(AssertionError):
    """Raised when an event log violates a structural identity."""


@dataclass(frozen=True)
class EventLog:
    """Immutable record of one simulation run.

    Columns (parallel arrays, one entry per row):
      time          event time
      kind          ARRIVAL, ABANDONMENT, or MATCH
      category      0-based category; -1 for match rows
      arrival_index k for the k-th arrival to its category (k >= 1);
                    indices <= 0 denote initial components; 0 for match rows
      arrival_time  the component's arrival time (abandonment rows refer
                    to the abandoned component; match rows carry the row time)
    """

    params: SystemParams
    horizon: float
    seed: int
    mortal_initial: bool
    time: np.ndarray
    kind: np.ndarray
    category: np.ndarray
    arrival_index: np.ndarray
    arrival_time: np.ndarray
    q_final: np.ndarray

    def __post_init__(self):
        n = self.time.shape[0]
        for name in ("kind", "category", "arrival_index", "arrival_time"):
            if getattr(self, name).shape != (n,):
                raise InvariantError(f"column {name} length mismatch")
        for name in ("time", "kind", "category", "arrival_index", "arrival_time", "q_final"):
            getattr(self, name).flags.writeable = False

    @property
    def n_rows(self) -> int:
        return int(self.time.shape[0])

    def category_times(self, kind: int, category: int) -> np.ndarray:
        """Times of all rows of one kind in one category (sorted)."""
        return self.time[(self.kind == kind) & (self.category == category)]

    def counts_at(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cumulative (A_i(t), G_i(t), R(t)) for scalar or vector t.

        Counts include rows with time <= t (right-continuous counters).
        """
        t = np.asarray(t, dtype=np.float64)
        K = self.params.K
        A = np.empty((K,) + t.shape, dtype=np.int64)
        G = np.empty((K,) + t.shape, dtype=np.int64)
        for i in range(K):
            A[i] = np.searchsorted(self.category_times(ARRIVAL, i), t, side="right")
            G[i] = np.searchsorted(self.category_times(ABANDONMENT, i), t, side="right")
        R = np.searchsorted(self.time[self.kind == MATCH], t, side="right")
        return A, G, R

    def queue_at(self, t) -> np.ndarray:
        """Queue-length vector Q(t) (right-continuous) for scalar or vector t."""
        A, G, R = self.counts_at(t)
        return self.params.q0.reshape((-1,) + (1,) * (A.ndim - 1)) + A - G - R


def recompute_R(log: EventLog, t, q0=None):
    """min_j {q0_j + A_j(t) - G_j(t)}: the matching count recomputed from
    net inputs.  Must equal the number of match rows up to t."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr > log.horizon):
        raise ValueError("t beyond log horizon")
    if q0 is None:
        q0 = log.params.q0
    q0 = np.asarray(q0, dtype=np.int64)
    A, G, _ = log.counts_at(t_arr)
    vals = q0.reshape((-1,) + (1,) * (A.ndim - 1)) + A - G
    out = vals.min(axis=0)
    return out if out.ndim else int(out)


def match_count(log: EventLog, t):
    """Number of match rows with time <= t."""
    return np.searchsorted(log.time[log.kind == MATCH], t, side="right")


@dataclass(frozen=True)
class StepPaths:
    """Right-continuous vector step function built from event rows.

    `values[r]` holds the path value on [times[r], times[r+1]); `v0`
    holds it on [0, times[0]).  Tied times (arrival plus immediate
    match) produce zero-width segments, so lookups and integrals see
    only the post-transition value.
    """

    times: np.ndarray
    values: np.ndarray
    v0: np.ndarray

    def _padded(self):
        values = np.concatenate([self.v0[None, :], self.values], axis=0)
        times = np.concatenate([[0.0], self.times])
        return times, values

    def at(self, t) -> np.ndarray:
        """Path value at time(s) t, shape (K,) + t.shape."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right")
        _, values = self._padded()
        return np.moveaxis(values[idx], -1, 0)

    def integral(self, t) -> np.ndarray:
        """Exact cumulative integral of each coordinate over [0, t],
        shape (K,) + t.shape."""
        t = np.asarray(t, dtype=np.float64)
        times, values = self._padded()
        # cum[r] = integral up to times[r]; segment r holds values[r].
        widths = np.diff(np.concatenate([times, [times[-1]]]))
        cum = np.concatenate(
            [np.zeros((1, self.v0.size)), np.cumsum(values[:-1] * widths[:-1, None], axis=0)],
            axis=0,
        ) if times.size > 1 else np.zeros((1, self.v0.size))
        idx = np.searchsorted(self.times, t, side="right")
        out = cum[idx] + values[idx] * (t - times[idx])[..., None]
        return np.moveaxis(out, -1, 0)

    def discounted_power_integral(
        self, gamma: float, upto: float, scale: float, power: float, weights
    ) -> np.ndarray:
        """Exact per-coordinate value of
        integral_0^upto exp(-gamma*s) * w_j * (scale*v_j(s))**power ds."""
        if gamma <= 0.0:
            raise ValueError("gamma must be > 0")
        mask = self.times < upto
        starts = np.concatenate([[0.0], self.times[mask]])
        ends = np.concatenate([self.times[mask], [upto]])
        vals = np.concatenate([self.v0[None, :], self.values[mask]], axis=0)
        decay = (np.exp(-gamma * starts) - np.exp(-gamma * ends)) / gamma
        w = np.asarray(weights, dtype=np.float64)
        transformed = (scale * vals) ** power if power != 1.0 else scale * vals
        return w * (decay[:, None] * transformed).sum(axis=0)

    def sup(self, upto: float) -> np.ndarray:
        """Per-coordinate supremum over [0, upto]."""
        mask = self.times <= upto
        vals = np.concatenate([self.v0[None, :], self.values[mask]], axis=0)
        return vals.max(axis=0)


def queue_step_paths(log: EventLog) -> StepPaths:
    """Queue lengths as an exact step function of time."""
    K = log.params.K
    delta = np.zeros((log.n_rows, K), dtype=np.int64)
    rows = np.arange(log.n_rows)
    arr = log.kind == ARRIVAL
    ab = log.kind == ABANDONMENT
    mt = log.kind == MATCH
    delta[rows[arr], log.category[arr]] = 1
    delta[rows[ab], log.category[ab]] = -1
    delta[mt, :] -= 1
    values = log.params.q0[None, :] + np.cumsum(delta, axis=0)
    return StepPaths(
        times=log.time, values=values.astype(np.float64), v0=log.params.q0.astype(np.float64)
    )


def transition_boundaries(log: EventLog) -> np.ndarray:
    """Row indices that end a transition (last row of each tied-time group).

    An arrival that triggers a match writes two rows at one timestamp;
    state-space invariants hold at these boundaries, not between the
    two rows of a pair.
    """
    if log.n_rows == 0:
        return np.empty(0, dtype=np.int64)
    last = np.nonzero(np.diff(log.time) != 0.0)[0]
    return np.concatenate([last, [log.n_rows - 1]])


def verify_invariants(log: EventLog) -> dict:
    """Exact structural checks over the whole log.

    Verifies, at every transition boundary: min_i Q_i = 0, Q_i >= 0,
    conservation Q_i = q0_i + A_i - G_i - R, and the matching-count
    identity R = min_j {q0_j + A_j - G_j}.  Also checks time ordering,
    tie structure, and per-category arrival numbering.  Raises
    InvariantError on the first violation; returns summary counts.
    """
    K = log.params.K
    n = log.n_rows
    if n == 0:
        if int(log.params.q0.min()) != 0 or not np.array_equal(log.q_final, log.params.q0):
            raise InvariantError("empty log with inconsistent initial state")
        return {"rows": 0, "transitions": 0, "arrivals": 0, "abandonments": 0, "matches": 0}
    dt = np.diff(log.time)
    if np.any(dt < 0.0):
        raise InvariantError("event times decrease")
    ties = np.nonzero(dt == 0.0)[0]
    # The only legal tie is an arrival row immediately followed by its match.
    if np.any(log.kind[ties] != ARRIVAL) or np.any(log.kind[ties + 1] != MATCH):
        raise InvariantError("tied timestamps must be (arrival, match) pairs")
    for i in range(K):
        idx = log.arrival_index[(log.kind == ARRIVAL) & (log.category == i)]
        if idx.size and not np.array_equal(idx, np.arange(1, idx.size + 1)):
            raise InvariantError(f"arrival numbering broken in category {i}")

    arr = log.kind == ARRIVAL
    ab = log.kind == ABANDONMENT
    mt = log.kind == MATCH
    rows = np.arange(n)
    A = np.zeros((n, K), dtype=np.int64)
    G = np.zeros((n, K), dtype=np.int64)
    A[rows[arr], log.category[arr]] = 1
    G[rows[ab], log.category[ab]] = 1
    A = np.cumsum(A, axis=0)
    G = np.cumsum(G, axis=0)
    R = np.cumsum(mt.astype(np.int64))
    Q = log.params.q0[None, :] + A - G - R[:, None]

    b = transition_boundaries(log)
    if np.any(Q[b] < 0):
        raise InvariantError("negative queue length at a transition boundary")
    if np.any(Q[b].min(axis=1) != 0):
        raise InvariantError("no empty queue at a transition boundary")
    # R recomputed from net inputs must equal the match-row count.
    r_min = (log.params.q0[None, :] + A[b] - G[b]).min(axis=1)
    if np.any(r_min != R[b]):
        raise InvariantError("matching-count identity violated")
    if not np.array_equal(Q[-1], log.q_final):
        raise InvariantError("terminal queue state mismatch")
    return {
        "rows": int(n),
        "transitions": int(b.size),
        "arrivals": int(arr.sum()),
        "abandonments": int(ab.sum()),
        "matches": int(mt.sum()),
    }


def to_csv(log: EventLog, path) -> None:
    """Write the documented columnar form: time, kind, category, arrival_index.

    Categories are 1-based in the file; match rows leave category and
    arrival_index empty.  Metadata rides in leading comment lines.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# K={log.params.K} n={log.params.n} seed={log.seed}\n")
        fh.write(
            f"# horizon={float(log.horizon)!r} mortal_initial={int(log.mortal_initial)}\n"
        )
        fh.write(f"# lam={','.join(repr(float(v)) for v in log.params.lam)}\n")
        fh.write(f"# delta={','.join(repr(float(v)) for v in log.params.delta)}\n")
        fh.write(f"# q0={','.join(str(int(v)) for v in log.params.q0)}\n")
        writer = csv.writer(fh)
        writer.writerow(["time", "kind", "category", "arrival_index"])
        for r in range(log.n_rows):
            k = int(log.kind[r])
            if k == MATCH:
                writer.writerow([repr(float(log.time[r])), KIND_NAMES[k], "", ""])
            else:
                writer.writerow(
                    [
                        repr(float(log.time[r])),
                        KIND_NAMES[k],
                        int(log.category[r]) + 1,
                        int(log.arrival_index[r]),
                    ]
                )


def from_csv(path) -> EventLog:
    """Reconstruct an EventLog written by `to_csv`."""
    meta: dict[str, str] = {}
    data_lines: list[str] = []
    with open(path, newline="") as fh:
        for line in fh.read().splitlines():
            if line.startswith("#"):
                for tok in line[1:].strip().split(" "):
                    key, _, val = tok.partition("=")
                    meta[key] = val
            elif line:
                data_lines.append(line)
    body = list(csv.reader(data_lines[1:]))
    K = int(meta["K"])
    params = SystemParams(
        K=K,
        n=int(meta["n"]),
        lam=np.array([float(v) for v in meta["lam"].split(",")]),
        delta=np.array([float(v) for v in meta["delta"].split(",")]),
        q0=np.array([int(v) for v in meta["q0"].split(",")]),
    )
    n = len(body)
    time = np.empty(n)
    kind = np.empty(n, dtype=np.int8)
    category = np.empty(n, dtype=np.int16)
    arrival_index = np.empty(n, dtype=np.int64)
    for r, (t, k, c, a) in enumerate(body):
        time[r] = float(t)
        kind[r] = KIND_CODES[k]
        category[r] = int(c) - 1 if c else -1
        arrival_index[r] = int(a) if a else 0
    # Abandonment rows recover the abandoned component's arrival time by
    # looking up the arrival row with the same (category, index); initial
    # components (index <= 0) arrived at time 0.
    arrival_time = time.copy()
    lookup: dict[tuple[int, int], float] = {}
    for r in range(n):
        if kind[r] == ARRIVAL:
            lookup[(int(category[r]), int(arrival_index[r]))] = float(time[r])
    for r in range(n):
        if kind[r] == ABANDONMENT:
            arrival_time[r] = lookup.get((int(category[r]), int(arrival_index[r])), 0.0)
    deltas = np.zeros((n, K), dtype=np.int64)
    rr = np.arange(n)
    arr = kind == ARRIVAL
    ab = kind == ABANDONMENT
    deltas[rr[arr], category[arr]] = 1
    deltas[rr[ab], category[ab]] = -1
    deltas[kind == MATCH, :] -= 1
    q_final = params.q0 + deltas.sum(axis=0)
    return EventLog(
        params=params,
        horizon=float(meta["horizon"]),
        seed=int(meta["seed"]),
        mortal_initial=bool(int(meta["mortal_initial"])),
        time=time,
        kind=kind,
        category=category,
        arrival_index=arrival_index,
        arrival_time=arrival_time,
        q_final=q_final,
    )
