"""Truncated-state-space oracle for the matching system's Markov chain.

The state space is every vector s with 0 <= s_j <= cap and min_j s_j = 0
(at least one queue empty).  Transition rates from s:

  arrival to i, some other queue empty   -> s + e_i        at rate lam_i
  arrival to i, all other queues busy    -> s - e_j (j!=i)  at rate lam_i
  abandonment in i                        -> s - e_i        at rate s_i*delta_i

Arrivals that would push a coordinate past the cap are dropped (their
rate self-loops), which keeps the generator conservative; the induced
truncation error is measured empirically by differencing two caps.
Transient distributions come from uniformization: a Poisson mixture of
powers of the discrete skeleton P = I + Q/rate_bound, with the Poisson
tail truncated below `tol`.

This module is the brute-force reference the event-driven simulator is
validated against; it assumes every waiting component is mortal, so
comparisons use q0 = 0 (or `mortal_initial=True` runs).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .params import SystemParams


class CapacityError(ValueError):
    """Raised when the truncated state space would be too large."""


# Practical ceiling on enumerable states; K=2,3 with cap <= 50 stays far below.
MAX_STATES = 2_000_000


@dataclass(frozen=True)
class TruncatedCTMC:
    """Explicit generator on the capped state space."""

    params: SystemParams
    cap: int
    states: np.ndarray
    Q: sp.csr_matrix

    @property
    def n_states(self) -> int:
        return int(self.states.shape[0])

    def index_of(self, state) -> int:
        key = tuple(int(v) for v in state)
        idx = self._index().get(key)
        if idx is None:
            raise KeyError(f"state {key} not in truncated space")
        return idx

    def _index(self) -> dict:
        if not hasattr(self, "_index_cache"):
            object.__setattr__(
                self,
                "_index_cache",
                {tuple(int(v) for v in s): i for i, s in enumerate(self.states)},
            )
        return self._index_cache

    def point_mass(self, state) -> np.ndarray:
        p0 = np.zeros(self.n_states)
        p0[self.index_of(state)] = 1.0
        return p0


def build_truncated_ctmc(params: SystemParams, cap: int) -> TruncatedCTMC:
    """Enumerate states with coordinates <= cap and assemble the generator."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    K = params.K
    n_states = (cap + 1) ** K - cap**K
    if n_states > MAX_STATES:
        raise CapacityError(
            f"{n_states} states exceed the {MAX_STATES} limit (K={K}, cap={cap})"
        )
    states = np.array(
        [s for s in itertools.product(range(cap + 1), repeat=K) if min(s) == 0],
        dtype=np.int64,
    )
    index = {tuple(int(v) for v in s): i for i, s in enumerate(states)}
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    lam = params.lam
    delta = params.delta
    for r, s in enumerate(map(tuple, states)):
        out = 0.0
        for i in range(K):
            others_busy = all(s[j] > 0 for j in range(K) if j != i)
            if others_busy:
                target = tuple(s[j] - 1 if j != i else s[j] for j in range(K))
            elif s[i] + 1 <= cap:
                target = tuple(s[j] + 1 if j == i else s[j] for j in range(K))
            else:
                continue  # capped arrival: rate self-loops
            rows.append(r)
            cols.append(index[target])
            vals.append(float(lam[i]))
            out += float(lam[i])
        for i in range(K):
            if s[i] > 0:
                rate = float(s[i] * delta[i])
                target = tuple(s[j] - 1 if j == i else s[j] for j in range(K))
                rows.append(r)
                cols.append(index[target])
                vals.append(rate)
                out += rate
        rows.append(r)
        cols.append(r)
        vals.append(-out)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n_states, n_states))
    return TruncatedCTMC(params=params, cap=cap, states=states, Q=Q)


def transient_distribution(
    ctmc: TruncatedCTMC, p0: np.ndarray, t: float, tol: float = 1e-10
) -> np.ndarray:
    """Distribution at time t via uniformization, Poisson tail below tol."""
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (ctmc.n_states,):
        raise ValueError("p0 has wrong length for the state enumeration")
    if abs(p0.sum() - 1.0) > 1e-9 or np.any(p0 < 0.0):
        raise ValueError("p0 must be a probability distribution")
    rate_bound = float(-ctmc.Q.diagonal().min())
    mu = rate_bound * t
    if mu == 0.0:
        return p0.copy()
    P = sp.eye(ctmc.n_states, format="csr") + ctmc.Q.multiply(1.0 / rate_bound).tocsr()
    out = np.zeros_like(p0)
    v = p0.copy()
    weight = math.exp(-mu)
    cum = weight
    out += weight * v
    k = 0
    # Keep adding mixture terms until the remaining Poisson mass is below
    # tol; the k >= mu guard prevents stopping left of the mode.
    while (1.0 - cum) > tol or k < mu:
        k += 1
        if k > 100 + 10 * mu + ctmc.n_states:
            raise RuntimeError("uniformization failed to converge")
        v = v @ P
        weight *= mu / k
        cum += weight
        out += weight * v
    return out


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """TV distance between two distributions on a common enumeration."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions live on different enumerations")
    return 0.5 * float(np.abs(p - q).sum())


def empirical_distribution(ctmc: TruncatedCTMC, terminal_states: np.ndarray) -> np.ndarray:
    """Empirical distribution of terminal queue vectors on the enumeration.

    Coordinates beyond the cap are clipped onto the boundary, which only
    matters when the chain actually exceeds the cap (choose caps to make
    that negligible).
    """
    arr = np.asarray(terminal_states, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != ctmc.params.K:
        raise ValueError("terminal_states must be (reps, K)")
    clipped = np.minimum(arr, ctmc.cap)
    counts = np.zeros(ctmc.n_states)
    index = ctmc._index()
    for row in map(tuple, clipped.tolist()):
        counts[index[row]] += 1.0
    return counts / counts.sum()
