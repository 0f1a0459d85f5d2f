"""Virtual-wait replay, rate-conservation gaps, and discounted costs."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matchq.params import LimitParams, RegimeFamily, SystemParams, make_regime_member
from matchq.events import ABANDONMENT, ARRIVAL, MATCH, EventLog
from matchq.limits import LimitPath
from matchq.scaling import scale
from matchq.simulate import simulate
from matchq.diagnostics import (
    AllCensoredError,
    CostSpec,
    StreamingMoments,
    convergence_study,
    cost_limit,
    cost_prelimit,
    default_sample_times,
    gamma_feasible,
    littles_law_gap,
    littles_law_gaps,
    replay_balance_errors,
    virtual_wait_replay,
)

PARAMS2 = SystemParams(K=2, n=1, lam=(2.0, 3.0), delta=(1.0, 0.5), q0=(2, 0))


def hand_log():
    """Marker walk-through: two components ahead at time zero; one is
    matched away, one abandons, and the next match serves the marker."""
    time = np.array([0.3, 0.3, 0.5, 0.6, 0.8, 0.8])
    kind = np.array([ARRIVAL, MATCH, ABANDONMENT, ARRIVAL, ARRIVAL, MATCH], dtype=np.int8)
    category = np.array([1, -1, 0, 0, 1, -1], dtype=np.int16)
    arrival_index = np.array([1, 0, 0, 1, 2, 0], dtype=np.int64)
    arrival_time = np.array([0.3, 0.3, 0.0, 0.6, 0.8, 0.8])
    return EventLog(
        params=PARAMS2, horizon=1.0, seed=0, mortal_initial=True,
        time=time, kind=kind, category=category, arrival_index=arrival_index,
        arrival_time=arrival_time, q_final=np.array([0, 0], dtype=np.int64),
    )


def test_virtual_wait_hand_values():
    log = hand_log()
    series = virtual_wait_replay(log, 0, np.array([0.0, 0.55, 0.65]))
    assert series.category == 0
    assert not series.censored[0] and series.V[0] == pytest.approx(0.8)
    # At 0.55 the queue is empty: the next match serves the marker.
    assert not series.censored[1] and series.V[1] == pytest.approx(0.25)
    # At 0.65 one fresh component is ahead and no further match comes.
    assert series.censored[2]
    assert series.V[2] == pytest.approx(1.0 - 0.65)


def test_virtual_wait_counts_only_older_abandonments():
    # An abandonment of a component that arrived after the sample time
    # must not advance the marker.
    log = hand_log()
    series = virtual_wait_replay(log, 1, np.array([0.4]))
    # Category 2 queue is empty at 0.4; its next match is at 0.8.
    assert not series.censored[0] and series.V[0] == pytest.approx(0.4)


def test_replay_balance_identity_on_simulated_logs():
    for seed in (1, 2, 3):
        log = simulate(PARAMS2, 2.0, seed=seed, mortal_initial=True)
        times = default_sample_times(2.0)
        for cat in range(2):
            errors = replay_balance_errors(log, virtual_wait_replay(log, cat, times))
            assert errors.size > 0
            assert np.all(errors == 0)


def test_default_sample_times_span():
    times = default_sample_times(2.0)
    assert times.shape == (21,)
    assert times[0] == 0.0 and times[-1] == pytest.approx(1.8)
    with pytest.raises(ValueError):
        default_sample_times(0.0)


def test_littles_law_gap_structure():
    fam = RegimeFamily(K=2, lambda0=1.0, beta=np.array([0.5, -0.5]),
                       delta_limit=np.ones(2), x=np.zeros(2), n_list=(49,))
    member = make_regime_member(fam, 49)
    log = simulate(member, 1.0, seed=5)
    times = default_sample_times(1.0)
    bundle = scale(log, member, fam.lambda0, times)
    series = [virtual_wait_replay(log, i, times) for i in range(2)]
    gaps = littles_law_gaps(bundle, series, fam.lambda0)
    assert set(gaps) == {"gap", "gap_prelimit_multiplier", "per_category",
                         "per_category_prelimit", "excluded", "used"}
    assert gaps["gap"] == littles_law_gap(bundle, series, fam.lambda0)
    assert gaps["gap"] >= 0.0 and gaps["used"] + gaps["excluded"] == 42
    # With beta != 0 the two candidate multipliers genuinely differ.
    assert gaps["gap"] != gaps["gap_prelimit_multiplier"]


def test_littles_law_all_censored():
    log = simulate(PARAMS2, 1.0, seed=7, arrivals_enabled=False, mortal_initial=False)
    times = default_sample_times(1.0)
    bundle = scale(log, PARAMS2, 1.0, times)
    series = [virtual_wait_replay(log, i, times) for i in range(2)]
    assert np.all(series[0].censored)
    with pytest.raises(AllCensoredError):
        littles_law_gaps(bundle, series, 1.0)


def test_littles_law_requires_matching_grid():
    log = simulate(PARAMS2, 1.0, seed=7)
    times = default_sample_times(1.0)
    bundle = scale(log, PARAMS2, 1.0, times)
    series = [virtual_wait_replay(log, i, times[:-1]) for i in range(2)]
    with pytest.raises(ValueError):
        littles_law_gaps(bundle, series, 1.0)


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(gamma=0.0, p=np.ones(2), c=np.ones(2))
    with pytest.raises(ValueError):
        CostSpec(gamma=1.0, p=np.array([1.0, 0.0]), c=np.ones(2))
    with pytest.raises(ValueError):
        CostSpec(gamma=1.0, p=np.ones(2), c=-np.ones(2))
    with pytest.raises(ValueError):
        CostSpec(gamma=1.0, p=np.ones(2), c=np.ones(2), pexp=0.5)
    with pytest.raises(ValueError):
        CostSpec(gamma=1.0, p=np.ones(2), c=np.ones(2), T_max=0.0)


def test_gamma_feasibility_is_strict():
    spec = CostSpec(gamma=6.0, p=np.ones(2), c=np.ones(2), pexp=1.0)
    assert not gamma_feasible(spec, np.ones(2))  # threshold 2*1*1*3 = 6
    assert gamma_feasible(CostSpec(gamma=6.01, p=np.ones(2), c=np.ones(2)), np.ones(2))
    assert not gamma_feasible(spec, np.array([1.0, 2.0]))


def frozen_log(time, kind, category, arrival_index, arrival_time, q_final, params, n):
    p = SystemParams(K=params.K, n=n, lam=params.lam, delta=params.delta, q0=params.q0)
    return EventLog(
        params=p, horizon=1.0, seed=0, mortal_initial=True,
        time=np.asarray(time, dtype=np.float64),
        kind=np.asarray(kind, dtype=np.int8),
        category=np.asarray(category, dtype=np.int16),
        arrival_index=np.asarray(arrival_index, dtype=np.int64),
        arrival_time=np.asarray(arrival_time, dtype=np.float64),
        q_final=np.asarray(q_final, dtype=np.int64),
    )


def test_cost_prelimit_constant_queue_closed_form():
    base = SystemParams(K=2, n=1, lam=(1.0, 1.0), delta=(1.0, 1.0), q0=(1, 0))
    log = frozen_log([], [], [], [], [], [1, 0], base, n=4)
    spec = CostSpec(gamma=2.5, p=np.ones(2), c=np.array([1.0, 3.0]), T_max=1.0)
    bundle = scale(log, log.params, 1.0, np.linspace(0.0, 1.0, 11))
    est = cost_prelimit(log, bundle, spec)
    expected = 0.5 * (1.0 - math.exp(-2.5)) / 2.5
    assert est.value == pytest.approx(expected, abs=1e-14)
    # Tail envelope: Qhat = (1/2, 0) held at T_max.
    expected_tail = math.exp(-2.5) / 2.5 * (0.5 + 0.5)
    assert est.tail_bound == pytest.approx(expected_tail, abs=1e-14)


def test_cost_prelimit_abandonment_surcharge():
    base = SystemParams(K=2, n=1, lam=(1.0, 1.0), delta=(1.0, 1.0), q0=(1, 0))
    u = 0.3
    log = frozen_log([u], [ABANDONMENT], [0], [0], [0.0], [0, 0], base, n=4)
    spec = CostSpec(gamma=2.5, p=np.array([5.0, 1.0]), c=np.zeros(2), T_max=1.0)
    bundle = scale(log, log.params, 1.0, np.linspace(0.0, 1.0, 11))
    est = cost_prelimit(log, bundle, spec)
    assert est.value == pytest.approx(5.0 * math.exp(-2.5 * u) / 2.0, abs=1e-14)


def test_cost_prelimit_monotone_in_gamma():
    member = make_regime_member(
        RegimeFamily(K=2, lambda0=1.0, beta=np.zeros(2), delta_limit=np.ones(2),
                     x=np.zeros(2), n_list=(25,)), 25)
    log = simulate(member, 1.0, seed=3)
    bundle = scale(log, member, 1.0, np.linspace(0.0, 1.0, 51))
    values = [
        cost_prelimit(log, bundle, CostSpec(gamma=g, p=np.ones(2), c=np.ones(2))).value
        for g in (1.0, 10.0, 100.0)
    ]
    assert values[0] > values[1] > values[2] > 0.0


def test_cost_limit_constant_path_closed_form():
    p = LimitParams(K=2, x=(0.0, 0.0), beta=(0.0, 0.0), sigma=(1.0, 1.0),
                    delta=(0.5, 0.25))
    grid = np.linspace(0.0, 1.0, 2001)
    X = np.ones((2, grid.size))
    path = LimitPath(grid=grid, X=X, R=np.zeros_like(grid),
                     G=np.zeros_like(X), xi=X.copy(), params=p, seed=0)
    spec = CostSpec(gamma=4.0, p=np.array([2.0, 2.0]), c=np.ones(2), T_max=1.0)
    est = cost_limit(path, spec)
    # Integrand: sum_j (c_j + p_j delta_j) X_j = 2 + 1.0 + 0.5 = 3.5.
    expected = 3.5 * (1.0 - math.exp(-4.0)) / 4.0
    assert est.value == pytest.approx(expected, abs=1e-6)
    off_grid = cost_limit(path, CostSpec(gamma=4.0, p=np.array([2.0, 2.0]),
                                         c=np.ones(2), T_max=0.77712))
    expected_off = 3.5 * (1.0 - math.exp(-4.0 * 0.77712)) / 4.0
    assert off_grid.value == pytest.approx(expected_off, abs=1e-6)
    with pytest.raises(ValueError):
        cost_limit(path, CostSpec(gamma=4.0, p=np.ones(2), c=np.ones(2), T_max=2.0))


def test_streaming_moments_match_numpy():
    gen = np.random.Generator(np.random.PCG64(77))
    data = gen.standard_normal(500) * 3.0 + 1.0
    m = StreamingMoments()
    for v in data:
        m.add(float(v))
    assert m.count == 500
    assert m.mean == pytest.approx(float(data.mean()), abs=1e-12)
    assert m.variance == pytest.approx(float(data.var(ddof=1)), abs=1e-10)
    assert m.stderr == pytest.approx(float(data.std(ddof=1) / math.sqrt(500)), abs=1e-12)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(
    st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=30),
    st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=30),
)
def test_streaming_moments_merge_is_concatenation(xs, ys):
    a = StreamingMoments()
    for v in xs:
        a.add(v)
    b = StreamingMoments()
    for v in ys:
        b.add(v)
    a.merge(b)
    c = StreamingMoments()
    for v in xs + ys:
        c.add(v)
    assert a.count == c.count
    if a.count:
        assert a.mean == pytest.approx(c.mean, rel=1e-9, abs=1e-9)
    if a.count >= 2:
        assert a.variance == pytest.approx(c.variance, rel=1e-6, abs=1e-6)


def test_convergence_study_shape_and_guards():
    fam = RegimeFamily(K=2, lambda0=1.0, beta=np.zeros(2), delta_limit=np.ones(2),
                       x=np.zeros(2), n_list=(25, 100))
    spec = CostSpec(gamma=13.0, p=np.ones(2), c=np.ones(2))
    report = convergence_study(fam, spec, reps=8, master_seed=1, threads=2)
    assert report.n_values.tolist() == [25, 100]
    assert report.ks.shape == (2, 2)
    assert np.all(report.ks >= 0.0) and np.all(report.ks <= 1.0)
    assert report.gamma_ok
    text = report.summary()
    assert "cost_mean" in text and "limit" in text and "gamma feasible" in text
    with pytest.raises(ValueError):
        convergence_study(fam, spec, reps=1, master_seed=1)
    low = CostSpec(gamma=1.0, p=np.ones(2), c=np.ones(2))
    with pytest.warns(UserWarning):
        convergence_study(fam, low, reps=2, master_seed=1)
