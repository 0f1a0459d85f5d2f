"""Acceptance suite: one test per release gate.

Every test pins an observable guarantee of the package: exact
structural identities of the event-level simulator, closed-form and
fixed-point agreement of the grid solver, statistical convergence of
the scaled systems to their limit, monotone comparative statics, and
byte-level reproducibility of the experiment runners.  Statistical
tests use frozen master seeds whose margins were sized in advance
against independent replications; tolerances are pinned, not tuned.
Each test prints one summary line with its measured values.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ks_2samp, spearmanr

from matchq.params import (
    LimitParams,
    RegimeFamily,
    SystemParams,
    limit_of,
    make_regime_member,
)
from matchq.simulate import simulate
from matchq.events import queue_step_paths, recompute_R, verify_invariants
from matchq.ctmc import (
    build_truncated_ctmc,
    empirical_distribution,
    total_variation,
    transient_distribution,
)
from matchq.scaling import scale
from matchq.limits import (
    coarsen,
    contraction_blocks,
    contraction_factor,
    noise_draws,
    semimartingale_decomposition,
    solve_explicit,
    solve_explicit_many,
    solve_fixed_point,
    solve_no_abandonment,
    tolerance_zero,
)
from matchq.diagnostics import CostSpec, convergence_study, cost_prelimit
from matchq.experiments import RunConfig, run, sweep_parameters, _littles_rep
from matchq.rng import (
    STREAM_LIMIT_NOISE,
    STREAM_SIMULATION,
    derive_seed,
    generator_for,
    map_replications,
)

HORIZON = 1.0
MASTER_EVENT = 11
MASTER_ORACLE = 7
MASTER_DRAWS = 42
MASTER_KS = 101
MASTER_STATS = 0
MASTER_COST = 6

# Balanced heavy-traffic family used by the distributional criteria:
# two identical categories, no drift perturbation, unit patience.
BALANCED = RegimeFamily(
    K=2,
    lambda0=1.0,
    beta=np.zeros(2),
    delta_limit=np.ones(2),
    x=np.zeros(2),
    n_list=(25, 100, 400),
)


@pytest.fixture(scope="module")
def event_logs():
    """Thirty event-level runs with at least 1e5 events each."""
    sizes = {2: 52000, 3: 35000, 5: 21000}
    logs = []
    start = time.monotonic()
    for K, n in sizes.items():
        params = SystemParams(
            K=K, n=n, lam=np.full(K, float(n)), delta=np.ones(K), q0=np.zeros(K, dtype=int)
        )
        for s in range(10):
            logs.append(simulate(params, HORIZON, derive_seed(MASTER_EVENT, K, s)))
    return logs, time.monotonic() - start


def test_criterion_01_event_invariants_exact(event_logs):
    logs, elapsed = event_logs
    total_rows = 0
    for log in logs:
        summary = verify_invariants(log)
        assert summary["rows"] >= 100000
        total_rows += summary["rows"]
    assert elapsed < 60.0
    print(
        f"[criterion 01] PASS: 30 runs, {total_rows} events, exact invariants, "
        f"{elapsed:.2f}s"
    )


def test_criterion_02_conservation_at_every_event(event_logs):
    logs, _ = event_logs
    checked = 0
    for log in logs:
        t = np.unique(log.time)
        A, G, R = log.counts_at(t)
        q_counts = log.params.q0[:, None] + A - G - R[None, :]
        q_steps = queue_step_paths(log).at(t)
        assert np.array_equal(q_steps, q_counts)
        assert np.array_equal(recompute_R(log, t), R)
        checked += t.size
    print(f"[criterion 02] PASS: conservation and matching-count identity at {checked} event times")


def test_criterion_03_markov_oracle_agreement():
    params = SystemParams(K=2, n=1, lam=(3.0, 3.0), delta=(1.0, 1.0), q0=(0, 0))
    narrow = build_truncated_ctmc(params, 30)
    wide = build_truncated_ctmc(params, 40)
    dist = transient_distribution(narrow, narrow.point_mass((0, 0)), HORIZON)
    dist_wide = transient_distribution(wide, wide.point_mass((0, 0)), HORIZON)
    embedded = np.zeros(wide.n_states)
    for s, state in enumerate(narrow.states):
        embedded[wide.index_of(state)] += dist[s]
    cap_gap = total_variation(embedded, dist_wide)
    assert cap_gap < 1e-4

    jobs = [
        (params, derive_seed(MASTER_ORACLE, STREAM_SIMULATION, r)) for r in range(100000)
    ]
    finals = np.array(
        map_replications(lambda a: simulate(a[0], HORIZON, a[1]).q_final, jobs, 4),
        dtype=np.int64,
    )
    tv = total_variation(empirical_distribution(narrow, finals), dist)
    assert tv < 0.02
    print(f"[criterion 03] PASS: cap gap {cap_gap:.2e}, empirical TV {tv:.4f} at 1e5 runs")


def test_criterion_04_no_abandonment_closed_form():
    worst = 0.0
    for K in (2, 3, 4):
        base = sweep_parameters(MASTER_DRAWS, K)
        p = LimitParams(K=K, x=base.x, beta=base.beta, sigma=base.sigma, delta=np.zeros(K))
        grid = np.linspace(0.0, HORIZON, 251)
        dt = HORIZON / 250
        gen = generator_for(derive_seed(MASTER_DRAWS, STREAM_LIMIT_NOISE, K))
        dW = gen.standard_normal((100, K, 250)) * math.sqrt(dt)
        X, R, _, xi = solve_explicit_many(p, grid, dW)
        closed = xi - xi.min(axis=1, keepdims=True)
        worst = max(worst, float(np.abs(X - closed).max()))
        worst = max(worst, float(np.abs(R - xi.min(axis=1)).max()))
    assert worst <= 1e-12
    print(f"[criterion 04] PASS: closed-form match over 300 draws, max error {worst:.2e}")


def test_criterion_05_semimartingale_identity():
    worst = 0.0
    for K in (2, 3, 4, 5):
        base = sweep_parameters(MASTER_DRAWS, K)
        p = LimitParams(K=K, x=base.x, beta=base.beta, sigma=base.sigma, delta=np.zeros(K))
        for r in range(100):
            noise = noise_draws(K, 250, HORIZON, derive_seed(MASTER_DRAWS, K, r))
            report = semimartingale_decomposition(p, noise)
            worst = max(worst, report.identity_max_error)
    assert worst <= 1e-12
    print(f"[criterion 05] PASS: recursion identity over 400 draws, max error {worst:.2e}")


def test_criterion_06_fixed_point_inits_and_blocks():
    tol = 1e-8
    p3 = sweep_parameters(MASTER_DRAWS, 3)
    noise3 = noise_draws(3, 250, HORIZON, derive_seed(MASTER_DRAWS, STREAM_LIMIT_NOISE, 63))
    a = solve_fixed_point(p3, noise3, tol=tol, init="zero")
    b = solve_fixed_point(p3, noise3, tol=tol, init="input")
    gap = float(np.abs(a.X - b.X).max())
    assert gap < 2 * tol
    expected_blocks = contraction_blocks(p3, HORIZON)
    assert contraction_factor(p3, HORIZON) >= 1.0 and expected_blocks > 1
    assert a.info["blocks"] == expected_blocks

    p5 = LimitParams(
        K=5, x=np.zeros(5), beta=np.zeros(5), sigma=np.full(5, 2.0), delta=np.ones(5)
    )
    noise5 = noise_draws(5, 250, HORIZON, derive_seed(MASTER_DRAWS, STREAM_LIMIT_NOISE, 64))
    fp = solve_fixed_point(p5, noise5, tol=tol)
    assert fp.info["blocks"] == contraction_blocks(p5, HORIZON) > 1
    march = solve_explicit(p5, noise5)
    agree = float(np.abs(fp.X - march.X).max())
    assert agree < 1e-6
    print(
        f"[criterion 06] PASS: init gap {gap:.2e} (< {2 * tol:.0e}), "
        f"blocks {a.info['blocks']} and {fp.info['blocks']}, march gap {agree:.2e}"
    )


def test_criterion_07_coupling_pins_minimum_to_zero():
    worst_ratio = 0.0
    for K in (2, 3, 4, 5, 20):
        p = sweep_parameters(MASTER_DRAWS, K)
        tz = tolerance_zero(p, HORIZON)
        for r in range(20):
            noise = noise_draws(K, 250, HORIZON, derive_seed(MASTER_DRAWS, 7, K, r))
            path = solve_explicit(p, noise)
            dev = float(np.abs(path.X.min(axis=0)).max())
            assert dev <= tz
            worst_ratio = max(worst_ratio, dev / tz)
        p0 = LimitParams(K=K, x=p.x, beta=p.beta, sigma=p.sigma, delta=np.zeros(K))
        free = solve_no_abandonment(p0, noise_draws(K, 250, HORIZON, derive_seed(MASTER_DRAWS, 8, K)))
        assert float(np.abs(free.X.min(axis=0)).max()) == 0.0
    print(f"[criterion 07] PASS: min coordinate within tolerance, worst ratio {worst_ratio:.3f}")


def test_criterion_08_refinement_order():
    p = sweep_parameters(MASTER_STATS, 3)
    orders = []
    for r in range(50):
        fine = noise_draws(3, 1000, HORIZON, derive_seed(MASTER_DRAWS, STREAM_LIMIT_NOISE, r))
        mid = coarsen(fine, 2)
        coarse = coarsen(fine, 4)
        Xf = solve_explicit(p, fine).X
        Xm = solve_explicit(p, mid).X
        Xc = solve_explicit(p, coarse).X
        d_coarse = float(np.abs(Xc - Xm[:, ::2]).max())
        d_fine = float(np.abs(Xm - Xf[:, ::2]).max())
        orders.append(math.log2(d_coarse / d_fine))
    med = float(np.median(orders))
    assert med >= 0.5
    print(f"[criterion 08] PASS: median refinement order {med:.3f} over 50 common-noise draws")


def test_criterion_09_terminal_distribution_converges():
    lp = limit_of(BALANCED)
    grid = np.linspace(0.0, HORIZON, 251)
    dt = HORIZON / 250
    gen = generator_for(derive_seed(MASTER_KS, STREAM_LIMIT_NOISE, 9))
    dW = gen.standard_normal((2000, 2, 250)) * math.sqrt(dt)
    X, _, _, _ = solve_explicit_many(lp, grid, dW)
    limit_terminal = X[:, 0, -1]

    ks = []
    for idx, n in enumerate(BALANCED.n_list):
        member = make_regime_member(BALANCED, n)
        jobs = [
            (member, derive_seed(MASTER_KS, STREAM_SIMULATION, idx, r))
            for r in range(2000)
        ]
        q1 = np.array(
            map_replications(lambda a: simulate(a[0], HORIZON, a[1]).q_final[0], jobs, 4),
            dtype=np.float64,
        ) / math.sqrt(n)
        ks.append(float(ks_2samp(q1, limit_terminal).statistic))
    assert ks[0] > ks[1] > ks[2]
    assert ks[2] < 0.1
    print(
        "[criterion 09] PASS: KS distances "
        + " > ".join(f"{v:.4f}" for v in ks)
        + " strictly decreasing, final < 0.1"
    )


def test_criterion_10_waiting_time_rate_gap_shrinks():
    means, ses = [], []
    for idx, n in enumerate(BALANCED.n_list):
        jobs = [
            (BALANCED, n, HORIZON, 21, derive_seed(MASTER_STATS, STREAM_SIMULATION, idx, r))
            for r in range(200)
        ]
        gaps = np.array(
            [out[0] for out in map_replications(_littles_rep, jobs, 4)], dtype=np.float64
        )
        means.append(float(gaps.mean()))
        ses.append(float(gaps.std(ddof=1) / math.sqrt(gaps.size)))
    for k in range(2):
        diff = means[k] - means[k + 1]
        need = 2.0 * math.hypot(ses[k], ses[k + 1])
        assert diff > need
    print(
        "[criterion 10] PASS: mean sup gaps "
        + " > ".join(f"{m:.4f}" for m in means)
        + " with both drops above twice their standard error"
    )


def test_criterion_11_discounted_cost_converges():
    spec = CostSpec(gamma=13.0, p=np.ones(2), c=np.ones(2), pexp=1.0, T_max=HORIZON)
    report = convergence_study(BALANCED, spec, reps=400, master_seed=MASTER_COST, threads=4)
    assert report.gamma_ok
    d = np.abs(report.cost_mean - report.limit_cost_mean)
    assert d[0] > d[1] > d[2]
    for k in range(2):
        slack = 2.0 * math.hypot(report.cost_se[k], report.cost_se[k + 1])
        assert d[k + 1] <= d[k] + slack
    # Beyond the per-step slack, the overall drop is itself significant.
    assert d[0] - d[2] > 2.0 * math.hypot(report.cost_se[0], report.cost_se[2])

    for idx, n in enumerate(BALANCED.n_list):
        member = make_regime_member(BALANCED, n)
        for r in range(5):
            log = simulate(member, HORIZON, derive_seed(MASTER_COST, STREAM_SIMULATION, idx, r))
            bundle = scale(log, member, BALANCED.lambda0, np.linspace(0.0, HORIZON, 201))
            assert cost_prelimit(log, bundle, spec).tail_bound < 1e-4
    print(
        "[criterion 11] PASS: |mean cost - limit| "
        + " > ".join(f"{v:.5f}" for v in d)
        + f", limit mean {report.limit_cost_mean:.5f}, tail bounds < 1e-4"
    )


def test_criterion_12_drift_monotone_boundary_occupation(tmp_path):
    config = RunConfig(
        kind="fig5_table1_stickiness",
        master_seed=MASTER_STATS,
        reps=100,
        threads=4,
        out_dir=tmp_path / "stickiness",
    )
    artifact = run(config)
    with open(Path(artifact.out_dir) / "table1_data.csv", newline="") as fh:
        rows = list(csv.DictReader(row for row in fh if not row.startswith("#")))
    endpoints = {}
    for cat in (1, 2, 3, 4):
        cells = sorted(
            ((float(r["beta"]), float(r["proportion"]), float(r["single_path"])) for r in rows
             if int(r["category"]) == cat)
        )
        props = [v for _, v, _ in cells]
        assert all(props[k + 1] < props[k] for k in range(len(props) - 1))
        rho = float(spearmanr([b for b, _, _ in cells], props).statistic)
        assert rho == -1.0
        endpoints[cat] = (cells[0][2], cells[-1][2])
    print(
        "[criterion 12] PASS: occupation strictly decreasing in drift for all 4 "
        f"categories (Spearman -1); single-path endpoints cat 3 = "
        f"{endpoints[3][0]:.3f} (beta=-4) and {endpoints[3][1]:.3f} (beta=5) "
        "against reference points 0.984 and 0.196 (reported, not asserted)"
    )


def test_criterion_13_terminal_sweep_monotone_in_K(tmp_path):
    terminals = {}
    for kind, short, column in (
        ("fig2_matching_vs_K", "fig2", "R_mean"),
        ("fig3_abandonment", "fig3", "G1_mean"),
    ):
        config = RunConfig(
            kind=kind, master_seed=MASTER_STATS, reps=50, threads=4,
            out_dir=tmp_path / short,
        )
        artifact = run(config)
        with open(Path(artifact.out_dir) / f"{short}_data.csv", newline="") as fh:
            rows = list(csv.DictReader(row for row in fh if not row.startswith("#")))
        t_end = max(float(r["t"]) for r in rows)
        terminals[short] = {
            int(r["K"]): float(r[column]) for r in rows if float(r["t"]) == t_end
        }
    subset = (2, 3, 4, 5, 20)
    r_vals = [terminals["fig2"][k] for k in subset]
    g_vals = [terminals["fig3"][k] for k in subset]
    assert all(r_vals[k + 1] < r_vals[k] for k in range(len(subset) - 1))
    assert all(g_vals[k + 1] > g_vals[k] for k in range(len(subset) - 1))
    print(
        "[criterion 13] PASS: terminal matching shortfall strictly decreasing and "
        "first-category abandonment strictly increasing over K in "
        f"{subset}: R {['%.3f' % v for v in r_vals]}, G1 {['%.4f' % v for v in g_vals]}"
    )


def test_criterion_14_thread_count_never_changes_output(tmp_path):
    small_family = RegimeFamily(
        K=2, lambda0=1.0, beta=np.zeros(2), delta_limit=np.ones(2),
        x=np.zeros(2), n_list=(25, 100),
    )
    cases = [
        (
            "custom",
            {"custom": {"K": 3, "lam": [40.0, 40.0, 40.0], "delta": [1.0, 1.0, 1.0],
                        "q0": [0, 0, 0]}, "reps": 16},
            "custom_data.csv",
        ),
        ("littles_law", {"family": small_family, "reps": 6}, "littles_law_data.csv"),
        ("fig5_table1_stickiness", {"reps": 4}, "table1_data.csv"),
    ]
    compared = []
    for kind, extra, data_name in cases:
        payloads = {}
        for label, threads in (("t1", 1), ("t4", 4), ("t4_again", 4)):
            config = RunConfig(
                kind=kind, master_seed=MASTER_STATS, threads=threads,
                out_dir=tmp_path / f"{kind}-{label}", **extra,
            )
            run(config)
            payloads[label] = (tmp_path / f"{kind}-{label}" / data_name).read_bytes()
        assert payloads["t1"] == payloads["t4"] == payloads["t4_again"]
        compared.append(f"{data_name} ({len(payloads['t1'])} bytes)")
    print(
        "[criterion 14] PASS: byte-identical across thread counts and repeats: "
        + ", ".join(compared)
    )
