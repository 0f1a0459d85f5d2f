"""Batch experiment runner: config ingestion, seed management, sweeps,
result persistence, and plot-data emission.

Configs are JSON documents with a fixed schema (unknown keys are
errors).  Every run writes a manifest (plain-text key=value, including
a content hash of the config and a hash per data file), one or more
data CSVs, and a human-readable summary.  Data CSVs are byte-identical
across repeat runs and across thread counts: replication seeds derive
from the master seed by index, and reductions happen in fixed index
order regardless of scheduling.

Experiment kinds
  fig2_matching_vs_K   mean matching completion R(t) for K in
                       {2,3,4,5,20,80,500}; sigma_i = 2, x_i in
                       [0, 0.02] (first forced to 0), beta_i in
                       [-0.3, 0.1], delta_i in [0.01, 1], all drawn
                       once from the master seed, queue i keeping the
                       same draw across every K.
  fig3_abandonment     same sweep, mean absorbed mass G_1(t).
  fig4_paths_vs_K      single-path X per category, K in {2,3,4,5}.
  fig5_table1_stickiness
                       K = 4; one drift beta_i swept over
                       {-4,-3,-2,1,2,4,5} with beta_j = 1 elsewhere;
                       proportion of grid time X_i spends at zero,
                       replication-averaged with SE plus the
                       single-path value.
  littles_law          per-n mean/SE of the virtual-wait gap statistic
                       under both candidate rate multipliers.
  cost_convergence     discounted-cost convergence study against the
                       limit process.
  oracle_validation    event-driven simulation vs truncated-generator
                       transient distribution (total variation), plus
                       the truncation-cap sensitivity gap.
  custom               replicated simulation of one explicit system.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._version import __version__
from .ctmc import build_truncated_ctmc, empirical_distribution, total_variation, transient_distribution
from .diagnostics import (
    CostSpec,
    StreamingMoments,
    convergence_study,
    default_sample_times,
    littles_law_gaps,
    virtual_wait_replay,
)
from .limits import solve_explicit_many, tolerance_zero
from .params import LimitParams, RegimeFamily, SystemParams, make_regime_member
from .rng import (
    STREAM_LIMIT_NOISE,
    STREAM_PARAM_DRAW,
    STREAM_SIMULATION,
    derive_seed,
    generator_for,
    map_replications,
)
from .scaling import scale
from .simulate import simulate

KINDS = (
    "fig2_matching_vs_K",
    "fig3_abandonment",
    "fig4_paths_vs_K",
    "fig5_table1_stickiness",
    "littles_law",
    "cost_convergence",
    "oracle_validation",
    "custom",
)

SWEEP_K_VALUES = (2, 3, 4, 5, 20, 80, 500)
PATHS_K_VALUES = (2, 3, 4, 5)
TABLE1_BETAS = (-4.0, -3.0, -2.0, 1.0, 2.0, 4.0, 5.0)
TABLE1_K = 4

ENV_OUT_ROOT = "MATCHQ_OUT_ROOT"

FIGURE_FILES = {
    "fig2": ("fig2_data.csv", ["t", "K", "R_mean"]),
    "fig3": ("fig3_data.csv", ["t", "K", "G1_mean"]),
    "fig4": ("fig4_data.csv", ["t", "K", "category", "X"]),
    "table1": ("table1_data.csv", ["category", "beta", "proportion", "stderr"]),
}


class SchemaError(ValueError):
    """Config rejected; `violations` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config:\n  " + "\n  ".join(self.violations))


class RunError(RuntimeError):
    """An experiment failed after config validation."""


@dataclass(frozen=True)
class RunConfig:
    kind: str
    master_seed: int = 0
    reps: int = 1
    threads: int = 1
    out_dir: str | None = None
    n_steps: int = 250
    horizon: float = 1.0
    family: RegimeFamily | None = None
    limit: LimitParams | None = None
    cost: CostSpec | None = None
    oracle: dict | None = None
    custom: dict | None = None
    source_sha256: str = ""


_TOP_KEYS = {
    "kind", "master_seed", "reps", "threads", "out_dir", "grid",
    "family", "limit", "cost", "oracle", "custom",
}
_GRID_KEYS = {"n_steps", "horizon"}
_FAMILY_KEYS = {"K", "lambda0", "beta", "delta", "x", "n_list"}
_LIMIT_KEYS = {"K", "x", "beta", "sigma", "delta"}
_COST_KEYS = {"gamma", "p", "c", "pexp", "T_max", "tail_tol"}
_ORACLE_KEYS = {"lam", "delta", "q0", "cap", "t", "cap_check"}
_CUSTOM_KEYS = {"K", "n", "lam", "delta", "q0", "horizon"}

_REQUIRED_BLOCKS = {
    "littles_law": ("family",),
    "cost_convergence": ("family", "cost"),
    "oracle_validation": ("oracle",),
    "custom": ("custom",),
}


def _check_keys(block: dict, allowed: set, where: str, violations: list) -> None:
    for key in block:
        if key not in allowed:
            violations.append(f"{where}: unknown key '{key}'")


def validate_config_dict(doc) -> list[str]:
    """All schema violations in the document; empty means valid."""
    violations: list[str] = []
    if not isinstance(doc, dict):
        return ["top level must be a JSON object"]
    _check_keys(doc, _TOP_KEYS, "top level", violations)
    kind = doc.get("kind")
    if kind is None:
        violations.append("top level: missing required key 'kind'")
    elif kind not in KINDS:
        violations.append(f"kind: '{kind}' is not one of {', '.join(KINDS)}")
    reps = doc.get("reps", 1)
    if not isinstance(reps, int) or reps < 1:
        violations.append("reps: must be an integer >= 1")
    threads = doc.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        violations.append("threads: must be an integer >= 1")
    if not isinstance(doc.get("master_seed", 0), int):
        violations.append("master_seed: must be an integer")
    out_dir = doc.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        violations.append("out_dir: must be a string path")
    grid = doc.get("grid", {})
    if not isinstance(grid, dict):
        violations.append("grid: must be an object")
    else:
        _check_keys(grid, _GRID_KEYS, "grid", violations)
        n_steps = grid.get("n_steps", 250)
        if not isinstance(n_steps, int) or n_steps < 1:
            violations.append("grid.n_steps: must be an integer >= 1")
        horizon = grid.get("horizon", 1.0)
        if not isinstance(horizon, (int, float)) or horizon <= 0:
            violations.append("grid.horizon: must be a positive number")
    for name, keys in (
        ("family", _FAMILY_KEYS),
        ("limit", _LIMIT_KEYS),
        ("cost", _COST_KEYS),
        ("oracle", _ORACLE_KEYS),
        ("custom", _CUSTOM_KEYS),
    ):
        block = doc.get(name)
        if block is None:
            continue
        if not isinstance(block, dict):
            violations.append(f"{name}: must be an object")
            continue
        _check_keys(block, keys, name, violations)
    if kind in _REQUIRED_BLOCKS:
        for block_name in _REQUIRED_BLOCKS[kind]:
            if doc.get(block_name) is None:
                violations.append(
                    f"{block_name}: required for kind '{kind}'"
                )
    return violations


def _build_blocks(doc: dict, violations: list):
    family = limit = cost = None
    block = doc.get("family")
    if block is not None and isinstance(block, dict):
        try:
            family = RegimeFamily(
                K=int(block["K"]),
                lambda0=float(block["lambda0"]),
                beta=np.asarray(block["beta"], dtype=np.float64),
                delta_limit=np.asarray(block["delta"], dtype=np.float64),
                x=np.asarray(block["x"], dtype=np.float64),
                n_list=tuple(int(n) for n in block["n_list"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"family: {exc}")
    block = doc.get("limit")
    if block is not None and isinstance(block, dict):
        try:
            limit = LimitParams(
                K=int(block["K"]),
                x=np.asarray(block["x"], dtype=np.float64),
                beta=np.asarray(block["beta"], dtype=np.float64),
                sigma=np.asarray(block["sigma"], dtype=np.float64),
                delta=np.asarray(block["delta"], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"limit: {exc}")
    block = doc.get("cost")
    if block is not None and isinstance(block, dict):
        try:
            cost = CostSpec(
                gamma=float(block["gamma"]),
                p=np.asarray(block["p"], dtype=np.float64),
                c=np.asarray(block["c"], dtype=np.float64),
                pexp=float(block.get("pexp", 1.0)),
                T_max=float(block.get("T_max", 1.0)),
                tail_tol=float(block.get("tail_tol", 1e-4)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            violations.append(f"cost: {exc}")
    return family, limit, cost


def config_from_dict(doc: dict, source_bytes: bytes = b"") -> RunConfig:
    """Validate a parsed document and build the typed config."""
    violations = validate_config_dict(doc)
    family = limit = cost = None
    if not violations:
        family, limit, cost = _build_blocks(doc, violations)
    if violations:
        raise SchemaError(violations)
    grid = doc.get("grid", {})
    return RunConfig(
        kind=doc["kind"],
        master_seed=int(doc.get("master_seed", 0)),
        reps=int(doc.get("reps", 1)),
        threads=int(doc.get("threads", 1)),
        out_dir=doc.get("out_dir"),
        n_steps=int(grid.get("n_steps", 250)),
        horizon=float(grid.get("horizon", 1.0)),
        family=family,
        limit=limit,
        cost=cost,
        oracle=doc.get("oracle"),
        custom=doc.get("custom"),
        source_sha256=hashlib.sha256(source_bytes).hexdigest(),
    )


def load_config(path) -> RunConfig:
    """Parse and validate a JSON config file."""
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError([f"not valid JSON: {exc}"]) from exc
    return config_from_dict(doc, raw)


def apply_overrides(
    config: RunConfig,
    seed: int | None = None,
    reps: int | None = None,
    threads: int | None = None,
    out: str | None = None,
) -> RunConfig:
    """Command-line overrides for the corresponding config fields."""
    updates = {}
    if seed is not None:
        updates["master_seed"] = int(seed)
    if reps is not None:
        if reps < 1:
            raise SchemaError(["reps: must be an integer >= 1"])
        updates["reps"] = int(reps)
    if threads is not None:
        if threads < 1:
            raise SchemaError(["threads: must be an integer >= 1"])
        updates["threads"] = int(threads)
    if out is not None:
        updates["out_dir"] = out
    return replace(config, **updates) if updates else config


def resolve_out_dir(config: RunConfig) -> Path:
    """Explicit out_dir, else (env root or ./matchq_out)/<kind>-s<seed>."""
    if config.out_dir:
        return Path(config.out_dir)
    root = Path(os.environ.get(ENV_OUT_ROOT, "matchq_out"))
    return root / f"{config.kind}-s{config.master_seed}"


@dataclass(frozen=True)
class ResultArtifact:
    out_dir: Path
    manifest_path: Path
    summary_path: Path
    data_files: tuple
    status: str


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    str(v) if isinstance(v, (int, str)) else repr(float(v))
                    for v in row
                )
                + "\n"
            )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(path: Path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def sweep_parameters(master_seed: int, K: int) -> LimitParams:
    """The K-category member of the common random sweep family.

    One draw of length max(SWEEP_K_VALUES) is made from the master
    seed; category i keeps its (x_i, beta_i, delta_i) across every K.
    The first initial state is forced to 0 so the state-space
    constraint min_i x_i = 0 holds for every prefix.
    """
    k_max = max(SWEEP_K_VALUES)
    if not 2 <= K <= k_max:
        raise ValueError(f"K must be in [2, {k_max}]")
    gen = generator_for(derive_seed(master_seed, STREAM_PARAM_DRAW))
    x = gen.uniform(0.0, 0.02, k_max)
    beta = gen.uniform(-0.3, 0.1, k_max)
    delta = gen.uniform(0.01, 1.0, k_max)
    x[0] = 0.0
    return LimitParams(
        K=K, x=x[:K], beta=beta[:K], sigma=np.full(K, 2.0), delta=delta[:K]
    )


def sweep_noise(master_seed: int, reps: slice | range, n_steps: int, horizon: float):
    """Increments for the K sweep, shape (len(reps), K_max, n_steps).

    One draw of width max(SWEEP_K_VALUES) per replication; every K in
    the sweep reuses the first K rows, so queue i sees the same noise
    at every K (common random numbers across the sweep).
    """
    k_max = max(SWEEP_K_VALUES)
    dt = horizon / n_steps
    reps = list(reps)
    dW = np.empty((len(reps), k_max, n_steps))
    for a, r in enumerate(reps):
        seed = derive_seed(master_seed, STREAM_LIMIT_NOISE, r)
        dW[a] = generator_for(seed).standard_normal((k_max, n_steps)) * math.sqrt(dt)
    return dW


def _run_sweep(config: RunConfig, out: Path, which: str) -> list[Path]:
    grid = np.linspace(0.0, config.horizon, config.n_steps + 1)
    k_max = max(SWEEP_K_VALUES)
    # Chunk replications so no solver batch exceeds ~2e7 elements; the
    # chunk size is config-determined, keeping accumulation order (and
    # hence output bytes) independent of thread count.
    chunk = max(1, int(2e7 / (k_max * (config.n_steps + 1))))
    sums = {K: np.zeros(config.n_steps + 1) for K in SWEEP_K_VALUES}
    params = {K: sweep_parameters(config.master_seed, K) for K in SWEEP_K_VALUES}
    for lo in range(0, config.reps, chunk):
        dW = sweep_noise(
            config.master_seed,
            range(lo, min(lo + chunk, config.reps)),
            config.n_steps,
            config.horizon,
        )
        for K in SWEEP_K_VALUES:
            _, R, G, _ = solve_explicit_many(params[K], grid, dW[:, :K, :])
            sums[K] += R.sum(axis=0) if which == "fig2" else G[:, 0, :].sum(axis=0)
    rows = []
    summary = []
    for K in SWEEP_K_VALUES:
        series = sums[K] / config.reps
        for j, t in enumerate(grid):
            rows.append((t, K, series[j]))
        summary.append(
            f"K={K} terminal_{'R' if which == 'fig2' else 'G1'}_mean="
            f"{series[-1]!r}"
        )
    name, header = FIGURE_FILES[which]
    path = out / name
    _write_csv(path, header, rows)
    (out / "summary.txt").write_text(
        "\n".join(
            [f"kind={config.kind}", f"reps={config.reps}"] + summary
        )
        + "\n"
    )
    return [path]


def _run_fig4(config: RunConfig, out: Path) -> list[Path]:
    grid = np.linspace(0.0, config.horizon, config.n_steps + 1)
    dW = sweep_noise(config.master_seed, range(1), config.n_steps, config.horizon)
    grid_rows = []
    summary = [f"kind={config.kind}"]
    for K in PATHS_K_VALUES:
        p = sweep_parameters(config.master_seed, K)
        X, _, _, _ = solve_explicit_many(p, grid, dW[:, :K, :])
        for i in range(K):
            for j, t in enumerate(grid):
                grid_rows.append((t, K, i + 1, X[0, i, j]))
        summary.append(
            f"K={K} max_abs_min_X={np.abs(X[0].min(axis=0)).max()!r}"
        )
    name, header = FIGURE_FILES["fig4"]
    out_path = out / name
    _write_csv(out_path, header, grid_rows)
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return [out_path]


def table1_parameters(master_seed: int, category: int, beta_value: float) -> LimitParams:
    """K=4 stickiness cell: beta_category swept, other drifts 1."""
    gen = generator_for(derive_seed(master_seed, STREAM_PARAM_DRAW))
    delta = gen.uniform(0.01, 1.0, TABLE1_K)
    beta = np.ones(TABLE1_K)
    beta[category] = beta_value
    return LimitParams(
        K=TABLE1_K,
        x=np.zeros(TABLE1_K),
        beta=beta,
        sigma=np.full(TABLE1_K, 2.0),
        delta=delta,
    )


def proportion_at_zero(X: np.ndarray, tol: float) -> np.ndarray:
    """Fraction of grid times t_1..t_N each coordinate sits at zero."""
    return (X[..., 1:] <= tol).mean(axis=-1)


def _run_table1(config: RunConfig, out: Path) -> list[Path]:
    # Common noise across cells: replication r reuses one draw for
    # every (category, beta), isolating the drift effect.
    dW = np.empty((config.reps, TABLE1_K, config.n_steps))
    dt = config.horizon / config.n_steps
    for r in range(config.reps):
        seed = derive_seed(config.master_seed, STREAM_LIMIT_NOISE, r)
        dW[r] = generator_for(seed).standard_normal(
            (TABLE1_K, config.n_steps)
        ) * math.sqrt(dt)
    grid = np.linspace(0.0, config.horizon, config.n_steps + 1)
    rows = []
    summary = [f"kind={config.kind}", f"reps={config.reps}"]
    for i in range(TABLE1_K):
        for beta_value in TABLE1_BETAS:
            p = table1_parameters(config.master_seed, i, beta_value)
            tol = tolerance_zero(p, config.horizon)
            X, _, _, _ = solve_explicit_many(p, grid, dW)
            props = proportion_at_zero(X[:, i, :], tol)
            mean = float(props.mean())
            se = (
                float(props.std(ddof=1) / math.sqrt(config.reps))
                if config.reps > 1
                else float("nan")
            )
            rows.append((i + 1, beta_value, mean, se, float(props[0])))
        summary.append(
            f"category={i + 1} proportions="
            + ",".join(repr(float(r[2])) for r in rows[-len(TABLE1_BETAS):])
        )
    path = out / FIGURE_FILES["table1"][0]
    _write_csv(
        path, ["category", "beta", "proportion", "stderr", "single_path"], rows
    )
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return [path]


def _littles_rep(args):
    family, n, horizon, sample_count, seed = args
    member = make_regime_member(family, n)
    log = simulate(member, horizon, seed)
    times = default_sample_times(horizon, sample_count)
    bundle = scale(log, member, family.lambda0, times)
    series = [
        virtual_wait_replay(log, i, times) for i in range(family.K)
    ]
    gaps = littles_law_gaps(bundle, series, family.lambda0)
    return gaps["gap"], gaps["gap_prelimit_multiplier"], gaps["excluded"]


def _run_littles(config: RunConfig, out: Path) -> list[Path]:
    family = config.family
    rows = []
    summary = [f"kind={config.kind}", f"reps={config.reps}"]
    for a, n in enumerate(family.n_list):
        jobs = [
            (
                family,
                int(n),
                config.horizon,
                21,
                derive_seed(config.master_seed, STREAM_SIMULATION, a, r),
            )
            for r in range(config.reps)
        ]
        results = map_replications(_littles_rep, jobs, config.threads)
        gap_m = StreamingMoments()
        alt_m = StreamingMoments()
        censored = 0
        for gap, alt, excl in results:
            gap_m.add(gap)
            alt_m.add(alt)
            censored += excl
        rows.append(
            (int(n), config.reps, gap_m.mean, gap_m.stderr, alt_m.mean,
             alt_m.stderr, censored)
        )
        summary.append(f"n={n} gap_mean={gap_m.mean!r} gap_se={gap_m.stderr!r}")
    path = out / "littles_law_data.csv"
    _write_csv(
        path,
        ["n", "reps", "gap_mean", "gap_se", "gap_prelimit_mean",
         "gap_prelimit_se", "censored"],
        rows,
    )
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return [path]


def _run_cost(config: RunConfig, out: Path) -> list[Path]:
    report = convergence_study(
        config.family,
        config.cost,
        reps=config.reps,
        master_seed=config.master_seed,
        threads=config.threads,
    )
    path = out / "cost_convergence_data.csv"
    report.to_csv(path)
    (out / "summary.txt").write_text(report.summary() + "\n")
    return [path]


def _oracle_terminal_rep(args):
    params, horizon, seed = args
    return simulate(params, horizon, seed).q_final


def _run_oracle(config: RunConfig, out: Path) -> list[Path]:
    block = dict(config.oracle)
    lam = np.asarray(block["lam"], dtype=np.float64)
    delta = np.asarray(block["delta"], dtype=np.float64)
    q0 = np.asarray(block["q0"], dtype=np.int64)
    cap = int(block["cap"])
    t = float(block["t"])
    cap_check = int(block.get("cap_check", cap + 10))
    params = SystemParams(K=lam.size, n=1, lam=lam, delta=delta, q0=q0)
    ctmc = build_truncated_ctmc(params, cap)
    p0 = ctmc.point_mass(q0)
    dist = transient_distribution(ctmc, p0, t)
    wide = build_truncated_ctmc(params, cap_check)
    dist_wide = transient_distribution(wide, wide.point_mass(q0), t)
    # Compare on the smaller state set; mass beyond it counts as gap.
    narrow_on_wide = np.zeros(wide.n_states)
    for s, state in enumerate(ctmc.states):
        narrow_on_wide[wide.index_of(state)] = dist[s]
    cap_gap = total_variation(narrow_on_wide, dist_wide)
    jobs = [
        (params, t, derive_seed(config.master_seed, STREAM_SIMULATION, r))
        for r in range(config.reps)
    ]
    terminal = np.stack(
        map_replications(_oracle_terminal_rep, jobs, config.threads), axis=0
    )
    emp = empirical_distribution(ctmc, terminal)
    tv_emp = total_variation(emp, dist)
    rows = [
        tuple(int(q) for q in ctmc.states[s]) + (dist[s], emp[s])
        for s in range(ctmc.n_states)
    ]
    header = [f"q{i + 1}" for i in range(params.K)] + ["p_oracle", "p_empirical"]
    path = out / "oracle_data.csv"
    _write_csv(path, header, rows)
    (out / "summary.txt").write_text(
        "\n".join(
            [
                f"kind={config.kind}",
                f"reps={config.reps}",
                f"cap={cap}",
                f"cap_check={cap_check}",
                f"tv_empirical={tv_emp!r}",
                f"tv_cap_gap={cap_gap!r}",
            ]
        )
        + "\n"
    )
    return [path]


def _custom_rep(args):
    params, horizon, seed = args
    log = simulate(params, horizon, seed)
    return log.q_final, log.n_rows


def _run_custom(config: RunConfig, out: Path) -> list[Path]:
    block = dict(config.custom)
    params = SystemParams(
        K=int(block["K"]),
        n=int(block.get("n", 1)),
        lam=np.asarray(block["lam"], dtype=np.float64),
        delta=np.asarray(block["delta"], dtype=np.float64),
        q0=np.asarray(block["q0"], dtype=np.int64),
    )
    horizon = float(block.get("horizon", config.horizon))
    jobs = [
        (params, horizon, derive_seed(config.master_seed, STREAM_SIMULATION, r))
        for r in range(config.reps)
    ]
    results = map_replications(_custom_rep, jobs, config.threads)
    rows = [
        (r,) + tuple(int(q) for q in q_final) + (int(n_rows),)
        for r, (q_final, n_rows) in enumerate(results)
    ]
    header = ["rep"] + [f"q{i + 1}" for i in range(params.K)] + ["events"]
    path = out / "custom_data.csv"
    _write_csv(path, header, rows)
    terminal = np.stack([q for q, _ in results], axis=0)
    (out / "summary.txt").write_text(
        "\n".join(
            [
                f"kind={config.kind}",
                f"reps={config.reps}",
                f"horizon={horizon!r}",
                "mean_terminal="
                + ",".join(repr(float(v)) for v in terminal.mean(axis=0)),
                f"mean_events={float(np.mean([n for _, n in results]))!r}",
            ]
        )
        + "\n"
    )
    return [path]


_RUNNERS = {
    "fig2_matching_vs_K": lambda c, o: _run_sweep(c, o, "fig2"),
    "fig3_abandonment": lambda c, o: _run_sweep(c, o, "fig3"),
    "fig4_paths_vs_K": _run_fig4,
    "fig5_table1_stickiness": _run_table1,
    "littles_law": _run_littles,
    "cost_convergence": _run_cost,
    "oracle_validation": _run_oracle,
    "custom": _run_custom,
}


def run(config: RunConfig) -> ResultArtifact:
    """Execute the configured experiment and persist its artifact.

    On failure after validation the manifest is still written with
    status=incomplete before RunError propagates.
    """
    out = resolve_out_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.txt"
    base = {
        "kind": config.kind,
        "tool_version": __version__,
        "config_sha256": config.source_sha256,
        "master_seed": config.master_seed,
        "reps": config.reps,
        "threads": config.threads,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    try:
        data_files = _RUNNERS[config.kind](config, out)
    except Exception as exc:
        base["status"] = "incomplete"
        base["error"] = repr(exc)
        _write_manifest(manifest_path, base)
        raise RunError(f"{config.kind} failed: {exc}") from exc
    for path in data_files:
        base[f"sha256:{path.name}"] = _sha256(path)
    base["sha256:summary.txt"] = _sha256(out / "summary.txt")
    base["status"] = "complete"
    _write_manifest(manifest_path, base)
    return ResultArtifact(
        out_dir=out,
        manifest_path=manifest_path,
        summary_path=out / "summary.txt",
        data_files=tuple(data_files),
        status="complete",
    )


def read_manifest(artifact_dir) -> dict:
    path = Path(artifact_dir) / "manifest.txt"
    if not path.exists():
        raise RunError(f"no manifest in {artifact_dir}")
    entries = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            entries[key] = value
    return entries


def emit_plot_data(artifact_dir, which: str) -> Path:
    """Write the tidy plot CSV for one figure from a complete artifact."""
    if which not in FIGURE_FILES:
        raise SchemaError(
            [f"figure: '{which}' is not one of {', '.join(FIGURE_FILES)}"]
        )
    manifest = read_manifest(artifact_dir)
    if manifest.get("status") != "complete":
        raise RunError("artifact is not complete")
    name, header = FIGURE_FILES[which]
    src = Path(artifact_dir) / name
    if not src.exists():
        raise RunError(f"artifact has no {name}; wrong experiment kind?")
    lines = src.read_text().splitlines()
    src_header = lines[0].split(",")
    keep = [src_header.index(col) for col in header]
    out_path = Path(artifact_dir) / f"plot_{which}.csv"
    with open(out_path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for line in lines[1:]:
            cells = line.split(",")
            fh.write(",".join(cells[k] for k in keep) + "\n")
    return out_path
