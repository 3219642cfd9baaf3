"""Monte Carlo experiment harness: sweep plans, CSV emission, figures.

A plan describes one experiment axis (a weight sweep or a UE-count sweep),
the modes to compare, the trial seeds and the solver budget. Running a plan
yields one record per (seed, mode, weight, sweep point) and a versioned CSV;
rendering turns a CSV into three static figures (rate/power vs weight,
energy vs spectral efficiency, spectral efficiency vs UE count).

The CSV is deterministic for a fixed plan: rows are sorted on
(seed, mode, weight, UE count) and every column except the trailing
wall-time one reproduces byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .config import SystemConfig, desk_scale, paper_scale
from .modes import MODES, NESTING
from .pipeline import InfeasibleInstanceError, SolveSettings, sweep_modes
from .scenario import generate_scenario

RESULTS_FORMAT = "domanet-results v1"

COLUMNS = (
    "plan", "seed", "mode", "omega", "ue_total",
    "se_bps_hz", "sr_bps", "sp_w", "cp_w", "ee_bps_j",
    "status", "solver_iterations",
    "utopia_se_bps_hz", "utopia_sp_w", "utopia_source",
    "wall_time_s",                       # keep last: stripped for diffing
)

MODE_LABELS = {"pod": "POD", "npod": "NPOD", "noma": "NOMA-OFDM",
               "ofdma": "OFDMA"}
LEGEND_ORDER = ("pod", "npod", "noma", "ofdma")

_PROFILES = {
    "fast": SolveSettings.fast,
    "default": SolveSettings,
    "accurate": SolveSettings.accurate,
}


class PlanError(ValueError):
    """Raised when an ExperimentPlan is structurally invalid."""


class SchemaError(ValueError):
    """Raised when a results CSV does not match the expected schema."""


class EmptyResultsError(ValueError):
    """Raised when a results CSV holds no data rows to plot."""


@dataclass
class ExperimentPlan:
    name: str
    kind: str = "omega"                  # "omega" | "ue_count"
    scale: str = "desk"                  # "desk" | "paper"
    modes: tuple = ("ofdma", "noma", "npod", "pod")
    omegas: tuple = (0.2, 0.45, 0.7, 0.95)
    trials: int = 5
    base_seed: int = 1
    ue_counts: tuple = ()                # total UEs per sweep point (ue_count)
    fixed_omega: float = 0.4             # weight used by the ue_count kind
    num_aps: int | None = None           # config overrides; None keeps scale
    num_subbands: int | None = None
    cluster_capacity: int | None = None
    profile: str = "fast"
    alpha: float = 1e3
    bisect_tol: float | None = None
    iterations: int | None = None
    out_dir: str = "results"

    def __post_init__(self):
        self.modes = tuple(self.modes)
        self.omegas = tuple(float(w) for w in self.omegas)
        self.ue_counts = tuple(int(u) for u in self.ue_counts)

    def validate(self) -> None:
        if self.kind not in ("omega", "ue_count"):
            raise PlanError(f"unknown plan kind {self.kind!r}")
        if self.scale not in ("desk", "paper"):
            raise PlanError(f"unknown scale {self.scale!r}")
        if self.profile not in _PROFILES:
            raise PlanError(f"unknown solver profile {self.profile!r}")
        unknown = [m for m in self.modes if m not in MODES]
        if unknown:
            raise PlanError(f"unknown modes {unknown}")
        if not self.modes:
            raise PlanError("plan needs at least one mode")
        if self.trials < 1:
            raise PlanError("trials must be >= 1")
        if self.kind == "omega":
            if not self.omegas:
                raise PlanError("omega plan needs a non-empty omega list")
            bad = [w for w in self.omegas if not 0.0 <= w <= 1.0]
            if bad:
                raise PlanError(f"omegas outside [0, 1]: {bad}")
        else:
            if not self.ue_counts:
                raise PlanError("ue_count plan needs a non-empty ue_counts")
            if not 0.0 <= self.fixed_omega <= 1.0:
                raise PlanError("fixed_omega must lie in [0, 1]")
            aps = self.num_aps or self._base_config().num_aps
            bad = [u for u in self.ue_counts if u < aps or u % aps]
            if bad:
                raise PlanError(
                    f"ue_counts {bad} not divisible across {aps} APs")
        if not math.isfinite(self.alpha) or self.alpha <= 0:
            raise PlanError("alpha must be a positive finite number")

    # ---- config assembly ----------------------------------------------------

    def _base_config(self) -> SystemConfig:
        return paper_scale() if self.scale == "paper" else desk_scale()

    def config_for(self, ue_total: int | None = None) -> SystemConfig:
        base = self._base_config()
        kwargs = {}
        if self.num_aps is not None:
            kwargs["num_aps"] = self.num_aps
        if self.num_subbands is not None:
            kwargs["num_subbands"] = self.num_subbands
        if self.cluster_capacity is not None:
            kwargs["cluster_capacity"] = self.cluster_capacity
        if ue_total is not None:
            kwargs["ues_per_ap"] = ue_total // kwargs.get("num_aps",
                                                          base.num_aps)
        if "num_aps" in kwargs and kwargs["num_aps"] != base.num_aps:
            return desk_scale(num_aps=kwargs.pop("num_aps"),
                              ues_per_ap=kwargs.pop("ues_per_ap",
                                                    base.ues_per_ap),
                              num_subbands=kwargs.pop("num_subbands",
                                                      base.num_subbands),
                              **kwargs)
        return base.with_overrides(**kwargs)

    def solve_settings(self) -> SolveSettings:
        settings = _PROFILES[self.profile]()
        overrides = {"alpha": self.alpha}
        if self.bisect_tol is not None:
            overrides["poly_bisect_tol"] = self.bisect_tol
        if self.iterations is not None:
            overrides["poly_iterations"] = self.iterations
        return replace(settings, **overrides)

    # ---- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        data = asdict(self)
        data["modes"] = list(self.modes)
        data["omegas"] = list(self.omegas)
        data["ue_counts"] = list(self.ue_counts)
        return data

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise PlanError(f"unknown plan fields {sorted(extra)}")
        plan = cls(**data)
        plan.validate()
        return plan

    @classmethod
    def load(cls, path: str) -> "ExperimentPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunRecord:
    """One solved (seed, mode, weight, sweep point) outcome; a CSV row."""

    plan: str
    seed: int
    mode: str
    omega: float
    ue_total: int
    se_bps_hz: float
    sr_bps: float
    sp_w: float
    cp_w: float
    ee_bps_j: float
    status: str
    solver_iterations: int
    utopia_se_bps_hz: float
    utopia_sp_w: float
    utopia_source: str
    wall_time_s: float

    def to_row(self) -> list:
        return [_format(getattr(self, c)) for c in COLUMNS]


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mode_rank(name: str) -> int:
    return NESTING.index(name) if name in NESTING else len(NESTING)


# --------------------------------------------------------------------------
# plan execution


def _prefix_scenario(scenario, ues_per_ap: int):
    """Restrict a drop to the first ``ues_per_ap`` UEs of every AP.

    UE-count sweeps slice one drop per seed instead of redrawing, so the
    curve traces densification of a fixed geometry rather than sampling
    noise between sweep points.
    """
    if ues_per_ap == scenario.config.ues_per_ap:
        return scenario
    cfg = scenario.config.with_overrides(ues_per_ap=ues_per_ap)
    return type(scenario)(
        config=cfg,
        ue_positions=scenario.ue_positions[:, :ues_per_ap].copy(),
        gains=scenario.gains[:, :ues_per_ap].copy(),
        noise_power_w=scenario.noise_power_w,
        seed=scenario.seed,
    )


def _records_for_seed(plan: ExperimentPlan, seed: int,
                      scenario, ue_total: int | None) -> list:
    cfg = scenario.config
    omegas = list(plan.omegas) if plan.kind == "omega" else [plan.fixed_omega]
    total = ue_total if ue_total is not None else cfg.num_aps * cfg.ues_per_ap
    cp_w = cfg.num_aps * cfg.ues_per_ap * cfg.circuit_power_w
    W = cfg.total_bandwidth_hz
    t0 = time.time()
    try:
        selections, _, runs = sweep_modes(scenario, list(plan.modes), omegas,
                                          plan.solve_settings())
    except InfeasibleInstanceError:
        wall = time.time() - t0
        return [
            RunRecord(plan.name, seed, mode, omega, total,
                      math.nan, math.nan, math.nan, cp_w, math.nan,
                      "infeasible", 0, math.nan, math.nan, "none", wall)
            for mode in plan.modes for omega in omegas
        ]

    records = []
    for mode in plan.modes:
        if mode not in selections:      # mode cannot serve this UE load
            continue
        for omega in omegas:
            run = runs[mode][omega]
            cand = selections[mode][omega]
            if cand is None:
                records.append(RunRecord(
                    plan.name, seed, mode, omega, total,
                    math.nan, math.nan, math.nan, cp_w, math.nan,
                    "infeasible", run.solver.telemetry.iterations,
                    run.utopia.u1_star_se, run.utopia.u2_star_w,
                    run.utopia.source, run.wall_time_s))
                continue
            ee = cand.sr_bps / (cand.sp_w + cp_w)
            records.append(RunRecord(
                plan.name, seed, mode, omega, total,
                cand.sr_bps / W, cand.sr_bps, cand.sp_w, cp_w, ee,
                "ok", run.solver.telemetry.iterations,
                run.utopia.u1_star_se, run.utopia.u2_star_w,
                run.utopia.source, run.wall_time_s))
    return records


def run_experiment(plan: ExperimentPlan, csv_path: str | None = None,
                   workers: int = 1):
    """Execute a plan and write its CSV.

    Returns (records, csv_path). ``workers`` > 1 runs seeds in a thread
    pool; the heavy numpy kernels release the interpreter lock only
    partially, so the default stays serial.
    """
    plan.validate()
    seeds = [plan.base_seed + i for i in range(plan.trials)]
    tasks = []
    if plan.kind == "omega":
        for seed in seeds:
            scenario = generate_scenario(plan.config_for(), seed=seed)
            tasks.append((seed, scenario, None))
    else:
        aps = plan.config_for(max(plan.ue_counts)).num_aps
        for seed in seeds:
            drop = generate_scenario(plan.config_for(max(plan.ue_counts)),
                                     seed=seed)
            for total in plan.ue_counts:
                tasks.append((seed, _prefix_scenario(drop, total // aps),
                              total))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(
                lambda t: _records_for_seed(plan, *t), tasks))
    else:
        chunks = [_records_for_seed(plan, seed, scenario, total)
                  for seed, scenario, total in tasks]

    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda r: (r.seed, _mode_rank(r.mode), r.omega,
                                r.ue_total))
    if csv_path is None:
        csv_path = os.path.join(plan.out_dir, f"{plan.name}.csv")
    write_csv(records, csv_path)
    return records, csv_path


def write_csv(records, path: str) -> None:
    """Write records atomically (temp file + rename in the target dir)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {RESULTS_FORMAT}\n")
            writer = csv.writer(fh)
            writer.writerow(COLUMNS)
            for rec in records:
                writer.writerow(rec.to_row())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path: str) -> list:
    """Load a results CSV into typed dict rows, validating the schema."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise SchemaError("missing results format header line")
        if header.lstrip("# ") != RESULTS_FORMAT:
            raise SchemaError(f"unsupported results format {header!r}")
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        for column in COLUMNS:
            if column not in names:
                raise SchemaError(f"missing column {column!r}")
        rows = []
        for raw in reader:
            row = dict(raw)
            for key in ("omega", "se_bps_hz", "sr_bps", "sp_w", "cp_w",
                        "ee_bps_j", "utopia_se_bps_hz", "utopia_sp_w",
                        "wall_time_s"):
                row[key] = float(raw[key])
            for key in ("seed", "ue_total", "solver_iterations"):
                row[key] = int(raw[key])
            rows.append(row)
    return rows


# --------------------------------------------------------------------------
# figures


def _mean_by(rows, x_key, y_key):
    """Mean of y over rows sharing an x value; returns sorted (xs, ys)."""
    groups: dict = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault(row[x_key], []).append(row[y_key])
    xs = sorted(groups)
    return xs, [float(np.mean(groups[x])) for x in xs]


def _modes_present(rows) -> list:
    present = {row["mode"] for row in rows}
    ordered = [m for m in LEGEND_ORDER if m in present]
    return ordered + sorted(present - set(ordered))


def render_plots(csv_path: str, out_dir: str | None = None,
                 prefix: str | None = None) -> list:
    """Render the three result figures from a results CSV.

    Returns the written file paths. Raises EmptyResultsError before any
    file is written when the CSV has no data rows.
    """
    rows = read_csv(csv_path)
    if not rows:
        raise EmptyResultsError(f"no data rows in {csv_path}")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if out_dir is None:
        out_dir = os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(out_dir, exist_ok=True)
    if prefix is None:
        prefix = os.path.splitext(os.path.basename(csv_path))[0]
    modes = _modes_present(rows)
    colors = {m: f"C{i}" for i, m in enumerate(LEGEND_ORDER)}
    by_mode = {m: [r for r in rows if r["mode"] == m] for m in modes}
    paths = []

    # spectral efficiency lines + transmit power bars over the weight sweep
    fig, ax_se = plt.subplots(figsize=(7.0, 4.4))
    ax_sp = ax_se.twinx()
    omegas = sorted({r["omega"] for r in rows})
    width = (min(np.diff(omegas)) if len(omegas) > 1 else 0.1) * 0.8
    for i, m in enumerate(modes):
        xs, se = _mean_by(by_mode[m], "omega", "se_bps_hz")
        _, sp = _mean_by(by_mode[m], "omega", "sp_w")
        label = MODE_LABELS.get(m, m)
        color = colors.get(m, f"C{4 + i}")
        ax_se.plot(xs, se, marker="o", color=color, label=label)
        offset = (i - (len(modes) - 1) / 2) * width / max(len(modes), 1)
        ax_sp.bar([x + offset for x in xs], sp,
                  width=width / max(len(modes), 1),
                  color=color, alpha=0.3)
    ax_se.set_xlabel("rate weight")
    ax_se.set_ylabel("mean SE (bps/Hz)")
    ax_sp.set_ylabel("mean transmit power (W, bars)")
    ax_se.legend(loc="upper left")
    fig.tight_layout()
    path = os.path.join(out_dir, f"{prefix}_se_sp.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths.append(path)

    # energy efficiency against spectral efficiency, traced along the sweep
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for m in modes:
        xs, se = _mean_by(by_mode[m], "omega", "se_bps_hz")
        _, ee = _mean_by(by_mode[m], "omega", "ee_bps_j")
        order = np.argsort(se)
        ax.plot(np.asarray(se)[order], np.asarray(ee)[order] / 1e6,
                marker="s", color=colors.get(m, "C4"),
                label=MODE_LABELS.get(m, m))
    ax.set_xlabel("mean SE (bps/Hz)")
    ax.set_ylabel("mean EE (Mbit/J)")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, f"{prefix}_ee_se.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths.append(path)

    # spectral efficiency against the UE-count sweep axis
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for m in modes:
        xs, se = _mean_by(by_mode[m], "ue_total", "se_bps_hz")
        ax.plot(xs, se, marker="^", color=colors.get(m, "C4"),
                label=MODE_LABELS.get(m, m))
    ax.set_xlabel("total UEs")
    ax.set_ylabel("mean SE (bps/Hz)")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, f"{prefix}_se_ues.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths.append(path)
    return paths


# --------------------------------------------------------------------------
# stock plans


def weight_sweep_plan(name: str = "weight_sweep", trials: int = 5,
                      profile: str = "fast") -> ExperimentPlan:
    """Desk-scale weight sweep across all four modes."""
    return ExperimentPlan(name=name, kind="omega", trials=trials,
                          profile=profile)


def ue_sweep_plan(name: str = "ue_sweep", trials: int = 5,
                  profile: str = "fast") -> ExperimentPlan:
    """Single-AP UE-count sweep at a fixed weight with deep clusters."""
    return ExperimentPlan(
        name=name, kind="ue_count", trials=trials, profile=profile,
        modes=("noma", "pod"), ue_counts=(2, 4, 6, 8), fixed_omega=0.4,
        num_aps=1, num_subbands=2, cluster_capacity=10)


def full_scale_plan(name: str = "full_scale", trials: int = 30) -> ExperimentPlan:
    """Paper-scale weight sweep (2 APs, 6 UEs each, 4 subbands).

    This is the long-running configuration: expect hours, not minutes.
    The test suite never runs it.
    """
    return ExperimentPlan(
        name=name, kind="omega", scale="paper", trials=trials,
        omegas=tuple(round(0.1 * i, 1) for i in range(1, 10)),
        profile="accurate")
