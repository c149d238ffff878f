"""Monte Carlo experiment runners and flat-file plumbing.

Three scenario kinds: convergence (trajectory densities at the scale
cycle against the limit profile of the growth limit), estimation (the
full detection-and-inversion chain, replicate by replicate), and
coupling (pathwise order checks plus the scaled gap between the linear
and saturating processes).  A fourth kind emits profile curves on a
grid for plotting.  Every runner is bit-reproducible from its scenario:
trajectory streams and reference streams use distinct purposes, so the
two sides of a distributional comparison never share random numbers.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import streams
from .kinetics import (
    PROFILE_PRECISION,
    Kinetics,
    Precision,
    iterate_mean_map,
    limit_profile,
)
from .simulate import (
    COUPLED,
    SimConfig,
    order_violations,
    simulate_coupled,
    simulate_reaction,
)
from .limit_law import sample_limit
from .inference import (
    NotDetectedError,
    estimate_copies_normal,
    estimate_efficiency,
    limit_observables_batch,
    observe,
)

__all__ = [
    "KINDS",
    "ScenarioSpec",
    "ExperimentResult",
    "ks_distance",
    "run_convergence",
    "run_estimation",
    "run_coupling",
    "emit_profile_curves",
    "run_experiment",
    "write_result_json",
    "read_result_json",
]

KINDS = ("convergence", "estimation", "coupling", "curves")

DEFAULT_CURVE_EFFICIENCIES = (0.25, 0.5, 0.9, 1.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Flat description of one experiment; serializes to JSON."""

    kind: str
    v: float = 0.5
    m: int = 30
    z0: int = 1
    rho: float = 0.05
    replicates: int = 200
    seed: int = 0
    out: str | None = None
    ref_count: int = 10 ** 5
    shift: int = 0
    extra_cycles: int = 6
    m_values: tuple | None = None
    gamma: float = 0.75
    c_exponent: float = 0.6
    fit_efficiency: bool = False
    v_list: tuple = DEFAULT_CURVE_EFFICIENCIES
    x_max: float = 4.0
    x_step: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not 0.0 < self.v <= 1.0:
            raise ValueError("v must be in (0, 1]")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.z0 < 1:
            raise ValueError("z0 must be at least 1")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must be in (0, 1)")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.ref_count < 2:
            raise ValueError("ref_count must be at least 2")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        if self.extra_cycles < 0:
            raise ValueError("extra_cycles must be nonnegative")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.c_exponent < 1.0:
            raise ValueError("c_exponent must be in (0, 1)")
        if self.m_values is not None:
            object.__setattr__(self, "m_values", tuple(int(x) for x in self.m_values))
        object.__setattr__(self, "v_list", tuple(float(x) for x in self.v_list))

    def to_json_dict(self) -> dict:
        doc = asdict(self)
        # lists survive a JSON round trip unchanged, tuples do not
        for key in ("m_values", "v_list"):
            if doc[key] is not None:
                doc[key] = list(doc[key])
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown scenario fields: {sorted(extra)}")
        doc = dict(doc)
        for key in ("m_values", "v_list"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass(frozen=True)
class ExperimentResult:
    """Summary plus per-replicate records for one scenario run."""

    kind: str
    spec: dict
    summary: dict
    records: list = field(default_factory=list)
    runtime_seconds: float = 0.0

    def __post_init__(self):
        for key, value in self.summary.items():
            if "ks" in key and value is not None:
                if not 0.0 <= float(value) <= 1.0:
                    raise ValueError(f"{key}={value} outside [0, 1]")


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup gap of empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def _reference_profile_sample(spec: ScenarioSpec, kin: Kinetics) -> np.ndarray:
    ens = sample_limit(
        spec.v, z=spec.z0, count=spec.ref_count, seed=spec.seed,
        purpose=streams.REFERENCE,
    )
    return limit_profile(ens.samples, kin)


def run_convergence(spec: ScenarioSpec) -> ExperimentResult:
    """Compare scale-cycle densities against the limit profile of the growth limit.

    Simulates spec.replicates trajectories to cycle m (+shift) and an
    independent reference sample H(W(z0)); reports the two-sample KS
    distance and a decile table.  With shift=n the trajectories at cycle
    m+n are also compared against the n-fold mean map applied to the
    reference sample.
    """
    if spec.kind != "convergence":
        raise ValueError("spec.kind must be 'convergence'")
    start = time.perf_counter()
    kin = Kinetics.from_exponent(spec.v, spec.m)
    n_cycles = spec.m + spec.shift

    x_m = np.empty(spec.replicates, dtype=float)
    x_shift = np.empty(spec.replicates, dtype=float) if spec.shift else None
    for i in range(spec.replicates):
        cfg = SimConfig(kin, z0=spec.z0, n_cycles=n_cycles,
                        seed=spec.seed, replicate_id=i)
        traj = simulate_reaction(cfg)
        x_m[i] = traj.counts[spec.m] / kin.K
        if spec.shift:
            x_shift[i] = traj.counts[n_cycles] / kin.K

    ref = _reference_profile_sample(spec, kin)
    ks_main = ks_distance(x_m, ref)
    deciles = np.arange(10, 100, 10)
    summary = {
        "m": spec.m,
        "shift": spec.shift,
        "ks": ks_main,
        "ks_shifted": None,
        "trajectory_deciles": [float(q) for q in np.percentile(x_m, deciles)],
        "reference_deciles": [float(q) for q in np.percentile(ref, deciles)],
    }
    records = [{"replicate": i, "x_m": float(x_m[i])} for i in range(spec.replicates)]
    if spec.shift:
        ref_shifted = iterate_mean_map(ref, spec.shift, kin)
        summary["ks_shifted"] = ks_distance(x_shift, ref_shifted)
        for i, rec in enumerate(records):
            rec["x_shifted"] = float(x_shift[i])
    return ExperimentResult(
        kind=spec.kind, spec=spec.to_json_dict(), summary=summary,
        records=records, runtime_seconds=time.perf_counter() - start,
    )


def run_estimation(spec: ScenarioSpec) -> ExperimentResult:
    """Run the detection-and-inversion chain over many replicates.

    Replicates whose density never reaches rho are counted as missed and
    excluded.  With v=1 copies are recovered by exact inversion; below 1
    the normal-approximation estimate is reported (the likelihood scan
    is left to the single-trajectory pipeline).  fit_efficiency adds a
    per-replicate efficiency estimate.
    """
    if spec.kind != "estimation":
        raise ValueError("spec.kind must be 'estimation'")
    start = time.perf_counter()
    kin = Kinetics.from_exponent(spec.v, spec.m)
    n_cycles = spec.m + spec.extra_cycles

    observations = []
    replicate_ids = []
    missed = 0
    for i in range(spec.replicates):
        cfg = SimConfig(kin, z0=spec.z0, n_cycles=n_cycles,
                        seed=spec.seed, replicate_id=i)
        traj = simulate_reaction(cfg)
        try:
            obs = observe(traj, spec.rho, v_known=spec.v)
        except NotDetectedError:
            missed += 1
            continue
        observations.append(obs)
        replicate_ids.append(i)

    records = []
    summary = {
        "replicates": spec.replicates,
        "detected": len(observations),
        "missed": missed,
        "z0": spec.z0,
        "z_hat_mode": None,
        "fraction_within_one": None,
        "t_vs_limit_ks": None,
        "v_hat_median": None,
    }
    if observations:
        ts = limit_observables_batch(observations, v=spec.v)
        t_means = np.array([float(t.mean()) for t in ts])
        if spec.v == 1.0:
            z_hats = np.maximum(1, np.rint(t_means).astype(int))
        else:
            z_hats = np.array([
                estimate_copies_normal(t, spec.v, integer=True) for t in t_means
            ])
        v_hats = None
        if spec.fit_efficiency:
            v_hats = np.array([
                estimate_efficiency(o.kappas) if o.kappas.size >= 2 else np.nan
                for o in observations
            ])
        for idx, (i, obs) in enumerate(zip(replicate_ids, observations)):
            rec = {
                "replicate": i,
                "tau": obs.tau,
                "t_mean": float(t_means[idx]),
                "z_hat": int(z_hats[idx]),
            }
            if v_hats is not None and not math.isnan(v_hats[idx]):
                rec["v_hat"] = float(v_hats[idx])
            records.append(rec)

        values, counts = np.unique(z_hats, return_counts=True)
        summary["z_hat_mode"] = int(values[np.argmax(counts)])
        summary["fraction_within_one"] = float(
            np.mean(np.abs(z_hats - spec.z0) <= 1)
        )
        if spec.v < 1.0:
            ref = sample_limit(
                spec.v, z=spec.z0, count=spec.ref_count, seed=spec.seed,
                purpose=streams.REFERENCE,
            ).samples
            summary["t_vs_limit_ks"] = ks_distance(t_means, ref)
        if v_hats is not None and np.any(~np.isnan(v_hats)):
            summary["v_hat_median"] = float(np.nanmedian(v_hats))
    return ExperimentResult(
        kind=spec.kind, spec=spec.to_json_dict(), summary=summary,
        records=records, runtime_seconds=time.perf_counter() - start,
    )


def _coupling_sweep(m: int) -> tuple:
    lo = max(4, m - 6)
    return tuple(range(lo, m + 1, 2)) or (m,)


def run_coupling(spec: ScenarioSpec) -> ExperimentResult:
    """Pathwise order checks and the scaled linear-vs-saturating gap.

    For each scale exponent in the sweep, runs coupled replicates to
    cycle n1 = round(c*m) and records (Y_n1 - Z_n1) * K**(-c).  Any
    order violation raises out of the coupled constructor, so a
    completed run certifies zero violations; the summary keeps the
    violation count explicitly and the per-m medians of the scaled gap.
    """
    if spec.kind != "coupling":
        raise ValueError("spec.kind must be 'coupling'")
    start = time.perf_counter()
    m_values = spec.m_values if spec.m_values is not None else _coupling_sweep(spec.m)
    if not m_values:
        raise ValueError("empty m sweep")

    records = []
    medians = []
    worst = 0
    for m in m_values:
        kin = Kinetics.from_exponent(spec.v, m)
        n1 = max(1, round(spec.c_exponent * m))
        scale = kin.K ** (-spec.c_exponent)
        gaps = np.empty(spec.replicates, dtype=float)
        for i in range(spec.replicates):
            cfg = SimConfig(kin, z0=spec.z0, n_cycles=n1, mode=COUPLED,
                            gamma=spec.gamma, seed=spec.seed, replicate_id=i)
            run = simulate_coupled(cfg)
            counts = order_violations(run)
            worst = max(worst, max(counts.values()))
            gap = int(run.upper.counts[n1]) - int(run.reaction.counts[n1])
            gaps[i] = gap * scale
            records.append({"m": m, "replicate": i, "scaled_gap": float(gaps[i])})
        medians.append(float(np.median(gaps)))

    summary = {
        "m_values": [int(m) for m in m_values],
        "n1_values": [max(1, round(spec.c_exponent * m)) for m in m_values],
        "median_scaled_gap": medians,
        "max_violations": worst,
        "gap_decreasing": all(b <= a for a, b in zip(medians, medians[1:])),
    }
    return ExperimentResult(
        kind=spec.kind, spec=spec.to_json_dict(), summary=summary,
        records=records, runtime_seconds=time.perf_counter() - start,
    )


def emit_profile_curves(
    v_list,
    x_grid,
    prec: Precision = PROFILE_PRECISION,
    out=None,
) -> list[tuple[float, np.ndarray]]:
    """Tabulate the limit profile on a grid for each efficiency.

    Returns [(v, values)] and, when out is given, writes CSV rows
    v, x, profile, diagonal with 17 significant digits.  The grid must
    lie within [0, 4], the plotted range where the profile-to-diagonal
    comparison is informative.
    """
    grid = np.asarray(x_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("x_grid must be a nonempty 1-d sequence")
    if np.any(grid < 0.0) or np.any(grid > 4.0):
        raise ValueError("x_grid must lie within [0, 4]")
    curves = []
    for v in v_list:
        kin = Kinetics(v=float(v), K=2.0)  # K is irrelevant to the profile
        curves.append((float(v), limit_profile(grid, kin, prec)))
    if out is not None:
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["v", "x", "profile", "diagonal"])
            for v, values in curves:
                for x, h in zip(grid, values):
                    writer.writerow(
                        ["%.17g" % v, "%.17g" % x, "%.17g" % h, "%.17g" % x]
                    )
    return curves


def run_curves(spec: ScenarioSpec) -> ExperimentResult:
    if spec.kind != "curves":
        raise ValueError("spec.kind must be 'curves'")
    if spec.out is None:
        raise ValueError("curves scenario needs an output path")
    start = time.perf_counter()
    steps = int(round(spec.x_max / spec.x_step))
    grid = np.linspace(0.0, spec.x_max, steps + 1)
    curves = emit_profile_curves(spec.v_list, grid, out=spec.out)
    summary = {
        "rows": sum(len(vals) for _, vals in curves),
        "efficiencies": [v for v, _ in curves],
        "x_max": spec.x_max,
        "x_step": spec.x_step,
    }
    return ExperimentResult(
        kind=spec.kind, spec=spec.to_json_dict(), summary=summary,
        records=[], runtime_seconds=time.perf_counter() - start,
    )


_RUNNERS = {
    "convergence": run_convergence,
    "estimation": run_estimation,
    "coupling": run_coupling,
    "curves": run_curves,
}


def run_experiment(spec: ScenarioSpec) -> ExperimentResult:
    """Dispatch a scenario to its runner."""
    return _RUNNERS[spec.kind](spec)


def write_result_json(result: ExperimentResult, path) -> None:
    doc = {
        "kind": result.kind,
        "spec": result.spec,
        "summary": result.summary,
        "records": result.records,
        "runtime_seconds": result.runtime_seconds,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_result_json(path) -> ExperimentResult:
    with open(path) as fh:
        doc = json.load(fh)
    return ExperimentResult(
        kind=doc["kind"], spec=doc["spec"], summary=doc["summary"],
        records=doc["records"], runtime_seconds=doc["runtime_seconds"],
    )
