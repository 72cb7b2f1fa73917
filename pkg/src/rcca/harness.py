"""Seeded Monte-Carlo experiments over one sweep axis.

Every (sweep value, realization) pair gets a child seed derived from the
master seed, so results do not depend on how many workers run them or in
which order they finish.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .core import SolverOptions, rcca_solve
from .factorization import factorize_covariances
from .metrics import dual_order, downlink_sum_rate, hybrid_sum_rate
from .sysmodel import ConfigError, SystemConfig, generate_channel

__all__ = [
    "AXES",
    "DEFAULT_VALUES",
    "ExperimentSpec",
    "ResultRow",
    "child_seed",
    "apply_sweep",
    "run_realization",
    "run_experiment",
    "convergence_traces",
    "summarize",
    "emit_plot_data",
    "emit_trace_data",
    "write_results",
    "read_results",
]

log = logging.getLogger(__name__)

# sweep axis -> (x column label, plot label)
AXES = {
    "none": ("point", "point"),
    "snr_db": ("snr_db", "SNR [dB]"),
    "N_p": ("num_paths", "N_p"),
    "N_RF": ("num_rf_chains", "N_RF"),
    "B_MHz": ("bandwidth_mhz", "B [MHz]"),
    "quant_bits": ("quant_bits", "b"),
}

DEFAULT_VALUES: dict[str, list] = {
    "none": [0],
    "snr_db": [-10, -5, 0, 5, 10, 15],
    "N_p": [4, 8, 16, 24, 32],
    "N_RF": [2, 4, 6, 8],
    "B_MHz": [400, 800, 1600, 3200, 4000],
    "quant_bits": [None, 3, 2],
}

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def child_seed(master_seed: int, sweep_index: int, realization_index: int) -> int:
    """Per-realization seed, ``splitmix64(splitmix64(master) ^ (sweep << 32 | real))``.

    splitmix64 is a bijection on 64-bit words, so distinct index pairs below
    2**32 never collide for a given master seed.
    """
    if not (0 <= sweep_index < 2 ** 32 and 0 <= realization_index < 2 ** 32):
        raise ValueError("sweep and realization indices must fit in 32 bits")
    packed = (sweep_index << 32) | realization_index
    return _splitmix64(_splitmix64(master_seed & _MASK64) ^ packed)


def _format_value(value: Any) -> str:
    if value is None:
        return "inf"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def apply_sweep(cfg: SystemConfig, axis: str, value: Any) -> SystemConfig:
    try:
        if axis == "none":
            return cfg
        if axis == "snr_db":
            return cfg.with_snr_db(float(value))
        if axis == "N_p":
            return cfg.replace(N_p=int(value))
        if axis == "N_RF":
            return cfg.replace(N_RF=int(value))
        if axis == "B_MHz":
            return cfg.replace(B=float(value) * 1e6)
        if axis == "quant_bits":
            return cfg.replace(quant_bits=None if value is None else int(value))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value {value!r} for axis {axis}: {exc}") from exc
    raise ConfigError(f"unknown sweep axis {axis!r}")


@dataclass
class ExperimentSpec:
    base: SystemConfig = field(default_factory=SystemConfig)
    axis: str = "none"
    values: list = field(default_factory=lambda: [0])
    realizations: int = 200
    master_seed: int = 0
    out_dir: Optional[Path] = None
    jobs: int = 1
    fast_delta: bool = False
    max_iter: int = 50
    record_timing: bool = True

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        for value in self.values:
            apply_sweep(self.base, self.axis, value)

    def configs(self) -> list[SystemConfig]:
        return [apply_sweep(self.base, self.axis, v) for v in self.values]

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_iter=self.max_iter, fast_delta=self.fast_delta)

    def metadata(self) -> dict:
        return {
            "axis": self.axis,
            "values": [_format_value(v) for v in self.values],
            "realizations": self.realizations,
            "master_seed": self.master_seed,
            "fast_delta": self.fast_delta,
            "max_iter": self.max_iter,
            "base_config": self.base.to_dict(),
            "resolved_configs": [c.to_dict() for c in self.configs()],
            "seed_derivation": "splitmix64(splitmix64(master_seed) ^ (sweep_index << 32 | realization_index))",
            "rate_units": "bits/s/Hz per subcarrier",
        }


@dataclass
class ResultRow:
    sweep_value: str
    realization: int
    seed: int
    digital_sum_rate: float = math.nan
    hybrid_sum_rate: float = math.nan
    iterations: int = 0
    converged: bool = False
    wall_time_ms: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def run_realization(cfg: SystemConfig, seed: int, opts: SolverOptions,
                    sweep_value: str = "0", realization: int = 0,
                    record_timing: bool = True) -> ResultRow:
    """Channel draw, RCCA, factorization and both downlink rates for one seed."""
    row = ResultRow(sweep_value=sweep_value, realization=realization, seed=seed)
    start = time.perf_counter()
    try:
        channel = generate_channel(seed, cfg)
        result = rcca_solve(channel, cfg, opts)
        order = dual_order(cfg.U)
        row.digital_sum_rate = downlink_sum_rate(channel, result.dl_covs, order,
                                                 cfg.sigma_n2).sum_rate
        fact = factorize_covariances(result.dl_covs, cfg.N_RF, quant_bits=cfg.quant_bits)
        row.hybrid_sum_rate = hybrid_sum_rate(channel, fact.precoders.P_RF, fact.precoders.P_BB,
                                              order, cfg.sigma_n2).sum_rate
        row.iterations = result.iterations
        row.converged = result.converged
    except Exception as exc:  # recorded in-row, the run goes on
        log.warning("realization %d (seed %d) failed: %s", realization, seed, exc)
        row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        log.debug(traceback.format_exc())
    if record_timing:
        row.wall_time_ms = (time.perf_counter() - start) * 1e3
    return row


def _run_task(task: tuple) -> ResultRow:
    return run_realization(*task)


# axes that only change post-processing reuse the same channel draws
_SHARED_CHANNEL_AXES = {"quant_bits"}


def _seed_index(spec: ExperimentSpec, sweep_index: int) -> int:
    return 0 if spec.axis in _SHARED_CHANNEL_AXES else sweep_index


def _tasks(spec: ExperimentSpec) -> list[tuple]:
    opts = spec.solver_options()
    tasks = []
    for si, (value, cfg) in enumerate(zip(spec.values, spec.configs())):
        for ri in range(spec.realizations):
            tasks.append((cfg, child_seed(spec.master_seed, _seed_index(spec, si), ri), opts,
                          _format_value(value), ri, spec.record_timing))
    return tasks


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """Rows ordered by (sweep value, realization) whatever the worker count."""
    tasks = _tasks(spec)
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.jobs))))
    else:
        rows = [_run_task(t) for t in tasks]
    if spec.out_dir is not None:
        write_results(rows, spec)
    return rows


def convergence_traces(spec: ExperimentSpec) -> dict[str, list[float]]:
    """Mean uplink rate per iteration for every sweep value.

    Runs that stop early are held at their last value so all traces span
    the same number of iterations.
    """
    opts = spec.solver_options()
    traces: dict[str, list[float]] = {}
    for si, (value, cfg) in enumerate(zip(spec.values, spec.configs())):
        runs = []
        for ri in range(spec.realizations):
            channel = generate_channel(child_seed(spec.master_seed, _seed_index(spec, si), ri), cfg)
            runs.append(rcca_solve(channel, cfg, opts).rate_trace)
        length = max(len(r) for r in runs)
        padded = np.array([r + [r[-1]] * (length - len(r)) for r in runs])
        traces[_format_value(value)] = padded.mean(axis=0).tolist()
    return traces


_COLUMNS = [f.name for f in ResultRow.__dataclass_fields__.values()]


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for row in rows:
        writer.writerow([_cell(getattr(row, c)) for c in _COLUMNS])
    return buf.getvalue()


def read_results(path: Path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for rec in csv.DictReader(fh):
            out.append(ResultRow(
                sweep_value=rec["sweep_value"],
                realization=int(rec["realization"]),
                seed=int(rec["seed"]),
                digital_sum_rate=float(rec["digital_sum_rate"]),
                hybrid_sum_rate=float(rec["hybrid_sum_rate"]),
                iterations=int(rec["iterations"]),
                converged=rec["converged"] == "1",
                wall_time_ms=float(rec["wall_time_ms"]),
                error=rec["error"],
            ))
        return out


def summarize(rows: Sequence[ResultRow]) -> list[dict]:
    """Per sweep value: mean/stddev of both rates, mean iterations and gap.

    Statistics use successful rows only; standard deviations are sample
    (n-1) deviations and 0 for a single row.
    """
    if not rows:
        raise ValueError("cannot summarize an empty result table")
    groups: dict[str, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault(row.sweep_value, []).append(row)

    def stats(xs: list[float]) -> tuple[float, float]:
        if not xs:
            return math.nan, math.nan
        return statistics.fmean(xs), statistics.stdev(xs) if len(xs) > 1 else 0.0

    summary = []
    for value, group in groups.items():
        ok = [r for r in group if r.ok]
        dig_mean, dig_std = stats([r.digital_sum_rate for r in ok])
        hyb_mean, hyb_std = stats([r.hybrid_sum_rate for r in ok])
        summary.append({
            "sweep_value": value,
            "n_ok": len(ok),
            "n_failed": len(group) - len(ok),
            "digital_mean": dig_mean,
            "digital_std": dig_std,
            "hybrid_mean": hyb_mean,
            "hybrid_std": hyb_std,
            "iterations_mean": stats([float(r.iterations) for r in ok])[0],
            "gap_mean": stats([r.digital_sum_rate - r.hybrid_sum_rate for r in ok])[0],
            "converged_fraction": (sum(r.converged for r in ok) / len(ok)) if ok else math.nan,
        })
    return summary


def _sort_key(value: str) -> float:
    return math.inf if value == "inf" else float(value)


def emit_plot_data(summary: Sequence[dict], axis: str) -> str:
    """Whitespace-separated blocks, one ``x y`` block per series.

    Numeric axes are sorted ascending; ``inf`` (ideal phase shifters) sorts
    last.
    """
    x_label = AXES[axis][0]
    lines = [f"# {x_label} sum_rate_bits_per_s_per_hz"]
    entries = sorted(summary, key=lambda s: _sort_key(s["sweep_value"]))
    if not entries:
        return "\n".join(lines) + "\n"
    for series, key in (("Digital RCCA", "digital_mean"), ("Hybrid RCCA", "hybrid_mean")):
        lines.append("")
        lines.append(f"# series: {series}")
        for s in entries:
            lines.append(f"{s['sweep_value']} {_cell(float(s[key]))}")
    return "\n".join(lines) + "\n"


def emit_trace_data(traces: dict[str, list[float]], axis: str = "snr_db") -> str:
    """Per-iteration uplink rates, one block per sweep value (iteration 0 is the start point)."""
    lines = ["# iteration sum_rate_bits_per_s_per_hz"]
    for value in sorted(traces, key=_sort_key):
        lines.append("")
        lines.append(f"# series: {AXES[axis][0]}={value}")
        for it, rate in enumerate(traces[value]):
            lines.append(f"{it} {_cell(float(rate))}")
    return "\n".join(lines) + "\n"


def write_results(rows: Sequence[ResultRow], spec: ExperimentSpec) -> dict[str, Path]:
    """Write results CSV, JSON sidecar, summary CSV and plot data under ``spec.out_dir``."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"results_{spec.axis}"
    paths = {
        "results": out / f"{stem}.csv",
        "metadata": out / f"{stem}.json",
        "summary": out / f"summary_{spec.axis}.csv",
        "plot": out / f"plot_{spec.axis}.dat",
    }
    paths["results"].write_text(rows_to_csv(rows), encoding="utf-8")
    paths["metadata"].write_text(json.dumps(spec.metadata(), indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    summary = summarize(rows)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(summary[0]), lineterminator="\n")
    writer.writeheader()
    for s in summary:
        writer.writerow({k: _cell(v) for k, v in s.items()})
    paths["summary"].write_text(buf.getvalue(), encoding="utf-8")
    paths["plot"].write_text(emit_plot_data(summary, spec.axis), encoding="utf-8")
    return paths
