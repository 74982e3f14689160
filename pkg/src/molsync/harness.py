"""Monte Carlo experiment engine.

An :class:`ExperimentConfig` is resolved into a :class:`Link` (CIRs at their
release counts, receiver model, threshold), then ``blocks`` independent
blocks are simulated. Block ``b`` draws its randomness from
``(seed, namespace, seed_point, b)`` only, so results do not depend on the
number of workers; reports are folded in ascending block order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import sync_f1, sync_f2
from .channel import (
    ChannelParams,
    Cir,
    ExpectedSignal,
    build_transparent_cir,
    calibrate_release_count,
    db_to_linear,
    linear_to_db,
    load_cir_table,
    superpose,
)
from .coding import MarkerCodeConfig, marker_decode, marker_encode, strip_markers
from .errors import CodingError, ConfigurationError, SweepError
from .metrics import AggregateReport, BlockReport, aggregate, bit_error_rate, block_report
from .receiver import ReceiverModel, Scheme, SchemeParams
from .timeline import (
    Framework,
    TimelineConfig,
    block_streams,
    emission_schedule,
    sample_observations,
    sample_timeline,
    trace_length,
)

log = logging.getLogger(__name__)

# Execution settings that do not change any number in the results.
EXECUTION_FIELDS = frozenset({"threads", "output_dir"})

EVAL_NAMESPACE = 0
CALIBRATION_NAMESPACE = 1


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelSection(_Section):
    """One molecule type. Give ``release_count`` or ``snr_db`` (or neither when a budget is set)."""

    diffusion_coefficient: float = 5e-9
    distance: float = 2e-6
    receiver_radius: float = 1e-6
    noise_mean: float = 5.0
    release_count: float | None = None
    snr_db: float | None = None
    cir_table: str | None = Field(None, description="CSV of a per-molecule CIR; replaces the transparent model")


def _default_channel() -> ChannelSection:
    return ChannelSection(snr_db=3.0)


class TimelineSection(_Section):
    mean_symbol_duration: float = 2e-3
    alpha: float = 0.2
    block_length: int = 20
    sample_step: float = 50e-6


class ThresholdSection(_Section):
    threshold: float | Literal["optimize"] | None = Field(
        None, description="TT threshold: molecules (F1) or count/c_x (F2), or 'optimize'"
    )
    min_window: float | None = Field(None, description="T_dw in seconds; defaults to T_min")
    grid: list[float] | None = None
    objective: Literal["ber", "mae"] = "mae"
    calibration_blocks: int = Field(1000, gt=0)


class BudgetSection(_Section):
    """Average-molecule budget N̄ split by ``beta`` between the two types."""

    beta: float = Field(gt=0, lt=1)
    mean_budget: float | None = None
    mean_budget_snr_db: float | None = Field(
        None, description="set N̄ so that a release of N̄ molecules has this SNR"
    )


class CodingSection(_Section):
    data_length: int = 7
    marker: str = "100"


class ExperimentConfig(_Section):
    framework: Framework = Framework.F1
    scheme: Scheme = Scheme.ML
    channel_a: ChannelSection = Field(default_factory=_default_channel)
    channel_b: ChannelSection = Field(default_factory=_default_channel)
    timeline: TimelineSection = TimelineSection()
    tt: ThresholdSection = ThresholdSection()
    budget: BudgetSection | None = None
    coding: CodingSection | None = None
    blocks: int = 10_000
    seed: int = Field(0, ge=0)
    seed_point: int = Field(0, ge=0, description="substream index; sweeps give each point its own")
    threads: int = Field(1, ge=1)
    output_dir: str | None = None
    histogram_bin: float = Field(0.05, gt=0)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def with_updates(self, **changes: Any) -> "ExperimentConfig":
        """Copy with nested updates, e.g. ``timeline={"alpha": 0.3}``; re-validated."""
        data = self.model_dump(mode="json")
        for key, value in changes.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value.model_dump(mode="json") if isinstance(value, BaseModel) else value
        return ExperimentConfig.model_validate(data)


@dataclass(frozen=True)
class Link:
    """A fully resolved experiment: everything needed to simulate a block."""

    config: ExperimentConfig
    timeline: TimelineConfig
    cir_a: Cir
    cir_b: Cir
    rx: ReceiverModel
    code: MarkerCodeConfig | None
    derived: dict = field(default_factory=dict)


def _unit_cir(section: ChannelSection, dt: float) -> Cir:
    if section.cir_table:
        return load_cir_table(section.cir_table)
    params = ChannelParams(
        diffusion_coefficient=section.diffusion_coefficient,
        distance=section.distance,
        receiver_radius=section.receiver_radius,
        release_count=1.0,
        noise_mean=section.noise_mean,
    )
    return build_transparent_cir(params, dt)


def _release_counts(config: ExperimentConfig, unit_a: Cir, unit_b: Cir) -> tuple[float, float, dict]:
    info: dict[str, Any] = {}
    ca, cb = config.channel_a, config.channel_b
    if config.budget is not None:
        for name, sec in (("channel_a", ca), ("channel_b", cb)):
            if sec.release_count is not None or sec.snr_db is not None:
                raise ConfigurationError(f"{name}: release_count/snr_db conflict with the budget")
        bud = config.budget
        if (bud.mean_budget is None) == (bud.mean_budget_snr_db is None):
            raise ConfigurationError("budget needs exactly one of mean_budget, mean_budget_snr_db")
        if bud.mean_budget is not None:
            n_bar = bud.mean_budget
        else:
            n_bar = calibrate_release_count(unit_a, ca.noise_mean, db_to_linear(bud.mean_budget_snr_db))
        n_a = 2 * bud.beta * n_bar
        if config.framework is Framework.F1:
            n_b = (1 - bud.beta) * n_bar
        else:
            n_b = 2 * (1 - bud.beta) * n_bar
        info.update(mean_budget=n_bar, beta=bud.beta)
        return n_a, n_b, info
    counts = []
    for name, sec, unit in (("channel_a", ca, unit_a), ("channel_b", cb, unit_b)):
        if (sec.release_count is None) == (sec.snr_db is None):
            raise ConfigurationError(f"{name}: give exactly one of release_count, snr_db")
        if sec.release_count is not None:
            counts.append(sec.release_count)
        else:
            if not sec.noise_mean > 0:
                raise ConfigurationError(f"{name}: SNR is undefined for a zero noise mean")
            counts.append(calibrate_release_count(unit, sec.noise_mean, db_to_linear(sec.snr_db)))
    return counts[0], counts[1], info


def resolve(config: ExperimentConfig, optimize: bool = True) -> Link:
    """Validate ``config`` and compute every derived constant.

    Raises :class:`ConfigurationError` before any simulation when a
    constraint is violated. A threshold of ``"optimize"`` is replaced by the
    result of :func:`optimize_threshold` unless ``optimize`` is false.
    """
    if config.blocks < 1:
        raise ConfigurationError("block count must be >= 1")
    for name, sec in (("channel_a", config.channel_a), ("channel_b", config.channel_b)):
        if not sec.noise_mean > 0:
            raise ConfigurationError(f"{name}: noise mean must be > 0")
    ts = config.timeline
    tc = TimelineConfig(ts.mean_symbol_duration, ts.alpha, ts.block_length, ts.sample_step)
    if config.scheme in (Scheme.ML, Scheme.LF) and tc.t_max > 2 * tc.t_min * (1 + 1e-12):
        raise ConfigurationError(
            f"{config.scheme.value} requires T_max <= 2 T_min, i.e. alpha <= 1/3 (alpha = {ts.alpha})"
        )
    dt = tc.sample_step
    unit_a, unit_b = _unit_cir(config.channel_a, dt), _unit_cir(config.channel_b, dt)
    n_a, n_b, info = _release_counts(config, unit_a, unit_b)
    cir_a, cir_b = unit_a.scaled(n_a), unit_b.scaled(n_b)

    code = None
    if config.coding is not None:
        try:
            code = MarkerCodeConfig.from_string(config.coding.data_length, config.coding.marker)
            code.data_bits(tc.block_length)
        except CodingError as exc:
            raise ConfigurationError(str(exc)) from exc
        if code.marker != (1, 0, 0):
            raise ConfigurationError("only the marker 100 has a decoder")

    min_window = None
    if config.tt.min_window is not None:
        min_window = int(round(config.tt.min_window / dt))
        if abs(min_window * dt - config.tt.min_window) > 1e-9 * dt + 1e-15:
            raise ConfigurationError("T_dw must lie on the sampling grid")
    if min_window is not None and min_window > tc.n_min:
        raise ConfigurationError("T_dw must not exceed T_min")

    threshold = config.tt.threshold
    if config.scheme is Scheme.TT and threshold is None:
        raise ConfigurationError("the TT scheme needs tt.threshold (a number or 'optimize')")
    pending = threshold == "optimize"
    if pending:
        threshold = None
    params = SchemeParams(Scheme.ML if pending else config.scheme, threshold, min_window)
    rx = ReceiverModel.build(
        cir_a, cir_b, config.channel_a.noise_mean, config.channel_b.noise_mean, tc, params
    )
    resolved = config.with_updates(
        channel_a={"release_count": n_a, "snr_db": None},
        channel_b={"release_count": n_b, "snr_db": None},
        budget=None,
    )
    link = Link(resolved, tc, cir_a, cir_b, rx, code, {})
    if pending:
        if not optimize:
            raise ConfigurationError("threshold left as 'optimize'")
        threshold, _ = optimize_threshold(config, config.tt.grid, config.tt.objective)
        rx = replace(rx, params=SchemeParams(config.scheme, threshold, rx.min_window))
        resolved = resolved.with_updates(tt={"threshold": threshold})
        link = replace(link, config=resolved, rx=rx)
    elif config.scheme is Scheme.TT:
        rx = replace(rx, params=SchemeParams(config.scheme, threshold, rx.min_window))
        link = replace(link, rx=rx)

    nc = rx.norms
    derived = {
        "release_count_a": n_a,
        "release_count_b": n_b,
        "snr_a_db": _safe_db(cir_a.peak_value / config.channel_a.noise_mean),
        "snr_b_db": _safe_db(cir_b.peak_value / config.channel_b.noise_mean),
        "peak_time_a": nc.peak_a * dt,
        "peak_time_b": nc.peak_b * dt,
        "norm_c_a": nc.c_a,
        "norm_c_b": nc.c_b,
        "threshold": rx.params.threshold,
        "min_window": rx.min_window * dt,
        "t_min": tc.n_min * dt,
        "t_max": tc.n_max * dt,
        "cir_horizon": (rx.horizon - 1) * dt,
        **info,
    }
    if code is not None:
        derived["data_bits_per_block"] = code.data_bits(tc.block_length)
    return replace(link, derived=derived)


def _safe_db(x: float) -> float:
    return linear_to_db(x) if x > 0 else -math.inf


def simulate_block(link: Link, block: int, namespace: int = EVAL_NAMESPACE) -> BlockReport:
    cfg, tc, rx = link.config, link.timeline, link.rx
    streams = block_streams(cfg.seed, block, namespace, cfg.seed_point)
    tl = sample_timeline(tc, streams.gaps, streams.bits)
    data = None
    if link.code is not None:
        data = tl.bits[: link.code.data_bits(tc.block_length)]
        tl = replace(tl, bits=marker_encode(data, link.code))
    tl = emission_schedule(tl, cfg.framework)
    n = trace_length(tl, tc, rx.horizon)
    dt = tc.sample_step
    ea = ExpectedSignal(dt, superpose(rx.kernel_a, tl.starts, tl.a, n), rx.noise_a)
    eb = ExpectedSignal(dt, superpose(rx.kernel_b, tl.starts, tl.b, n), rx.noise_b)
    trace = sample_observations(ea, eb, streams.counts_a, streams.counts_b)
    module = sync_f1 if cfg.framework is Framework.F1 else sync_f2
    result = module.run_block(trace.counts_a, trace.counts_b, rx, tc.block_length, dt, tl.starts)
    ber = None
    if data is not None:
        try:
            decoded = marker_decode(result.bits, link.code)
        except CodingError:
            decoded = strip_markers(result.bits, link.code)
        ber = bit_error_rate(decoded, data)
    return block_report(result, tl, tc.samples_per_symbol, block, ber)


def _simulate_range(link: Link, start: int, stop: int, namespace: int) -> list[BlockReport]:
    return [simulate_block(link, b, namespace) for b in range(start, stop)]


def simulate(
    link: Link, blocks: int, namespace: int = EVAL_NAMESPACE, threads: int = 1
) -> list[BlockReport]:
    """Reports for blocks ``0..blocks-1`` in block order, however many workers run."""
    if threads <= 1 or blocks < 2:
        return _simulate_range(link, 0, blocks, namespace)
    n_chunks = min(blocks, threads * 4)
    edges = np.linspace(0, blocks, n_chunks + 1).astype(int)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(
            _simulate_range,
            [link] * n_chunks,
            edges[:-1].tolist(),
            edges[1:].tolist(),
            [namespace] * n_chunks,
        )
        return [rep for part in parts for rep in part]


@dataclass
class ExperimentResult:
    aggregate: AggregateReport
    config: ExperimentConfig
    derived: dict
    wall_time: float

    def summary(self) -> dict:
        agg = self.aggregate
        return {
            "config": self.config.model_dump(mode="json", exclude=EXECUTION_FIELDS),
            "derived": self.derived,
            "results": {
                "blocks": agg.n_blocks,
                "ber": agg.mean_ber,
                "ber_stderr": agg.ber_stderr,
                "mae": agg.mean_abs_error,
                "histogram_mode": agg.histogram_mode,
                "max_p_insertion": float(np.nanmax(agg.p_insertion)) if agg.n_included.any() else None,
                "max_p_deletion": float(np.nanmax(agg.p_deletion)) if agg.n_included.any() else None,
            },
        }


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    t0 = time.perf_counter()
    link = resolve(config)
    reports = simulate(link, config.blocks, EVAL_NAMESPACE, threads or config.threads)
    agg = aggregate(reports, config.histogram_bin)
    return ExperimentResult(agg, link.config, link.derived, time.perf_counter() - t0)


def run_coded_experiment(config: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    if config.coding is None:
        raise ConfigurationError("run_coded_experiment needs a coding section")
    return run_experiment(config, threads)


def default_threshold_grid(config: ExperimentConfig) -> list[float]:
    link = resolve(config.with_updates(scheme="ML", tt={"threshold": None}), optimize=False)
    nc = link.rx.norms
    if config.framework is Framework.F1:
        return [float(x) for x in range(1, int(math.ceil(nc.c_b)) + 6)]
    return [round(x, 2) for x in np.arange(0.05, 1.5001, 0.05)]


def optimize_threshold(
    config: ExperimentConfig,
    grid: Sequence[float] | None = None,
    objective: str = "mae",
    threads: int | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Grid search for the TT threshold on calibration-only seeds.

    Returns the minimizing threshold (smallest on ties) and the
    ``(threshold, objective)`` table.
    """
    if objective not in ("ber", "mae"):
        raise ValueError("objective must be 'ber' or 'mae'")
    if grid is None:
        grid = default_threshold_grid(config)
    grid = sorted(float(x) for x in grid)
    if not grid:
        raise ConfigurationError("threshold grid is empty")
    table: list[tuple[float, float]] = []
    for candidate in grid:
        cfg = config.with_updates(scheme="TT", tt={"threshold": candidate})
        link = resolve(cfg)
        reports = simulate(link, config.tt.calibration_blocks, CALIBRATION_NAMESPACE, threads or config.threads)
        agg = aggregate(reports, config.histogram_bin)
        value = agg.mean_ber if objective == "ber" else agg.mean_abs_error
        table.append((candidate, math.inf if math.isnan(value) else value))
        log.debug("threshold %g -> %s %g", candidate, objective, value)
    return select_threshold(table), table


def select_threshold(table: Sequence[tuple[float, float]]) -> float:
    """Threshold with the smallest objective; the smallest threshold wins ties."""
    if not table:
        raise ConfigurationError("threshold grid is empty")
    return min(table, key=lambda row: (row[1], row[0]))[0]


SWEEP_PARAMS = ("snr", "snr_a", "snr_b", "alpha", "symbol_duration", "beta", "xi")


def _apply(config: ExperimentConfig, param: str, value: float) -> ExperimentConfig:
    if param == "snr":
        if config.budget is not None:
            return config.with_updates(budget={"mean_budget_snr_db": value, "mean_budget": None})
        return config.with_updates(
            channel_a={"snr_db": value, "release_count": None},
            channel_b={"snr_db": value, "release_count": None},
        )
    if param in ("snr_a", "snr_b"):
        return config.with_updates(**{"channel_" + param[-1]: {"snr_db": value, "release_count": None}})
    if param == "alpha":
        return config.with_updates(timeline={"alpha": value})
    if param == "symbol_duration":
        return config.with_updates(timeline={"mean_symbol_duration": value})
    if param == "beta":
        if config.budget is None:
            raise ConfigurationError("a beta sweep needs a budget section")
        return config.with_updates(budget={"beta": value})
    if param == "xi":
        return config.with_updates(tt={"threshold": value})
    raise ValueError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")


@dataclass
class SweepResult:
    param: str
    values: list[float]
    results: list[ExperimentResult | None]

    @property
    def feasible(self) -> list[tuple[float, ExperimentResult]]:
        return [(v, r) for v, r in zip(self.values, self.results) if r is not None]

    @property
    def infeasible(self) -> list[float]:
        return [v for v, r in zip(self.values, self.results) if r is None]


def sweep(
    config: ExperimentConfig, param: str, values: Sequence[float], threads: int | None = None
) -> SweepResult:
    """One experiment per value, each on its own substream (``seed_point`` = index)."""
    values = [float(v) for v in values]
    if not values:
        raise SweepError("no sweep values")
    results: list[ExperimentResult | None] = []
    for i, v in enumerate(values):
        try:
            cfg = _apply(config, param, v).with_updates(seed_point=i)
            results.append(run_experiment(cfg, threads))
        except ConfigurationError as exc:
            log.info("sweep %s=%g infeasible: %s", param, v, exc)
            results.append(None)
    out = SweepResult(param, values, results)
    if not out.feasible:
        raise SweepError(f"every {param} value is infeasible")
    return out


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _write_json(path: Path, payload: Any) -> None:
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_experiment(result: ExperimentResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg = result.aggregate
    _write_json(out / "summary.json", result.summary())
    _write_csv(
        out / "per_symbol.csv",
        ["k", "mae", "abs_mean_err", "p_insertion", "p_deletion", "n_included"],
        [
            (k + 1, agg.mae[k], agg.abs_mean_err[k], agg.p_insertion[k], agg.p_deletion[k], int(agg.n_included[k]))
            for k in range(agg.mae.size)
        ],
    )
    _write_csv(out / "histogram.csv", ["bin_left", "mass"], list(zip(agg.hist_left, agg.hist_mass)))
    _write_json(out / "timing.json", {"wall_time_s": result.wall_time})
    return out


def write_sweep(result: SweepResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    feasible = result.feasible
    _write_csv(
        out / "sweep.csv",
        ["param_value", "ber", "ber_stderr", "mae"],
        [(v, r.aggregate.mean_ber, r.aggregate.ber_stderr, r.aggregate.mean_abs_error) for v, r in feasible],
    )
    _write_json(
        out / "summary.json",
        {
            "param": result.param,
            "infeasible": result.infeasible,
            "points": [{"param_value": v, **r.summary()} for v, r in feasible],
        },
    )
    _write_json(out / "timing.json", {"wall_time_s": sum(r.wall_time for _, r in feasible)})
    return out


def write_threshold_search(
    config: ExperimentConfig, best: float, table: Sequence[tuple[float, float]], objective: str, out_dir: str | Path
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "xi.csv", ["xi", objective], table)
    _write_json(
        out / "summary.json",
        {"config": config.model_dump(mode="json", exclude=EXECUTION_FIELDS), "objective": objective, "best_threshold": best},
    )
    return out
