"""Experiment driver: sweeps over AP density, degree, strategy and window.

Every figure is written as one long-format CSV (one row per coordinate and
metric) carrying the estimator and standard error of each value, plus a
plotter-agnostic JSON plot description that references the CSV.

Randomness is keyed by (master seed, figure, coordinate index), so output
does not depend on the worker count.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis import (
    Estimator,
    Strategy,
    StrategyKind,
    conn_prob_mc,
    conn_prob_sc,
    ergodic_capacity_sc,
    expected_capacity,
)
from .blockage import SystemParams
from .channel import (
    AbsorptionSpectrum,
    CapacityCurve,
    LinkBudget,
    LinkGeometry,
    TransmissionWindow,
    bundled_spectrum,
    db_to_linear,
    dbm_to_watt,
    load_spectrum,
    path_loss,
    thermal_noise_density,
    usable_bandwidth,
)
from .distances import truncation_radius

__all__ = ["ExperimentConfig", "WindowSetup", "ResultRow", "load_config", "default_config",
           "run_fig3", "run_fig4", "run_capacity_figure", "write_csv", "emit_plots", "main"]

FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7")
FIG_KEY = {name: i for i, name in enumerate(FIGURES)}
CAPACITY_WINDOW = {"fig5": "W1", "fig6": "W1", "fig7": "W2"}
COLUMNS = ("figure", "window", "p_t_w", "lambda_a", "strategy", "degree", "distance_m",
           "frequency_hz", "metric", "value", "std_error", "estimator", "seed")
SNAPSHOT = "snapshot_simulation"
TEMPORAL = "temporal_simulation"
DERIVED = "derived"


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowSetup:
    window: TransmissionWindow
    p_t: float  # W


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; SI linear units throughout."""

    params: SystemParams = SystemParams()
    lambda_grid: tuple[float, ...] = tuple(np.logspace(-3, math.log10(2e-2), 10).tolist())
    degrees: tuple[int, ...] = (1, 2, 3, 4)
    strategies: tuple[Strategy, ...] = (Strategy.C_MC, Strategy.R_MC)
    windows: tuple[tuple[str, WindowSetup], ...] = (
        ("W1", WindowSetup(TransmissionWindow(0.99e12, 1.09e12, 1e9, "W1"), float(dbm_to_watt(20)))),
        ("W2", WindowSetup(TransmissionWindow(3.34e12, 3.49e12, 1e9, "W2"), float(dbm_to_watt(30)))),
    )
    g_ap: float = float(db_to_linear(25))
    g_ue: float = float(db_to_linear(25))
    n0_density: float = thermal_noise_density(290.0) * float(db_to_linear(20))
    allocation: str = "uniform"
    fig3_distances: tuple[float, ...] = (1.0, 5.0, 10.0)
    trials: int = 100_000
    samples: int = 1_000_000
    rmc_topologies: int = 0
    rmc_time: float = 200.0
    seed: int = 0
    spectrum_path: str | None = None
    spectrum: AbsorptionSpectrum | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.lambda_grid or not self.degrees or not self.windows:
            raise ValueError("grids must be non-empty")
        if any(k < 1 for k in self.degrees):
            raise ValueError("degrees must be >= 1")
        if self.trials < 1 or self.samples < 2:
            raise ValueError("trials and samples must be positive")

    def window(self, name: str) -> WindowSetup:
        for key, setup in self.windows:
            if key == name:
                return setup
        raise KeyError(f"window {name!r} is not configured")

    def budget(self, name: str) -> LinkBudget:
        return LinkBudget(self.window(name).p_t, self.g_ap, self.g_ue, self.n0_density,
                          self.allocation)

    def get_spectrum(self) -> AbsorptionSpectrum:
        if self.spectrum is not None:
            return self.spectrum
        if self.spectrum_path:
            return load_spectrum(self.spectrum_path)
        return bundled_spectrum()


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def parse_power(text: str) -> float:
    """``'20 dBm'``, ``'0.1 W'``, ``'100 mW'`` or a bare number (dBm) -> W."""
    t = text.strip()
    low = t.lower()
    if low.endswith("dbm"):
        return float(dbm_to_watt(float(t[:-3])))
    if low.endswith("mw"):
        return float(t[:-2]) * 1e-3
    if low.endswith("w"):
        return float(t[:-1])
    return float(dbm_to_watt(float(t)))


def parse_gain(text: str) -> float:
    """``'25 dBi'``, ``'25 dB'``, ``'316 linear'`` or a bare number (dB) -> linear."""
    t = text.strip()
    low = t.lower()
    if low.endswith("linear"):
        return float(t[:-6])
    for unit in ("dbi", "db"):
        if low.endswith(unit):
            return float(db_to_linear(float(t[: -len(unit)])))
    return float(db_to_linear(float(t)))


def _angle(text: str) -> float:
    t = text.strip().lower()
    if t.endswith("deg"):
        return math.radians(float(t[:-3]))
    if "pi" in t:
        coef = t.replace("pi", "").replace("*", "").strip()
        return (float(coef) if coef else 1.0) * math.pi
    return float(t)


def load_config(path: str | os.PathLike | None = None, text: str | None = None) -> ExperimentConfig:
    """Read an INI file; every missing key keeps its default.

    Sections: ``[system]``, ``[link]``, ``[window <name>]``, ``[sweep]``,
    ``[run]``. See the README for the keys.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp.read(path)
    if text is not None:
        cp.read_string(text)
    cfg = default_config()
    changes: dict = {}

    if cp.has_section("system"):
        s = cp["system"]
        kw = {k: float(s[k]) for k in ("h_a", "h_u", "h_b", "r_b", "lambda_b", "v_b", "r0") if k in s}
        if "omega" in s:
            kw["omega"] = _angle(s["omega"])
        changes["params"] = cfg.params.with_(**kw)

    if cp.has_section("link"):
        s = cp["link"]
        if "g_ap" in s:
            changes["g_ap"] = parse_gain(s["g_ap"])
        if "g_ue" in s:
            changes["g_ue"] = parse_gain(s["g_ue"])
        temp = float(s.get("temperature", "290"))
        nf = parse_gain(s.get("noise_figure", "20 dB"))
        changes["n0_density"] = float(s["n0_density"]) if "n0_density" in s \
            else thermal_noise_density(temp) * nf
        if "allocation" in s:
            changes["allocation"] = s["allocation"].strip()

    windows = dict(cfg.windows)
    for sec in cp.sections():
        if sec.lower().startswith("window"):
            name = sec.split(None, 1)[1].strip() if " " in sec else "W"
            s = cp[sec]
            old = windows.get(name)
            if old is None and not all(k in s for k in ("lo", "hi", "p_t")):
                raise ValueError(f"[{sec}] needs lo, hi and p_t")
            lo = float(s["lo"]) if "lo" in s else old.window.lo
            hi = float(s["hi"]) if "hi" in s else old.window.hi
            df = float(s.get("delta_f", "1e9"))
            p_t = parse_power(s["p_t"]) if "p_t" in s else old.p_t
            windows[name] = WindowSetup(TransmissionWindow(lo, hi, df, name), p_t)
    changes["windows"] = tuple(windows.items())

    if cp.has_section("sweep"):
        s = cp["sweep"]
        if "lambda_a" in s:
            changes["lambda_grid"] = _floats(s["lambda_a"])
        elif any(k in s for k in ("lambda_a_min", "lambda_a_max", "lambda_a_points")):
            lo = float(s.get("lambda_a_min", "1e-3"))
            hi = float(s.get("lambda_a_max", "2e-2"))
            n = int(s.get("lambda_a_points", "10"))
            changes["lambda_grid"] = tuple(np.logspace(math.log10(lo), math.log10(hi), n).tolist())
        if "degrees" in s:
            changes["degrees"] = tuple(int(v) for v in _floats(s["degrees"]))
        if "strategies" in s:
            changes["strategies"] = tuple(Strategy(v.strip()) for v in s["strategies"].split(",")
                                          if v.strip() and v.strip() != "SC")
        if "fig3_distances" in s:
            changes["fig3_distances"] = _floats(s["fig3_distances"])

    if cp.has_section("run"):
        s = cp["run"]
        for key, conv in (("seed", int), ("trials", int), ("samples", int),
                          ("rmc_topologies", int), ("rmc_time", float)):
            if key in s:
                changes[key] = conv(float(s[key])) if conv is int else conv(s[key])
        if "spectrum" in s:
            changes["spectrum_path"] = s["spectrum"].strip()
    return replace(cfg, **changes)


# --------------------------------------------------------------------------
# rows and CSV
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    figure: str
    metric: str
    value: float
    estimator: str
    std_error: float = 0.0
    window: str = ""
    p_t_w: float | None = None
    lambda_a: float | None = None
    strategy: str = ""
    degree: int | None = None
    distance_m: float | None = None
    frequency_hz: float | None = None
    seed: int = 0

    def cells(self) -> list[str]:
        out = []
        for col in COLUMNS:
            v = getattr(self, col)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


def write_csv(rows: Sequence[ResultRow], path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _stream(seed: int, figure: str, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(FIG_KEY[figure],) + tuple(index))


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# figures
# --------------------------------------------------------------------------

def run_fig3(config: ExperimentConfig) -> list[ResultRow]:
    """Path loss across each window and the 3 dB usable band at several distances."""
    spec = config.get_spectrum()
    p = config.params
    rows: list[ResultRow] = []
    for name, setup in config.windows:
        w = setup.window
        for d in config.fig3_distances:
            geom = LinkGeometry.from_heights(d, p.h_a, p.h_u)
            base = dict(figure="fig3", window=name, distance_m=float(d), seed=config.seed)
            for f in w.centers:
                pl = 10 * math.log10(path_loss(float(f), geom, spec))
                rows.append(ResultRow(metric="path_loss_db", value=pl, frequency_hz=float(f),
                                      estimator=Estimator.CLOSED_FORM.value, **base))
            lo, hi = usable_bandwidth(geom, spec, w)
            for metric, val in (("band_lo_hz", lo), ("band_hi_hz", hi),
                                ("usable_bandwidth_hz", hi - lo)):
                rows.append(ResultRow(metric=metric, value=float(val),
                                      estimator=Estimator.CLOSED_FORM.value, **base))
    return rows


def _fig4_point(args) -> list[ResultRow]:
    from .simulator.snapshot import snapshot_connection_probability

    config, i, lam = args
    p = config.params.with_(lambda_a=lam)
    sim = snapshot_connection_probability(list(config.degrees), p, config.trials,
                                          np.random.default_rng(_stream(config.seed, "fig4", i, 0)))
    rows = []
    for n in config.degrees:
        if n == 1:
            an = conn_prob_sc(p, "closed_form")
        else:
            an = conn_prob_mc(n, p, config.samples,
                              np.random.default_rng(_stream(config.seed, "fig4", i, n)))
        base = dict(figure="fig4", lambda_a=float(lam), degree=int(n),
                    strategy="SC" if n == 1 else "MC", metric="conn_prob", seed=config.seed)
        rows.append(ResultRow(value=float(an.value), std_error=float(an.std_error),
                              estimator=an.estimator.value, **base))
        est, se = sim[n]
        rows.append(ResultRow(value=est, std_error=se, estimator=SNAPSHOT, **base))
    return rows


def run_fig4(config: ExperimentConfig, workers: int = 1) -> list[ResultRow]:
    """Analytic and snapshot connection probability per (lambda_a, N)."""
    items = [(config, i, lam) for i, lam in enumerate(config.lambda_grid)]
    return [r for rows in _map(_fig4_point, items, workers) for r in rows]


def shared_curve(config: ExperimentConfig, window: str, spec: AbsorptionSpectrum | None = None,
                 lambdas: Sequence[float] | None = None) -> CapacityCurve:
    """One capacity curve covering the integration range of every grid point."""
    p = config.params
    lam = min(lambdas if lambdas is not None else config.lambda_grid)
    x_hi = truncation_radius(p.with_(lambda_a=lam), max(max(config.degrees), 1))
    return CapacityCurve(spec or config.get_spectrum(), config.window(window).window,
                         config.budget(window), p.h_a, p.h_u, p.r0, x_hi)


def _capacity_point(args) -> list[ResultRow]:
    config, figure, window, curve, i, lam = args
    p = config.params.with_(lambda_a=lam)
    setup = config.window(window)
    base = dict(figure=figure, window=window, p_t_w=setup.p_t, lambda_a=float(lam),
                seed=config.seed)
    rows = []
    sc = ergodic_capacity_sc(p, curve=curve)
    rows.append(ResultRow(metric="capacity_bps", value=sc.value, estimator=sc.estimator.value,
                          strategy="SC", degree=1, **base))
    degrees = [n for n in config.degrees if n >= 2]
    for strategy in config.strategies:
        for n in degrees:
            # common random numbers across strategies and densities at the same N
            rng = np.random.default_rng(_stream(config.seed, figure, 10_000 + n))
            mc = expected_capacity(strategy, n, p, curve, config.samples, rng)
            kw = dict(strategy=strategy.value, degree=n, **base)
            rows.append(ResultRow(metric="capacity_bps", value=mc.value,
                                  std_error=mc.std_error, estimator=mc.estimator.value, **kw))
            rows.append(ResultRow(metric="capacity_gain", value=(mc.value - sc.value) / sc.value,
                                  std_error=mc.std_error / sc.value,
                                  estimator=mc.estimator.value, **kw))

    from .simulator.snapshot import snapshot_capacity

    sim = snapshot_capacity(degrees or [1], p, curve, config.trials,
                            np.random.default_rng(_stream(config.seed, figure, i, 0)))
    m, s = sim["SC"][1]
    rows.append(ResultRow(metric="capacity_bps", value=m, std_error=s, estimator=SNAPSHOT,
                          strategy="SC", degree=1, **base))
    if Strategy.C_MC in config.strategies:
        for n in degrees:
            m, s = sim["C-MC"][n]
            g, gs = sim["gain"][n]
            kw = dict(strategy=Strategy.C_MC.value, degree=n, estimator=SNAPSHOT, **base)
            rows.append(ResultRow(metric="capacity_bps", value=m, std_error=s, **kw))
            rows.append(ResultRow(metric="capacity_gain", value=g, std_error=gs, **kw))
    if config.rmc_topologies > 0 and degrees:
        rows += _temporal_capacity(config, figure, window, curve, i, p, degrees, base)
    return rows


def _temporal_capacity(config, figure, window, curve, i, p, degrees, base) -> list[ResultRow]:
    """Average throughput over random topologies, each simulated in time."""
    from .distances import sample_ordered
    from .simulator.temporal import Topology, follow_strategy, simulate_links, temporal_throughput

    n_max = max(degrees)
    rng = np.random.default_rng(_stream(config.seed, figure, i, 1000))
    kinds = [(Strategy.SC, 1)] + [(s, n) for s in config.strategies for n in degrees]
    vals = np.zeros((config.rmc_topologies, len(kinds)))
    for t in range(config.rmc_topologies):
        xs = sample_ordered(n_max, p, rng)
        az = rng.uniform(-0.5 * p.omega, 0.5 * p.omega, n_max)
        hist = simulate_links(Topology(tuple(xs), tuple(az.tolist())), p, config.rmc_time, rng)
        for j, (s, n) in enumerate(kinds):
            vals[t, j] = temporal_throughput(follow_strategy(StrategyKind(s, n), hist),
                                             capacity=curve)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else np.zeros(len(kinds))
    rows = []
    for j, (s, n) in enumerate(kinds):
        kw = dict(strategy=s.value, degree=n, estimator=TEMPORAL, **base)
        rows.append(ResultRow(metric="capacity_bps", value=float(mean[j]), std_error=float(se[j]),
                              **kw))
        if j:
            g = vals[:, j] / mean[0] - vals[:, 0] * mean[j] / mean[0] ** 2
            rows.append(ResultRow(metric="capacity_gain", value=float(mean[j] / mean[0] - 1),
                                  std_error=float(g.std(ddof=1) / math.sqrt(len(g))), **kw))
    return rows


def _argmax_rows(rows: list[ResultRow], figure: str) -> list[ResultRow]:
    """Location of the largest analytic gain per (strategy, N); flags interior maxima."""
    out = []
    keys = sorted({(r.strategy, r.degree) for r in rows
                   if r.metric == "capacity_gain" and r.estimator != SNAPSHOT
                   and r.estimator != TEMPORAL})
    for strategy, n in keys:
        curve = [(r.lambda_a, r.value) for r in rows
                 if r.metric == "capacity_gain" and r.strategy == strategy and r.degree == n
                 and r.estimator not in (SNAPSHOT, TEMPORAL)]
        curve.sort()
        k = int(np.argmax([v for _, v in curve]))
        base = dict(figure=figure, window=rows[0].window, p_t_w=rows[0].p_t_w,
                    strategy=strategy, degree=n, estimator=DERIVED, seed=rows[0].seed)
        out.append(ResultRow(metric="argmax_lambda_a", value=float(curve[k][0]), **base))
        out.append(ResultRow(metric="max_capacity_gain", value=float(curve[k][1]), **base))
        out.append(ResultRow(metric="interior_maximum",
                             value=float(0 < k < len(curve) - 1), **base))
    return out


def run_capacity_figure(config: ExperimentConfig, figure: str, workers: int = 1,
                        window: str | None = None) -> list[ResultRow]:
    """Average ergodic capacity and capacity gain rows for fig5, fig6 or fig7."""
    if figure not in CAPACITY_WINDOW:
        raise ValueError(f"not a capacity figure: {figure}")
    window = window or CAPACITY_WINDOW[figure]
    cfg = config
    if figure == "fig5":
        cfg = replace(config, strategies=(Strategy.C_MC,))
    curve = shared_curve(cfg, window)
    items = [(cfg, figure, window, curve, i, lam) for i, lam in enumerate(cfg.lambda_grid)]
    rows = [r for part in _map(_capacity_point, items, workers) for r in part]
    if figure != "fig5" and len(cfg.lambda_grid) >= 3:
        rows += _argmax_rows(rows, figure)
    return rows


# --------------------------------------------------------------------------
# plot descriptions
# --------------------------------------------------------------------------

def _series_for(figure: str, rows: list[dict]) -> list[dict]:
    def pick(**match):
        return [r for r in rows if all(r[k] == v for k, v in match.items())]

    series = []
    if figure == "fig3":
        for key in sorted({(r["window"], r["distance_m"]) for r in rows}):
            series.append({"label": f"{key[0]} d={key[1]} m", "x": "frequency_hz",
                           "y": "value", "filter": {"metric": "path_loss_db",
                                                    "window": key[0], "distance_m": key[1]}})
        return series
    metric = "conn_prob" if figure == "fig4" else (
        "capacity_bps" if figure == "fig5" else "capacity_gain")
    keys = sorted({(r["strategy"], r["degree"], r["estimator"]) for r in pick(metric=metric)})
    for strategy, degree, est in keys:
        series.append({"label": f"{strategy} N={degree} ({est})", "x": "lambda_a", "y": "value",
                       "error": "std_error", "log_x": True,
                       "filter": {"metric": metric, "strategy": strategy, "degree": degree,
                                  "estimator": est}})
    return series


def emit_plots(csv_paths: Sequence[str | os.PathLike], out_dir: str | os.PathLike | None = None) -> list[Path]:
    """Write one JSON plot description per CSV; no plotting happens here.

    Raises ``FileNotFoundError`` listing every missing CSV.
    """
    paths = [Path(p) for p in csv_paths]
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise FileNotFoundError("missing CSV file(s): " + ", ".join(missing))
    written = []
    for p in paths:
        with p.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        figure = rows[0]["figure"] if rows else p.stem
        dest = Path(out_dir) if out_dir is not None else p.parent
        dest.mkdir(parents=True, exist_ok=True)
        target = dest / f"{p.stem}.plot.json"
        spec = {"figure": figure, "data": os.path.relpath(p, dest), "format": "csv",
                "series": _series_for(figure, rows)}
        target.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(target)
    return written


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thzmc", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=FIGURES + ("validate",))
    ap.add_argument("--config", help="INI file (missing keys keep the defaults)")
    ap.add_argument("--spectrum", help="absorption spectrum file: two columns, Hz and 1/m")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--trials", type=int, help="snapshot simulation trials per point")
    ap.add_argument("--samples", type=int, help="Monte Carlo integration samples per point")
    ap.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    ap.add_argument("--quick", action="store_true", help="validate: reduced sample sizes")
    return ap


def _apply_flags(config: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.samples is not None:
        changes["samples"] = args.samples
    if args.spectrum is not None:
        changes["spectrum_path"] = args.spectrum
    return replace(config, **changes) if changes else config


def run_figure(verb: str, config: ExperimentConfig, out: str | os.PathLike,
               workers: int = 1) -> Path:
    if verb == "fig3":
        rows = run_fig3(config)
    elif verb == "fig4":
        rows = run_fig4(config, workers)
    else:
        rows = run_capacity_figure(config, verb, workers)
    path = write_csv(rows, Path(out) / f"{verb}.csv")
    emit_plots([path])
    return path


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _apply_flags(load_config(args.config), args)
        if args.verb == "validate":
            from .validation import run_all

            results = run_all(config, quick=args.quick, out=sys.stdout)
            return 0 if all(r.passed for r in results if not (r.skipped or r.info)) else 1
        if config.spectrum_path is None:
            print("note: no spectrum given, using the bundled synthetic spectrum", file=sys.stderr)
        path = run_figure(args.verb, config, args.out, args.workers)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
