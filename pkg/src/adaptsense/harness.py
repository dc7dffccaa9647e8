"""Seeded multi-trial experiment runner, median aggregation and output emission.

Per-trial seeds are the first 8 bytes (little-endian) of a BLAKE2b digest
of ``master_seed`` and a tuple of labels, so records depend only on the
configuration and never on scheduling order or worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .analysis import (
    best_row,
    block_removal_curve,
    coherence_table,
    one_sparse_mse,
    repeated_measurement_mse_mc,
)
from .sensing import NONADAPTIVE_KINDS, StrategyConfig, run_strategy
from .signals import make_signal
from .transforms import is_power_of_two

EXPERIMENTS = ("mse-vs-m", "mse-vs-n", "ratio-vs-n", "coherence", "one-sparse-validate")
TRIAL_EXPERIMENTS = ("mse-vs-m", "mse-vs-n", "ratio-vs-n")
SUMMARY_HEADER = ("experiment", "strategy", "n", "m", "s", "sigma2", "median_sq_error", "trials", "master_seed")
SEED_FUNCTION = "int.from_bytes(blake2b(repr((master_seed, *labels)).encode(), digest_size=8).digest(), 'little')"

_CONFIG_KEYS = {
    "experiment",
    "n",
    "m",
    "m_rule",
    "s",
    "sigma2",
    "support_model",
    "strategies",
    "trials",
    "master_seed",
    "indices",
}
_STRATEGY_KEYS = {"kind", "recovery"}


def derive_seed(master_seed: int, *labels: Any) -> int:
    digest = hashlib.blake2b(repr((int(master_seed),) + labels).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    recovery: str = "cosamp"

    def resolve(self, m: int, s: int, sigma2: float) -> StrategyConfig:
        return StrategyConfig(self.kind, self.recovery, m, s, sigma2)

    @property
    def label(self) -> str:
        return self.kind if self.kind == "oracle" else f"{self.kind}+{self.recovery}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment parameters.

    ``n`` and ``m`` are sweeps (lists). When ``m_rule`` is set, each ``n``
    is paired with ``m = round(m_rule * n)`` (halves round up) and ``m``
    must be empty; otherwise the sweep is the product ``n x m``.
    """

    experiment: str
    n: tuple[int, ...]
    m: tuple[int, ...] = ()
    m_rule: float | None = None
    s: int = 10
    sigma2: float = 1e-4
    support_model: str = "tree"
    strategies: tuple[StrategySpec, ...] = ()
    trials: int = 200
    master_seed: int = 0
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not self.n:
            raise ValueError("n sweep must be nonempty")
        for n in self.n:
            if not is_power_of_two(n) or n < 2:
                raise ValueError(f"every n must be a power of two >= 2, got {n}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.support_model not in ("tree", "uniform"):
            raise ValueError(f"unknown support_model {self.support_model!r}")
        if self.master_seed < 0 or self.master_seed >= 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        if self.experiment == "coherence":
            return
        if self.m_rule is not None and self.m:
            raise ValueError("give either m or m_rule, not both")
        if self.m_rule is None and not self.m:
            raise ValueError("m sweep must be nonempty (or set m_rule)")
        if self.m_rule is not None and not self.m_rule > 0:
            raise ValueError("m_rule must be positive")
        points = self.sweep_points()
        if any(m < 2 for _, m in points):
            raise ValueError(f"m rule yields m < 2 at some sweep point: {points}")
        if self.experiment == "one-sparse-validate":
            return
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        labels = [st.label for st in self.strategies]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate strategies: {labels}")
        for n, m in points:
            if self.s > n:
                raise ValueError(f"s={self.s} exceeds n={n}")
            for st in self.strategies:
                st.resolve(m, self.s, self.sigma2)

    def sweep_points(self) -> list[tuple[int, int]]:
        if self.m_rule is not None:
            return [(n, round_half_up(self.m_rule * n)) for n in self.n]
        return [(n, m) for n in self.n for m in self.m]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        d["m"] = list(self.m)
        d["indices"] = list(self.indices)
        d["strategies"] = [asdict(st) for st in self.strategies]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ValueError("config must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in raw or "n" not in raw:
            raise ValueError("config requires 'experiment' and 'n'")
        strategies = []
        for st in raw.get("strategies", []):
            if not isinstance(st, dict):
                raise ValueError(f"strategy entries must be objects, got {st!r}")
            bad = set(st) - _STRATEGY_KEYS
            if bad:
                raise ValueError(f"unknown strategy keys: {sorted(bad)}")
            strategies.append(StrategySpec(**st))
        kwargs = dict(raw)
        kwargs["n"] = tuple(int(v) for v in _as_list(raw["n"]))
        kwargs["m"] = tuple(int(v) for v in _as_list(raw.get("m", [])))
        kwargs["indices"] = tuple(int(v) for v in _as_list(raw.get("indices", [])))
        kwargs["strategies"] = tuple(strategies)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrialRecord:
    strategy: str
    n: int
    m: int
    s: int
    trial: int
    seed: int
    sq_error: float
    support_correct: bool
    failed: bool = False
    fallback: bool = False


@dataclass(frozen=True)
class SummaryRow:
    experiment: str
    strategy: str
    n: int
    m: int
    s: int
    sigma2: float
    median_sq_error: float
    trials: int
    master_seed: int


def signal_seed(cfg: ExperimentConfig, n: int, m: int, trial: int) -> int:
    return derive_seed(cfg.master_seed, "signal", n, m, trial)


def _run_trial(args: tuple) -> TrialRecord:
    cfg, n, m, trial, spec = args
    signal = make_signal(n, cfg.s, np.random.default_rng(signal_seed(cfg, n, m, trial)), cfg.support_model)
    seed = derive_seed(cfg.master_seed, "strategy", n, m, spec.label, trial)
    outcome = run_strategy(signal, spec.resolve(m, cfg.s, cfg.sigma2), np.random.default_rng(seed))
    return TrialRecord(
        spec.label, n, m, cfg.s, trial, seed, outcome.sq_error, outcome.support_correct, outcome.failed, outcome.fallback
    )


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[TrialRecord]:
    """Run every (sweep point, strategy, trial) and return records in that order.

    Signals are shared across strategies for a given (sweep point, trial).
    With ``workers > 1`` trials run in a process pool; the output does not
    depend on the worker count.
    """
    if cfg.experiment not in TRIAL_EXPERIMENTS:
        raise ValueError(f"experiment {cfg.experiment!r} has no trials to run")
    tasks = [
        (cfg, n, m, t, spec)
        for n, m in cfg.sweep_points()
        for spec in cfg.strategies
        for t in range(cfg.trials)
    ]
    if workers <= 1:
        return [_run_trial(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (8 * workers))))


def median_aggregate(records: Iterable[TrialRecord], cfg: ExperimentConfig) -> list[SummaryRow]:
    """Median squared error per (strategy, n, m), in first-seen order.

    Even counts use the mean of the two middle values. Non-finite errors
    are dropped; a group left empty is omitted with a warning.
    """
    groups: dict[tuple[str, int, int, int], list[float]] = {}
    for r in records:
        groups.setdefault((r.strategy, r.n, r.m, r.s), []).append(r.sq_error)
    rows = []
    for (label, n, m, s), errs in groups.items():
        vals = np.asarray([e for e in errs if math.isfinite(e)], dtype=float)
        if vals.size == 0:
            warnings.warn(f"no finite results for {label} at n={n}, m={m}; omitted", RuntimeWarning)
            continue
        rows.append(
            SummaryRow(cfg.experiment, label, n, m, s, cfg.sigma2, float(np.median(vals)), int(vals.size), cfg.master_seed)
        )
    return rows


# ---------------------------------------------------------------- outputs


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _prepare_dir(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory is not writable: {out}")
    return out


def summary_csv(summary: Sequence[SummaryRow]) -> str:
    return _csv_text(SUMMARY_HEADER, ([getattr(r, k) for k in SUMMARY_HEADER] for r in summary))


def read_summary_csv(path) -> list[SummaryRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_HEADER:
            raise ValueError(f"unexpected header in {path}: {reader.fieldnames}")
        return [
            SummaryRow(
                row["experiment"],
                row["strategy"],
                int(row["n"]),
                int(row["m"]),
                int(row["s"]),
                float(row["sigma2"]),
                float(row["median_sq_error"]),
                int(row["trials"]),
                int(row["master_seed"]),
            )
            for row in reader
        ]


def ratio_rows(summary: Sequence[SummaryRow]) -> list[tuple]:
    """Nonadaptive/adaptive median ratios, pairing strategies by first-stage sampling and recovery."""
    by_key = {(r.strategy, r.n, r.m): r for r in summary}
    out = []
    for r in summary:
        kind, _, recovery = r.strategy.partition("+")
        if kind not in NONADAPTIVE_KINDS:
            continue
        partner = by_key.get((f"adaptive-{kind.split('-', 1)[1]}+{recovery}", r.n, r.m))
        if partner is None:
            continue
        ratio = r.median_sq_error / partner.median_sq_error if partner.median_sq_error > 0 else math.inf
        out.append((r.experiment, r.strategy, partner.strategy, r.n, r.m, r.s, ratio, math.log(r.n), r.n / r.s))
    return out


RATIO_HEADER = ("experiment", "nonadaptive", "adaptive", "n", "m", "s", "ratio", "log_n", "n_over_s")
FIGURE6_HEADER = ("n", "excluded_blocks", "value")


def figure6_rows(ns: Iterable[int]) -> list[tuple]:
    rows = []
    for n in ns:
        for excluded, value in block_removal_curve(n):
            rows.append((n, " ".join(str(a) for a in excluded), value))
    return rows


_PALETTE = ("#d62728", "#ff7f0e", "#1f77b4", "#17becf", "#000000", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def svg_plot(
    series: dict[str, list[tuple[float, float]]],
    xlabel: str,
    ylabel: str,
    title: str,
    logy: bool = True,
    dashed: Sequence[str] = (),
) -> str:
    """Minimal self-contained line plot; nonpositive y values are skipped on a log axis."""
    W, H, L, R, T, B = 640, 420, 80, 190, 40, 50
    pts = [(x, y) for s in series.values() for x, y in s if math.isfinite(y) and (y > 0 or not logy)]
    if not pts:
        pts = [(0.0, 1.0), (1.0, 1.0)]
    fy = (lambda v: math.log10(v)) if logy else (lambda v: v)
    xs = [p[0] for p in pts]
    ys = [fy(p[1]) for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    if logy:
        y0, y1 = math.floor(y0), math.ceil(y1)

    def px(x):
        return L + (x - x0) / (x1 - x0) * (W - L - R)

    def py(y):
        return T + (1 - (fy(y) - y0) / (y1 - y0)) * (H - T - B)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14" font-family="sans-serif">{title}</text>',
        f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - B}" fill="none" stroke="black"/>',
        f'<text x="{(L + W - R) / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12" font-family="sans-serif">{xlabel}</text>',
        f'<text x="16" y="{(T + H - B) / 2:.1f}" text-anchor="middle" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 16 {(T + H - B) / 2:.1f})">{ylabel}</text>',
    ]
    if logy:
        for e in range(int(y0), int(y1) + 1):
            yy = T + (1 - (e - y0) / (y1 - y0)) * (H - T - B)
            out.append(f'<line x1="{L}" y1="{yy:.2f}" x2="{W - R}" y2="{yy:.2f}" stroke="#dddddd"/>')
            out.append(
                f'<text x="{L - 6}" y="{yy + 4:.2f}" text-anchor="end" font-size="10" font-family="sans-serif">1e{e}</text>'
            )
    for xv in sorted(set(xs)):
        out.append(
            f'<text x="{px(xv):.2f}" y="{H - B + 14}" text-anchor="middle" font-size="10" font-family="sans-serif">{xv:g}</text>'
        )
    for i, (name, s) in enumerate(series.items()):
        colour = _PALETTE[i % len(_PALETTE)]
        good = sorted((x, y) for x, y in s if math.isfinite(y) and (y > 0 or not logy))
        if good:
            path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in good)
            dash = ' stroke-dasharray="6,4"' if name in dashed else ""
            out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>')
            for x, y in good:
                out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" fill="{colour}"/>')
        ly = T + 14 + 16 * i
        out.append(f'<line x1="{W - R + 10}" y1="{ly - 4}" x2="{W - R + 30}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{W - R + 34}" y="{ly}" font-size="10" font-family="sans-serif">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _manifest(cfg: ExperimentConfig, files: Sequence[str]) -> str:
    doc = {
        "package": "adaptsense",
        "version": __version__,
        "config": cfg.to_dict(),
        "sweep_points": [list(p) for p in cfg.sweep_points()] if cfg.experiment != "coherence" else [],
        "seed_function": SEED_FUNCTION,
        "signal_seed_labels": ["signal", "n", "m", "trial"],
        "strategy_seed_labels": ["strategy", "n", "m", "strategy_label", "trial"],
        "outputs": sorted(files),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_outputs(summary: Sequence[SummaryRow], cfg: ExperimentConfig, out_dir) -> list[Path]:
    """Write ``summary.csv``, an SVG plot and ``manifest.json`` (plus ``ratio.csv`` for ratio-vs-n)."""
    if not summary:
        raise ValueError("summary is empty; nothing to emit")
    out = _prepare_dir(out_dir)
    files: dict[str, str] = {"summary.csv": summary_csv(summary)}
    xkey = "m" if cfg.experiment == "mse-vs-m" else "n"
    series: dict[str, list[tuple[float, float]]] = {}
    for r in summary:
        series.setdefault(r.strategy, []).append((float(getattr(r, xkey)), r.median_sq_error))
    files["summary.svg"] = svg_plot(series, xkey, "median squared error", cfg.experiment)
    if cfg.experiment == "ratio-vs-n":
        rows = ratio_rows(summary)
        files["ratio.csv"] = _csv_text(RATIO_HEADER, rows)
        rs: dict[str, list[tuple[float, float]]] = {}
        for row in rows:
            rs.setdefault(f"{row[1]} / {row[2]}", []).append((float(row[3]), row[6]))
        ns = sorted({r.n for r in summary})
        rs["log n"] = [(float(n), math.log(n)) for n in ns]
        rs["n/s"] = [(float(n), n / cfg.s) for n in ns]
        files["ratio.svg"] = svg_plot(rs, "n", "nonadaptive / adaptive median", "ratio-vs-n", dashed=("n/s",))
    files["manifest.json"] = _manifest(cfg, list(files) + ["manifest.json"])
    paths = []
    for name, text in files.items():
        atomic_write(out / name, text)
        paths.append(out / name)
    return paths


def emit_coherence(ns: Sequence[int], out_dir, cfg: ExperimentConfig | None = None) -> list[Path]:
    """Coherence tables (one CSV per n) and the block-removal curve ``figure6.csv``."""
    out = _prepare_dir(out_dir)
    files: dict[str, str] = {}
    for n in ns:
        table = coherence_table(n)
        files[f"coherence_n{n}.csv"] = _csv_text(
            ("j", "index", "coherence"), ((j, k, float(table[j, k])) for j in range(n) for k in range(n))
        )
    rows = figure6_rows(ns)
    files["figure6.csv"] = _csv_text(FIGURE6_HEADER, rows)
    series: dict[str, list[tuple[float, float]]] = {}
    for n, excluded, value in rows:
        series.setdefault(f"n={n}", []).append((float(len(excluded.split())), value))
    files["figure6.svg"] = svg_plot(series, "blocks removed", "max coherence", "block removal")
    if cfg is None:
        cfg = ExperimentConfig("coherence", tuple(ns))
    files["manifest.json"] = _manifest(cfg, list(files) + ["manifest.json"])
    paths = []
    for name, text in files.items():
        atomic_write(out / name, text)
        paths.append(out / name)
    return paths


def emit_one_sparse(cfg: ExperimentConfig, out_dir) -> list[Path]:
    """Closed-form vs Monte Carlo MSE of repeated best-row measurement for 1-sparse signals."""
    out = _prepare_dir(out_dir)
    header = ("n", "m", "index", "row", "sigma2", "closed_form", "monte_carlo", "rel_err", "draws")
    rows = []
    for n, m in cfg.sweep_points():
        indices = cfg.indices or (0, n // 2)
        for index in indices:
            j = best_row(n, index)
            rng = np.random.default_rng(derive_seed(cfg.master_seed, "one-sparse", n, m, index))
            mc = repeated_measurement_mse_mc(n, m, j, index, cfg.sigma2, cfg.trials, rng)
            cf = one_sparse_mse(n, m, j, index, cfg.sigma2)
            rows.append((n, m, index, j, cfg.sigma2, cf, mc, abs(mc - cf) / cf, cfg.trials))
    files = {"one_sparse.csv": _csv_text(header, rows)}
    files["manifest.json"] = _manifest(cfg, list(files) + ["manifest.json"])
    paths = []
    for name, text in files.items():
        atomic_write(out / name, text)
        paths.append(out / name)
    return paths


def run_and_emit(cfg: ExperimentConfig, out_dir, workers: int = 1) -> list[Path]:
    if cfg.experiment == "coherence":
        return emit_coherence(cfg.n, out_dir, cfg)
    if cfg.experiment == "one-sparse-validate":
        return emit_one_sparse(cfg, out_dir)
    records = run_experiment(cfg, workers=workers)
    return emit_outputs(median_aggregate(records, cfg), cfg, out_dir)
