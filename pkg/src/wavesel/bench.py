"""Replication harness for the oracle-ratio comparison tables.

Each cell (signal, noise, n) draws N independent samples; all methods
share the per-replication fits and the oracle is computed once, so the
ratio ||s_hat_selected - s*||^2 / ||s_hat_oracle - s*||^2 is at least 1
by construction. Replication seeds are derived from (base seed, cell
index, replication index), which makes the report bit-identical for any
parallelism degree.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from . import selection, transform
from .selection import (FoldScheme, ModelCollection, fit_collection, fold_fitted,
                        select_cp, select_penvf, select_sh, select_vfcv,
                        wavelet_collection)
from .signals import (NoiseScenario, TestSignal, benchmark_signal, derive_seed,
                      generate, get_noise, get_signal)

__all__ = [
    "METHOD_LABELS",
    "BenchConfig",
    "CellResult",
    "BenchReport",
    "run_bench",
    "emit_table",
]

METHOD_LABELS = {"sh": "SH", "cp": "Cp", "vfcv": "2FCV", "penvf": "pen2F"}
METHOD_ORDER = ("sh", "cp", "vfcv", "penvf")


@dataclass(frozen=True)
class BenchConfig:
    signals: tuple
    noises: tuple
    sizes: tuple
    methods: tuple
    replications: int
    base_seed: int
    jobs: int = 1
    basis: str = "db8"
    folds: int = 2
    keep_ratios: bool = False
    normalize: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        for n in self.sizes:
            if n < 4 or (n & (n - 1)) != 0:
                raise ValueError(f"sample size {n} is not a power of two >= 4")
        unknown = set(self.methods) - set(METHOD_ORDER)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; use {METHOD_ORDER}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def cells(self) -> list:
        return list(product(self.signals, self.noises, self.sizes))

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "bench_config",
            "signals": list(self.signals),
            "noises": list(self.noises),
            "sizes": list(self.sizes),
            "methods": list(self.methods),
            "replications": self.replications,
            "base_seed": self.base_seed,
            "jobs": self.jobs,
            "basis": self.basis,
            "folds": self.folds,
            "keep_ratios": self.keep_ratios,
            "normalize": self.normalize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        return cls(
            signals=tuple(d["signals"]),
            noises=tuple(d["noises"]),
            sizes=tuple(int(v) for v in d["sizes"]),
            methods=tuple(d.get("methods", METHOD_ORDER)),
            replications=int(d["replications"]),
            base_seed=int(d["base_seed"]),
            jobs=int(d.get("jobs", 1)),
            basis=str(d.get("basis", "db8")),
            folds=int(d.get("folds", 2)),
            keep_ratios=bool(d.get("keep_ratios", False)),
            normalize=bool(d.get("normalize", True)),
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchConfig":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class CellResult:
    mean: float
    stderr: float
    n_ok: int
    n_failed: int
    flagged: bool
    ratios: Optional[tuple] = None


@dataclass(frozen=True)
class BenchReport:
    config: BenchConfig
    cells: dict  # (signal, noise, n, method) -> CellResult

    def cell(self, signal: str, noise: str, n: int, method: str) -> CellResult:
        return self.cells[(signal, noise, n, method)]

    def to_dict(self) -> dict:
        rows = []
        for (sig, noi, n, method), res in self.cells.items():
            row = {
                "signal": sig, "noise": noi, "n": n, "method": method,
                "mean": res.mean, "stderr": res.stderr,
                "n_ok": res.n_ok, "n_failed": res.n_failed, "flagged": res.flagged,
            }
            if res.ratios is not None:
                row["ratios"] = list(res.ratios)
            rows.append(row)
        config = self.config.to_dict()
        config.pop("jobs", None)  # execution parameter, not part of the result
        return {"schema_version": 1, "kind": "bench_report",
                "config": config, "cells": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        doc = json.loads(text)
        config = BenchConfig.from_dict(doc["config"])
        cells = {}
        for row in doc["cells"]:
            key = (row["signal"], row["noise"], int(row["n"]), row["method"])
            ratios = tuple(row["ratios"]) if "ratios" in row else None
            cells[key] = CellResult(row["mean"], row["stderr"], row["n_ok"],
                                    row["n_failed"], row["flagged"], ratios)
        return cls(config, cells)


def _replicate(signal: TestSignal, noise: NoiseScenario, n: int, seed: int,
               collection: ModelCollection, methods, folds: int) -> dict:
    """One replication: shared fits, one oracle, one ratio per method.

    Losses are squared empirical-norm distances between the fitted and
    true regression function at the design points, the natural sample
    estimate of the L2(P^X) loss; all methods and the oracle share them,
    so every ratio is at least 1.
    """
    sample = generate(signal, noise, n, seed)
    fits = fit_collection(sample, collection)
    filt = collection.models[0].h
    s_at_x = signal(sample.x)
    c_signal = transform.flatten(transform.analyze(s_at_x, filt))
    c_noise = transform.flatten(transform.analyze(sample.y, filt)) - c_signal
    cum_noise = np.cumsum(c_noise ** 2)
    cum_signal = np.cumsum(c_signal ** 2)
    total_signal = cum_signal[-1]
    dims = np.array([f.model.dim for f in fits.fits])
    losses = np.array([(cum_noise[d - 1] + (total_signal - cum_signal[d - 1])) / n
                       for d in dims])
    oracle_loss = float(losses[np.lexsort((dims, losses))[0]])

    fold_fits = None
    if "vfcv" in methods or "penvf" in methods:
        scheme = FoldScheme.interleaved(n, folds)
        fold_fits = fold_fitted(sample, collection, scheme)

    out = {}
    for method in methods:
        if method == "sh":
            sel = select_sh(sample, collection, fits=fits)
        elif method == "cp":
            sel = select_cp(sample, collection, fits=fits)
        elif method == "vfcv":
            sel = select_vfcv(sample, collection, scheme, fits=fits, fold_fits=fold_fits)
        elif method == "penvf":
            sel = select_penvf(sample, collection, scheme, fits=fits, fold_fits=fold_fits)
        else:
            raise ValueError(f"unknown method {method!r}")
        loss = float(losses[sel.chosen_index])
        if oracle_loss > 0.0:
            out[method] = loss / oracle_loss
        else:
            out[method] = 1.0 if loss <= 1e-300 else np.inf
    return out


def run_bench(config: BenchConfig) -> BenchReport:
    """Run every cell of the config; deterministic for any jobs count."""
    filt = transform.get_filter(config.basis)
    collections = {n: wavelet_collection(n, filt, config.basis) for n in config.sizes}
    cells = {}
    for cell_index, (sig_name, noi_name, n) in enumerate(config.cells):
        signal = benchmark_signal(sig_name) if config.normalize else get_signal(sig_name)
        noise = get_noise(noi_name)
        collection = collections[n]
        cell_seed = derive_seed(config.base_seed, cell_index)
        seeds = [derive_seed(cell_seed, r) for r in range(config.replications)]

        def task(seed):
            try:
                return _replicate(signal, noise, n, seed, collection,
                                  config.methods, config.folds)
            except selection.SingularDesignError:
                return None

        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                results = list(pool.map(task, seeds))
        else:
            results = [task(s) for s in seeds]

        for method in config.methods:
            ratios = np.array([r[method] for r in results
                               if r is not None and np.isfinite(r[method])])
            n_failed = config.replications - len(ratios)
            mean = float(np.mean(ratios)) if len(ratios) else np.nan
            stderr = (float(np.std(ratios, ddof=1) / np.sqrt(len(ratios)))
                      if len(ratios) > 1 else np.nan)
            cells[(sig_name, noi_name, n, method)] = CellResult(
                mean, stderr, len(ratios), n_failed,
                flagged=n_failed > 0.05 * config.replications,
                ratios=tuple(float(v) for v in ratios) if config.keep_ratios else None)
    return BenchReport(config, cells)


def _fmt(res: CellResult) -> str:
    if not np.isfinite(res.mean):
        return "failed"
    text = f"{res.mean:.3f} ± {res.stderr:.3f}"
    if res.flagged:
        text += " *"
    return text


def emit_table(report: BenchReport, fmt: str = "markdown") -> str:
    """Render the report; columns in the order SH, Cp, 2FCV, pen2F."""
    config = report.config
    methods = [m for m in METHOD_ORDER if m in config.methods]
    header = ["signal", "noise", "n"] + [METHOD_LABELS[m] for m in methods]
    rows = []
    for sig, noi, n in config.cells:
        cells = [report.cells.get((sig, noi, n, m)) for m in methods]
        if all(c is None for c in cells):
            continue
        rows.append(((sig, noi, n), cells))

    if fmt == "json":
        return report.to_json()
    if fmt == "csv":
        lines = ["# wavesel-bench schema=1", ",".join(header)]
        for (sig, noi, n), cells in rows:
            lines.append(",".join([sig, noi, str(n)] + [_fmt(c) for c in cells]))
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" for _ in header) + "|"]
        for (sig, noi, n), cells in rows:
            means = [c.mean if c is not None and np.isfinite(c.mean) else np.inf for c in cells]
            best = int(np.argmin(means)) if cells else -1
            rendered = []
            for i, c in enumerate(cells):
                text = _fmt(c)
                # presentation choice: bold the smallest mean in the row
                rendered.append(f"**{text}**" if i == best else text)
            lines.append("| " + " | ".join([sig, noi, str(n)] + rendered) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")
