"""Grid sweeps over (b, g12 fraction, alpha) and their on-disk outputs."""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, sha256_file, sha256_text
from .model import validate_regime
from .protocol import SUMMARY_COLUMNS, Model, ProtocolRun, run_entanglement, run_transfer

logger = logging.getLogger(__name__)

CSV_COLUMNS = SUMMARY_COLUMNS + ("error",)


@dataclass(frozen=True)
class SweepSpec:
    config: RunConfig
    out_prefix: str | None = None
    source_path: str | None = None

    def __post_init__(self):
        cfg = self.config
        if not cfg.b_grid:
            raise ConfigError("b grid is empty")
        if not cfg.g12_grid:
            raise ConfigError("g12_fraction grid is empty")
        if cfg.kind == "transfer" and not cfg.alpha_grid:
            raise ConfigError("alpha grid is empty")

    @property
    def alpha_axis(self) -> tuple:
        # entanglement has no alpha; a single placeholder keeps the product shape
        return self.config.alpha_grid if self.config.kind == "transfer" else (None,)

    def points(self) -> list[tuple]:
        return list(product(self.config.b_grid, self.config.g12_grid, self.alpha_axis))

    def validate(self) -> list[str]:
        """Derive every grid point up front; return the problems found."""
        problems = []
        threshold = self.config.settings.regime_threshold
        for b, g12 in product(self.config.b_grid, self.config.g12_grid):
            try:
                params = self.config.base.params(b, g12)
            except ValueError as exc:
                problems.append(f"b={b!r} g12_fraction={g12!r}: {exc}")
                continue
            if not self.config.override_regime:
                report = validate_regime(params, threshold)
                if not report.passed:
                    failed = ", ".join(c.name for c in report.checks if not c.passed)
                    problems.append(f"b={b!r} g12_fraction={g12!r}: regime checks failed "
                                    f"({failed})")
        return problems


@dataclass
class SweepResult:
    rows: list[dict]
    seconds: list[float]
    config_text: str
    metadata: dict = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return all(r["converged"] == "true" and not r["error"] for r in self.rows)


def run_point(config: RunConfig, b: float, g12: float, alpha=None) -> ProtocolRun:
    params = config.base.params(b, g12)
    if config.kind == "entanglement":
        return run_entanglement(params, config.model, config.settings,
                                override_regime=config.override_regime)
    return run_transfer(params, config.model, config.alpha if alpha is None else alpha,
                        settings=config.settings, override_regime=config.override_regime)


def point_row(config: RunConfig, b: float, g12: float, alpha,
              run: ProtocolRun | None = None, error: str = "") -> dict:
    axes = {"b": repr(b), "g12_fraction": repr(g12),
            "alpha": "" if alpha is None else repr(alpha)}
    row = {"kind": config.kind, "model": config.model.value, **axes,
           "fidelity": "", "t_op_ns": "", "max_photon_expectation": "",
           "converged": "false", "error": error}
    if run is not None:
        row.update(run.summary_row())
        row.update(axes)  # echo the requested grid values, not re-derived ones
        if not run.converged and not error:
            row["error"] = run.evolution.failure or "not converged"
    return row


def evaluate_point(config: RunConfig, b: float, g12: float, alpha) -> dict:
    """One grid point as a CSV row; failures become an ``error`` entry."""
    try:
        run = run_point(config, b, g12, alpha)
    except Exception as exc:  # recorded per row, the sweep carries on
        logger.warning("point b=%r g12=%r alpha=%r failed: %s", b, g12, alpha, exc)
        return point_row(config, b, g12, alpha, error=f"{type(exc).__name__}: {exc}")
    return point_row(config, b, g12, alpha, run)


def _timed_point(args):
    config, point = args
    start = time.perf_counter()
    row = evaluate_point(config, *point)
    return row, time.perf_counter() - start


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    problems = spec.validate()
    if problems:
        raise ConfigError("invalid sweep configuration:\n  " + "\n  ".join(problems))
    points = spec.points()
    jobs = [(spec.config, p) for p in points]
    started = time.time()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_timed_point, jobs, chunksize=1))
    else:
        outcomes = [_timed_point(job) for job in jobs]
    return build_result(spec.config, [r for r, _ in outcomes], [s for _, s in outcomes],
                        started, source_path=spec.source_path, workers=workers,
                        grid_shape=[len(spec.config.b_grid), len(spec.config.g12_grid),
                                    len(spec.alpha_axis)])


def build_result(config: RunConfig, rows, seconds, started: float, *,
                 source_path=None, workers: int = 1, grid_shape=None) -> SweepResult:
    text = config.to_ini()
    metadata = {
        "config_sha256": sha256_text(text),
        "source_config": None if source_path is None else str(source_path),
        "source_config_sha256": sha256_file(source_path) if source_path else None,
        "version": __version__,
        "versions": _versions(),
        "workers": workers,
        "started_unix": started,
        "wall_clock_s": time.time() - started,
        "points": len(rows),
        "grid_shape": grid_shape or [len(rows)],
    }
    return SweepResult(list(rows), list(seconds), text, metadata)


def _versions() -> dict:
    import numba
    import numpy
    import scipy
    return {"python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def emit_outputs(result: SweepResult, prefix) -> dict[str, Path]:
    """Write ``prefix.csv``, ``prefix.config.ini``, ``prefix.manifest.json`` and ``prefix.gp``."""
    prefix = Path(prefix)
    paths = {ext: prefix.with_name(prefix.name + suffix) for ext, suffix in
             (("csv", ".csv"), ("config", ".config.ini"), ("manifest", ".manifest.json"),
              ("plot", ".gp"))}
    try:
        if prefix.parent and not prefix.parent.exists():
            prefix.parent.mkdir(parents=True)
        write_csv(result.rows, paths["csv"])
        with open(paths["config"], "w", newline="", encoding="utf-8") as fh:
            fh.write(result.config_text)
        manifest = dict(result.metadata)
        manifest["config_file"] = paths["config"].name
        manifest["point_seconds"] = result.seconds
        manifest["csv_file"] = paths["csv"].name
        manifest["csv_sha256"] = sha256_file(paths["csv"])
        with open(paths["manifest"], "w", newline="", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(paths["plot"], "w", newline="", encoding="utf-8") as fh:
            fh.write(gnuplot_script(result, paths["csv"].name))
    except OSError as exc:
        raise OSError(f"cannot write outputs under {prefix}: {exc}") from exc
    return paths


def gnuplot_script(result: SweepResult, csv_name: str) -> str:
    kind = result.rows[0]["kind"] if result.rows else "entanglement"
    g12_values = sorted({float(r["g12_fraction"]) for r in result.rows})
    stem = os.path.splitext(csv_name)[0]
    head = [
        "# gnuplot script; render with: gnuplot " + stem + ".gp",
        "set datafile separator ','",
        "set terminal pngcairo size 900,650",
        f"set output '{stem}.png'",
        "set xlabel 'b = |delta_1| / g_1'",
        "set grid",
    ]
    # columns: 3 b, 4 g12_fraction, 5 alpha, 6 fidelity
    if kind == "entanglement":
        curves = [f"'{csv_name}' every ::1 using 3:(abs($4-{g!r})<1e-9 ? $6 : 1/0) "
                  f"with linespoints title 'g12 = {g:g} g_max'" for g in g12_values]
        body = ["set ylabel 'entanglement fidelity'", "set key bottom right",
                "plot " + ", \\\n     ".join(curves)]
    else:
        g = g12_values[0]
        body = ["set ylabel 'alpha'", "set zlabel 'transfer fidelity' rotate",
                "set dgrid3d 41,41", "set pm3d", "set hidden3d",
                f"set title 'g12 = {g:g} g_max'",
                f"splot '{csv_name}' every ::1 using 3:5:(abs($4-{g!r})<1e-9 ? $6 : 1/0) "
                "with lines notitle"]
    return "\n".join(head + body) + "\n"


def fig3_config(base: RunConfig | None = None) -> RunConfig:
    """Entanglement fidelity versus b for five crosstalk strengths."""
    base = base or RunConfig()
    return replace(base, kind="entanglement", model=Model.FULL_LINDBLAD,
                   b_grid=tuple(7.0 + 0.5 * k for k in range(17)),
                   g12_grid=(0.0, 0.2, 0.4, 0.6, 0.8), alpha_grid=())


def fig4_config(base: RunConfig | None = None) -> RunConfig:
    """Transfer fidelity over (b, alpha) at g12 = 0.2 g_max."""
    base = base or RunConfig()
    return replace(base, kind="transfer", model=Model.FULL_LINDBLAD,
                   b_grid=tuple(7.0 + 0.5 * k for k in range(13)),
                   g12_grid=(0.2,), alpha_grid=tuple(round(0.1 * k, 12) for k in range(11)))

